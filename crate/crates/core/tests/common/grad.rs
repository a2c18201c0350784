//! Central-difference gradient checks for every differentiable block.

use mapper_gin::mapper::{MapperGraph, NodeProvenance};
use mapper_gin::model::{
    BlockDropout, Descriptor, DropoutPosition, GinLayer, GraphBatch, MapperGin, MlpBaseline,
    ModelConfig, PointBatch, PointEncoder, Sample, Variant,
};
use mapper_gin::nn::gradcheck::{
    check_parameters, check_parameters_piecewise, max_relative_error, numeric_gradient, GRAD_STEP,
};
use mapper_gin::nn::{
    cross_entropy_logits, BatchNorm, Dense, GraphNorm, LayerNorm, Mode, Parameterized, Segments,
    Tensor2,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2<f64> {
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
    .unwrap()
}

fn randomize<M: Parameterized<f64>>(m: &mut M, rng: &mut ChaCha8Rng) {
    for p in m.params_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
}

/// `L = Σ r ⊙ y` for a fixed random `r`.
fn probe_loss(y: &Tensor2<f64>, r: &Tensor2<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

/// Max relative error over parameters and the layer input, for a layer
/// `f(layer, x) -> y` with backward `b(layer, x, dy) -> dx`.
fn check_layer<L: Parameterized<f64> + Clone>(
    layer: &mut L,
    x: &Tensor2<f64>,
    r: &Tensor2<f64>,
    forward: impl Fn(&L, &Tensor2<f64>) -> Tensor2<f64>,
    backward: impl Fn(&mut L, &Tensor2<f64>, &Tensor2<f64>) -> Tensor2<f64>,
) -> f64 {
    let param_err = check_parameters(
        layer,
        |l| probe_loss(&forward(l, x), r),
        |l| {
            backward(l, x, r);
        },
        GRAD_STEP,
    );
    let mut scratch = layer.clone();
    let dx = backward(&mut scratch, x, r);
    let numeric = numeric_gradient(
        x.data(),
        |v| {
            let xv = Tensor2::from_vec(x.rows(), x.cols(), v.to_vec()).unwrap();
            probe_loss(&forward(layer, &xv), r)
        },
        GRAD_STEP,
    );
    param_err.max(max_relative_error(dx.data(), &numeric))
}

pub fn dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = Dense::<f64>::new(4, 3, &mut rng);
    randomize(&mut layer, &mut rng);
    let x = random(5, 4, &mut rng);
    let r = random(5, 3, &mut rng);
    check_layer(
        &mut layer,
        &x,
        &r,
        |l, x| l.forward(x).unwrap(),
        |l, x, dy| l.backward(x, dy),
    )
}

pub fn batchnorm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = BatchNorm::<f64>::new(4);
    randomize(&mut layer, &mut rng);
    let x = random(8, 4, &mut rng);
    let r = random(8, 4, &mut rng);
    check_layer(
        &mut layer,
        &x,
        &r,
        |l, x| l.forward_train(x).unwrap().0,
        |l, x, dy| {
            let (_, c) = l.forward_train(x).unwrap();
            l.backward(&c, dy)
        },
    )
}

pub fn layernorm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = LayerNorm::<f64>::new(8);
    randomize(&mut layer, &mut rng);
    let x = random(4, 8, &mut rng);
    let r = random(4, 8, &mut rng);
    check_layer(
        &mut layer,
        &x,
        &r,
        |l, x| l.forward(x).unwrap().0,
        |l, x, dy| {
            let (_, c) = l.forward(x).unwrap();
            l.backward(&c, dy)
        },
    )
}

pub fn graphnorm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = GraphNorm::<f64>::new(4);
    randomize(&mut layer, &mut rng);
    let graph_of = vec![0, 1, 0, 2, 1, 0, 2, 2, 1];
    let x = random(graph_of.len(), 4, &mut rng);
    let r = random(graph_of.len(), 4, &mut rng);
    check_layer(
        &mut layer,
        &x,
        &r,
        |l, x| l.forward(x, &graph_of, 3).unwrap().0,
        |l, x, dy| {
            let (_, c) = l.forward(x, &graph_of, 3).unwrap();
            l.backward(&c, dy)
        },
    )
}

/// GIN block with active DropEdge and feature dropout; the random stream is
/// replayed on every evaluation so the masks are fixed.
pub fn gin_block(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 5;
    let mut layer = GinLayer::<f64>::new(d, &mut rng);
    randomize(&mut layer, &mut rng);
    let node_graph = vec![0, 0, 0, 0, 1, 1, 1];
    let edges = vec![(0, 1), (1, 2), (2, 3), (0, 3), (1, 3), (4, 5), (5, 6)];
    let x = random(node_graph.len(), d, &mut rng);
    let r = random(node_graph.len(), d, &mut rng);
    let mut worst = 0.0f64;
    for position in [
        DropoutPosition::AfterActivation,
        DropoutPosition::BeforeNorm,
    ] {
        let drop = BlockDropout {
            p_edge: 0.3,
            p_feature: 0.3,
            position,
        };
        let mask_seed = seed ^ 0x9e37;
        let err = check_layer(
            &mut layer,
            &x,
            &r,
            |l, x| {
                let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
                l.forward(x, &edges, &node_graph, 2, drop, Mode::Train, &mut rng)
                    .unwrap()
                    .0
            },
            |l, x, dy| {
                let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
                let (_, c) = l
                    .forward(x, &edges, &node_graph, 2, drop, Mode::Train, &mut rng)
                    .unwrap();
                l.backward(&c, dy, position)
            },
        );
        worst = worst.max(err);
    }
    worst
}

/// Fused encoder in training mode; descriptors are data so only parameters
/// are checked.
pub fn encoder(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut enc = PointEncoder::<f64>::new(6, 4, &mut rng);
    randomize(&mut enc, &mut rng);
    let rows: Vec<Descriptor> = (0..24)
        .map(|_| {
            let mut r = [0.0; 6];
            r.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            r
        })
        .collect();
    let seg = Segments {
        offsets: vec![0, 5, 6, 14, 24],
        index: (0..24).map(|i| (i * 7) % 24).collect(),
    };
    let r = random(4, 4, &mut rng);
    check_parameters(
        &mut enc,
        |e| probe_loss(&e.forward(rows.clone(), &seg, Mode::Train).unwrap().0, &r),
        |e| {
            let (_, c) = e.forward(rows.clone(), &seg, Mode::Train).unwrap();
            e.backward(&c, &r);
        },
        GRAD_STEP,
    )
}

/// Two small random graphs over random clouds.
pub fn toy_samples(seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2)
        .map(|g| {
            let n = 12 + g * 3;
            let points = (0..n)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ]
                })
                .collect();
            let nodes: Vec<Vec<u32>> = (0..4)
                .map(|k| {
                    (0..n as u32)
                        .filter(|i| (i + k) % 3 != 0 || *i == k)
                        .collect::<Vec<_>>()
                })
                .map(|v| v.into_iter().take(6 + g).collect())
                .collect();
            let edges = mapper_gin::mapper::nerve_edges(&nodes, n);
            Sample {
                points,
                graph: Some(MapperGraph {
                    point_count: n as u32,
                    provenance: vec![NodeProvenance::FALLBACK; nodes.len()],
                    nodes,
                    edges,
                }),
                label: g,
            }
        })
        .collect()
}

/// Full Mapper-GIN forward and cross-entropy on a 2-graph batch.
pub fn full_forward(seed: u64, variant: Variant) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        variant,
        hidden_dim: 6,
        layers: 2,
        classes: 3,
        ..Default::default()
    };
    let mut model = MapperGin::<f64>::new(config, &mut rng);
    randomize(&mut model, &mut rng);
    let samples = toy_samples(seed);
    let refs: Vec<&Sample> = samples.iter().collect();
    let batch = GraphBatch::from_samples(&refs).unwrap();
    let labels = batch.labels.clone();
    let mask_seed = seed.wrapping_add(17);
    check_parameters(
        &mut model,
        |m| {
            let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
            let (logits, _) = m.forward(&batch, Mode::Train, &mut rng).unwrap();
            cross_entropy_logits(&logits, &labels).unwrap().0
        },
        |m| {
            let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
            let (logits, c) = m.forward(&batch, Mode::Train, &mut rng).unwrap();
            let (_, dl) = cross_entropy_logits(&logits, &labels).unwrap();
            m.backward(&c, &dl);
        },
        GRAD_STEP,
    )
}

pub fn mlp_setup(seed: u64) -> (MlpBaseline<f64>, PointBatch, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = ModelConfig {
        variant: Variant::MlpBaseline,
        classes: 3,
        ..Default::default()
    };
    let model = MlpBaseline::<f64>::new(config, &mut rng);
    let samples: Vec<Sample> = (0..2)
        .map(|g| Sample {
            points: (0..3 + g)
                .map(|_| {
                    [
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    ]
                })
                .collect(),
            graph: None,
            label: g,
        })
        .collect();
    let refs: Vec<&Sample> = samples.iter().collect();
    let batch = PointBatch::from_samples(&refs).unwrap();
    let labels = batch.labels.clone();
    (model, batch, labels)
}

/// Full MLP baseline forward and cross-entropy on a 2-cloud batch. Its 320
/// ReLU/max channels make switching points inside the probe interval common,
/// so it uses the piecewise check.
pub fn mlp_forward(seed: u64) -> f64 {
    let (mut model, batch, labels) = mlp_setup(seed);
    check_parameters_piecewise(
        &mut model,
        |m| {
            cross_entropy_logits(&m.forward(&batch, Mode::Train).unwrap().0, &labels)
                .unwrap()
                .0
        },
        |m| {
            let (logits, c) = m.forward(&batch, Mode::Train).unwrap();
            let (_, dl) = cross_entropy_logits(&logits, &labels).unwrap();
            m.backward(&c, &dl);
        },
        GRAD_STEP,
    )
    .max_error
}

/// Every check as `(name, seed -> max relative error)`.
pub fn suite() -> Vec<(&'static str, Box<dyn Fn(u64) -> f64>)> {
    vec![
        ("dense", Box::new(dense)),
        ("batchnorm", Box::new(batchnorm)),
        ("graphnorm", Box::new(graphnorm)),
        ("layernorm", Box::new(layernorm)),
        ("encoder", Box::new(encoder)),
        ("gin block", Box::new(gin_block)),
        (
            "mapper_gin forward",
            Box::new(|s| full_forward(s, Variant::MapperGin)),
        ),
        (
            "mapper_gin_base forward",
            Box::new(|s| full_forward(s, Variant::MapperGinBase)),
        ),
        ("mlp_baseline forward", Box::new(mlp_forward)),
    ]
}
