//! Symmetry checks shared by the integration tests and the acceptance run.

use mapper_gin::corruptions::{apply_corruption, CorruptionKind, CorruptionSpec};
use mapper_gin::geom::dist;
use mapper_gin::mapper::{build_mapper_graph, MapperGraph, MapperParams};
use mapper_gin::model::{Model, ModelConfig, Sample, Variant};
use mapper_gin::nn::Tensor2;
use mapper_gin::pointcloud::{sample_synthetic, PointCloud, Shape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const POINTS: usize = 256;

pub fn sample(shape: Shape, seed: u64, label: usize) -> Sample {
    let pc = sample_synthetic(shape, POINTS, seed).expect("valid shape");
    let graph = build_mapper_graph(&pc, &MapperParams::default()).expect("graph");
    Sample {
        points: pc.points,
        graph: Some(graph),
        label,
    }
}

/// The same cloud with its points reordered and its graph rebuilt.
pub fn permute_points(s: &Sample, rng: &mut ChaCha8Rng) -> Sample {
    let mut perm: Vec<usize> = (0..s.points.len()).collect();
    perm.shuffle(rng);
    let pc = PointCloud::new(perm.iter().map(|&i| s.points[i]).collect());
    Sample {
        graph: Some(build_mapper_graph(&pc, &MapperParams::default()).expect("graph")),
        points: pc.points,
        label: s.label,
    }
}

/// The same graph with node ids permuted.
pub fn relabel_nodes(g: &MapperGraph, rng: &mut ChaCha8Rng) -> MapperGraph {
    let n = g.nodes.len();
    let mut new_id: Vec<u32> = (0..n as u32).collect();
    new_id.shuffle(rng);
    let mut nodes = vec![Vec::new(); n];
    let mut provenance = g.provenance.clone();
    for (old, node) in g.nodes.iter().enumerate() {
        nodes[new_id[old] as usize] = node.clone();
        provenance[new_id[old] as usize] = g.provenance[old];
    }
    let mut edges: Vec<(u32, u32)> = g
        .edges
        .iter()
        .map(|&(u, v)| {
            let (a, b) = (new_id[u as usize], new_id[v as usize]);
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    MapperGraph {
        point_count: g.point_count,
        nodes,
        edges,
        provenance,
    }
}

pub fn shuffle_edges(g: &MapperGraph, rng: &mut ChaCha8Rng) -> MapperGraph {
    let mut out = g.clone();
    out.edges.shuffle(rng);
    out
}

fn logits(model: &Model<f32>, samples: &[Sample]) -> Tensor2<f32> {
    let refs: Vec<&Sample> = samples.iter().collect();
    model.logits(&refs).expect("logits")
}

/// Eval-mode logits of every variant under point permutation, node
/// relabeling and edge reordering, compared bit for bit.
pub fn logits_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<Sample> = Shape::ALL
        .iter()
        .take(4)
        .enumerate()
        .map(|(i, &shape)| sample(shape, seed * 31 + i as u64, i))
        .collect();
    let permuted: Vec<Sample> = samples
        .iter()
        .map(|s| permute_points(s, &mut rng))
        .collect();
    let map_graphs = |f: &mut dyn FnMut(&MapperGraph) -> MapperGraph| -> Vec<Sample> {
        samples
            .iter()
            .map(|s| Sample {
                graph: Some(f(s.graph.as_ref().expect("graph"))),
                ..s.clone()
            })
            .collect()
    };
    let mut r1 = ChaCha8Rng::seed_from_u64(seed + 1);
    let relabeled = map_graphs(&mut |g| relabel_nodes(g, &mut r1));
    let mut r2 = ChaCha8Rng::seed_from_u64(seed + 2);
    let reordered = map_graphs(&mut |g| shuffle_edges(g, &mut r2));
    for variant in Variant::ALL {
        let config = ModelConfig {
            variant,
            classes: 4,
            ..Default::default()
        };
        let model = Model::<f32>::new(config, &mut ChaCha8Rng::seed_from_u64(seed))
            .map_err(|e| e.to_string())?;
        let base = logits(&model, &samples);
        let cases: [(&str, &[Sample]); 3] = [
            ("point permutation", &permuted),
            ("node relabeling", &relabeled),
            ("edge reordering", &reordered),
        ];
        for (name, other) in cases {
            if logits(&model, other) != base {
                return Err(format!("{variant} seed {seed}: logits change under {name}"));
            }
        }
    }
    Ok(())
}

/// Sorted (node size, degree) pairs.
pub fn size_degree_multiset(g: &MapperGraph) -> Vec<(usize, usize)> {
    let mut v: Vec<(usize, usize)> = g.nodes.iter().map(Vec::len).zip(g.degrees()).collect();
    v.sort_unstable();
    v
}

pub fn multiset_case(pc: &PointCloud, seed: u64, params: &MapperParams) -> Result<(), String> {
    let mut perm: Vec<usize> = (0..pc.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let shuffled = PointCloud::new(perm.iter().map(|&i| pc.points[i]).collect());
    let a = build_mapper_graph(pc, params).map_err(|e| e.to_string())?;
    let b = build_mapper_graph(&shuffled, params).map_err(|e| e.to_string())?;
    if size_degree_multiset(&a) != size_degree_multiset(&b) {
        return Err(format!(
            "seed {seed}: (size, degree) multiset changes under permutation"
        ));
    }
    Ok(())
}

/// Largest change of any pairwise distance under the rotation corruption.
pub fn rotation_distance_error(pc: &PointCloud, severity: u8, seed: u64) -> f64 {
    let spec =
        CorruptionSpec::new(CorruptionKind::Rotation, severity, seed).expect("valid severity");
    let rotated = apply_corruption(pc, &spec).expect("rotation");
    let mut worst = 0.0f64;
    for i in 0..pc.len() {
        for j in i + 1..pc.len() {
            let d0 = dist(&pc.points[i], &pc.points[j]);
            let d1 = dist(&rotated.points[i], &rotated.points[j]);
            worst = worst.max((d0 - d1).abs());
        }
    }
    worst
}
