//! GIN message passing blocks.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    dropout, relu, relu_backward, Dense, DropoutMask, GraphNorm, GraphNormCache, Mode, Param,
    Parameterized, Real, Tensor2,
};

/// `(1 + ε) z_v + Σ_{u ∈ N(v)} z_u` over undirected `edges`.
pub fn gin_aggregate<T: Real>(z: &Tensor2<T>, edges: &[(u32, u32)], eps: T) -> Result<Tensor2<T>> {
    let n = z.rows();
    if let Some(&(u, v)) = edges
        .iter()
        .find(|&&(u, v)| u as usize >= n || v as usize >= n)
    {
        return Err(Error::ShapeMismatch(format!(
            "edge ({u}, {v}) outside {n} nodes"
        )));
    }
    // neighbor sums in f64 so the result does not depend on edge order in practice
    let d = z.cols();
    let mut acc = vec![0.0f64; n * d];
    for &(u, v) in edges {
        let (u, v) = (u as usize, v as usize);
        let (zu, zv) = (z.row(u), z.row(v));
        for (a, &x) in acc[u * d..(u + 1) * d].iter_mut().zip(zv) {
            *a += x.as_f64();
        }
        for (a, &x) in acc[v * d..(v + 1) * d].iter_mut().zip(zu) {
            *a += x.as_f64();
        }
    }
    let self_w = (T::one() + eps).as_f64();
    let mut a = Tensor2::zeros(n, d);
    for ((out, zr), sr) in a
        .data_mut()
        .chunks_exact_mut(d)
        .zip(z.data().chunks_exact(d))
        .zip(acc.chunks_exact(d))
    {
        for j in 0..d {
            out[j] = T::of(self_w * zr[j].as_f64() + sr[j]);
        }
    }
    Ok(a)
}

/// Keep each undirected edge independently with probability `1 - p` in
/// training; evaluation keeps all edges.
pub fn dropedge(
    edges: &[(u32, u32)],
    p: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Vec<(u32, u32)>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "edge drop probability {p} not in [0, 1)"
        )));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok(edges.to_vec());
    }
    Ok(edges
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() >= p)
        .collect())
}

/// Where feature dropout sits inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropoutPosition {
    /// After GraphNorm and ReLU.
    AfterActivation,
    /// Between the GIN MLP and GraphNorm.
    BeforeNorm,
}

/// `dropedge -> aggregate -> dense -> relu -> dense -> graphnorm -> relu`
/// with feature dropout at the configured position.
#[derive(Debug, Clone, PartialEq)]
pub struct GinLayer<T: Real> {
    /// Learnable ε, `1 x 1`.
    pub eps: Param<T>,
    pub mlp1: Dense<T>,
    pub mlp2: Dense<T>,
    pub norm: GraphNorm<T>,
}

#[derive(Debug, Clone)]
pub struct GinCache<T: Real> {
    input: Tensor2<T>,
    edges: Vec<(u32, u32)>,
    agg: Tensor2<T>,
    hidden: Tensor2<T>,
    norm: GraphNormCache<T>,
    out: Tensor2<T>,
    mask: DropoutMask<T>,
}

/// Per-block regularization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDropout {
    pub p_edge: f64,
    pub p_feature: f64,
    pub position: DropoutPosition,
}

impl<T: Real> GinLayer<T> {
    pub fn new(d: usize, rng: &mut impl Rng) -> Self {
        Self {
            eps: Param::new(Tensor2::zeros(1, 1)),
            mlp1: Dense::new(d, d, rng),
            mlp2: Dense::new(d, d, rng),
            norm: GraphNorm::new(d),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        z: &Tensor2<T>,
        edges: &[(u32, u32)],
        node_graph: &[usize],
        n_graphs: usize,
        drop: BlockDropout,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Tensor2<T>, GinCache<T>)> {
        let kept = dropedge(edges, drop.p_edge, mode, rng)?;
        let agg = gin_aggregate(z, &kept, self.eps.value[(0, 0)])?;
        let hidden = relu(&self.mlp1.forward(&agg)?);
        let mut pre = self.mlp2.forward(&hidden)?;
        let mut mask = DropoutMask::identity();
        if drop.position == DropoutPosition::BeforeNorm {
            let (y, m) = dropout(&pre, drop.p_feature, mode, rng)?;
            pre = y;
            mask = m;
        }
        let (normed, norm) = self.norm.forward(&pre, node_graph, n_graphs)?;
        let out = relu(&normed);
        let y = if drop.position == DropoutPosition::AfterActivation {
            let (y, m) = dropout(&out, drop.p_feature, mode, rng)?;
            mask = m;
            y
        } else {
            out.clone()
        };
        Ok((
            y,
            GinCache {
                input: z.clone(),
                edges: kept,
                agg,
                hidden,
                norm,
                out,
                mask,
            },
        ))
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub fn backward(
        &mut self,
        cache: &GinCache<T>,
        dy: &Tensor2<T>,
        position: DropoutPosition,
    ) -> Tensor2<T> {
        let mut d_out = dy.clone();
        if position == DropoutPosition::AfterActivation {
            d_out = cache.mask.apply(&d_out);
        }
        let d_norm = relu_backward(&cache.out, &d_out);
        let mut d_pre = self.norm.backward(&cache.norm, &d_norm);
        if position == DropoutPosition::BeforeNorm {
            d_pre = cache.mask.apply(&d_pre);
        }
        let d_hidden = self.mlp2.backward(&cache.hidden, &d_pre);
        let d_u = relu_backward(&cache.hidden, &d_hidden);
        let d_agg = self.mlp1.backward(&cache.agg, &d_u);
        let d_eps: T = d_agg
            .data()
            .iter()
            .zip(cache.input.data())
            .map(|(&a, &b)| a * b)
            .sum();
        self.eps.grad[(0, 0)] = self.eps.grad[(0, 0)] + d_eps;
        gin_aggregate(&d_agg, &cache.edges, self.eps.value[(0, 0)])
            .expect("edges validated in forward")
    }
}

impl<T: Real> Parameterized<T> for GinLayer<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut p = vec![&self.eps];
        p.extend(self.mlp1.params());
        p.extend(self.mlp2.params());
        p.extend(self.norm.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = vec![&mut self.eps];
        p.extend(self.mlp1.params_mut());
        p.extend(self.mlp2.params_mut());
        p.extend(self.norm.params_mut());
        p
    }
}
