use rand::Rng;

use super::batch::PointBatch;
use super::ModelConfig;
use crate::error::Result;
use crate::nn::{
    relu, relu_backward, segment_max, segment_max_backward, BatchNorm, BatchNormCache, Dense,
    LayerNorm, LayerNormCache, Mode, Param, Parameterized, Real, Tensor2,
};

pub const MLP_WIDTHS: [usize; 2] = [64, 256];

/// Shared pointwise MLP `3 -> 64 -> 256` with batchnorm and ReLU, global max
/// pooling, LayerNorm and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBaseline<T: Real> {
    pub config: ModelConfig,
    pub dense1: Dense<T>,
    pub bn1: BatchNorm<T>,
    pub dense2: Dense<T>,
    pub bn2: BatchNorm<T>,
    pub readout_norm: LayerNorm<T>,
    pub head: Dense<T>,
}

#[derive(Debug, Clone)]
pub struct MlpCache<T: Real> {
    input: Tensor2<T>,
    bn1: Option<BatchNormCache<T>>,
    hidden: Tensor2<T>,
    bn2: Option<BatchNormCache<T>>,
    out: Tensor2<T>,
    pool_arg: Vec<u32>,
    norm: LayerNormCache<T>,
    normed: Tensor2<T>,
}

impl<T: Real> MlpBaseline<T> {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Self {
        let [a, b] = MLP_WIDTHS;
        Self {
            config,
            dense1: Dense::new(3, a, rng),
            bn1: BatchNorm::new(a),
            dense2: Dense::new(a, b, rng),
            bn2: BatchNorm::new(b),
            readout_norm: LayerNorm::new(b),
            head: Dense::new(b, config.classes, rng),
        }
    }

    pub fn forward(&self, batch: &PointBatch, mode: Mode) -> Result<(Tensor2<T>, MlpCache<T>)> {
        let input = Tensor2::from_vec(
            batch.points.len(),
            3,
            batch
                .points
                .iter()
                .flat_map(|p| p.iter().map(|&x| T::of(x)))
                .collect(),
        )?;
        let u1 = self.dense1.forward(&input)?;
        let (y1, bn1) = normalize(&self.bn1, &u1, mode)?;
        let hidden = relu(&y1);
        let u2 = self.dense2.forward(&hidden)?;
        let (y2, bn2) = normalize(&self.bn2, &u2, mode)?;
        let out = relu(&y2);
        let (pooled, pool_arg) = segment_max(&out, &batch.clouds);
        let (normed, norm) = self.readout_norm.forward(&pooled)?;
        let logits = self.head.forward(&normed)?;
        Ok((
            logits,
            MlpCache {
                input,
                bn1,
                hidden,
                bn2,
                out,
                pool_arg,
                norm,
                normed,
            },
        ))
    }

    pub fn update_running(&mut self, cache: &MlpCache<T>) {
        if let (Some(c1), Some(c2)) = (&cache.bn1, &cache.bn2) {
            self.bn1.update_running(c1);
            self.bn2.update_running(c2);
        }
    }

    pub fn backward(&mut self, cache: &MlpCache<T>, dlogits: &Tensor2<T>) {
        let (Some(c1), Some(c2)) = (&cache.bn1, &cache.bn2) else {
            panic!("backward needs a training-mode forward pass");
        };
        let d_normed = self.head.backward(&cache.normed, dlogits);
        let d_pooled = self.readout_norm.backward(&cache.norm, &d_normed);
        let d_out = segment_max_backward(&d_pooled, &cache.pool_arg, cache.out.rows());
        let d_y2 = relu_backward(&cache.out, &d_out);
        let d_u2 = self.bn2.backward(c2, &d_y2);
        let d_hidden = self.dense2.backward(&cache.hidden, &d_u2);
        let d_y1 = relu_backward(&cache.hidden, &d_hidden);
        let d_u1 = self.bn1.backward(c1, &d_y1);
        self.dense1.accumulate_param_grads(&cache.input, &d_u1);
    }
}

fn normalize<T: Real>(
    bn: &BatchNorm<T>,
    x: &Tensor2<T>,
    mode: Mode,
) -> Result<(Tensor2<T>, Option<BatchNormCache<T>>)> {
    match mode {
        Mode::Train => {
            let (y, c) = bn.forward_train(x)?;
            Ok((y, Some(c)))
        }
        Mode::Eval => Ok((bn.forward_eval(x)?, None)),
    }
}

impl<T: Real> Parameterized<T> for MlpBaseline<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.dense1.params();
        p.extend(self.bn1.params());
        p.extend(self.dense2.params());
        p.extend(self.bn2.params());
        p.extend(self.readout_norm.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.dense1.params_mut();
        p.extend(self.bn1.params_mut());
        p.extend(self.dense2.params_mut());
        p.extend(self.bn2.params_mut());
        p.extend(self.readout_norm.params_mut());
        p.extend(self.head.params_mut());
        p
    }

    fn buffers(&self) -> Vec<&Tensor2<T>> {
        let mut b = self.bn1.buffers();
        b.extend(self.bn2.buffers());
        b
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        let mut b = self.bn1.buffers_mut();
        b.extend(self.bn2.buffers_mut());
        b
    }
}
