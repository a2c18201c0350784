//! A small neural network kernel with explicit per-layer backward passes.
//!
//! Every layer exposes a forward pass that returns whatever the backward pass
//! needs, and a backward pass that accumulates parameter gradients and
//! returns the gradient with respect to its input. Layers are generic over
//! [`Real`] so gradient checks run in `f64` while training can use `f32`.

mod activation;
mod checkpoint;
mod dense;
pub mod gradcheck;
mod loss;
mod norm;
mod optim;
mod pool;
mod tensor;

pub use activation::{dropout, relu, relu_backward, DropoutMask};
pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_MAGIC};
pub use dense::Dense;
pub use loss::cross_entropy_logits;
pub use norm::{
    BatchNorm, BatchNormCache, GraphNorm, GraphNormCache, LayerNorm, LayerNormCache, NORM_EPS,
};
pub use optim::{adam_step, steplr, AdamConfig, OptimState};
pub use pool::{segment_max, segment_max_backward, Segments};
pub use tensor::{gemm_slices, Real, Tensor2};

/// Training enables dropout and batch statistics; evaluation is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A learnable array with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T: Real> {
    pub value: Tensor2<T>,
    pub grad: Tensor2<T>,
}

impl<T: Real> Param<T> {
    pub fn new(value: Tensor2<T>) -> Self {
        let grad = Tensor2::zeros(value.rows(), value.cols());
        Self { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Access to a model's parameters and non-learned buffers in a fixed order.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    /// Running statistics and other state saved alongside parameters.
    fn buffers(&self) -> Vec<&Tensor2<T>> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        Vec::new()
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}
