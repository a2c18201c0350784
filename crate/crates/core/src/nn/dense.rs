use rand::Rng;

use super::tensor::{gemm_into, matmul};
use super::{Param, Parameterized, Real, Tensor2};
use crate::error::{Error, Result};

/// Affine map `y = x Wt + b` applied to every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Real> {
    /// `din x dout`
    pub weight: Param<T>,
    /// `1 x dout`
    pub bias: Param<T>,
}

impl<T: Real> Dense<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn new(din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (din + dout) as f64).sqrt();
        let data = (0..din * dout)
            .map(|_| T::of(rng.random_range(-limit..=limit)))
            .collect();
        Self::from_parts(
            Tensor2::from_vec(din, dout, data).expect("sized"),
            Tensor2::zeros(1, dout),
        )
    }

    pub fn from_parts(weight: Tensor2<T>, bias: Tensor2<T>) -> Self {
        assert_eq!(bias.shape(), (1, weight.cols()), "bias must be 1 x dout");
        Self {
            weight: Param::new(weight),
            bias: Param::new(bias),
        }
    }

    pub fn din(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn dout(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        if x.cols() != self.din() {
            return Err(Error::ShapeMismatch(format!(
                "dense layer expects {} input features, got {}",
                self.din(),
                x.cols()
            )));
        }
        let mut y = Tensor2::zeros(x.rows(), self.dout());
        let bias = self.bias.value.row(0);
        for r in 0..y.rows() {
            y.row_mut(r).copy_from_slice(bias);
        }
        gemm_into(x, false, &self.weight.value, false, T::one(), &mut y);
        Ok(y)
    }

    /// Accumulate `dWt += xᵀ dy`, `db += Σ dy` and return `dx = dy Wtᵀ`.
    pub fn backward(&mut self, x: &Tensor2<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        self.accumulate_param_grads(x, dy);
        matmul(dy, false, &self.weight.value, true)
    }

    /// Parameter gradients only, for layers whose input is data.
    pub fn accumulate_param_grads(&mut self, x: &Tensor2<T>, dy: &Tensor2<T>) {
        assert_eq!(dy.shape(), (x.rows(), self.dout()));
        gemm_into(x, true, dy, false, T::one(), &mut self.weight.grad);
        let db = dy.col_sums();
        self.bias.grad.add_assign(&db);
    }
}

impl<T: Real> Parameterized<T> for Dense<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
