//! ReLU and inverted dropout.

use rand::Rng;

use super::{Mode, Real, Tensor2};
use crate::error::{Error, Result};

pub fn relu<T: Real>(x: &Tensor2<T>) -> Tensor2<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`] given its output `y`; the subgradient at 0 is 0.
pub fn relu_backward<T: Real>(y: &Tensor2<T>, dy: &Tensor2<T>) -> Tensor2<T> {
    assert_eq!(y.shape(), dy.shape());
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor2::from_vec(y.rows(), y.cols(), data).expect("same shape")
}

/// Per-entry multipliers of a dropout draw; `None` means identity.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<T: Real> {
    scale: Option<Vec<T>>,
}

impl<T: Real> DropoutMask<T> {
    pub fn identity() -> Self {
        Self { scale: None }
    }

    pub fn is_identity(&self) -> bool {
        self.scale.is_none()
    }

    /// Multiply `x` by the stored mask.
    pub fn apply(&self, x: &Tensor2<T>) -> Tensor2<T> {
        match &self.scale {
            None => x.clone(),
            Some(s) => {
                assert_eq!(s.len(), x.len(), "mask shape");
                let data = x.data().iter().zip(s).map(|(&a, &m)| a * m).collect();
                Tensor2::from_vec(x.rows(), x.cols(), data).expect("same shape")
            }
        }
    }
}

/// Inverted dropout: in training each entry is zeroed with probability `p`
/// and survivors are scaled by `1/(1-p)`. Evaluation and `p = 0` are identity.
pub fn dropout<T: Real>(
    x: &Tensor2<T>,
    p: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Tensor2<T>, DropoutMask<T>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "dropout probability {p} not in [0, 1)"
        )));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), DropoutMask::identity()));
    }
    let keep = T::of(1.0 / (1.0 - p));
    // drop when a uniform 32-bit draw falls below p * 2^32
    let threshold = (p * 4_294_967_296.0) as u64;
    let mut draws = vec![0u32; x.len()];
    rng.fill(&mut draws[..]);
    let scale: Vec<T> = draws
        .iter()
        .map(|&d| {
            if u64::from(d) < threshold {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let mask = DropoutMask { scale: Some(scale) };
    Ok((mask.apply(x), mask))
}
