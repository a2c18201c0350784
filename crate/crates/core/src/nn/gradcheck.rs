//! Central-difference gradient checking.

use super::Parameterized;

/// Step used for central differences.
pub const GRAD_STEP: f64 = 1e-5;

/// Denominator floor of [`relative_error`].
pub const GRAD_FLOOR: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, GRAD_FLOOR)`. The floor keeps exactly-zero
/// gradients from dividing the rounding noise of the differences (about
/// `1e-16 / h`) by nothing.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64, h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Compare the parameter gradients accumulated by `backward` against central
/// differences of `loss`, over every parameter entry. Returns the maximum
/// relative error.
pub fn check_parameters<M: Parameterized<f64>>(
    model: &mut M,
    mut loss: impl FnMut(&mut M) -> f64,
    mut backward: impl FnMut(&mut M),
    h: f64,
) -> f64 {
    model.zero_grad();
    backward(model);
    let analytic: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    let mut worst = 0.0f64;
    for (i, grads) in analytic.iter().enumerate() {
        for (e, &a) in grads.iter().enumerate() {
            let orig = model.params()[i].value.data()[e];
            model.params_mut()[i].value.data_mut()[e] = orig + h;
            let up = loss(model);
            model.params_mut()[i].value.data_mut()[e] = orig - h;
            let down = loss(model);
            model.params_mut()[i].value.data_mut()[e] = orig;
            worst = worst.max(relative_error(a, (up - down) / (2.0 * h)));
        }
    }
    worst
}

/// Outcome of [`check_parameters_piecewise`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiecewiseCheck {
    pub max_error: f64,
    /// Entries whose probe interval straddled a switching point.
    pub kinks: usize,
    pub entries: usize,
}

/// Like [`check_parameters`] for functions with ReLU and max switching
/// points. An entry whose central difference disagrees with the analytic
/// value is re-probed with second-order one-sided differences at `h / 10`;
/// if the probe interval straddled a switching point, the side that stays on
/// the current piece must match the analytic value.
pub fn check_parameters_piecewise<M: Parameterized<f64>>(
    model: &mut M,
    mut loss: impl FnMut(&mut M) -> f64,
    mut backward: impl FnMut(&mut M),
    h: f64,
) -> PiecewiseCheck {
    model.zero_grad();
    backward(model);
    let analytic: Vec<Vec<f64>> = model
        .params()
        .iter()
        .map(|p| p.grad.data().to_vec())
        .collect();
    let f0 = loss(model);
    let mut out = PiecewiseCheck {
        max_error: 0.0,
        kinks: 0,
        entries: 0,
    };
    let mut at = |model: &mut M, i: usize, e: usize, v: f64| {
        model.params_mut()[i].value.data_mut()[e] = v;
        loss(model)
    };
    for (i, grads) in analytic.iter().enumerate() {
        for (e, &a) in grads.iter().enumerate() {
            let orig = model.params()[i].value.data()[e];
            let central = (at(model, i, e, orig + h) - at(model, i, e, orig - h)) / (2.0 * h);
            let mut err = relative_error(a, central);
            if err >= 1e-4 {
                out.kinks += 1;
                let hs = h / 10.0;
                let side = |model: &mut M,
                            at: &mut dyn FnMut(&mut M, usize, usize, f64) -> f64,
                            dir: f64| {
                    let f1 = at(model, i, e, orig + dir * hs);
                    let f2 = at(model, i, e, orig + 2.0 * dir * hs);
                    dir * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * hs)
                };
                let fwd = side(model, &mut at, 1.0);
                let bwd = side(model, &mut at, -1.0);
                err = relative_error(a, fwd).min(relative_error(a, bwd));
            }
            model.params_mut()[i].value.data_mut()[e] = orig;
            out.entries += 1;
            out.max_error = out.max_error.max(err);
        }
    }
    out
}
