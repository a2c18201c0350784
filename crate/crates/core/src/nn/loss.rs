use super::{Real, Tensor2};
use crate::error::{Error, Result};

/// Mean softmax cross-entropy over rows and its gradient `(softmax - onehot) / n`.
pub fn cross_entropy_logits<T: Real>(
    logits: &Tensor2<T>,
    labels: &[usize],
) -> Result<(f64, Tensor2<T>)> {
    let (n, c) = logits.shape();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    let mut grad = Tensor2::zeros(n, c);
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        total += z.ln() + max - row[label].as_f64();
        let g = grad.row_mut(r);
        for j in 0..c {
            let onehot = if j == label { 1.0 } else { 0.0 };
            g[j] = T::of((exps[j] / z - onehot) / n as f64);
        }
    }
    Ok((total / n.max(1) as f64, grad))
}
