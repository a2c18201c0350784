//! Batch, graph and layer normalization.

use super::{Param, Parameterized, Real, Tensor2};
use crate::error::{Error, Result};

/// Variance stabilizer shared by all normalizations.
pub const NORM_EPS: f64 = 1e-5;

fn check_width<T: Real>(what: &str, x: &Tensor2<T>, width: usize) -> Result<()> {
    if x.cols() != width {
        return Err(Error::ShapeMismatch(format!(
            "{what} expects {width} features, got {}",
            x.cols()
        )));
    }
    Ok(())
}

/// Per-column standardization with learned scale/shift and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T: Real> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor2<T>,
    pub running_var: Tensor2<T>,
    pub momentum: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Real> {
    xhat: Tensor2<T>,
    inv_std: Vec<T>,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Param::new(Tensor2::filled(1, width, T::one())),
            beta: Param::new(Tensor2::zeros(1, width)),
            running_mean: Tensor2::zeros(1, width),
            running_var: Tensor2::filled(1, width, T::one()),
            momentum: 0.1,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.value.cols()
    }

    /// Normalize with the batch's own statistics (variance with `1/n`).
    pub fn forward_train(&self, x: &Tensor2<T>) -> Result<(Tensor2<T>, BatchNormCache<T>)> {
        check_width("batchnorm", x, self.width())?;
        let (n, d) = x.shape();
        if n < 2 {
            return Err(Error::InvalidArgument(
                "batchnorm in training mode needs at least 2 rows".into(),
            ));
        }
        let mut mean = vec![0.0f64; d];
        for r in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(r)) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; d];
        for r in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                let c = v.as_f64() - m;
                *s += c * c;
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<T> = var
            .iter()
            .map(|v| T::of(1.0 / (v + NORM_EPS).sqrt()))
            .collect();
        let mean_t: Vec<T> = mean.iter().map(|&m| T::of(m)).collect();

        let mut xhat = Tensor2::zeros(n, d);
        let mut y = Tensor2::zeros(n, d);
        let (g, b) = (self.gamma.value.row(0), self.beta.value.row(0));
        for ((xr, hr), yr) in x
            .data()
            .chunks_exact(d)
            .zip(xhat.data_mut().chunks_exact_mut(d))
            .zip(y.data_mut().chunks_exact_mut(d))
        {
            for j in 0..d {
                hr[j] = (xr[j] - mean_t[j]) * inv_std[j];
                yr[j] = g[j] * hr[j] + b[j];
            }
        }
        Ok((
            y,
            BatchNormCache {
                xhat,
                inv_std,
                mean,
                var,
            },
        ))
    }

    /// Fold the batch statistics of `cache` into the running estimates.
    /// The running variance uses the unbiased estimate.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        let n = cache.xhat.rows() as f64;
        let m = self.momentum;
        for j in 0..self.width() {
            let rm = self.running_mean[(0, j)].as_f64();
            let rv = self.running_var[(0, j)].as_f64();
            self.running_mean[(0, j)] = T::of((1.0 - m) * rm + m * cache.mean[j]);
            self.running_var[(0, j)] = T::of((1.0 - m) * rv + m * cache.var[j] * n / (n - 1.0));
        }
    }

    pub fn forward_eval(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        check_width("batchnorm", x, self.width())?;
        let d = self.width();
        let scale: Vec<T> = (0..d)
            .map(|j| self.gamma.value[(0, j)] / (self.running_var[(0, j)] + T::of(NORM_EPS)).sqrt())
            .collect();
        let shift: Vec<T> = (0..d)
            .map(|j| self.beta.value[(0, j)] - self.running_mean[(0, j)] * scale[j])
            .collect();
        let mut y = x.clone();
        for r in 0..y.rows() {
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = *v * scale[j] + shift[j];
            }
        }
        Ok(y)
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        let (n, d) = dy.shape();
        let mut sum_dy = vec![0.0f64; d];
        let mut sum_dy_xhat = vec![0.0f64; d];
        for r in 0..n {
            let (dr, hr) = (dy.row(r), cache.xhat.row(r));
            for j in 0..d {
                sum_dy[j] += dr[j].as_f64();
                sum_dy_xhat[j] += (dr[j] * hr[j]).as_f64();
            }
        }
        for j in 0..d {
            self.gamma.grad[(0, j)] = self.gamma.grad[(0, j)] + T::of(sum_dy_xhat[j]);
            self.beta.grad[(0, j)] = self.beta.grad[(0, j)] + T::of(sum_dy[j]);
        }
        let nf = n as f64;
        let coef: Vec<T> = (0..d)
            .map(|j| self.gamma.value[(0, j)] * cache.inv_std[j])
            .collect();
        let mean_dy: Vec<T> = sum_dy.iter().map(|s| T::of(s / nf)).collect();
        let mean_dy_xhat: Vec<T> = sum_dy_xhat.iter().map(|s| T::of(s / nf)).collect();
        let mut dx = Tensor2::zeros(n, d);
        for r in 0..n {
            let (dr, hr) = (dy.row(r), cache.xhat.row(r));
            let out = dx.row_mut(r);
            for j in 0..d {
                out[j] = coef[j] * (dr[j] - mean_dy[j] - hr[j] * mean_dy_xhat[j]);
            }
        }
        dx
    }
}

impl<T: Real> Parameterized<T> for BatchNorm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Tensor2<T>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}

/// Per-graph normalization `γ (h - α μ_g) / σ_g + β` with
/// `σ_g = sqrt(mean((h - α μ_g)²) + 1e-5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphNorm<T: Real> {
    pub alpha: Param<T>,
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

#[derive(Debug, Clone)]
pub struct GraphNormCache<T: Real> {
    shat: Tensor2<T>,
    /// `graphs x d`
    inv_sigma: Tensor2<T>,
    mean: Tensor2<T>,
    counts: Vec<usize>,
    graph_of: Vec<usize>,
}

impl<T: Real> GraphNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            alpha: Param::new(Tensor2::filled(1, width, T::one())),
            gamma: Param::new(Tensor2::filled(1, width, T::one())),
            beta: Param::new(Tensor2::zeros(1, width)),
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.value.cols()
    }

    /// `graph_of[i]` is the graph of row `i`, in `0..n_graphs`.
    pub fn forward(
        &self,
        x: &Tensor2<T>,
        graph_of: &[usize],
        n_graphs: usize,
    ) -> Result<(Tensor2<T>, GraphNormCache<T>)> {
        check_width("graphnorm", x, self.width())?;
        if graph_of.len() != x.rows() || graph_of.iter().any(|&g| g >= n_graphs) {
            return Err(Error::ShapeMismatch("graph id per node required".into()));
        }
        let d = self.width();
        // f64 sums make the statistics independent of node order in practice
        let mut counts = vec![0usize; n_graphs];
        let mut sum = vec![0.0f64; n_graphs * d];
        for (xr, &g) in x.data().chunks_exact(d).zip(graph_of) {
            counts[g] += 1;
            for (m, &v) in sum[g * d..(g + 1) * d].iter_mut().zip(xr) {
                *m += v.as_f64();
            }
        }
        let mut mean = Tensor2::<T>::zeros(n_graphs, d);
        for (g, &c) in counts.iter().enumerate() {
            let inv = 1.0 / c.max(1) as f64;
            for (m, &s) in mean.row_mut(g).iter_mut().zip(&sum[g * d..(g + 1) * d]) {
                *m = T::of(s * inv);
            }
        }
        let alpha = self.alpha.value.row(0);
        let mut shifted = Tensor2::zeros(x.rows(), d);
        let mut var = vec![0.0f64; n_graphs * d];
        for ((xr, sr), &g) in x
            .data()
            .chunks_exact(d)
            .zip(shifted.data_mut().chunks_exact_mut(d))
            .zip(graph_of)
        {
            let (mr, vr) = (mean.row(g), &mut var[g * d..(g + 1) * d]);
            for j in 0..d {
                let s = xr[j] - alpha[j] * mr[j];
                sr[j] = s;
                vr[j] += (s * s).as_f64();
            }
        }
        let mut inv_sigma = Tensor2::zeros(n_graphs, d);
        for (g, &c) in counts.iter().enumerate() {
            for (is, &v) in inv_sigma
                .row_mut(g)
                .iter_mut()
                .zip(&var[g * d..(g + 1) * d])
            {
                *is = T::of(1.0 / (v / c.max(1) as f64 + NORM_EPS).sqrt());
            }
        }
        let (gamma, beta) = (self.gamma.value.row(0), self.beta.value.row(0));
        let mut y = Tensor2::zeros(x.rows(), d);
        for ((sr, yr), &g) in shifted
            .data_mut()
            .chunks_exact_mut(d)
            .zip(y.data_mut().chunks_exact_mut(d))
            .zip(graph_of)
        {
            let is = inv_sigma.row(g);
            for j in 0..d {
                let sh = sr[j] * is[j];
                sr[j] = sh;
                yr[j] = gamma[j] * sh + beta[j];
            }
        }
        Ok((
            y,
            GraphNormCache {
                shat: shifted,
                inv_sigma,
                mean,
                counts,
                graph_of: graph_of.to_vec(),
            },
        ))
    }

    pub fn backward(&mut self, cache: &GraphNormCache<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        let d = self.width();
        let n_graphs = cache.counts.len();
        let gamma = self.gamma.value.row(0).to_vec();
        let alpha = self.alpha.value.row(0).to_vec();
        // per graph: mean of dŝ·ŝ, then ds and its per-graph sum
        let mut dshat_dot = Tensor2::<T>::zeros(n_graphs, d);
        for (r, &g) in cache.graph_of.iter().enumerate() {
            for j in 0..d {
                let dyv = dy[(r, j)];
                let sh = cache.shat[(r, j)];
                self.gamma.grad[(0, j)] = self.gamma.grad[(0, j)] + dyv * sh;
                self.beta.grad[(0, j)] = self.beta.grad[(0, j)] + dyv;
                dshat_dot[(g, j)] = dshat_dot[(g, j)] + dyv * gamma[j] * sh;
            }
        }
        for (g, &c) in cache.counts.iter().enumerate() {
            let inv = T::one() / T::of(c.max(1) as f64);
            dshat_dot.row_mut(g).iter_mut().for_each(|v| *v = *v * inv);
        }
        let mut ds = Tensor2::zeros(dy.rows(), d);
        let mut ds_sum = Tensor2::<T>::zeros(n_graphs, d);
        for (r, &g) in cache.graph_of.iter().enumerate() {
            for j in 0..d {
                let dshat = dy[(r, j)] * gamma[j];
                let v = cache.inv_sigma[(g, j)] * (dshat - cache.shat[(r, j)] * dshat_dot[(g, j)]);
                ds[(r, j)] = v;
                ds_sum[(g, j)] = ds_sum[(g, j)] + v;
            }
        }
        for g in 0..n_graphs {
            for j in 0..d {
                self.alpha.grad[(0, j)] =
                    self.alpha.grad[(0, j)] - cache.mean[(g, j)] * ds_sum[(g, j)];
            }
        }
        let mut dx = ds;
        for (r, &g) in cache.graph_of.iter().enumerate() {
            let inv = T::one() / T::of(cache.counts[g] as f64);
            for j in 0..d {
                dx[(r, j)] = dx[(r, j)] - alpha[j] * ds_sum[(g, j)] * inv;
            }
        }
        dx
    }
}

impl<T: Real> Parameterized<T> for GraphNorm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.alpha, &self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.alpha, &mut self.gamma, &mut self.beta]
    }
}

/// Per-row standardization with learned scale/shift.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T: Real> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<T: Real> {
    xhat: Tensor2<T>,
    inv_std: Vec<T>,
}

impl<T: Real> LayerNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Param::new(Tensor2::filled(1, width, T::one())),
            beta: Param::new(Tensor2::zeros(1, width)),
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.value.cols()
    }

    pub fn forward(&self, x: &Tensor2<T>) -> Result<(Tensor2<T>, LayerNormCache<T>)> {
        check_width("layernorm", x, self.width())?;
        let (n, d) = x.shape();
        let mut xhat = Tensor2::zeros(n, d);
        let mut y = Tensor2::zeros(n, d);
        let mut inv_std = Vec::with_capacity(n);
        let (g, b) = (self.gamma.value.row(0), self.beta.value.row(0));
        for r in 0..n {
            let row = x.row(r);
            let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = T::of(1.0 / (var + NORM_EPS).sqrt());
            let m = T::of(mean);
            for j in 0..d {
                let h = (row[j] - m) * inv;
                xhat[(r, j)] = h;
                y[(r, j)] = g[j] * h + b[j];
            }
            inv_std.push(inv);
        }
        Ok((y, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&mut self, cache: &LayerNormCache<T>, dy: &Tensor2<T>) -> Tensor2<T> {
        let (n, d) = dy.shape();
        let gamma = self.gamma.value.row(0).to_vec();
        let mut dx = Tensor2::zeros(n, d);
        let df = T::of(d as f64);
        for r in 0..n {
            let (dr, hr) = (dy.row(r), cache.xhat.row(r));
            let mut sum = T::zero();
            let mut sum_h = T::zero();
            for j in 0..d {
                self.gamma.grad[(0, j)] = self.gamma.grad[(0, j)] + dr[j] * hr[j];
                self.beta.grad[(0, j)] = self.beta.grad[(0, j)] + dr[j];
                let dh = dr[j] * gamma[j];
                sum = sum + dh;
                sum_h = sum_h + dh * hr[j];
            }
            let (mean, mean_h) = (sum / df, sum_h / df);
            let out = dx.row_mut(r);
            for j in 0..d {
                out[j] = cache.inv_std[r] * (dr[j] * gamma[j] - mean - hr[j] * mean_h);
            }
        }
        dx
    }
}

impl<T: Real> Parameterized<T> for LayerNorm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn batchnorm_standardizes_column() {
        let bn = BatchNorm::<f64>::new(1);
        let (y, _) = bn
            .forward_train(&Tensor2::from_rows(&[&[1.0], &[3.0]]))
            .unwrap();
        assert!(close(y[(0, 0)], -1.0, 1e-5) && close(y[(1, 0)], 1.0, 1e-5));
    }

    #[test]
    fn batchnorm_zero_gamma() {
        let mut bn = BatchNorm::<f64>::new(2);
        bn.gamma.value.fill(0.0);
        bn.beta.value = Tensor2::from_rows(&[&[0.5, -2.0]]);
        let (y, _) = bn
            .forward_train(&Tensor2::from_rows(&[
                &[1.0, 7.0],
                &[3.0, 9.0],
                &[4.0, 1.0],
            ]))
            .unwrap();
        for r in 0..3 {
            assert_eq!(y.row(r), &[0.5, -2.0]);
        }
    }

    #[test]
    fn batchnorm_needs_two_rows_and_has_initial_running_stats() {
        let mut bn = BatchNorm::<f64>::new(1);
        assert!(bn.forward_train(&Tensor2::zeros(1, 1)).is_err());
        let y = bn.forward_eval(&Tensor2::from_rows(&[&[2.0]])).unwrap();
        assert!(close(y[(0, 0)], 2.0 / (1.0 + NORM_EPS).sqrt(), 1e-12));
        let (_, cache) = bn
            .forward_train(&Tensor2::from_rows(&[&[1.0], &[3.0]]))
            .unwrap();
        bn.update_running(&cache);
        assert!(close(bn.running_mean[(0, 0)], 0.2, 1e-12));
        assert!(close(bn.running_var[(0, 0)], 0.9 + 0.1 * 2.0, 1e-12));
    }

    #[test]
    fn graphnorm_examples() {
        let gn = GraphNorm::<f64>::new(1);
        let (y, _) = gn
            .forward(&Tensor2::from_rows(&[&[1.0], &[3.0]]), &[0, 0], 1)
            .unwrap();
        assert!(close(y[(0, 0)], -1.0, 1e-2) && close(y[(1, 0)], 1.0, 1e-2));

        let mut gn = GraphNorm::<f64>::new(1);
        gn.alpha.value.fill(0.0);
        let (y, _) = gn
            .forward(&Tensor2::from_rows(&[&[2.0], &[2.0]]), &[0, 0], 1)
            .unwrap();
        let expected = 2.0 / (4.0f64 + 1e-5).sqrt();
        assert!(close(y[(0, 0)], expected, 1e-15) && close(y[(1, 0)], expected, 1e-15));
    }

    #[test]
    fn graphnorm_single_node_is_finite() {
        let gn = GraphNorm::<f64>::new(3);
        let (y, _) = gn
            .forward(&Tensor2::from_rows(&[&[4.0, -1.0, 0.0]]), &[0], 1)
            .unwrap();
        assert!(y.is_finite());
    }

    #[test]
    fn graphnorm_decomposes_over_graphs() {
        let gn = GraphNorm::<f64>::new(2);
        let a = Tensor2::from_rows(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 3.0]]);
        let b = Tensor2::from_rows(&[&[-2.0, 4.0], &[1.0, 0.0]]);
        let both = Tensor2::from_rows(&[
            &[1.0, 2.0],
            &[-2.0, 4.0],
            &[0.5, -1.0],
            &[1.0, 0.0],
            &[3.0, 3.0],
        ]);
        let (ya, _) = gn.forward(&a, &[0, 0, 0], 1).unwrap();
        let (yb, _) = gn.forward(&b, &[0, 0], 1).unwrap();
        let (y, _) = gn.forward(&both, &[0, 1, 0, 1, 0], 2).unwrap();
        assert_eq!(y.row(0), ya.row(0));
        assert_eq!(y.row(2), ya.row(1));
        assert_eq!(y.row(4), ya.row(2));
        assert_eq!(y.row(1), yb.row(0));
        assert_eq!(y.row(3), yb.row(1));
    }

    #[test]
    fn layernorm_examples() {
        let ln = LayerNorm::<f64>::new(2);
        let (y, _) = ln.forward(&Tensor2::from_rows(&[&[1.0, 3.0]])).unwrap();
        assert!(close(y[(0, 0)], -1.0, 1e-4) && close(y[(0, 1)], 1.0, 1e-4));
        let mut ln = LayerNorm::<f64>::new(3);
        ln.beta.value = Tensor2::from_rows(&[&[0.1, 0.2, 0.3]]);
        let (y, _) = ln
            .forward(&Tensor2::from_rows(&[&[5.0, 5.0, 5.0]]))
            .unwrap();
        assert_eq!(y.row(0), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn shift_invariance() {
        let x =
            Tensor2::<f64>::from_rows(&[&[0.3, 1.2, -0.7], &[2.0, 0.1, 0.4], &[-1.0, 0.0, 0.9]]);
        let shifted = x.map(|v| v + 10.0);
        let ln = LayerNorm::new(3);
        let (a, _) = ln.forward(&x).unwrap();
        let (b, _) = ln.forward(&shifted).unwrap();
        let gn = GraphNorm::new(3);
        let (c, _) = gn.forward(&x, &[0, 0, 0], 1).unwrap();
        let (d, _) = gn.forward(&shifted, &[0, 0, 0], 1).unwrap();
        for i in 0..a.len() {
            assert!(close(a.data()[i], b.data()[i], 1e-9));
            assert!(close(c.data()[i], d.data()[i], 1e-9));
        }
    }
}
