//! Shared pointwise encoder `dense -> batchnorm -> relu -> max pool`.
//!
//! The descriptors are data, so the batch statistics of the dense output are
//! affine images of the descriptor mean and covariance. The encoder folds the
//! normalization into the dense weights and max-pools without materializing
//! the full per-row activation matrix; the backward pass applies the exact
//! batchnorm gradient through those closed-form statistics.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    gemm_slices, BatchNorm, Dense, Mode, Param, Parameterized, Real, Segments, Tensor2, NORM_EPS,
};

/// Widest descriptor supported.
pub const MAX_DESCRIPTOR: usize = 6;

pub type Descriptor = [f64; MAX_DESCRIPTOR];

/// Member rows projected per gemm call.
const CHUNK_ROWS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct PointEncoder<T: Real> {
    pub dense: Dense<T>,
    pub bn: BatchNorm<T>,
    /// Skip the normalization (test hook).
    pub bypass_norm: bool,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    rows: Vec<Descriptor>,
    arg: Vec<u32>,
    active: Vec<bool>,
    stats: Option<BatchStats>,
}

#[derive(Debug, Clone)]
struct BatchStats {
    mean: Descriptor,
    cov: [[f64; MAX_DESCRIPTOR]; MAX_DESCRIPTOR],
    inv_std: Vec<f64>,
    out_mean: Vec<f64>,
    out_var: Vec<f64>,
    count: usize,
}

impl<T: Real> PointEncoder<T> {
    pub fn new(din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        assert!(din <= MAX_DESCRIPTOR, "descriptor too wide");
        Self {
            dense: Dense::new(din, dout, rng),
            bn: BatchNorm::new(dout),
            bypass_norm: false,
        }
    }

    pub fn din(&self) -> usize {
        self.dense.din()
    }

    pub fn dout(&self) -> usize {
        self.dense.dout()
    }

    /// Encode `rows` and max-pool them per segment. Training mode uses batch
    /// statistics; the running estimates are updated by [`Self::update_running`].
    pub fn forward(
        &self,
        rows: Vec<Descriptor>,
        seg: &Segments,
        mode: Mode,
    ) -> Result<(Tensor2<T>, EncoderCache)> {
        let (k, d) = (self.din(), self.dout());
        if rows.is_empty() {
            return Err(Error::InvalidArgument(
                "encoder needs at least one row".into(),
            ));
        }
        let w: Vec<f64> = self
            .dense
            .weight
            .value
            .data()
            .iter()
            .map(|x| x.as_f64())
            .collect();
        let b: Vec<f64> = self
            .dense
            .bias
            .value
            .data()
            .iter()
            .map(|x| x.as_f64())
            .collect();
        let gamma: Vec<f64> = self
            .bn
            .gamma
            .value
            .data()
            .iter()
            .map(|x| x.as_f64())
            .collect();
        let beta: Vec<f64> = self
            .bn
            .beta
            .value
            .data()
            .iter()
            .map(|x| x.as_f64())
            .collect();

        let mut stats = None;
        let (w_eff, b_eff) = if self.bypass_norm {
            (w, b)
        } else if mode == Mode::Train {
            if rows.len() < 2 {
                return Err(Error::InvalidArgument(
                    "batchnorm in training mode needs at least 2 rows".into(),
                ));
            }
            let s = batch_stats(&rows, k, &w, &b);
            let mut w_eff = w.clone();
            let mut b_eff = vec![0.0; d];
            for j in 0..d {
                let scale = gamma[j] * s.inv_std[j];
                for kk in 0..k {
                    w_eff[kk * d + j] *= scale;
                }
                // the bias cancels against the batch mean exactly
                let proj_mean: f64 = (0..k).map(|kk| s.mean[kk] * w[kk * d + j]).sum();
                b_eff[j] = beta[j] - scale * proj_mean;
            }
            stats = Some(s);
            (w_eff, b_eff)
        } else {
            let mut w_eff = w.clone();
            let mut b_eff = vec![0.0; d];
            for j in 0..d {
                let rv = self.bn.running_var[(0, j)].as_f64();
                let rm = self.bn.running_mean[(0, j)].as_f64();
                let scale = gamma[j] / (rv + NORM_EPS).sqrt();
                for kk in 0..k {
                    w_eff[kk * d + j] *= scale;
                }
                b_eff[j] = beta[j] + scale * (b[j] - rm);
            }
            (w_eff, b_eff)
        };

        if seg.index.iter().any(|&r| r as usize >= rows.len()) {
            return Err(Error::ShapeMismatch("segment index out of range".into()));
        }
        if (0..seg.len()).any(|g| seg.group(g).is_empty()) {
            return Err(Error::InvalidArgument(
                "max pooling over an empty group".into(),
            ));
        }
        let w_t: Vec<T> = w_eff.iter().map(|&x| T::of(x)).collect();
        let b_t: Vec<T> = b_eff.iter().map(|&x| T::of(x)).collect();
        let mut z = Tensor2::zeros(seg.len(), d);
        let mut arg = vec![0u32; seg.len() * d];
        let mut active = vec![false; seg.len() * d];
        // project whole runs of groups at once, at most CHUNK_ROWS member rows
        let mut xbuf = vec![T::zero(); CHUNK_ROWS * k];
        let mut ybuf = vec![T::zero(); CHUNK_ROWS * d];
        let mut g0 = 0;
        while g0 < seg.len() {
            let start = seg.offsets[g0];
            let mut g1 = g0 + 1;
            while g1 < seg.len() && seg.offsets[g1 + 1] - start <= CHUNK_ROWS {
                g1 += 1;
            }
            let n = seg.offsets[g1] - start;
            if n > xbuf.len() / k.max(1) {
                xbuf.resize(n * k, T::zero());
                ybuf.resize(n * d, T::zero());
            }
            for (i, &r) in seg.index[start..start + n].iter().enumerate() {
                for (dst, &v) in xbuf[i * k..(i + 1) * k]
                    .iter_mut()
                    .zip(&rows[r as usize][..k])
                {
                    *dst = T::of(v);
                }
                ybuf[i * d..(i + 1) * d].copy_from_slice(&b_t);
            }
            gemm_slices(n, k, d, &xbuf, &w_t, T::one(), &mut ybuf);
            for g in g0..g1 {
                let (lo, hi) = (seg.offsets[g] - start, seg.offsets[g + 1] - start);
                let a = &mut arg[g * d..(g + 1) * d];
                let best = z.row_mut(g);
                best.copy_from_slice(&ybuf[lo * d..(lo + 1) * d]);
                a.fill(seg.index[start + lo]);
                for i in lo + 1..hi {
                    let r = seg.index[start + i];
                    for ((bj, aj), &yj) in best
                        .iter_mut()
                        .zip(a.iter_mut())
                        .zip(&ybuf[i * d..(i + 1) * d])
                    {
                        if yj > *bj {
                            *bj = yj;
                            *aj = r;
                        }
                    }
                }
                for (j, bj) in best.iter_mut().enumerate() {
                    if *bj > T::zero() {
                        active[g * d + j] = true;
                    } else {
                        *bj = T::zero();
                    }
                }
            }
            g0 = g1;
        }
        Ok((
            z,
            EncoderCache {
                rows,
                arg,
                active,
                stats,
            },
        ))
    }

    /// Fold the batch statistics of a training forward pass into the running
    /// estimates (unbiased variance, momentum as configured).
    pub fn update_running(&mut self, cache: &EncoderCache) {
        let Some(s) = &cache.stats else { return };
        let m = self.bn.momentum;
        let n = s.count as f64;
        for j in 0..self.dout() {
            let rm = self.bn.running_mean[(0, j)].as_f64();
            let rv = self.bn.running_var[(0, j)].as_f64();
            self.bn.running_mean[(0, j)] = T::of((1.0 - m) * rm + m * s.out_mean[j]);
            self.bn.running_var[(0, j)] = T::of((1.0 - m) * rv + m * s.out_var[j] * n / (n - 1.0));
        }
    }

    /// Accumulate parameter gradients from the pooled-output gradient.
    pub fn backward(&mut self, cache: &EncoderCache, dz: &Tensor2<T>) {
        let (k, d) = (self.din(), self.dout());
        let groups = dz.rows();
        assert_eq!(dz.cols(), d);
        match &cache.stats {
            None => {
                assert!(
                    self.bypass_norm,
                    "backward needs a training-mode forward pass"
                );
                for g in 0..groups {
                    for j in 0..d {
                        if !cache.active[g * d + j] {
                            continue;
                        }
                        let gv = dz[(g, j)];
                        let row = &cache.rows[cache.arg[g * d + j] as usize];
                        self.dense.bias.grad[(0, j)] = self.dense.bias.grad[(0, j)] + gv;
                        for kk in 0..k {
                            self.dense.weight.grad[(kk, j)] =
                                self.dense.weight.grad[(kk, j)] + T::of(row[kk]) * gv;
                        }
                    }
                }
            }
            Some(s) => {
                // per column: g = Σ dy, q = Σ dy (d_r - m) over the winning rows
                let mut gsum = vec![0.0f64; d];
                let mut q = vec![0.0f64; k * d];
                for g in 0..groups {
                    for j in 0..d {
                        if !cache.active[g * d + j] {
                            continue;
                        }
                        let gv = dz[(g, j)].as_f64();
                        let row = &cache.rows[cache.arg[g * d + j] as usize];
                        gsum[j] += gv;
                        for kk in 0..k {
                            q[kk * d + j] += gv * (row[kk] - s.mean[kk]);
                        }
                    }
                }
                for j in 0..d {
                    let gamma = self.bn.gamma.value[(0, j)].as_f64();
                    let inv = s.inv_std[j];
                    let w: Vec<f64> = (0..k)
                        .map(|kk| self.dense.weight.value[(kk, j)].as_f64())
                        .collect();
                    let qj: Vec<f64> = (0..k).map(|kk| q[kk * d + j]).collect();
                    let qw: f64 = qj.iter().zip(&w).map(|(a, b)| a * b).sum();
                    self.bn.beta.grad[(0, j)] = self.bn.beta.grad[(0, j)] + T::of(gsum[j]);
                    self.bn.gamma.grad[(0, j)] = self.bn.gamma.grad[(0, j)] + T::of(inv * qw);
                    for kk in 0..k {
                        let sw: f64 = (0..k).map(|l| s.cov[kk][l] * w[l]).sum();
                        let dw = gamma * inv * (qj[kk] - inv * inv * qw * sw);
                        self.dense.weight.grad[(kk, j)] =
                            self.dense.weight.grad[(kk, j)] + T::of(dw);
                    }
                }
            }
        }
    }
}

impl<T: Real> Parameterized<T> for PointEncoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.dense.params();
        p.extend(self.bn.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.dense.params_mut();
        p.extend(self.bn.params_mut());
        p
    }

    fn buffers(&self) -> Vec<&Tensor2<T>> {
        self.bn.buffers()
    }

    fn buffers_mut(&mut self) -> Vec<&mut Tensor2<T>> {
        self.bn.buffers_mut()
    }
}

fn batch_stats(rows: &[Descriptor], k: usize, w: &[f64], b: &[f64]) -> BatchStats {
    let n = rows.len() as f64;
    let d = b.len();
    let mut mean = [0.0; MAX_DESCRIPTOR];
    for r in rows {
        for kk in 0..k {
            mean[kk] += r[kk];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = [[0.0; MAX_DESCRIPTOR]; MAX_DESCRIPTOR];
    for r in rows {
        for a in 0..k {
            let ca = r[a] - mean[a];
            for c in a..k {
                cov[a][c] += ca * (r[c] - mean[c]);
            }
        }
    }
    for a in 0..k {
        for c in a..k {
            cov[a][c] /= n;
            cov[c][a] = cov[a][c];
        }
    }
    let mut out_mean = vec![0.0; d];
    let mut out_var = vec![0.0; d];
    let mut inv_std = vec![0.0; d];
    for j in 0..d {
        let wj: Vec<f64> = (0..k).map(|kk| w[kk * d + j]).collect();
        out_mean[j] = b[j] + (0..k).map(|kk| mean[kk] * wj[kk]).sum::<f64>();
        let mut var = 0.0;
        for a in 0..k {
            for c in 0..k {
                var += wj[a] * cov[a][c] * wj[c];
            }
        }
        out_var[j] = var.max(0.0);
        inv_std[j] = 1.0 / (out_var[j] + NORM_EPS).sqrt();
    }
    BatchStats {
        mean,
        cov,
        inv_std,
        out_mean,
        out_var,
        count: rows.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{relu, segment_max};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<Descriptor> {
        (0..n)
            .map(|_| {
                let mut r = [0.0; MAX_DESCRIPTOR];
                for x in &mut r {
                    *x = rng.random_range(-1.0..1.0);
                }
                r
            })
            .collect()
    }

    /// The same computation with explicit layers.
    fn reference(
        enc: &PointEncoder<f64>,
        rows: &[Descriptor],
        seg: &Segments,
        mode: Mode,
    ) -> Tensor2<f64> {
        let k = enc.din();
        let x = Tensor2::from_vec(
            rows.len(),
            k,
            rows.iter().flat_map(|r| r[..k].to_vec()).collect(),
        )
        .unwrap();
        let u = enc.dense.forward(&x).unwrap();
        let y = match mode {
            Mode::Train => enc.bn.forward_train(&u).unwrap().0,
            Mode::Eval => enc.bn.forward_eval(&u).unwrap(),
        };
        segment_max(&relu(&y), seg).0
    }

    #[test]
    fn matches_explicit_layers() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut enc = PointEncoder::<f64>::new(6, 5, &mut rng);
        let rows = random_rows(20, &mut rng);
        let seg = Segments {
            offsets: vec![0, 7, 8, 20],
            index: (0..20).rev().collect(),
        };
        for mode in [Mode::Train, Mode::Eval] {
            let (z, cache) = enc.forward(rows.clone(), &seg, mode).unwrap();
            let r = reference(&enc, &rows, &seg, mode);
            for (a, b) in z.data().iter().zip(r.data()) {
                assert!((a - b).abs() < 1e-10, "{mode:?}: {a} vs {b}");
            }
            enc.update_running(&cache);
        }
    }

    #[test]
    fn identity_hook_base_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut enc = PointEncoder::<f64>::new(3, 3, &mut rng);
        enc.dense.weight.value = Tensor2::identity(3);
        enc.bypass_norm = true;
        let rows = vec![
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 2.0, 0.0, 0.0, 0.0, 0.0],
        ];
        let seg = Segments::contiguous([2]);
        let (z, _) = enc.forward(rows.clone(), &seg, Mode::Train).unwrap();
        assert_eq!(z.row(0), &[1.0, 2.0, 0.0]);
        let rev = Segments {
            offsets: vec![0, 2],
            index: vec![1, 0],
        };
        assert_eq!(enc.forward(rows, &rev, Mode::Eval).unwrap().0, z);
    }
}
