//! Corrupted variants of a clean, unit-sphere-normalized cloud at severities
//! 1 through 5.
//!
//! Magnitudes per severity `s` (with `N` the input point count):
//!
//! | kind        | effect                                                          |
//! |-------------|-----------------------------------------------------------------|
//! | uniform     | per-coordinate `U(-a, a)`, `a = 0.01 s`                          |
//! | gaussian    | per-coordinate `N(0, σ²)`, `σ = 0.01 s`                           |
//! | impulse     | `round(0.02 s N)` points replaced by uniform samples of the unit ball |
//! | upsampling  | `round(0.1 s N)` jittered copies (`σ = 0.02`) appended           |
//! | background  | `20 s` points uniform in the bounding box appended               |
//! | cutout      | `s + 1` anchors, 30 nearest neighbors of each removed            |
//! | density_inc | `s + 1` anchors, 40 nearest neighbors of each duplicated (`σ = 0.01`) |
//! | density_dec | keep `round(N (1 - 0.12 s))` random points                       |
//! | rotation    | random axis, angle uniform in `[6°(s-1), 6° s)`                  |
//! | shear       | `I + S`, off-diagonal `S ~ U(-0.05 s, 0.05 s)`                   |
//! | ffd         | 4x4x4 Bernstein lattice, offsets `U(-0.04 s, 0.04 s)`            |
//! | rbf         | 5 Gaussian bumps, width² 0.25, weights `U(-0.04 s, 0.04 s)³`     |
//! | inv_rbf     | same with the inverse multiquadric kernel                        |

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitBall, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::pointcloud::PointCloud;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorruptionKind {
    Uniform,
    Gaussian,
    Impulse,
    Upsampling,
    Background,
    Cutout,
    DensityInc,
    DensityDec,
    Rotation,
    Shear,
    Ffd,
    Rbf,
    InvRbf,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 13] = [
        CorruptionKind::Uniform,
        CorruptionKind::Gaussian,
        CorruptionKind::Impulse,
        CorruptionKind::Upsampling,
        CorruptionKind::Background,
        CorruptionKind::Cutout,
        CorruptionKind::DensityInc,
        CorruptionKind::DensityDec,
        CorruptionKind::Rotation,
        CorruptionKind::Shear,
        CorruptionKind::Ffd,
        CorruptionKind::Rbf,
        CorruptionKind::InvRbf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::Uniform => "uniform",
            CorruptionKind::Gaussian => "gaussian",
            CorruptionKind::Impulse => "impulse",
            CorruptionKind::Upsampling => "upsampling",
            CorruptionKind::Background => "background",
            CorruptionKind::Cutout => "cutout",
            CorruptionKind::DensityInc => "density_inc",
            CorruptionKind::DensityDec => "density_dec",
            CorruptionKind::Rotation => "rotation",
            CorruptionKind::Shear => "shear",
            CorruptionKind::Ffd => "ffd",
            CorruptionKind::Rbf => "rbf",
            CorruptionKind::InvRbf => "inv_rbf",
        }
    }

    /// Rigid or smooth warps that move points without adding or removing any.
    pub fn is_transformation(self) -> bool {
        matches!(
            self,
            CorruptionKind::Rotation
                | CorruptionKind::Shear
                | CorruptionKind::Ffd
                | CorruptionKind::Rbf
                | CorruptionKind::InvRbf
        )
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownCorruption(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8, seed: u64) -> Result<Self> {
        if !(1..=5).contains(&severity) {
            return Err(Error::Severity(severity));
        }
        Ok(Self {
            kind,
            severity,
            seed,
        })
    }

    fn rng(&self) -> ChaCha8Rng {
        seed::rng(self.seed, &[self.kind as u64, u64::from(self.severity)])
    }
}

pub fn apply_corruption(pc: &PointCloud, spec: &CorruptionSpec) -> Result<PointCloud> {
    apply_corruption_scaled(pc, spec, 1.0)
}

/// Like [`apply_corruption`] with every magnitude multiplied by `amplitude`.
/// An amplitude of 0 turns each kind into the identity (or a no-op append /
/// removal of zero points).
pub fn apply_corruption_scaled(
    pc: &PointCloud,
    spec: &CorruptionSpec,
    amplitude: f64,
) -> Result<PointCloud> {
    if !(1..=5).contains(&spec.severity) {
        return Err(Error::Severity(spec.severity));
    }
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let s = f64::from(spec.severity);
    let n = pc.len();
    let mut rng = spec.rng();
    let mut points = pc.points.clone();
    match spec.kind {
        CorruptionKind::Uniform => {
            let a = 0.01 * s * amplitude;
            for p in &mut points {
                for c in p.iter_mut() {
                    *c += a * rng.random_range(-1.0..=1.0);
                }
            }
        }
        CorruptionKind::Gaussian => {
            let sigma = 0.01 * s * amplitude;
            for p in &mut points {
                for c in p.iter_mut() {
                    let z: f64 = rng.sample(rand_distr::StandardNormal);
                    *c += sigma * z;
                }
            }
        }
        CorruptionKind::Impulse => {
            let k = (0.02 * s * amplitude * n as f64).round() as usize;
            for i in index::sample(&mut rng, n, k.min(n)).into_vec() {
                points[i] = UnitBall.sample(&mut rng);
            }
        }
        CorruptionKind::Upsampling => {
            let m = (0.1 * s * amplitude * n as f64).round() as usize;
            let jitter = Normal::new(0.0, 0.02).expect("valid sigma");
            for _ in 0..m {
                let src = pc.points[rng.random_range(0..n)];
                points.push([
                    src[0] + jitter.sample(&mut rng),
                    src[1] + jitter.sample(&mut rng),
                    src[2] + jitter.sample(&mut rng),
                ]);
            }
        }
        CorruptionKind::Background => {
            let m = (20.0 * s * amplitude).round() as usize;
            let (lo, hi) = geom::bounding_box(&pc.points);
            for _ in 0..m {
                let mut p = [0.0; 3];
                for k in 0..3 {
                    p[k] = if hi[k] > lo[k] {
                        rng.random_range(lo[k]..=hi[k])
                    } else {
                        lo[k]
                    };
                }
                points.push(p);
            }
        }
        CorruptionKind::Cutout => {
            let per_anchor = (30.0 * amplitude).round() as usize;
            let anchors =
                index::sample(&mut rng, n, (spec.severity as usize + 1).min(n)).into_vec();
            let mut removed = vec![false; n];
            for a in anchors {
                for i in nearest_neighbors(&pc.points, &pc.points[a], per_anchor) {
                    removed[i] = true;
                }
            }
            points = pc
                .points
                .iter()
                .zip(&removed)
                .filter(|(_, r)| !**r)
                .map(|(p, _)| *p)
                .collect();
        }
        CorruptionKind::DensityInc => {
            let per_anchor = (40.0 * amplitude).round() as usize;
            let jitter = Normal::new(0.0, 0.01).expect("valid sigma");
            let anchors =
                index::sample(&mut rng, n, (spec.severity as usize + 1).min(n)).into_vec();
            for a in anchors {
                for i in nearest_neighbors(&pc.points, &pc.points[a], per_anchor) {
                    let src = pc.points[i];
                    points.push([
                        src[0] + jitter.sample(&mut rng),
                        src[1] + jitter.sample(&mut rng),
                        src[2] + jitter.sample(&mut rng),
                    ]);
                }
            }
        }
        CorruptionKind::DensityDec => {
            let keep = (n as f64 * (1.0 - 0.12 * s * amplitude)).round().max(1.0) as usize;
            let mut kept = index::sample(&mut rng, n, keep.min(n)).into_vec();
            kept.sort_unstable();
            points = kept.into_iter().map(|i| pc.points[i]).collect();
        }
        CorruptionKind::Rotation => {
            let m = rotation_matrix(spec, amplitude);
            apply_linear(&mut points, &m);
        }
        CorruptionKind::Shear => {
            let m = shear_matrix(spec, amplitude);
            apply_linear(&mut points, &m);
        }
        CorruptionKind::Ffd => {
            let offsets = ffd_offsets(&mut rng, 0.04 * s * amplitude);
            let (lo, hi) = geom::bounding_box(&pc.points);
            for p in &mut points {
                let d = ffd_displacement(p, &lo, &hi, &offsets);
                *p = geom::add(p, &d);
            }
        }
        CorruptionKind::Rbf | CorruptionKind::InvRbf => {
            let w = 0.04 * s * amplitude;
            let mut bumps = Vec::with_capacity(5);
            for _ in 0..5 {
                let anchor: Point3 = UnitBall.sample(&mut rng);
                let weight = [
                    rng.random_range(-1.0..=1.0) * w,
                    rng.random_range(-1.0..=1.0) * w,
                    rng.random_range(-1.0..=1.0) * w,
                ];
                bumps.push((anchor, weight));
            }
            let inverse = spec.kind == CorruptionKind::InvRbf;
            for p in &mut points {
                let mut d = [0.0; 3];
                for (anchor, weight) in &bumps {
                    let r2 = geom::dist2(p, anchor) / 0.25;
                    let k = if inverse {
                        (1.0 + r2).powf(-0.5)
                    } else {
                        (-r2).exp()
                    };
                    d = geom::add(&d, &geom::scale(weight, k));
                }
                *p = geom::add(p, &d);
            }
        }
    }
    Ok(PointCloud {
        points,
        label: pc.label,
    })
}

/// The rotation applied by a `rotation` spec.
pub fn rotation_matrix(spec: &CorruptionSpec, amplitude: f64) -> Matrix3<f64> {
    let mut rng = spec.rng();
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let s = f64::from(spec.severity);
    let degrees = 6.0 * (s - 1.0 + rng.random::<f64>()) * amplitude;
    let axis = Unit::new_normalize(Vector3::from(axis));
    Rotation3::from_axis_angle(&axis, degrees.to_radians()).into_inner()
}

/// The matrix `I + S` applied by a `shear` spec.
pub fn shear_matrix(spec: &CorruptionSpec, amplitude: f64) -> Matrix3<f64> {
    let mut rng = spec.rng();
    let a = 0.05 * f64::from(spec.severity) * amplitude;
    let mut m = Matrix3::identity();
    for r in 0..3 {
        for c in 0..3 {
            if r != c {
                m[(r, c)] = rng.random_range(-1.0..=1.0) * a;
            }
        }
    }
    m
}

fn apply_linear(points: &mut [Point3], m: &Matrix3<f64>) {
    for p in points {
        let v = m * Vector3::new(p[0], p[1], p[2]);
        *p = [v.x, v.y, v.z];
    }
}

/// Indices of the `k` nearest points to `query`, ties broken by index.
fn nearest_neighbors(points: &[Point3], query: &Point3, k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (geom::dist2(p, query), i))
        .collect();
    let k = k.min(order.len());
    if k == 0 {
        return Vec::new();
    }
    order.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    order.into_iter().map(|(_, i)| i).collect()
}

const LATTICE: usize = 4;

fn ffd_offsets(rng: &mut ChaCha8Rng, amplitude: f64) -> Vec<Point3> {
    (0..LATTICE * LATTICE * LATTICE)
        .map(|_| {
            [
                rng.random_range(-1.0..=1.0) * amplitude,
                rng.random_range(-1.0..=1.0) * amplitude,
                rng.random_range(-1.0..=1.0) * amplitude,
            ]
        })
        .collect()
}

fn bernstein3(t: f64) -> [f64; LATTICE] {
    let u = 1.0 - t;
    [u * u * u, 3.0 * t * u * u, 3.0 * t * t * u, t * t * t]
}

/// Displacement of the cubic Bernstein lattice spanning the bounding box.
/// The undisplaced lattice reproduces the identity, so only the control
/// offsets contribute.
fn ffd_displacement(p: &Point3, lo: &Point3, hi: &Point3, offsets: &[Point3]) -> Point3 {
    let mut t = [0.5; 3];
    for k in 0..3 {
        let extent = hi[k] - lo[k];
        if extent > 0.0 {
            t[k] = ((p[k] - lo[k]) / extent).clamp(0.0, 1.0);
        }
    }
    let (bx, by, bz) = (bernstein3(t[0]), bernstein3(t[1]), bernstein3(t[2]));
    let mut d = [0.0; 3];
    for i in 0..LATTICE {
        for j in 0..LATTICE {
            for k in 0..LATTICE {
                let w = bx[i] * by[j] * bz[k];
                let o = &offsets[(i * LATTICE + j) * LATTICE + k];
                d = geom::add(&d, &geom::scale(o, w));
            }
        }
    }
    d
}

/// One corrupted cloud per (kind, severity), kinds in catalog order.
pub fn corruption_suite(pc: &PointCloud, seed: u64) -> Result<Vec<(CorruptionSpec, PointCloud)>> {
    let mut out = Vec::with_capacity(CorruptionKind::ALL.len() * 5);
    for kind in CorruptionKind::ALL {
        for severity in 1..=5u8 {
            let spec = CorruptionSpec::new(kind, severity, suite_seed(seed, kind, severity))?;
            out.push((spec, apply_corruption(pc, &spec)?));
        }
    }
    Ok(out)
}

pub fn suite_seed(seed: u64, kind: CorruptionKind, severity: u8) -> u64 {
    seed::derive(seed, &[kind as u64, u64::from(severity)])
}
