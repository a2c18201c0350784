//! Benchmark kinds, category aggregation, rounding and seed statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::corruptions::CorruptionKind;
use crate::error::{Error, Result};

/// The fifteen benchmark corruptions. Occlusion and LiDAR have no generator
/// here; they only appear when read back from external metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchmarkKind {
    Occlusion,
    Lidar,
    Generated(CorruptionKind),
}

impl BenchmarkKind {
    /// Report order: density family, noise family, transformations.
    pub const ALL: [BenchmarkKind; 15] = [
        BenchmarkKind::Occlusion,
        BenchmarkKind::Lidar,
        BenchmarkKind::Generated(CorruptionKind::DensityInc),
        BenchmarkKind::Generated(CorruptionKind::DensityDec),
        BenchmarkKind::Generated(CorruptionKind::Cutout),
        BenchmarkKind::Generated(CorruptionKind::Uniform),
        BenchmarkKind::Generated(CorruptionKind::Gaussian),
        BenchmarkKind::Generated(CorruptionKind::Impulse),
        BenchmarkKind::Generated(CorruptionKind::Upsampling),
        BenchmarkKind::Generated(CorruptionKind::Background),
        BenchmarkKind::Generated(CorruptionKind::Rotation),
        BenchmarkKind::Generated(CorruptionKind::Shear),
        BenchmarkKind::Generated(CorruptionKind::Ffd),
        BenchmarkKind::Generated(CorruptionKind::Rbf),
        BenchmarkKind::Generated(CorruptionKind::InvRbf),
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::Occlusion => "occlusion",
            BenchmarkKind::Lidar => "lidar",
            BenchmarkKind::Generated(k) => k.name(),
        }
    }

    pub fn label(self) -> &'static str {
        use CorruptionKind::*;
        match self {
            BenchmarkKind::Occlusion => "Occlusion",
            BenchmarkKind::Lidar => "LiDAR",
            BenchmarkKind::Generated(k) => match k {
                Uniform => "Uniform",
                Gaussian => "Gaussian",
                Impulse => "Impulse",
                Upsampling => "Upsampling",
                Background => "Background",
                Cutout => "Cutout",
                DensityInc => "Density Increase",
                DensityDec => "Density Decrease",
                Rotation => "Rotation",
                Shear => "Shear",
                Ffd => "Free-form Deformation",
                Rbf => "RBF-based Deformation",
                InvRbf => "Inverse RBF",
            },
        }
    }
}

impl From<CorruptionKind> for BenchmarkKind {
    fn from(k: CorruptionKind) -> Self {
        BenchmarkKind::Generated(k)
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownCorruption(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Hard,
    DensityStar,
    NoiseStar,
    Transformation,
    Overall,
    Density,
    Noise,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Hard,
        Category::DensityStar,
        Category::NoiseStar,
        Category::Transformation,
        Category::Overall,
        Category::Density,
        Category::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Hard => "hard",
            Category::DensityStar => "density_star",
            Category::NoiseStar => "noise_star",
            Category::Transformation => "transformation",
            Category::Overall => "overall",
            Category::Density => "density",
            Category::Noise => "noise",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Hard => "Hard",
            Category::DensityStar => "Density*",
            Category::NoiseStar => "Noise*",
            Category::Transformation => "Transf.",
            Category::Overall => "Overall",
            Category::Density => "Overall (Density)",
            Category::Noise => "Overall (Noise)",
        }
    }

    pub fn members(self) -> Vec<BenchmarkKind> {
        use BenchmarkKind::{Generated as G, Lidar, Occlusion};
        use CorruptionKind::*;
        match self {
            Category::Hard => vec![Occlusion, Lidar, G(Background)],
            Category::DensityStar => vec![G(DensityInc), G(DensityDec), G(Cutout)],
            Category::NoiseStar => vec![G(Uniform), G(Gaussian), G(Impulse), G(Upsampling)],
            Category::Transformation => vec![G(Rotation), G(Shear), G(Ffd), G(Rbf), G(InvRbf)],
            Category::Overall => BenchmarkKind::ALL.to_vec(),
            Category::Density => vec![Occlusion, Lidar, G(DensityInc), G(DensityDec), G(Cutout)],
            Category::Noise => vec![
                G(Uniform),
                G(Gaussian),
                G(Impulse),
                G(Upsampling),
                G(Background),
            ],
        }
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown category `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMean {
    pub category: Category,
    /// `None` when no member kind is present.
    pub mean: Option<f64>,
    /// Member kinds that were absent and skipped.
    pub skipped: Vec<BenchmarkKind>,
}

/// Category means over whichever member kinds are present.
pub fn aggregate_categories(kind_means: &BTreeMap<BenchmarkKind, f64>) -> Vec<CategoryMean> {
    Category::ALL
        .into_iter()
        .map(|category| {
            let (present, skipped): (Vec<_>, Vec<_>) = category
                .members()
                .into_iter()
                .partition(|k| kind_means.contains_key(k));
            let values: Vec<f64> = present.iter().map(|k| kind_means[k]).collect();
            CategoryMean {
                category,
                mean: (!values.is_empty()).then(|| mean(&values)),
                skipped,
            }
        })
        .collect()
}

pub fn category_mean(kind_means: &BTreeMap<BenchmarkKind, f64>, category: Category) -> Option<f64> {
    aggregate_categories(kind_means)
        .into_iter()
        .find(|c| c.category == category)
        .and_then(|c| c.mean)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and sample (n - 1) standard deviation; the deviation of a single
/// value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (m, (ss / (values.len() - 1) as f64).sqrt())
}

/// Round half away from zero at `decimals` places, treating values within
/// 1e-9 of a tie as the tie.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let y = x * scale;
    let r = (y.abs() + 0.5 + 1e-9).floor().copysign(y);
    r / scale
}

/// A fraction in [0, 1] as a percentage with one decimal.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}", round_half_up(fraction * 100.0, 1))
}
