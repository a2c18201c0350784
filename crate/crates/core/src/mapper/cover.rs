use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::Point3;

/// Overlapping intervals along one lens axis.
///
/// Interval `i` spans `[a + i w - g w / 2, a + (i + 1) w + g w / 2]` with
/// `w = (b - a) / n`. A zero-range axis collapses to a single interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisCover {
    pub start: f64,
    pub width: f64,
    pub n_intervals: usize,
    pub gain: f64,
}

impl AxisCover {
    pub fn fit(values: impl Iterator<Item = f64>, n_intervals: usize, gain: f64) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let range = hi - lo;
        if !(range > 1e-12) {
            return Self {
                start: if lo.is_finite() { lo } else { 0.0 },
                width: 0.0,
                n_intervals: 1,
                gain,
            };
        }
        Self {
            start: lo,
            width: range / n_intervals as f64,
            n_intervals,
            gain,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.width == 0.0
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        if self.is_degenerate() {
            return (self.start - 0.5, self.start + 0.5);
        }
        let pad = 0.5 * self.gain * self.width;
        (
            self.start + i as f64 * self.width - pad,
            self.start + (i + 1) as f64 * self.width + pad,
        )
    }

    /// Every interval containing `v`; never empty.
    pub fn intervals_of(&self, v: f64) -> Vec<usize> {
        if self.is_degenerate() {
            return vec![0];
        }
        let hits: Vec<usize> = (0..self.n_intervals)
            .filter(|&i| {
                let (lo, hi) = self.bounds(i);
                lo <= v && v <= hi
            })
            .collect();
        if hits.is_empty() {
            let i = ((v - self.start) / self.width).floor();
            vec![(i.max(0.0) as usize).min(self.n_intervals - 1)]
        } else {
            hits
        }
    }
}

/// A box of the cubical cover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverCell {
    pub index: [usize; 3],
    pub bounds: [(f64, f64); 3],
}

/// Assign projected points to cover cells. Cells come back in lexicographic
/// index order with ascending member indices; empty cells are omitted.
pub fn cover_assign(
    projected: &[Point3],
    n_intervals: usize,
    gain: f64,
) -> Vec<(CoverCell, Vec<usize>)> {
    assert!(n_intervals >= 1, "need at least one interval");
    let axes: [AxisCover; 3] =
        std::array::from_fn(|k| AxisCover::fit(projected.iter().map(|p| p[k]), n_intervals, gain));
    let mut cells: BTreeMap<[usize; 3], Vec<usize>> = BTreeMap::new();
    for (idx, p) in projected.iter().enumerate() {
        let per_axis: [Vec<usize>; 3] = std::array::from_fn(|k| axes[k].intervals_of(p[k]));
        for &i in &per_axis[0] {
            for &j in &per_axis[1] {
                for &k in &per_axis[2] {
                    cells.entry([i, j, k]).or_default().push(idx);
                }
            }
        }
    }
    cells
        .into_iter()
        .map(|(index, members)| {
            let bounds = std::array::from_fn(|k| axes[k].bounds(index[k]));
            (CoverCell { index, bounds }, members)
        })
        .collect()
}
