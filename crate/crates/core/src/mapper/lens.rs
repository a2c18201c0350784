use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::geom::{self, Point3};

/// Per-sample PCA projection `x -> Wᵀ(x - μ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaLens {
    pub mean: Point3,
    /// Principal directions as columns, by descending eigenvalue.
    pub axes: [[f64; 3]; 3],
}

impl PcaLens {
    pub fn identity(mean: Point3) -> Self {
        Self {
            mean,
            axes: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn project(&self, p: &Point3) -> Point3 {
        let d = geom::sub(p, &self.mean);
        [
            geom::dot(&self.axes[0], &d),
            geom::dot(&self.axes[1], &d),
            geom::dot(&self.axes[2], &d),
        ]
    }
}

/// Fit the lens and project every point.
///
/// Statistics are accumulated over the points in lexicographic order so the
/// result is bit-identical under any permutation of the input. Each axis is
/// sign-fixed so its largest-magnitude component is positive. Fewer than
/// three points, or a zero covariance, fall back to the identity directions.
pub fn fit_pca_lens(points: &[Point3]) -> (PcaLens, Vec<Point3>) {
    if points.is_empty() {
        return (PcaLens::identity([0.0; 3]), Vec::new());
    }
    let mut sorted: Vec<&Point3> = points.iter().collect();
    sorted.sort_by(|a, b| geom::lex_cmp(a, b));

    let n = sorted.len() as f64;
    let mut mean = [0.0; 3];
    for p in &sorted {
        mean = geom::add(&mean, p);
    }
    mean = geom::scale(&mean, 1.0 / n);

    let lens = if sorted.len() < 3 {
        PcaLens::identity(mean)
    } else {
        let mut cov = Matrix3::<f64>::zeros();
        for p in &sorted {
            let d = Vector3::from(geom::sub(p, &mean));
            cov += d * d.transpose();
        }
        cov /= n;
        let magnitude = 1.0 + mean.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        principal_axes(&cov, (1e-12 * magnitude).powi(2))
            .map_or_else(|| PcaLens::identity(mean), |axes| PcaLens { mean, axes })
    };
    let projected = points.iter().map(|p| lens.project(p)).collect();
    (lens, projected)
}

/// `None` when every covariance entry is at or below `floor` (rounding noise).
fn principal_axes(cov: &Matrix3<f64>, floor: f64) -> Option<[[f64; 3]; 3]> {
    let scale = cov.abs().max();
    if scale <= floor {
        return None;
    }
    let eig = SymmetricEigen::new(*cov);
    // insertion sort by descending eigenvalue; near-equal values keep the
    // solver's index order
    let mut order = [0usize, 1, 2];
    for i in 1..3 {
        let mut j = i;
        while j > 0 && eig.eigenvalues[order[j]] > eig.eigenvalues[order[j - 1]] + 1e-9 * scale {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    let mut axes = [[0.0; 3]; 3];
    for (slot, &col) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(col).normalize();
        let mut axis = [v[0], v[1], v[2]];
        let mut pivot = 0;
        for k in 1..3 {
            if axis[k].abs() > axis[pivot].abs() {
                pivot = k;
            }
        }
        if axis[pivot] < 0.0 {
            axis = geom::scale(&axis, -1.0);
        }
        axes[slot] = axis;
    }
    Some(axes)
}
