//! Coordinate-wise max pooling over row groups.

use super::{Real, Tensor2};

/// Row groups in compressed form: group `g` covers
/// `index[offsets[g]..offsets[g + 1]]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Segments {
    pub offsets: Vec<usize>,
    pub index: Vec<u32>,
}

impl Segments {
    /// Contiguous groups of the given sizes over rows `0..Σ sizes`.
    pub fn contiguous(sizes: impl IntoIterator<Item = usize>) -> Self {
        let mut offsets = vec![0];
        for s in sizes {
            offsets.push(offsets.last().copied().unwrap_or(0) + s);
        }
        let total = *offsets.last().expect("non-empty");
        Self {
            offsets,
            index: (0..total as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group(&self, g: usize) -> &[u32] {
        &self.index[self.offsets[g]..self.offsets[g + 1]]
    }
}

/// Max over the rows of each group, per column. Returns the pooled rows and
/// the winning source row per output entry (first maximum wins).
///
/// Every group must be non-empty.
pub fn segment_max<T: Real>(x: &Tensor2<T>, seg: &Segments) -> (Tensor2<T>, Vec<u32>) {
    let d = x.cols();
    let mut out = Tensor2::zeros(seg.len(), d);
    let mut arg = vec![0u32; seg.len() * d];
    for g in 0..seg.len() {
        let rows = seg.group(g);
        assert!(!rows.is_empty(), "max pooling over an empty group");
        let first = rows[0];
        out.row_mut(g).copy_from_slice(x.row(first as usize));
        let a = &mut arg[g * d..(g + 1) * d];
        a.fill(first);
        for &r in &rows[1..] {
            let src = x.row(r as usize);
            let dst = out.row_mut(g);
            for j in 0..d {
                if src[j] > dst[j] {
                    dst[j] = src[j];
                    a[j] = r;
                }
            }
        }
    }
    (out, arg)
}

/// Route pooled gradients back to their winning rows of an `rows x d` input.
pub fn segment_max_backward<T: Real>(dy: &Tensor2<T>, arg: &[u32], rows: usize) -> Tensor2<T> {
    let d = dy.cols();
    let mut dx = Tensor2::zeros(rows, d);
    for g in 0..dy.rows() {
        for j in 0..d {
            let r = arg[g * d + j] as usize;
            dx[(r, j)] = dx[(r, j)] + dy[(g, j)];
        }
    }
    dx
}
