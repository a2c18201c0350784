use std::collections::VecDeque;

use crate::geom::{self, Point3};

/// DBSCAN with a canonical processing order.
///
/// Points are visited in lexicographic coordinate order, ties broken by
/// `ids` (the points' global indices), so labels do not depend on the input
/// order. A point is core when at least `min_pts` points, itself included,
/// lie within distance `eps`. Clusters are numbered in discovery order and a
/// border point joins the first cluster that reaches it. Returns one label
/// per input point, `None` for noise.
pub fn dbscan(points: &[Point3], ids: &[usize], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    dbscan_with_core(points, ids, eps, min_pts).0
}

/// [`dbscan`] labels together with the core flag of each input point.
pub fn dbscan_with_core(
    points: &[Point3],
    ids: &[usize],
    eps: f64,
    min_pts: usize,
) -> (Vec<Option<usize>>, Vec<bool>) {
    assert_eq!(points.len(), ids.len(), "one id per point");
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");

    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| geom::lex_cmp(&points[a], &points[b]).then(ids[a].cmp(&ids[b])));

    // neighbor lists over canonical positions; the x-sorted order bounds the scan
    let eps2 = eps * eps;
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for a in 0..n {
        let pa = &points[order[a]];
        for b in a + 1..n {
            let pb = &points[order[b]];
            if pb[0] - pa[0] > eps {
                break;
            }
            if geom::dist2(pa, pb) <= eps2 {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() + 1 >= min_pts).collect();

    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut next_cluster = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if !core[start] || labels[start].is_some() {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[start] = Some(cluster);
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(cluster);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }

    let mut out = vec![None; n];
    let mut out_core = vec![false; n];
    for (pos, &orig) in order.iter().enumerate() {
        out[orig] = labels[pos];
        out_core[orig] = core[pos];
    }
    (out, out_core)
}
