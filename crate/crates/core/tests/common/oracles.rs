//! Brute-force references for the Mapper nerve and DBSCAN, and the random
//! instances they are checked on.

use std::collections::BTreeSet;

use mapper_gin::geom::{dist2, lex_cmp, Point3};
use mapper_gin::mapper::{build_mapper_graph, dbscan_with_core, MapperGraph, MapperParams};
use mapper_gin::pointcloud::{normalize_unit_sphere, sample_synthetic, PointCloud, Shape};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A cloud of at most 300 points: Gaussian blobs or a catalog shape.
pub fn random_cloud(seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(8..=300);
    if rng.random_bool(0.5) {
        let shape = Shape::ALL[rng.random_range(0..Shape::ALL.len())];
        return sample_synthetic(shape, n, rng.random()).expect("n >= 8");
    }
    let blobs = rng.random_range(1..=5);
    let centers: Vec<Point3> = (0..blobs)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ]
        })
        .collect();
    let sigma: f64 = rng.random_range(0.02..0.3);
    let points = (0..n)
        .map(|i| {
            let c = centers[i % blobs];
            let mut p = [0.0; 3];
            for (k, x) in p.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *x = c[k] + sigma * z;
            }
            p
        })
        .collect();
    normalize_unit_sphere(&PointCloud::new(points))
}

pub fn random_params(rng: &mut ChaCha8Rng) -> MapperParams {
    MapperParams {
        n_intervals: rng.random_range(1..=8),
        gain: rng.random_range(0.0..0.5),
        eps: rng.random_range(0.05..0.3),
        min_pts: rng.random_range(1..=6),
    }
}

/// Node pairs whose index sets intersect, by pairwise set comparison.
pub fn brute_force_nerve(nodes: &[Vec<u32>]) -> Vec<(u32, u32)> {
    let sets: Vec<BTreeSet<u32>> = nodes.iter().map(|n| n.iter().copied().collect()).collect();
    let mut edges = Vec::new();
    for a in 0..sets.len() {
        for b in a + 1..sets.len() {
            if !sets[a].is_disjoint(&sets[b]) {
                edges.push((a as u32, b as u32));
            }
        }
    }
    edges
}

/// Check one random cloud; `Err` describes the first mismatch.
pub fn nerve_case(seed: u64) -> Result<MapperGraph, String> {
    let pc = random_cloud(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let params = if seed % 2 == 0 {
        MapperParams::default()
    } else {
        random_params(&mut rng)
    };
    let g = build_mapper_graph(&pc, &params).map_err(|e| format!("seed {seed}: {e}"))?;
    let expected = brute_force_nerve(&g.nodes);
    if g.edges != expected {
        return Err(format!(
            "seed {seed}: edges {:?} expected {:?}",
            g.edges, expected
        ));
    }
    Ok(g)
}

/// Canonical DBSCAN labels from the ε-graph: cores have at least `min_pts`
/// points (themselves included) within `eps`; clusters are the connected
/// components of the core-core graph, numbered by their first core in
/// lexicographic (then id) order; a border point takes the smallest cluster
/// among its core neighbors.
pub fn brute_force_dbscan(
    points: &[Point3],
    ids: &[usize],
    eps: f64,
    min_pts: usize,
) -> (Vec<bool>, Vec<Option<usize>>) {
    let n = points.len();
    let adj = |a: usize, b: usize| dist2(&points[a], &points[b]) <= eps * eps;
    let core: Vec<bool> = (0..n)
        .map(|a| (0..n).filter(|&b| adj(a, b)).count() >= min_pts)
        .collect();
    let mut component = vec![usize::MAX; n];
    let mut n_comp = 0;
    for s in 0..n {
        if !core[s] || component[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        component[s] = n_comp;
        while let Some(p) = stack.pop() {
            for q in 0..n {
                if core[q] && component[q] == usize::MAX && adj(p, q) {
                    component[q] = n_comp;
                    stack.push(q);
                }
            }
        }
        n_comp += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(&points[a], &points[b]).then(ids[a].cmp(&ids[b])));
    let mut rank = vec![usize::MAX; n_comp];
    let mut next = 0;
    for &p in &order {
        if core[p] && rank[component[p]] == usize::MAX {
            rank[component[p]] = next;
            next += 1;
        }
    }
    let labels = (0..n)
        .map(|p| {
            if core[p] {
                Some(rank[component[p]])
            } else {
                (0..n)
                    .filter(|&q| core[q] && adj(p, q))
                    .map(|q| rank[component[q]])
                    .min()
            }
        })
        .collect();
    (core, labels)
}

/// A random DBSCAN instance: up to 200 points, some on a coarse grid so
/// duplicates and exact-distance ties occur, with shuffled distinct ids.
pub fn dbscan_instance(seed: u64) -> (Vec<Point3>, Vec<usize>, f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=200);
    let grid = rng.random_bool(0.3);
    let points: Vec<Point3> = (0..n)
        .map(|_| {
            let mut p: Point3 = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            if grid {
                p.iter_mut().for_each(|x| *x = (*x * 4.0).round() / 4.0);
            }
            p
        })
        .collect();
    let mut ids: Vec<usize> = (0..n).map(|i| i * 3 + 1).collect();
    ids.shuffle(&mut rng);
    let eps = if grid {
        0.25
    } else {
        rng.random_range(0.05..0.6)
    };
    let min_pts = rng.random_range(1..=8);
    (points, ids, eps, min_pts)
}

pub fn dbscan_case(seed: u64) -> Result<(), String> {
    let (points, ids, eps, min_pts) = dbscan_instance(seed);
    let (got, got_core) = dbscan_with_core(&points, &ids, eps, min_pts);
    let (core, expected) = brute_force_dbscan(&points, &ids, eps, min_pts);
    if got_core != core {
        return Err(format!("seed {seed}: core sets differ"));
    }
    if got != expected {
        return Err(format!("seed {seed}: labels {got:?} expected {expected:?}"));
    }
    Ok(())
}
