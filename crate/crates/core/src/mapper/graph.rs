use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{cover_assign, dbscan, fit_pca_lens};
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapperParams {
    pub n_intervals: usize,
    pub gain: f64,
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for MapperParams {
    fn default() -> Self {
        Self {
            n_intervals: 6,
            gain: 0.3,
            eps: 0.1,
            min_pts: 4,
        }
    }
}

impl MapperParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_intervals == 0 {
            return Err(Error::InvalidArgument("n_intervals must be >= 1".into()));
        }
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(Error::InvalidArgument(
                "gain must be finite and >= 0".into(),
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidArgument("eps must be finite and > 0".into()));
        }
        if self.min_pts == 0 {
            return Err(Error::InvalidArgument("min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

/// Where a node came from: its cover cell and the DBSCAN cluster id inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeProvenance {
    pub cell: [u32; 3],
    pub cluster: u32,
}

impl NodeProvenance {
    pub const FALLBACK: NodeProvenance = NodeProvenance {
        cell: [0; 3],
        cluster: u32::MAX,
    };

    pub fn is_fallback(&self) -> bool {
        self.cluster == u32::MAX
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapperGraph {
    /// Size of the source cloud the indices refer to.
    pub point_count: u32,
    /// Sorted global point indices per node.
    pub nodes: Vec<Vec<u32>>,
    /// Undirected edges with `u < v`, sorted.
    pub edges: Vec<(u32, u32)>,
    pub provenance: Vec<NodeProvenance>,
}

impl MapperGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    /// Number of connected components (union-find).
    pub fn component_count(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut components = self.nodes.len();
        for &(u, v) in &self.edges {
            let (a, b) = (find(&mut parent, u as usize), find(&mut parent, v as usize));
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
        components
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| {
            Err(Error::InvalidArgument(format!(
                "invalid mapper graph: {msg}"
            )))
        };
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        if self.provenance.len() != self.nodes.len() {
            return bad("provenance length differs from node count".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_empty() {
                return bad(format!("node {i} is empty"));
            }
            if node.iter().any(|&p| p >= self.point_count) {
                return bad(format!("node {i} references a missing point"));
            }
        }
        let n = self.nodes.len() as u32;
        if self.edges.iter().any(|&(u, v)| u >= v || v >= n) {
            return bad("edge out of range or not normalized".into());
        }
        Ok(())
    }
}

/// Edges between every pair of nodes sharing at least one point index.
pub fn nerve_edges(nodes: &[Vec<u32>], point_count: usize) -> Vec<(u32, u32)> {
    let mut containing: Vec<Vec<u32>> = vec![Vec::new(); point_count];
    for (id, node) in nodes.iter().enumerate() {
        for &p in node {
            containing[p as usize].push(id as u32);
        }
    }
    let mut edges = BTreeSet::new();
    for owners in &containing {
        for (a, &u) in owners.iter().enumerate() {
            for &v in &owners[a + 1..] {
                edges.insert((u.min(v), u.max(v)));
            }
        }
    }
    edges.into_iter().collect()
}

/// Build the Mapper graph of a cloud.
///
/// Nodes appear in cover-cell order, then cluster order within a cell. Noise
/// points are dropped. If no cell yields a cluster the graph is a single
/// fallback node holding every point.
pub fn build_mapper_graph(pc: &PointCloud, params: &MapperParams) -> Result<MapperGraph> {
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    params.validate()?;
    let (_, projected) = fit_pca_lens(&pc.points);
    let mut nodes = Vec::new();
    let mut provenance = Vec::new();
    for (cell, members) in cover_assign(&projected, params.n_intervals, params.gain) {
        let coords: Vec<_> = members.iter().map(|&i| pc.points[i]).collect();
        let labels = dbscan(&coords, &members, params.eps, params.min_pts);
        let clusters = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        let mut groups: Vec<Vec<u32>> = vec![Vec::new(); clusters];
        for (&idx, label) in members.iter().zip(&labels) {
            if let Some(c) = label {
                groups[*c].push(idx as u32);
            }
        }
        for (c, group) in groups.into_iter().enumerate() {
            nodes.push(group);
            provenance.push(NodeProvenance {
                cell: cell.index.map(|i| i as u32),
                cluster: c as u32,
            });
        }
    }
    if nodes.is_empty() {
        nodes.push((0..pc.len() as u32).collect());
        provenance.push(NodeProvenance::FALLBACK);
    }
    let edges = nerve_edges(&nodes, pc.len());
    Ok(MapperGraph {
        point_count: pc.len() as u32,
        nodes,
        edges,
        provenance,
    })
}
