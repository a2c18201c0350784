//! Disjoint-union batching of samples.

use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::mapper::MapperGraph;
use crate::nn::Segments;

/// One labelled cloud with its Mapper graph (absent for point-only models).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub points: Vec<Point3>,
    pub graph: Option<MapperGraph>,
    pub label: usize,
}

/// Several Mapper graphs merged into one graph with disjoint node sets.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    /// All points of all samples, concatenated.
    pub points: Vec<Point3>,
    /// Member points of each node as global indices into `points`.
    pub members: Segments,
    /// Graph id of each node; nodes of a graph are contiguous.
    pub node_graph: Vec<usize>,
    /// Undirected edges over global node ids.
    pub edges: Vec<(u32, u32)>,
    pub labels: Vec<usize>,
}

impl GraphBatch {
    pub fn from_samples(samples: &[&Sample]) -> Result<Self> {
        let mut points = Vec::new();
        let mut offsets = vec![0usize];
        let mut index = Vec::new();
        let mut node_graph = Vec::new();
        let mut edges = Vec::new();
        let mut labels = Vec::with_capacity(samples.len());
        for (g, s) in samples.iter().enumerate() {
            let graph = s
                .graph
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("sample has no Mapper graph".into()))?;
            if graph.point_count as usize != s.points.len() {
                return Err(Error::ShapeMismatch(format!(
                    "graph built for {} points, sample has {}",
                    graph.point_count,
                    s.points.len()
                )));
            }
            if graph.nodes.is_empty() {
                return Err(Error::InvalidArgument("graph without nodes".into()));
            }
            let point_base = points.len() as u32;
            let node_base = node_graph.len() as u32;
            points.extend_from_slice(&s.points);
            for node in &graph.nodes {
                index.extend(node.iter().map(|&i| point_base + i));
                offsets.push(index.len());
                node_graph.push(g);
            }
            edges.extend(
                graph
                    .edges
                    .iter()
                    .map(|&(u, v)| (node_base + u, node_base + v)),
            );
            labels.push(s.label);
        }
        Ok(Self {
            points,
            members: Segments { offsets, index },
            node_graph,
            edges,
            labels,
        })
    }

    pub fn graph_count(&self) -> usize {
        self.labels.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_graph.len()
    }

    /// Nodes of each graph as contiguous segments.
    pub fn graph_segments(&self) -> Segments {
        let mut sizes = vec![0usize; self.graph_count()];
        for &g in &self.node_graph {
            sizes[g] += 1;
        }
        Segments::contiguous(sizes)
    }

    /// One row per point: `[x, y, z]`.
    pub fn base_descriptors(&self) -> (Vec<[f64; 6]>, usize, Segments) {
        let rows = self
            .points
            .iter()
            .map(|p| [p[0], p[1], p[2], 0.0, 0.0, 0.0])
            .collect();
        (rows, 3, self.members.clone())
    }

    /// One row per node membership: `[x, (x - c_n) / R_n]`, grouped by node.
    pub fn local_descriptors(&self) -> (Vec<[f64; 6]>, usize, Segments) {
        let mut rows = Vec::with_capacity(self.members.index.len());
        let mut node_pts = Vec::new();
        let mut sorted = Vec::new();
        for n in 0..self.members.len() {
            node_pts.clear();
            node_pts.extend(
                self.members
                    .group(n)
                    .iter()
                    .map(|&i| self.points[i as usize]),
            );
            // canonical order keeps the centroid sum independent of point order
            sorted.clear();
            sorted.extend_from_slice(&node_pts);
            sorted.sort_by(geom::lex_cmp);
            let (c, r) = node_frame(&sorted);
            for p in &node_pts {
                let l = geom::scale(&geom::sub(p, &c), 1.0 / r);
                rows.push([p[0], p[1], p[2], l[0], l[1], l[2]]);
            }
        }
        let sizes = (0..self.members.len()).map(|n| self.members.group(n).len());
        (rows, 6, Segments::contiguous(sizes))
    }
}

/// Node centroid and radius `max ‖x - c‖`, clamped below at `1e-6`.
pub fn node_frame(points: &[Point3]) -> (Point3, f64) {
    let c = geom::centroid(points);
    let r = points.iter().map(|p| geom::dist(p, &c)).fold(0.0, f64::max);
    (c, r.max(1e-6))
}

/// Points of each sample, concatenated, with one contiguous segment per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PointBatch {
    pub points: Vec<Point3>,
    pub clouds: Segments,
    pub labels: Vec<usize>,
}

impl PointBatch {
    pub fn from_samples(samples: &[&Sample]) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.points.is_empty()) {
            return Err(Error::InvalidArgument(format!(
                "empty cloud with label {}",
                s.label
            )));
        }
        Ok(Self {
            points: samples
                .iter()
                .flat_map(|s| s.points.iter().copied())
                .collect(),
            clouds: Segments::contiguous(samples.iter().map(|s| s.points.len())),
            labels: samples.iter().map(|s| s.label).collect(),
        })
    }
}
