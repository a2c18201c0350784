//! Mapper region graphs: PCA lens, cubical cover, per-cell DBSCAN, and the
//! overlap (nerve 1-skeleton) edges between the resulting clusters.

mod cache;
mod cover;
mod dbscan;
mod graph;
mod lens;

pub use cache::{
    decode_graphs, encode_graphs, graphs_to_json, read_graph_cache, write_graph_cache, GRAPH_MAGIC,
};
pub use cover::{cover_assign, AxisCover, CoverCell};
pub use dbscan::{dbscan, dbscan_with_core};
pub use graph::{build_mapper_graph, nerve_edges, MapperGraph, MapperParams, NodeProvenance};
pub use lens::{fit_pca_lens, PcaLens};
