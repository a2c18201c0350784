//! Mapper region graphs for 3D point clouds, classified with a small
//! Graph Isomorphism Network.
//!
//! The pipeline turns a point cloud into a graph of overlapping regions
//! (PCA lens, cubical cover, per-cell DBSCAN, overlap edges), encodes each
//! region with a shared pointwise MLP and runs GIN message passing on top.
//! Everything needed to train and evaluate under synthetic corruptions lives
//! here: the neural network kernel with hand-written backward passes, the
//! corruption generators, and the metrics/aggregation used for reporting.

pub mod config;
pub mod corruptions;
pub mod error;
pub mod files;
pub mod geom;
pub mod mapper;
pub mod model;
pub mod nn;
pub mod pointcloud;
pub mod seed;
pub mod train_eval;

pub use error::{Error, Result};
pub use mapper::{build_mapper_graph, MapperGraph, MapperParams};
pub use pointcloud::PointCloud;
