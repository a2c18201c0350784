//! Dataset loading, corrupted test sets, and the on-disk graph store.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::corruptions::{apply_corruption, suite_seed, CorruptionKind, CorruptionSpec};
use crate::error::{Error, Result};
use crate::mapper::{
    build_mapper_graph, read_graph_cache, write_graph_cache, MapperGraph, MapperParams,
};
use crate::model::Sample;
use crate::pointcloud::{load_entry, DatasetManifest, PointCloud, Split};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic {
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        points: usize,
        seed: u64,
    },
    ModelNet {
        root: PathBuf,
        points: usize,
        fps_start: usize,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Synthetic { .. } => "synthetic",
            DatasetSpec::ModelNet { .. } => "modelnet40",
        }
    }

    pub fn is_synthetic(&self) -> bool {
        matches!(self, DatasetSpec::Synthetic { .. })
    }

    pub fn manifest(&self) -> Result<DatasetManifest> {
        let manifest = match self {
            DatasetSpec::Synthetic {
                classes,
                train_per_class,
                test_per_class,
                seed,
                ..
            } => DatasetManifest::synthetic(*classes, *train_per_class, *test_per_class, *seed)?,
            DatasetSpec::ModelNet { root, .. } => DatasetManifest::scan_modelnet(root)?,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Every cloud of `split` in manifest order.
    pub fn load_split(&self, manifest: &DatasetManifest, split: Split) -> Result<Vec<PointCloud>> {
        let (points, fps_start) = match self {
            DatasetSpec::Synthetic { points, .. } => (*points, 0),
            DatasetSpec::ModelNet {
                points, fps_start, ..
            } => (*points, *fps_start),
        };
        let entries: Vec<_> = manifest.split(split).collect();
        entries
            .par_iter()
            .map(|e| load_entry(e, points, fps_start))
            .collect()
    }
}

/// Corruption kinds and severities to evaluate, with the base seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub kinds: Vec<CorruptionKind>,
    pub severities: Vec<u8>,
    pub seed: u64,
}

impl Default for Catalog {
    fn default() -> Self {
        Self {
            kinds: CorruptionKind::ALL.to_vec(),
            severities: vec![1, 2, 3, 4, 5],
            seed: 0,
        }
    }
}

impl Catalog {
    pub fn cells(&self) -> Vec<(CorruptionKind, u8)> {
        self.kinds
            .iter()
            .flat_map(|&k| self.severities.iter().map(move |&s| (k, s)))
            .collect()
    }
}

/// Cache and file name of a corruption cell.
pub fn cell_name(kind: CorruptionKind, severity: u8) -> String {
    format!("{}-{severity}", kind.name())
}

/// Corrupt every cloud; sample `i` uses its own derived seed.
pub fn corrupt_split(
    clouds: &[PointCloud],
    kind: CorruptionKind,
    severity: u8,
    seed: u64,
) -> Result<Vec<PointCloud>> {
    let base = suite_seed(seed, kind, severity);
    clouds
        .par_iter()
        .enumerate()
        .map(|(i, pc)| {
            let spec = CorruptionSpec::new(kind, severity, seed::derive(base, &[i as u64]))?;
            let mut out = apply_corruption(pc, &spec)?;
            out.label = pc.label;
            Ok(out)
        })
        .collect()
}

pub fn build_graphs(clouds: &[PointCloud], params: &MapperParams) -> Result<Vec<MapperGraph>> {
    clouds
        .par_iter()
        .map(|pc| build_mapper_graph(pc, params))
        .collect()
}

/// Pair clouds with their graphs (if any) into model samples.
pub fn to_samples(
    clouds: Vec<PointCloud>,
    graphs: Option<Vec<MapperGraph>>,
) -> Result<Vec<Sample>> {
    if let Some(g) = &graphs {
        if g.len() != clouds.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} graphs for {} clouds",
                g.len(),
                clouds.len()
            )));
        }
    }
    let mut graphs = graphs.map(|g| g.into_iter());
    clouds
        .into_iter()
        .map(|pc| {
            let label = pc.label.ok_or_else(|| {
                Error::InvalidArgument("unlabelled cloud in a dataset split".into())
            })?;
            let graph = graphs.as_mut().and_then(|g| g.next());
            if let Some(g) = &graph {
                if g.point_count as usize != pc.len() {
                    return Err(Error::ShapeMismatch(
                        "graph was built for a different cloud".into(),
                    ));
                }
            }
            Ok(Sample {
                points: pc.points,
                graph,
                label,
            })
        })
        .collect()
}

/// Graph cache files under `<root>/<dataset>/<cell>.mgraph`, each tagged
/// with the hash of the settings that produced it.
#[derive(Debug, Clone)]
pub struct GraphStore {
    dir: PathBuf,
}

impl GraphStore {
    pub fn new(root: &Path, dataset: &str) -> Self {
        Self {
            dir: root.join(dataset),
        }
    }

    pub fn path(&self, cell: &str) -> PathBuf {
        self.dir.join(format!("{cell}.mgraph"))
    }

    /// `None` when the file does not exist; a hash mismatch is an error.
    pub fn load(&self, cell: &str, key: &[u8; 32]) -> Result<Option<Vec<MapperGraph>>> {
        let path = self.path(cell);
        if !path.exists() {
            return Ok(None);
        }
        match read_graph_cache(&path, Some(key)) {
            Ok(g) => Ok(Some(g)),
            Err(Error::ConfigHashMismatch { expected, found }) => Err(Error::Stale {
                path,
                reason: format!(
                    "built with different dataset or mapper settings (cache {found}, config {expected}); \
                     rerun `build-graphs` to replace it"
                ),
            }),
            Err(e) => Err(e),
        }
    }

    pub fn store(&self, cell: &str, key: &[u8; 32], graphs: &[MapperGraph]) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path(cell);
        write_graph_cache(&path, key, graphs)?;
        Ok(path)
    }

    /// Load the cell, or build and store it when `build` is set.
    pub fn load_or_build(
        &self,
        cell: &str,
        key: &[u8; 32],
        clouds: &[PointCloud],
        params: &MapperParams,
        build: bool,
    ) -> Result<Vec<MapperGraph>> {
        if let Some(graphs) = self.load(cell, key)? {
            if graphs.len() != clouds.len() {
                return Err(Error::Stale {
                    path: self.path(cell),
                    reason: format!(
                        "holds {} graphs but the split has {} clouds",
                        graphs.len(),
                        clouds.len()
                    ),
                });
            }
            return Ok(graphs);
        }
        if !build {
            return Err(Error::MissingPrerequisite {
                path: self.path(cell),
                hint: "run `mapper-gin build-graphs` first".into(),
            });
        }
        let graphs = build_graphs(clouds, params)?;
        self.store(cell, key, &graphs)?;
        Ok(graphs)
    }
}
