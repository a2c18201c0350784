//! End-to-end runs driven by a [`Config`]: data and graph caches, training
//! with checkpoints and epoch logs, and evaluation over the catalog.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::data::{cell_name, corrupt_split, to_samples, Catalog, DatasetSpec, GraphStore};
use super::evaluate::{evaluate, MetricsTable, Predictor};
use super::train::{train, EpochRecord, RunConfig, TrainOutcome};
use crate::config::Config;
use crate::corruptions::CorruptionKind;
use crate::error::{Error, Result};
use crate::files::{to_hex, write_atomic};
use crate::mapper::{MapperGraph, MapperParams};
use crate::model::{Model, ModelConfig, Sample};
use crate::nn::Checkpoint;
use crate::pointcloud::{DatasetManifest, PointCloud, Split};

pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const EPOCH_LOG_FILE: &str = "epochs.csv";

/// A resolved configuration with its dataset manifest.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: Config,
    pub dataset: DatasetSpec,
    pub manifest: DatasetManifest,
    pub mapper: MapperParams,
    pub model: ModelConfig,
    pub run: RunConfig,
    pub catalog: Catalog,
    pub store: GraphStore,
    pub out_dir: PathBuf,
    pub eval_batch: usize,
}

impl Experiment {
    pub fn new(config: Config) -> Result<Self> {
        let dataset = config.dataset()?;
        let manifest = dataset.manifest()?;
        let model = config.model_config()?;
        if model.classes != manifest.class_names.len() {
            return Err(Error::Config(format!(
                "model.classes is {} but the dataset has {} classes",
                model.classes,
                manifest.class_names.len()
            )));
        }
        Ok(Self {
            dataset: dataset.clone(),
            manifest,
            mapper: config.mapper_params()?,
            model,
            run: config.run_config()?,
            catalog: config.catalog()?,
            store: GraphStore::new(&config.cache_dir()?, dataset.name()),
            out_dir: config.out_dir()?,
            eval_batch: config.eval_batch_size()?,
            config,
        })
    }

    pub fn needs_graphs(&self) -> bool {
        self.model.variant.uses_graphs()
    }

    pub fn clouds(&self, split: Split) -> Result<Vec<PointCloud>> {
        self.dataset.load_split(&self.manifest, split)
    }

    /// Graphs of a clean split. Synthetic splits are built on demand;
    /// ModelNet40 splits must come from `build-graphs`.
    pub fn split_graphs(&self, split: Split, clouds: &[PointCloud]) -> Result<Vec<MapperGraph>> {
        let cell = split.name();
        self.store.load_or_build(
            cell,
            &self.config.graph_key(cell),
            clouds,
            &self.mapper,
            self.dataset.is_synthetic(),
        )
    }

    /// Graphs of a corrupted test cell, built and cached on first use.
    pub fn cell_graphs(
        &self,
        kind: CorruptionKind,
        severity: u8,
        clouds: &[PointCloud],
    ) -> Result<Vec<MapperGraph>> {
        let cell = cell_name(kind, severity);
        self.store.load_or_build(
            &cell,
            &self.config.graph_key(&cell),
            clouds,
            &self.mapper,
            true,
        )
    }

    pub fn samples(&self, split: Split) -> Result<Vec<Sample>> {
        let clouds = self.clouds(split)?;
        let graphs = match self.needs_graphs() {
            true => Some(self.split_graphs(split, &clouds)?),
            false => None,
        };
        to_samples(clouds, graphs)
    }

    pub fn corrupted_clouds(
        &self,
        clean: &[PointCloud],
        kind: CorruptionKind,
        severity: u8,
    ) -> Result<Vec<PointCloud>> {
        corrupt_split(clean, kind, severity, self.catalog.seed)
    }

    pub fn corrupted_samples(
        &self,
        clean: &[PointCloud],
        kind: CorruptionKind,
        severity: u8,
    ) -> Result<Vec<Sample>> {
        let clouds = self.corrupted_clouds(clean, kind, severity)?;
        let graphs = match self.needs_graphs() {
            true => Some(self.cell_graphs(kind, severity, &clouds)?),
            false => None,
        };
        to_samples(clouds, graphs)
    }

    /// Build (or rebuild) the graph cache of each split and, optionally, of
    /// every corruption cell. Returns each written file with its graph count.
    pub fn build_graph_caches(
        &self,
        splits: &[Split],
        corrupted: bool,
    ) -> Result<Vec<(PathBuf, usize)>> {
        let mut written = Vec::new();
        for &split in splits {
            let clouds = self.clouds(split)?;
            let graphs = super::data::build_graphs(&clouds, &self.mapper)?;
            let cell = split.name();
            written.push((
                self.store
                    .store(cell, &self.config.graph_key(cell), &graphs)?,
                graphs.len(),
            ));
            if corrupted && split == Split::Test {
                for (kind, severity) in self.catalog.cells() {
                    let cc = self.corrupted_clouds(&clouds, kind, severity)?;
                    let graphs = super::data::build_graphs(&cc, &self.mapper)?;
                    let cell = cell_name(kind, severity);
                    written.push((
                        self.store
                            .store(&cell, &self.config.graph_key(&cell), &graphs)?,
                        graphs.len(),
                    ));
                }
            }
        }
        Ok(written)
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out_dir
            .join(self.model.variant.name())
            .join(format!("seed-{seed}"))
    }

    pub fn checkpoint_path(&self, seed: u64) -> PathBuf {
        self.run_dir(seed).join(CHECKPOINT_FILE)
    }

    /// Train one seed. The best-so-far state is checkpointed whenever clean
    /// accuracy improves and the epoch log is rewritten every epoch.
    pub fn train_seed(
        &self,
        seed: u64,
        train_set: &[Sample],
        test_set: &[Sample],
        mut progress: impl FnMut(&EpochRecord),
    ) -> Result<TrainOutcome<f32>> {
        let dir = self.run_dir(seed);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let key = self.config.training_key(seed);
        let variant = self.model.variant.name();
        train::<f32>(
            self.model,
            &self.run,
            seed,
            train_set,
            test_set,
            self.eval_batch,
            |state| {
                progress(state.record);
                write_atomic(
                    &dir.join(EPOCH_LOG_FILE),
                    epoch_log(state.history).as_bytes(),
                )?;
                if state.improved {
                    let meta = serde_json::json!({
                        "variant": variant,
                        "seed": seed,
                        "history": state.history,
                    })
                    .to_string();
                    Checkpoint::capture(
                        key,
                        state.record.epoch as u64,
                        state.rng,
                        meta,
                        state.model,
                        state.optim,
                    )
                    .write(&dir.join(CHECKPOINT_FILE))?;
                }
                Ok(())
            },
        )
    }

    /// The best checkpoint of `seed`, refused if it was written under
    /// different settings.
    pub fn load_checkpoint(&self, seed: u64) -> Result<Model<f32>> {
        let path = self.checkpoint_path(seed);
        if !path.exists() {
            return Err(Error::MissingPrerequisite {
                path,
                hint: "run `mapper-gin train` first".into(),
            });
        }
        let ckpt = Checkpoint::read(&path, Some(&self.config.training_key(seed)))?;
        let mut model = Model::new(self.model, &mut super::train::init_rng(seed))?;
        ckpt.restore_into(&mut model)?;
        Ok(model)
    }

    /// Clean and corrupted accuracy of `predictor` on the test split.
    pub fn evaluate(
        &self,
        predictor: &impl Predictor,
        clean_clouds: &[PointCloud],
        clean: &[Sample],
    ) -> Result<MetricsTable> {
        evaluate(
            predictor,
            clean,
            &self.catalog,
            self.eval_batch,
            |kind, severity| self.corrupted_samples(clean_clouds, kind, severity),
        )
    }

    pub fn config_hash_hex(&self) -> String {
        to_hex(&self.config.hash())
    }
}

pub fn epoch_log(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,loss,clean_accuracy\n");
    for r in history {
        writeln!(
            out,
            "{},{:.8},{:.6},{:.6}",
            r.epoch, r.lr, r.loss, r.clean_accuracy
        )
        .expect("string write");
    }
    out
}

/// Write `text` atomically, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}
