//! Flat key-value run configuration.
//!
//! Every scientific parameter lives here under a dotted key. A file may use
//! TOML tables (`[model] hidden_dim = 64`) or dotted keys
//! (`model.hidden_dim = 64`); both flatten to the same key set. Unknown keys
//! and type mismatches are rejected. The canonical rendering (sorted
//! `key = value` lines) is hashed to key caches and checkpoints.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use toml::Value;

use crate::corruptions::CorruptionKind;
use crate::error::{Error, Result};
use crate::mapper::MapperParams;
use crate::model::{ModelConfig, Variant};
use crate::nn::AdamConfig;

pub const CACHE_DIR_ENV: &str = "MAPPER_GIN_CACHE_DIR";

/// A configuration key with its default (a TOML literal) and description.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

const fn key(key: &'static str, default: &'static str, doc: &'static str) -> KeySpec {
    KeySpec { key, default, doc }
}

pub const KEYS: &[KeySpec] = &[
    key("dataset.source", "\"synthetic\"", "synthetic | modelnet40"),
    key("dataset.root", "\"\"", "ModelNet40 root holding <class>/<split>/*.off"),
    key("dataset.points", "1024", "points kept per ModelNet40 cloud by farthest point sampling"),
    key("dataset.fps_start", "0", "seed vertex index for farthest point sampling"),
    key("synthetic.classes", "8", "number of synthetic shape classes (1..=8)"),
    key("synthetic.samples_per_class", "200", "training clouds per class"),
    key("synthetic.test_per_class", "50", "test clouds per class"),
    key("synthetic.points", "1024", "points per synthetic cloud"),
    key("synthetic.seed", "0", "base seed of the synthetic generator"),
    key("mapper.n_intervals", "6", "cover intervals per principal axis"),
    key("mapper.gain", "0.3", "fractional overlap of neighbouring intervals"),
    key("mapper.eps", "0.1", "DBSCAN neighbourhood radius"),
    key("mapper.min_pts", "4", "DBSCAN core threshold, the point itself included"),
    key("model.variant", "\"mapper_gin\"", "mapper_gin | mapper_gin_base | mlp_baseline"),
    key("model.hidden_dim", "240", "node embedding width"),
    key("model.layers", "4", "GIN blocks"),
    key("model.p_edge", "0.3", "DropEdge probability"),
    key("model.p_feature", "0.3", "feature dropout probability"),
    key("model.classes", "8", "output classes; must match the dataset"),
    key("model.dropout_position", "\"after_activation\"", "after_activation | before_norm"),
    key("run.epochs", "60", "training epochs"),
    key("run.batch_size", "64", "samples per optimizer step"),
    key("run.lr", "0.001", "base Adam learning rate, decayed 0.9x every 10 epochs"),
    key("run.weight_decay", "0.0001", "L2 coefficient added to the gradient"),
    key("run.seeds", "[1, 2, 3, 4, 5]", "one training run per seed"),
    key(
        "eval.kinds",
        "[\"uniform\", \"gaussian\", \"impulse\", \"upsampling\", \"background\", \"cutout\", \"density_inc\", \"density_dec\", \"rotation\", \"shear\", \"ffd\", \"rbf\", \"inv_rbf\"]",
        "corruption catalog",
    ),
    key("eval.severities", "[1, 2, 3, 4, 5]", "severity levels per kind"),
    key("eval.seed", "0", "base seed of the corruption generators"),
    key("eval.batch_size", "128", "samples per evaluation batch"),
    key("paths.cache_dir", "\".mapper-gin-cache\"", "graph cache root (overridden by MAPPER_GIN_CACHE_DIR)"),
    key("paths.out_dir", "\"runs\"", "checkpoints, epoch logs, metrics and reports"),
];

/// Settings applied by `--full`: the long ModelNet40 schedule.
pub const FULL_OVERRIDES: &[(&str, &str)] = &[("run.epochs", "400"), ("run.batch_size", "512")];

/// Key prefixes that do not change any computed number.
const NON_SCIENTIFIC: &[&str] = &["paths.", "eval.batch_size"];

fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == key)
}

fn parse_literal(text: &str) -> Option<Value> {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()?
        .remove("v")
}

fn type_name(v: &Value) -> &'static str {
    v.type_str()
}

/// Coerce `value` to the type of `default`, allowing integers for floats.
fn coerce(key: &str, default: &Value, value: Value) -> Result<Value> {
    let mismatch = |v: &Value| {
        Error::Config(format!(
            "`{key}` expects {}, got {}",
            type_name(default),
            type_name(v)
        ))
    };
    match (default, value) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Array(d), Value::Array(items)) => {
            let elem = d.first().cloned();
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(match &elem {
                    Some(e) => coerce(key, e, item)?,
                    None => item,
                });
            }
            Ok(Value::Array(out))
        }
        (d, v) if std::mem::discriminant(d) == std::mem::discriminant(&v) => Ok(v),
        (_, v) => Err(mismatch(&v)),
    }
}

fn flatten(prefix: &str, table: toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let full = if prefix.is_empty() {
            k
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&full, t, out),
            v => out.push((full, v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    values: BTreeMap<&'static str, Value>,
}

impl Default for Config {
    fn default() -> Self {
        let values = KEYS
            .iter()
            .map(|k| {
                (
                    k.key,
                    parse_literal(k.default).expect("valid default literal"),
                )
            })
            .collect();
        Self { values }
    }
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let mut flat = Vec::new();
        flatten("", table, &mut flat);
        let mut config = Self::default();
        for (k, v) in flat {
            config.set_value(&k, v)?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn set_value(&mut self, key: &str, value: Value) -> Result<()> {
        let spec = spec(key).ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        let default = parse_literal(spec.default).expect("valid default literal");
        let value = coerce(key, &default, value)?;
        self.values.insert(spec.key, value);
        Ok(())
    }

    /// Apply a `key=value` override. The value is read as a TOML literal,
    /// or as a bare string when it is not one.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let raw = raw.trim();
        let value = parse_literal(raw).unwrap_or_else(|| Value::String(raw.to_string()));
        self.set_value(key.trim(), value)
    }

    pub fn apply_full(&mut self) {
        for (k, v) in FULL_OVERRIDES {
            self.set_value(k, parse_literal(v).expect("valid literal"))
                .expect("known key");
        }
    }

    pub fn get(&self, key: &str) -> Result<&Value> {
        self.values
            .get(key)
            .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        match self.get(key)? {
            Value::Integer(i) if *i >= 0 => Ok(*i as usize),
            _ => Err(Error::Config(format!(
                "`{key}` must be a non-negative integer"
            ))),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64> {
        self.usize(key).map(|v| v as u64)
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        match self.get(key)? {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(Error::Config(format!("`{key}` must be a number"))),
        }
    }

    pub fn str(&self, key: &str) -> Result<&str> {
        match self.get(key)? {
            Value::String(s) => Ok(s),
            _ => Err(Error::Config(format!("`{key}` must be a string"))),
        }
    }

    fn u64_list(&self, key: &str) -> Result<Vec<u64>> {
        match self.get(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as u64),
                    _ => Err(Error::Config(format!(
                        "`{key}` must hold non-negative integers"
                    ))),
                })
                .collect(),
            _ => Err(Error::Config(format!("`{key}` must be an array"))),
        }
    }

    fn str_list(&self, key: &str) -> Result<Vec<String>> {
        match self.get(key)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(Error::Config(format!("`{key}` must hold strings"))),
                })
                .collect(),
            _ => Err(Error::Config(format!("`{key}` must be an array"))),
        }
    }

    /// Sorted `key = value` lines.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        out
    }

    fn digest_where(&self, keep: impl Fn(&str) -> bool, salt: &[u8]) -> [u8; 32] {
        let mut h = Sha256::new();
        for (k, v) in &self.values {
            if keep(k) {
                h.update(format!("{k} = {v}\n").as_bytes());
            }
        }
        h.update(salt);
        h.finalize().into()
    }

    /// Hash of every key that affects a computed number.
    pub fn hash(&self) -> [u8; 32] {
        self.digest_where(|k| !NON_SCIENTIFIC.iter().any(|p| k.starts_with(p)), b"")
    }

    /// Hash of the keys that determine one graph cache file.
    pub fn graph_key(&self, cell: &str) -> [u8; 32] {
        let graph_keys = ["dataset.", "synthetic.", "mapper."];
        let keep = |k: &str| {
            graph_keys.iter().any(|p| k.starts_with(p))
                || (k == "eval.seed" && cell != "train" && cell != "test")
        };
        self.digest_where(keep, cell.as_bytes())
    }

    /// Hash of the keys that determine one training run.
    pub fn training_key(&self, seed: u64) -> [u8; 32] {
        let keep =
            |k: &str| !k.starts_with("paths.") && !k.starts_with("eval.") && k != "run.seeds";
        self.digest_where(keep, &seed.to_le_bytes())
    }

    pub fn cache_dir(&self) -> Result<PathBuf> {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Ok(PathBuf::from(dir)),
            _ => Ok(PathBuf::from(self.str("paths.cache_dir")?)),
        }
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        Ok(PathBuf::from(self.str("paths.out_dir")?))
    }

    pub fn mapper_params(&self) -> Result<MapperParams> {
        let params = MapperParams {
            n_intervals: self.usize("mapper.n_intervals")?,
            gain: self.f64("mapper.gain")?,
            eps: self.f64("mapper.eps")?,
            min_pts: self.usize("mapper.min_pts")?,
        };
        params
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(params)
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let config = ModelConfig {
            variant: self.str("model.variant")?.parse()?,
            hidden_dim: self.usize("model.hidden_dim")?,
            layers: self.usize("model.layers")?,
            p_edge: self.f64("model.p_edge")?,
            p_feature: self.f64("model.p_feature")?,
            classes: self.usize("model.classes")?,
            dropout_position: self.str("model.dropout_position")?.parse()?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn variant(&self) -> Result<Variant> {
        self.str("model.variant")?.parse()
    }

    pub fn run_config(&self) -> Result<crate::train_eval::RunConfig> {
        let run = crate::train_eval::RunConfig {
            epochs: self.usize("run.epochs")?,
            batch_size: self.usize("run.batch_size")?,
            adam: AdamConfig {
                lr: self.f64("run.lr")?,
                weight_decay: self.f64("run.weight_decay")?,
                ..AdamConfig::default()
            },
            seeds: self.u64_list("run.seeds")?,
        };
        run.validate()?;
        Ok(run)
    }

    pub fn dataset(&self) -> Result<crate::train_eval::DatasetSpec> {
        use crate::train_eval::DatasetSpec;
        match self.str("dataset.source")? {
            "synthetic" => Ok(DatasetSpec::Synthetic {
                classes: self.usize("synthetic.classes")?,
                train_per_class: self.usize("synthetic.samples_per_class")?,
                test_per_class: self.usize("synthetic.test_per_class")?,
                points: self.usize("synthetic.points")?,
                seed: self.u64("synthetic.seed")?,
            }),
            "modelnet40" => {
                let root = self.str("dataset.root")?;
                if root.is_empty() {
                    return Err(Error::Config(
                        "dataset.root must be set for modelnet40".into(),
                    ));
                }
                Ok(DatasetSpec::ModelNet {
                    root: PathBuf::from(root),
                    points: self.usize("dataset.points")?,
                    fps_start: self.usize("dataset.fps_start")?,
                })
            }
            other => Err(Error::Config(format!("unknown dataset.source `{other}`"))),
        }
    }

    pub fn catalog(&self) -> Result<crate::train_eval::Catalog> {
        let kinds = self
            .str_list("eval.kinds")?
            .iter()
            .map(|s| s.parse::<CorruptionKind>())
            .collect::<Result<Vec<_>>>()?;
        let severities = self
            .u64_list("eval.severities")?
            .into_iter()
            .map(|s| match u8::try_from(s) {
                Ok(s @ 1..=5) => Ok(s),
                _ => Err(Error::Severity(s.min(255) as u8)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(crate::train_eval::Catalog {
            kinds,
            severities,
            seed: self.u64("eval.seed")?,
        })
    }

    pub fn eval_batch_size(&self) -> Result<usize> {
        match self.usize("eval.batch_size")? {
            0 => Err(Error::Config("eval.batch_size must be >= 1".into())),
            b => Ok(b),
        }
    }
}

/// Every key with its default and description, one per line.
pub fn help_text() -> String {
    const MAX: usize = 48;
    let lhs: Vec<String> = KEYS
        .iter()
        .map(|k| format!("{} = {}", k.key, k.default))
        .collect();
    let width = lhs
        .iter()
        .map(|l| l.len())
        .filter(|&l| l <= MAX)
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for (k, l) in KEYS.iter().zip(&lhs) {
        if l.len() > width {
            writeln!(
                out,
                "  {l}
  {:width$}  {}",
                "", k.doc
            )
            .expect("string write");
        } else {
            writeln!(out, "  {l:width$}  {}", k.doc).expect("string write");
        }
    }
    out
}
