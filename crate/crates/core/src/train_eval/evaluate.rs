//! Accuracy under corruption, seed statistics, and the metrics CSV files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;

use super::data::Catalog;
use super::metrics::{aggregate_categories, mean, mean_std, BenchmarkKind, Category};
use crate::corruptions::CorruptionKind;
use crate::error::{Error, Result};
use crate::model::{Model, Sample};
use crate::nn::Real;

/// Anything that labels samples.
pub trait Predictor {
    fn predict(&self, samples: &[&Sample]) -> Result<Vec<usize>>;
}

impl<T: Real> Predictor for Model<T> {
    fn predict(&self, samples: &[&Sample]) -> Result<Vec<usize>> {
        Model::predict(self, samples)
    }
}

/// Reads the label off each sample.
#[derive(Debug, Clone, Copy, Default)]
pub struct PerfectPredictor;

impl Predictor for PerfectPredictor {
    fn predict(&self, samples: &[&Sample]) -> Result<Vec<usize>> {
        Ok(samples.iter().map(|s| s.label).collect())
    }
}

/// Always answers the same class.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPredictor(pub usize);

impl Predictor for ConstantPredictor {
    fn predict(&self, samples: &[&Sample]) -> Result<Vec<usize>> {
        Ok(vec![self.0; samples.len()])
    }
}

/// Instance accuracy over `samples`, predicted in fixed-size batches.
pub fn accuracy(predictor: &impl Predictor, samples: &[Sample], batch: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    let mut correct = 0usize;
    for chunk in samples.chunks(batch.max(1)) {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let pred = predictor.predict(&refs)?;
        correct += pred
            .iter()
            .zip(chunk)
            .filter(|(p, s)| **p == s.label)
            .count();
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Accuracies of one model and seed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsTable {
    pub clean: f64,
    pub cells: BTreeMap<(BenchmarkKind, u8), f64>,
}

impl MetricsTable {
    pub fn kinds(&self) -> Vec<BenchmarkKind> {
        let mut kinds: Vec<_> = self.cells.keys().map(|(k, _)| *k).collect();
        kinds.dedup();
        kinds
    }

    /// Mean over the stored severities of `kind`.
    pub fn kind_mean(&self, kind: BenchmarkKind) -> Option<f64> {
        let values: Vec<f64> = self
            .cells
            .range((kind, 0)..=(kind, u8::MAX))
            .map(|(_, &v)| v)
            .collect();
        (!values.is_empty()).then(|| mean(&values))
    }

    pub fn kind_means(&self) -> BTreeMap<BenchmarkKind, f64> {
        self.kinds()
            .into_iter()
            .map(|k| (k, self.kind_mean(k).expect("kind present")))
            .collect()
    }

    pub fn category_means(&self) -> BTreeMap<Category, f64> {
        aggregate_categories(&self.kind_means())
            .into_iter()
            .filter_map(|c| c.mean.map(|m| (c.category, m)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !ok(self.clean) || !self.cells.values().all(|&v| ok(v)) {
            return Err(Error::InvalidArgument(
                "accuracies must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Clean accuracy plus one accuracy per catalog cell. `cell_samples`
/// supplies the corrupted test set of a cell; cells are visited in catalog
/// order and dropped after use.
pub fn evaluate(
    predictor: &impl Predictor,
    clean: &[Sample],
    catalog: &Catalog,
    batch: usize,
    mut cell_samples: impl FnMut(CorruptionKind, u8) -> Result<Vec<Sample>>,
) -> Result<MetricsTable> {
    let mut table = MetricsTable {
        clean: accuracy(predictor, clean, batch)?,
        cells: BTreeMap::new(),
    };
    for (kind, severity) in catalog.cells() {
        let samples = cell_samples(kind, severity)?;
        table.cells.insert(
            (kind.into(), severity),
            accuracy(predictor, &samples, batch)?,
        );
    }
    Ok(table)
}

/// Tables of several seeds of one model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeedSummary {
    pub runs: BTreeMap<u64, MetricsTable>,
}

impl SeedSummary {
    fn stat(&self, f: impl Fn(&MetricsTable) -> Option<f64>) -> Option<(f64, f64)> {
        let values: Option<Vec<f64>> = self.runs.values().map(f).collect();
        values.filter(|v| !v.is_empty()).map(|v| mean_std(&v))
    }

    pub fn clean(&self) -> Option<(f64, f64)> {
        self.stat(|t| Some(t.clean))
    }

    pub fn cell(&self, kind: BenchmarkKind, severity: u8) -> Option<(f64, f64)> {
        self.stat(|t| t.cells.get(&(kind, severity)).copied())
    }

    pub fn kind(&self, kind: BenchmarkKind) -> Option<(f64, f64)> {
        self.stat(|t| t.kind_mean(kind))
    }

    pub fn category(&self, category: Category) -> Option<(f64, f64)> {
        self.stat(|t| t.category_means().get(&category).copied())
    }

    /// Kinds present in every seed.
    pub fn kinds(&self) -> Vec<BenchmarkKind> {
        BenchmarkKind::ALL
            .into_iter()
            .filter(|&k| self.kind(k).is_some())
            .collect()
    }

    /// Seed means of the per-kind means.
    pub fn kind_means(&self) -> BTreeMap<BenchmarkKind, f64> {
        self.kinds()
            .into_iter()
            .map(|k| (k, self.kind(k).expect("present").0))
            .collect()
    }
}

/// Run every seed and collect the tables.
pub fn run_protocol(
    seeds: &[u64],
    mut run_seed: impl FnMut(u64) -> Result<MetricsTable>,
) -> Result<SeedSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let mut summary = SeedSummary::default();
    for &seed in seeds {
        let table = run_seed(seed)?;
        table.validate()?;
        summary.runs.insert(seed, table);
    }
    Ok(summary)
}

pub const METRICS_HEADER: &str = "model,seed,kind,severity,accuracy";
pub const AGGREGATE_HEADER: &str = "model,category,mean,std";

/// Rows `model,seed,kind,severity,accuracy`; the clean accuracy is kind
/// `clean` at severity 0.
pub fn metrics_csv(models: &BTreeMap<String, SeedSummary>) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for (model, summary) in models {
        for (seed, table) in &summary.runs {
            writeln!(out, "{model},{seed},clean,0,{:.6}", table.clean).expect("string write");
            for ((kind, severity), acc) in &table.cells {
                writeln!(out, "{model},{seed},{kind},{severity},{acc:.6}").expect("string write");
            }
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct MetricRow {
    model: String,
    seed: u64,
    kind: String,
    severity: u8,
    accuracy: f64,
}

pub fn parse_metrics_csv(text: &str) -> Result<BTreeMap<String, SeedSummary>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if headers != METRICS_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{METRICS_HEADER}`, found `{headers}`"),
        });
    }
    let mut models: BTreeMap<String, SeedSummary> = BTreeMap::new();
    let mut has_clean = BTreeMap::new();
    for (i, row) in reader.deserialize::<MetricRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&row.accuracy) {
            return Err(Error::Parse {
                line,
                message: format!("accuracy {} outside [0, 1]", row.accuracy),
            });
        }
        let table = models
            .entry(row.model.clone())
            .or_default()
            .runs
            .entry(row.seed)
            .or_default();
        if row.kind == "clean" {
            table.clean = row.accuracy;
            has_clean.insert((row.model, row.seed), ());
        } else {
            let kind: BenchmarkKind = row.kind.parse().map_err(|e: Error| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            if !(1..=5).contains(&row.severity) {
                return Err(Error::Parse {
                    line,
                    message: format!("severity {} outside 1..=5", row.severity),
                });
            }
            table.cells.insert((kind, row.severity), row.accuracy);
        }
    }
    for (model, summary) in &models {
        for seed in summary.runs.keys() {
            if !has_clean.contains_key(&(model.clone(), *seed)) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("no clean row for model {model} seed {seed}"),
                });
            }
        }
    }
    Ok(models)
}

/// Rows `model,category,mean,std` over seeds: clean, each kind present,
/// then each category with at least one member present.
pub fn aggregate_csv(models: &BTreeMap<String, SeedSummary>) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    for (model, summary) in models {
        let mut rows: Vec<(&str, (f64, f64))> = Vec::new();
        if let Some(c) = summary.clean() {
            rows.push(("clean", c));
        }
        for kind in summary.kinds() {
            rows.push((kind.name(), summary.kind(kind).expect("present")));
        }
        for category in Category::ALL {
            if let Some(v) = summary.category(category) {
                rows.push((category.name(), v));
            }
        }
        for (name, (m, s)) in rows {
            writeln!(out, "{model},{name},{m:.6},{s:.6}").expect("string write");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{sample_synthetic, Shape};

    fn balanced(classes: usize, per_class: usize) -> Vec<Sample> {
        (0..classes * per_class)
            .map(|i| Sample {
                points: sample_synthetic(Shape::Sphere, 8, i as u64).unwrap().points,
                graph: None,
                label: i % classes,
            })
            .collect()
    }

    fn small_catalog() -> Catalog {
        Catalog {
            kinds: vec![CorruptionKind::Impulse, CorruptionKind::Rotation],
            severities: vec![1, 2, 3, 4, 5],
            seed: 0,
        }
    }

    #[test]
    fn perfect_stub_scores_one_everywhere() {
        let data = balanced(8, 3);
        let t = evaluate(&PerfectPredictor, &data, &small_catalog(), 5, |_, _| {
            Ok(data.clone())
        })
        .unwrap();
        assert_eq!(t.clean, 1.0);
        assert!(t.cells.values().all(|&v| v == 1.0));
        assert_eq!(t.cells.len(), 10);
    }

    #[test]
    fn constant_stub_scores_base_rate() {
        let data = balanced(8, 5);
        assert_eq!(accuracy(&ConstantPredictor(3), &data, 7).unwrap(), 0.125);
    }

    #[test]
    fn kind_mean_recomputes_severities() {
        let mut t = MetricsTable::default();
        let vals = [0.9, 0.8, 0.7, 0.55, 0.3];
        for (s, v) in vals.iter().enumerate() {
            t.cells
                .insert((CorruptionKind::Shear.into(), s as u8 + 1), *v);
        }
        let direct = vals.iter().sum::<f64>() / 5.0;
        assert!((t.kind_mean(CorruptionKind::Shear.into()).unwrap() - direct).abs() < 1e-12);
        assert_eq!(t.kind_mean(CorruptionKind::Ffd.into()), None);
    }

    #[test]
    fn protocol_statistics() {
        let one = run_protocol(&[4], |_| {
            Ok(MetricsTable {
                clean: 0.6,
                ..Default::default()
            })
        })
        .unwrap();
        assert_eq!(one.clean(), Some((0.6, 0.0)));
        let two = run_protocol(&[1, 2], |s| {
            Ok(MetricsTable {
                clean: if s == 1 { 0.6 } else { 0.8 },
                ..Default::default()
            })
        })
        .unwrap();
        let (m, s) = two.clean().unwrap();
        assert!((m - 0.7).abs() < 1e-12);
        assert!((s - 0.141_421_356).abs() < 1e-8);
        assert!(run_protocol(&[], |_| Ok(MetricsTable::default())).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let data = balanced(2, 2);
        let t = evaluate(&ConstantPredictor(0), &data, &small_catalog(), 4, |_, _| {
            Ok(data.clone())
        })
        .unwrap();
        let summary = run_protocol(&[1, 2], |_| Ok(t.clone())).unwrap();
        let models: BTreeMap<_, _> = [("mlp_baseline".to_string(), summary)]
            .into_iter()
            .collect();
        let text = metrics_csv(&models);
        assert!(text.starts_with(METRICS_HEADER));
        assert_eq!(parse_metrics_csv(&text).unwrap(), models);
        let agg = aggregate_csv(&models);
        assert!(agg.contains("mlp_baseline,clean,0.500000,0.000000"));
        assert!(agg.contains("mlp_baseline,impulse,0.500000,0.000000"));
        assert!(agg.contains("mlp_baseline,overall,0.500000,0.000000"));
    }

    #[test]
    fn parse_rejects_bad_rows() {
        assert!(parse_metrics_csv("a,b\n").is_err());
        let bad_acc = format!("{METRICS_HEADER}\nm,1,clean,0,1.5\n");
        assert!(parse_metrics_csv(&bad_acc).is_err());
        let bad_kind = format!("{METRICS_HEADER}\nm,1,clean,0,0.5\nm,1,smoke,1,0.5\n");
        assert!(parse_metrics_csv(&bad_kind).is_err());
        let no_clean = format!("{METRICS_HEADER}\nm,1,impulse,1,0.5\n");
        assert!(parse_metrics_csv(&no_clean).is_err());
    }
}
