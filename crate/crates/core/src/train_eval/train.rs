//! The training loop and best-epoch selection.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate::accuracy;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, Sample};
use crate::nn::{
    adam_step, cross_entropy_logits, steplr, AdamConfig, OptimState, Parameterized, Real,
};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// `lr` is the base rate of the step schedule.
    pub adam: AdamConfig,
    pub seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            batch_size: 512,
            adam: AdamConfig::default(),
            seeds: vec![1, 2, 3, 4, 5],
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("run.epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("run.batch_size must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config(
                "run.seeds must list at least one seed".into(),
            ));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) || !(self.adam.weight_decay >= 0.0) {
            return Err(Error::Config(
                "run.lr must be > 0 and run.weight_decay >= 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training cross-entropy over the epoch's samples.
    pub loss: f64,
    pub clean_accuracy: f64,
}

/// Everything the caller may persist after an epoch.
pub struct EpochState<'a, T: Real> {
    pub record: &'a EpochRecord,
    pub history: &'a [EpochRecord],
    pub model: &'a Model<T>,
    pub optim: &'a OptimState,
    pub rng: &'a ChaCha8Rng,
    /// Whether this epoch is the best so far.
    pub improved: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real> {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best: Model<T>,
    pub steps: u64,
}

/// Index of the highest clean accuracy; ties go to the earliest epoch.
pub fn select_best(history: &[EpochRecord]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in history.iter().enumerate() {
        if best.is_none_or(|b| r.clean_accuracy > history[b].clean_accuracy) {
            best = Some(i);
        }
    }
    best.ok_or(Error::EmptyHistory)
}

/// Stream of the initial weights for a run seed.
pub fn init_rng(run_seed: u64) -> ChaCha8Rng {
    seed::rng(run_seed, &[0])
}

/// Stream of shuffling, dropout and DropEdge for a run seed.
pub fn train_rng(run_seed: u64) -> ChaCha8Rng {
    seed::rng(run_seed, &[1])
}

/// Train one model from scratch. After every epoch the clean test accuracy
/// is recorded and `on_epoch` sees the full state.
pub fn train<T: Real>(
    config: ModelConfig,
    run: &RunConfig,
    run_seed: u64,
    train_set: &[Sample],
    test_set: &[Sample],
    eval_batch: usize,
    mut on_epoch: impl FnMut(EpochState<'_, T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    run.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::InvalidArgument(
            "training and test sets must be non-empty".into(),
        ));
    }
    if let Some(s) = train_set
        .iter()
        .chain(test_set)
        .find(|s| s.label >= config.classes)
    {
        return Err(Error::LabelOutOfRange {
            label: s.label,
            classes: config.classes,
        });
    }
    let mut model = Model::<T>::new(config, &mut init_rng(run_seed))?;
    let mut rng = train_rng(run_seed);
    let mut optim = OptimState::new(run.adam, &model.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(run.epochs);
    let mut best: Option<(usize, Model<T>)> = None;

    for epoch in 0..run.epochs {
        let lr = steplr(run.adam.lr, epoch);
        optim.config.lr = lr;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(run.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
            model.zero_grad();
            let (logits, cache) = model.forward_train(&batch, &mut rng)?;
            let (loss, dlogits) = cross_entropy_logits(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            model.backward(&cache, &dlogits);
            adam_step(&mut model.params_mut(), &mut optim);
        }
        let record = EpochRecord {
            epoch,
            lr,
            loss: loss_sum / train_set.len() as f64,
            clean_accuracy: accuracy(&model, test_set, eval_batch)?,
        };
        history.push(record);
        let improved = best
            .as_ref()
            .is_none_or(|(b, _)| record.clean_accuracy > history[*b].clean_accuracy);
        if improved {
            best = Some((epoch, model.clone()));
        }
        on_epoch(EpochState {
            record: &record,
            history: &history,
            model: &model,
            optim: &optim,
            rng: &rng,
            improved,
        })?;
    }
    let (best_epoch, best) = best.expect("at least one epoch");
    debug_assert_eq!(select_best(&history).ok(), Some(best_epoch));
    Ok(TrainOutcome {
        history,
        best_epoch,
        best,
        steps: optim.t,
    })
}
