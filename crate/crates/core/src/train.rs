//! Mini-batch training with SGD or Adam, early stopping, and evaluation.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{cross_entropy_loss, Confusion, MetricsReport};
use crate::model::{GradRecord, Sequential};
use crate::tensor::{derive_seed, RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            patience: 5,
            min_delta: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::invalid(format!("min_delta {} must be >= 0", self.min_delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience counter over validation losses. A loss counts as an improvement
/// only when it beats the best so far by more than `min_delta`. After
/// `patience` consecutive non-improving epochs the next one stops training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopState {
    pub best_val_loss: f64,
    pub best_epoch: Option<usize>,
    pub epochs_without_improvement: usize,
    pub patience: usize,
    pub min_delta: f64,
}

impl EarlyStopState {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self { best_val_loss: f64::INFINITY, best_epoch: None, epochs_without_improvement: 0, patience, min_delta }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if self.best_epoch.is_none() || self.best_val_loss - val_loss > self.min_delta {
            self.best_val_loss = val_loss;
            self.best_epoch = Some(epoch);
            self.epochs_without_improvement = 0;
            StopDecision::Improved
        } else if self.epochs_without_improvement >= self.patience {
            StopDecision::Stop
        } else {
            self.epochs_without_improvement += 1;
            StopDecision::Continue
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Wall-clock seconds spent in this epoch.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn total_time_s(&self) -> f64 {
        self.epochs.iter().map(|e| e.elapsed_s).sum()
    }
}

/// Epoch loop with early stopping over any state. `epoch_fn` runs one
/// epoch (1-based index) and returns `(train_loss, val_loss)`. The state is
/// rolled back to its best-epoch snapshot when training stops early.
pub fn run_epochs<M: Clone>(
    state: &mut M,
    cfg: &TrainConfig,
    mut epoch_fn: impl FnMut(&mut M, usize) -> Result<(f64, f64)>,
) -> Result<History> {
    cfg.validate()?;
    let mut stop = EarlyStopState::new(cfg.patience, cfg.min_delta);
    let mut best = state.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let (train_loss, val_loss) = epoch_fn(state, epoch)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "training diverged at epoch {epoch}: train loss {train_loss}, val loss {val_loss}"
            )));
        }
        epochs.push(EpochRecord { epoch, train_loss, val_loss, elapsed_s: start.elapsed().as_secs_f64() });
        match stop.observe(epoch, val_loss) {
            StopDecision::Improved => best = state.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                *state = best.clone();
                break;
            }
        }
        debug_assert!(stop.epochs_without_improvement <= cfg.patience);
    }
    Ok(History { epochs, best_epoch: stop.best_epoch.unwrap_or(1), stopped_early })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64, t: i32, m: Vec<Vec<f64>>, v: Vec<Vec<f64>> },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() },
        }
    }

    pub fn step(&mut self, params: Vec<&mut Tensor>, grads: &GradRecord) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(format!("{} parameters vs {} gradients", params.len(), grads.len())));
        }
        match self {
            Optimizer::Sgd { lr } => {
                for (p, (_, g)) in params.into_iter().zip(&grads.entries) {
                    p.data_mut().iter_mut().zip(g.data()).for_each(|(w, d)| *w -= *lr * d);
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps, t, m, v } => {
                if m.is_empty() {
                    *m = grads.entries.iter().map(|(_, g)| vec![0.0; g.len()]).collect();
                    *v = m.clone();
                }
                *t += 1;
                let c1 = 1.0 - beta1.powi(*t);
                let c2 = 1.0 - beta2.powi(*t);
                for (k, (p, (_, g))) in params.into_iter().zip(&grads.entries).enumerate() {
                    let (mk, vk) = (&mut m[k], &mut v[k]);
                    for (j, (w, &d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        mk[j] = *beta1 * mk[j] + (1.0 - *beta1) * d;
                        vk[j] = *beta2 * vk[j] + (1.0 - *beta2) * d * d;
                        *w -= *lr * (mk[j] / c1) / ((vk[j] / c2).sqrt() + *eps);
                    }
                }
            }
        }
        Ok(())
    }
}

const DROPOUT_STREAM: u64 = 0xd509;
const SHUFFLE_STREAM: u64 = 0x5e1f;

/// Mean loss and averaged gradient over `indices`. Per-sample work runs in
/// parallel; the reduction is sequential in index order.
pub fn batch_gradient(
    model: &Sequential,
    inputs: &[Tensor],
    labels: &[usize],
    indices: &[usize],
    dropout_seed: Option<u64>,
) -> Result<(f64, GradRecord)> {
    let per_sample: Vec<(f64, GradRecord)> = indices
        .par_iter()
        .map(|&i| match dropout_seed {
            Some(s) => model.loss_and_grad(&inputs[i], labels[i], Some(&mut RngStream::new(derive_seed(s, i as u64)))),
            None => model.loss_and_grad(&inputs[i], labels[i], None),
        })
        .collect::<Result<_>>()?;
    let mut iter = per_sample.into_iter();
    let (mut loss, mut total) = iter.next().ok_or_else(|| Error::invalid("empty batch"))?;
    for (l, g) in iter {
        loss += l;
        total.accumulate(&g);
    }
    let n = indices.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

pub fn validation_loss(model: &Sequential, ds: &Dataset) -> Result<f64> {
    let probs = model.predict_proba(&ds.feature_matrix())?;
    cross_entropy_loss(&probs, &ds.labels())
}

pub fn fit(model: &Sequential, train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(Sequential, History)> {
    cfg.validate()?;
    let inputs: Vec<Tensor> = train.records().iter().map(|r| r.to_tensor()).collect();
    let labels = train.labels();
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate);
    let mut trained = model.clone();
    let history = run_epochs(&mut trained, cfg, |m, epoch| {
        let epoch_seed = derive_seed(cfg.seed, epoch as u64);
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        RngStream::new(derive_seed(epoch_seed, SHUFFLE_STREAM)).shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_gradient(m, &inputs, &labels, batch, Some(derive_seed(epoch_seed, DROPOUT_STREAM)))?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training diverged at epoch {epoch}: non-finite batch loss")));
            }
            loss_sum += loss * batch.len() as f64;
            optimizer.step(m.trainable_params_mut(), &grads)?;
        }
        let val_loss = validation_loss(m, val).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!("training diverged at epoch {epoch}: {msg}")),
            other => other,
        })?;
        Ok((loss_sum / inputs.len() as f64, val_loss))
    })?;
    Ok((trained, history))
}

/// Argmax predictions against `ds` labels. Training time and parameter
/// count are left at zero for the caller to fill in.
pub fn evaluate(model: &Sequential, ds: &Dataset) -> Result<MetricsReport> {
    let probs = model.predict_proba(&ds.feature_matrix())?;
    let predicted = probs.argmax_row()?;
    let classes = probs.shape()[1].max(crate::data::NUM_CLASSES);
    let confusion = Confusion::from_predictions(classes, &ds.labels(), &predicted)?;
    Ok(MetricsReport::from_confusion(confusion))
}
