use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backward::batch_gradient;
use super::forward::{forward_parts, residual_loss};
use super::graph::LocalGraph;
use super::model::DssModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            factor: 0.1,
            patience: 10,
            min_lr: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub scheduler: SchedulerConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 1e-2,
            batch_size: 100,
            clip_norm: 1e-2,
            scheduler: SchedulerConfig::default(),
            seed: 0,
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` to Euclidean norm `max_norm` if it is longer. Returns the
/// norm before clipping.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Multiplies the learning rate by `factor` once the monitored loss has not
/// improved for more than `patience` consecutive epochs.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    config: SchedulerConfig,
    lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, config: SchedulerConfig) -> Self {
        PlateauScheduler {
            config,
            lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step(&mut self, loss: f64) -> f64 {
        // relative threshold 1e-4, as in the usual "rel" mode
        if loss < self.best * (1.0 - 1e-4) {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs > self.config.patience {
            self.lr = (self.lr * self.config.factor).max(self.config.min_lr);
            self.bad_epochs = 0;
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,lr\n");
        for e in &self.epochs {
            writeln!(s, "{},{:e},{:e},{:e}", e.epoch, e.train_loss, e.val_loss, e.lr).unwrap();
        }
        s
    }
}

/// Mean training loss of `model` over `graphs`, without caching activations.
pub fn mean_loss(model: &DssModel, graphs: &[LocalGraph]) -> Result<f64> {
    if graphs.is_empty() {
        return Ok(0.0);
    }
    let losses = graphs
        .par_iter()
        .map(|g| {
            let tr = forward_parts(model, &g.topology, &g.c, false)?;
            tr.outputs.iter().map(|u| residual_loss(u, g)).sum::<Result<f64>>()
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / graphs.len() as f64)
}

/// Trains in place with Adam on the mean per-graph loss of each batch.
///
/// Epoch 0 of the log holds the losses of the initial model; epochs
/// `1..=epochs` are recorded after each pass over `train_set`, whose order is
/// reshuffled every epoch from `seed`. The scheduler monitors the validation
/// loss, or the training loss when `val_set` is empty.
pub fn train(
    model: &mut DssModel,
    train_set: &[LocalGraph],
    val_set: &[LocalGraph],
    config: &TrainConfig,
) -> Result<TrainingLog> {
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if config.batch_size == 0 || !(config.lr >= 0.0) || !(config.clip_norm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid training config: batch_size={}, lr={}, clip_norm={}",
            config.batch_size, config.lr, config.clip_norm
        )));
    }
    let mut adam = Adam::new(model.param_count());
    let mut sched = PlateauScheduler::new(config.lr, config.scheduler);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainingLog::default();

    let initial = mean_loss(model, train_set)?;
    let initial_val = if val_set.is_empty() { initial } else { mean_loss(model, val_set)? };
    log.epochs.push(EpochLog {
        epoch: 0,
        train_loss: initial,
        val_loss: initial_val,
        lr: sched.lr(),
    });

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let graphs: Vec<&LocalGraph> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grad) = batch_gradient(model, &graphs).map_err(|e| match e {
                Error::ModelNaN(_) => Error::NonFiniteLoss { epoch, batch: bi },
                other => other,
            })?;
            let scale = 1.0 / graphs.len() as f64;
            let loss = loss * scale;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch: bi });
            }
            grad.iter_mut().for_each(|g| *g *= scale);
            clip_global_norm(&mut grad, config.clip_norm);
            adam.step(model.params_mut(), &grad, sched.lr());
            epoch_loss += loss * graphs.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            mean_loss(model, val_set).map_err(|_| Error::NonFiniteLoss { epoch, batch: usize::MAX })?
        };
        let lr = sched.lr();
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        sched.step(val_loss);
    }
    Ok(log)
}
