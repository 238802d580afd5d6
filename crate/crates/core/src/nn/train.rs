//! Score-model training: shuffled mini-batches, annealed perturbation scale,
//! AdamW updates.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adamw::{AdamState, AdamW};
use super::loss::{ardae_loss_with_noise, draw_noise, LossOptions};
use super::network::{Precision, ScoreNetwork};
use crate::error::{Error, Result};
use crate::image::EnvelopeImage;
use crate::rng::Rng;

/// Linear decay of the perturbation scale `delta` from `sigma_max` at step 0
/// to `sigma_min` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub total_steps: usize,
}

impl AnnealingSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, total_steps: usize) -> Result<Self> {
        let s = Self { sigma_min, sigma_max, total_steps };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_min > 0.0 && self.sigma_min <= self.sigma_max && self.sigma_max.is_finite()) {
            return Err(Error::Config(format!(
                "need 0 < sigma_min <= sigma_max, got {} and {}",
                self.sigma_min, self.sigma_max
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        Ok(())
    }

    /// `delta_t`; steps past the end stay at `sigma_min`.
    pub fn delta(&self, step: usize) -> f64 {
        let t = step.min(self.total_steps) as f64 / self.total_steps as f64;
        self.sigma_max + (self.sigma_min - self.sigma_max) * t
    }
}

/// Learning-rate multiplier over the run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from 1 down to `floor` at the last step.
    Cosine { floor: f64 },
}

impl LrSchedule {
    pub fn factor(&self, step: usize, total_steps: usize) -> f64 {
        match *self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine { floor } => {
                let t = step.min(total_steps) as f64 / total_steps.max(1) as f64;
                floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::Cosine { floor } if !(0.0..=1.0).contains(&floor) => {
                Err(Error::Config(format!("cosine floor must lie in [0, 1], got {floor}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub precision: Precision,
    pub antithetic: bool,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 2e-4,
            epochs: 50,
            weight_decay: 0.01,
            seed: 0,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            precision: Precision::F64,
            antithetic: true,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.adam_betas;
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) || !(self.adam_eps > 0.0) {
            return Err(Error::Config("learning_rate and adam_eps must be positive, weight_decay >= 0".into()));
        }
        if !(0.0 < b1 && b1 < 1.0 && 0.0 < b2 && b2 < 1.0) {
            return Err(Error::Config(format!("adam betas must lie in (0, 1), got {:?}", self.adam_betas)));
        }
        self.lr_schedule.validate()
    }

    pub fn batches_per_epoch(&self, dataset_len: usize) -> usize {
        dataset_len.div_ceil(self.batch_size)
    }

    /// Total optimizer steps for a dataset of `dataset_len` images.
    pub fn total_steps(&self, dataset_len: usize) -> usize {
        self.epochs * self.batches_per_epoch(dataset_len)
    }

    fn optimizer(&self) -> AdamW {
        AdamW {
            learning_rate: self.learning_rate,
            beta1: self.adam_betas.0,
            beta2: self.adam_betas.1,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Batch loss at every step.
    pub history: Vec<f64>,
    /// `delta` used at every step.
    pub deltas: Vec<f64>,
}

/// Trains `net` in place.
///
/// On a non-finite loss or update the offending step is discarded, `net`
/// keeps the last good parameters, and [`Error::Divergence`] is returned.
pub fn train(
    net: &mut ScoreNetwork,
    dataset: &[EnvelopeImage],
    config: &TrainConfig,
    schedule: &AnnealingSchedule,
    rng: &mut Rng,
) -> Result<TrainReport> {
    train_with(net, dataset, config, schedule, rng, |_, _| {})
}

/// [`train`] with a per-step observer receiving `(step, loss)`.
pub fn train_with(
    net: &mut ScoreNetwork,
    dataset: &[EnvelopeImage],
    config: &TrainConfig,
    schedule: &AnnealingSchedule,
    rng: &mut Rng,
    mut observe: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    config.validate()?;
    schedule.validate()?;
    let mut optimizer = config.optimizer();
    let total_steps = config.total_steps(dataset.len());
    let options = LossOptions { precision: config.precision, antithetic: config.antithetic };
    let mut state = AdamState::new(net.param_count());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = TrainReport { history: Vec::new(), deltas: Vec::new() };
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<EnvelopeImage> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let delta = schedule.delta(step);
            let noise = draw_noise(&batch, delta, rng);
            let lg = ardae_loss_with_noise(net, &batch, &noise, options).map_err(|e| match e {
                Error::Divergence { loss, .. } => Error::Divergence { step, loss },
                other => other,
            })?;
            optimizer.learning_rate = config.learning_rate * config.lr_schedule.factor(step, total_steps);
            let mut candidate = net.params().to_vec();
            let mut candidate_state = state.clone();
            optimizer.step(&mut candidate, &lg.grad, &mut candidate_state);
            if candidate.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence { step, loss: lg.loss });
            }
            net.params_mut().copy_from_slice(&candidate);
            state = candidate_state;
            report.history.push(lg.loss);
            report.deltas.push(delta);
            observe(step, lg.loss);
            step += 1;
        }
    }
    Ok(report)
}
