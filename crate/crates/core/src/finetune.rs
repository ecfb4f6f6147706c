//! Reward-weighted maximum-likelihood fine-tuning.
//!
//! Each iteration rolls in `m` trajectories from a mix of the current and the
//! pretrained policy, scores their final designs with the black-box reward,
//! and takes one weighted pass of the usual noise-matching loss on them with
//! weights `exp(r / alpha)` normalized to mean 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::denoiser::Denoiser;
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::pretrain::{rollout, Trainer};
use crate::rewards::{RewardModel, WEIGHT_EXPONENT_CLAMP};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    /// Outer iterations `S`.
    pub iterations: usize,
    /// Roll-in trajectories per iteration `m`.
    pub samples: usize,
    /// Temperature; `None` picks one from the reward spread.
    pub alpha: Option<f64>,
    pub lr: f64,
    pub batch: usize,
    /// Weighted passes over each iteration's roll-ins.
    pub epochs_per_iteration: usize,
    /// Strength of `||eps_theta - eps_pre||^2`; `None` disables it.
    pub anchor: Option<f64>,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            iterations: 50,
            samples: 256,
            alpha: None,
            lr: 1e-3,
            batch: 64,
            epochs_per_iteration: 1,
            anchor: Some(0.01),
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Config(format!("finetune.samples must be at least 2, got {}", self.samples)));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("finetune.alpha must be positive, got {a}")));
            }
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("finetune.lr must be positive, got {}", self.lr)));
        }
        if self.batch == 0 || self.epochs_per_iteration == 0 {
            return Err(Error::Config("finetune.batch and finetune.epochs_per_iteration must be at least 1".into()));
        }
        if let Some(k) = self.anchor {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::Config(format!("finetune.anchor must be non-negative, got {k}")));
            }
        }
        Ok(())
    }
}

/// Temperature mapping a reward spread onto weights within `[e^-3, e^3]`.
pub fn auto_alpha(rewards: &[f64]) -> Result<f64> {
    let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) || !(hi - lo).is_finite() {
        return Err(Error::Config("cannot derive alpha: rewards have no finite spread".into()));
    }
    Ok((hi - lo) / 6.0)
}

/// `exp(clamp((r - r_max) / alpha))` normalized to mean 1. Shifting by the
/// maximum leaves the normalized weights unchanged wherever the clamp is
/// inactive and keeps the largest weight away from it. Equal rewards give
/// exactly 1.
pub fn normalized_weights(rewards: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Ok(vec![]);
    }
    if rewards.iter().any(|r| r.is_nan()) {
        return Err(Error::Numerical("reward is NaN".into()));
    }
    let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    if hi == lo {
        return Ok(vec![1.0; rewards.len()]);
    }
    let w: Vec<f64> = rewards
        .iter()
        .map(|&r| ((r - hi) / alpha).clamp(-WEIGHT_EXPONENT_CLAMP, WEIGHT_EXPONENT_CLAMP).exp())
        .collect();
    if w.iter().all(|&v| v == w[0]) {
        log::warn!("all weights saturate identically at alpha = {alpha}; update is unweighted");
        return Ok(vec![1.0; rewards.len()]);
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    Ok(w.into_iter().map(|v| v / mean).collect())
}

/// Roll-in switch for iteration `s` of `S`: steps `t <= k` use the pretrained
/// policy, later steps the current one. Anneals from `T` at `s = 1` to 0.
pub fn switch_index(s: usize, iterations: usize, steps: usize) -> usize {
    if iterations <= 1 {
        return steps;
    }
    let frac = (iterations - s.min(iterations)) as f64 / (iterations - 1) as f64;
    (steps as f64 * frac).round() as usize
}

/// Full trajectories `x_T..x_0` in normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollouts {
    dim: usize,
    steps: usize,
    states: Vec<f64>,
}

impl Rollouts {
    pub fn len(&self) -> usize {
        self.states.len() / ((self.steps + 1) * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `x_t` of trajectory `i`.
    pub fn state(&self, i: usize, t: usize) -> &[f64] {
        let at = (i * (self.steps + 1) + self.steps - t) * self.dim;
        &self.states[at..at + self.dim]
    }

    /// Final designs as a dataset (normalized space).
    pub fn finals(&self) -> Result<Dataset> {
        let mut v = Vec::with_capacity(self.len() * self.dim);
        for i in 0..self.len() {
            v.extend_from_slice(self.state(i, 0));
        }
        Dataset::new(self.dim, v, None)
    }
}

/// `m` trajectories using `current` for steps `t > switch` and `pre` for the
/// rest. Streams match [`crate::pretrain::ancestral_sample_normalized`].
pub fn rollin_collect(
    current: &Denoiser,
    pre: &Denoiser,
    sched: &NoiseSchedule,
    m: usize,
    switch: usize,
    seed: u64,
) -> Result<Rollouts> {
    if current.dim() != pre.dim() || current.config() != pre.config() {
        return Err(Error::Argument("current and pretrained networks differ in architecture".into()));
    }
    let policy = |t: usize| if t > switch { current } else { pre };
    let states = rollout(&policy, sched, m, seed, true)?;
    Ok(Rollouts { dim: pre.dim(), steps: sched.steps(), states })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_reward: f64,
    pub mean_loss: f64,
    pub alpha: f64,
}

/// One weighted pass of the noise-matching loss over `x0` (normalized) with
/// per-row weights from `rewards`. Returns the mean loss.
#[allow(clippy::too_many_arguments)]
pub fn weighted_epoch(
    trainer: &mut Trainer,
    x0: &Dataset,
    rewards: &[f64],
    alpha: f64,
    sched: &NoiseSchedule,
    batch: usize,
    rng: &mut StreamRng,
    anchor: Option<(&Denoiser, f64)>,
) -> Result<f64> {
    if rewards.len() != x0.len() {
        return Err(Error::Argument(format!("{} rewards for {} designs", rewards.len(), x0.len())));
    }
    let w = normalized_weights(rewards, alpha)?;
    trainer.epoch(x0, Some(&w), sched, batch, rng, anchor)
}

/// Stateful driver. After an error `trainer.net` holds the last finite
/// parameters.
pub struct Finetuner<'a> {
    pub pretrained: &'a DiffusionModel,
    pub trainer: Trainer,
    pub cfg: FinetuneConfig,
    pub alpha: Option<f64>,
    pub history: Vec<IterationStats>,
}

impl<'a> Finetuner<'a> {
    /// `reference_rewards` (typically the training-set rewards) fix the
    /// temperature when `cfg.alpha` is unset; otherwise the first roll-in's
    /// rewards do.
    pub fn new(pretrained: &'a DiffusionModel, cfg: FinetuneConfig, reference_rewards: Option<&[f64]>) -> Result<Self> {
        cfg.validate()?;
        let alpha = match (cfg.alpha, reference_rewards) {
            (Some(a), _) => Some(a),
            (None, Some(r)) => Some(auto_alpha(r)?),
            (None, None) => None,
        };
        let trainer = Trainer::new(pretrained.net.clone(), cfg.lr);
        Ok(Self { pretrained, trainer, cfg, alpha, history: vec![] })
    }

    pub fn model(&self) -> DiffusionModel {
        DiffusionModel { net: self.trainer.net.clone(), ..self.pretrained.clone() }
    }

    /// Runs iteration `history.len() + 1`.
    pub fn step(&mut self, reward: &dyn RewardModel) -> Result<IterationStats> {
        let s = self.history.len() + 1;
        let sched = &self.pretrained.schedule;
        let k = switch_index(s, self.cfg.iterations, sched.steps());
        let roll = rollin_collect(
            &self.trainer.net,
            &self.pretrained.net,
            sched,
            self.cfg.samples,
            k,
            rng::derive_seed(self.cfg.seed, &[s as u64, 0]),
        )?;
        let x0 = roll.finals()?;
        let rewards = score_rows(&x0, &self.pretrained.stats, reward)?;
        let alpha = match self.alpha {
            Some(a) => a,
            None => *self.alpha.insert(auto_alpha(&rewards)?),
        };
        let anchor = self.cfg.anchor.filter(|&k| k > 0.0).map(|k| (&self.pretrained.net, k));
        let mut r = rng::stream(self.cfg.seed, &[s as u64, 1]);
        let mut loss = 0.0;
        for _ in 0..self.cfg.epochs_per_iteration {
            loss += weighted_epoch(&mut self.trainer, &x0, &rewards, alpha, sched, self.cfg.batch, &mut r, anchor)?;
        }
        let stats = IterationStats {
            iteration: s,
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            mean_loss: loss / self.cfg.epochs_per_iteration as f64,
            alpha,
        };
        log::info!("finetune iteration {s:>3}: switch {k:>3}, mean reward {:.6}, loss {:.6}", stats.mean_reward, stats.mean_loss);
        self.history.push(stats);
        Ok(stats)
    }
}

/// Rewards of normalized rows, evaluated in physical coordinates.
pub(crate) fn score_rows(x0: &Dataset, stats: &crate::data::ColumnStats, reward: &dyn RewardModel) -> Result<Vec<f64>> {
    (0..x0.len()).into_par_iter().map(|i| reward.reward(&stats.denormalize(x0.row(i)))).collect()
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub model: DiffusionModel,
    pub history: Vec<IterationStats>,
}

pub fn finetune(
    pretrained: &DiffusionModel,
    reward: &dyn RewardModel,
    cfg: &FinetuneConfig,
    reference_rewards: Option<&[f64]>,
) -> Result<FinetuneOutcome> {
    let mut ft = Finetuner::new(pretrained, cfg.clone(), reference_rewards)?;
    for _ in 0..cfg.iterations {
        ft.step(reward)?;
    }
    Ok(FinetuneOutcome { model: ft.model(), history: ft.history })
}
