//! Soft-value importance sampling at inference time.
//!
//! At every reverse step `M` proposals are drawn from `p(x_{t-1} | x_t)`,
//! each is scored by the reward of its posterior-mean clean design, and one is
//! kept by a single categorical draw on `exp(v / alpha)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ColumnStats;
use crate::diffusion::{posterior_mean_into, posterior_mean_x0, reverse_step_into};
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::pretrain::{step_stream, trajectory_stream};
use crate::rewards::{RewardModel, WEIGHT_EXPONENT_CLAMP};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvddConfig {
    /// Candidates per step.
    #[serde(rename = "M")]
    pub m: usize,
    /// Selection temperature; below `greedy_threshold` the best candidate is
    /// taken deterministically.
    pub alpha: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub greedy_threshold: f64,
    /// Keep every intermediate state in the returned trajectories.
    pub record_states: bool,
}

impl Default for SvddConfig {
    fn default() -> Self {
        Self { m: 10, alpha: 0.1, n_traj: 1000, seed: 0, greedy_threshold: 1e-9, record_states: false }
    }
}

impl SvddConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("svdd.M must be at least 1".into()));
        }
        if self.m > 10 {
            log::warn!("svdd.M = {} exceeds the usual bound of 10 candidates", self.m);
        }
        if self.n_traj == 0 {
            return Err(Error::Config("svdd.n_traj must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("svdd.alpha must be non-negative, got {}", self.alpha)));
        }
        if !(self.greedy_threshold >= 0.0) {
            return Err(Error::Config("svdd.greedy_threshold must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `x_T..x_0` in physical coordinates when recorded, else empty.
    pub states: Vec<Vec<f64>>,
    /// Final design in physical coordinates.
    pub design: Vec<f64>,
    /// Chosen candidate per step, listed for `t = T..1`; 1-based.
    pub chosen: Vec<usize>,
    /// Candidate soft values per step, listed for `t = T..1`.
    pub values: Vec<Vec<f64>>,
    pub reward: f64,
}

/// `r(E[x_0 | x_t])`: reward of the posterior-mean design, one network pass
/// and one reward call. `xt` is in normalized coordinates.
pub fn soft_value_estimate(xt: &[f64], t: usize, model: &DiffusionModel, reward: &dyn RewardModel) -> Result<f64> {
    let eps = model.net.predict_noise(xt, t)?;
    let x0 = posterior_mean_x0(xt, t, &eps, &model.schedule)?;
    reward.reward(&model.stats.denormalize(&x0))
}

/// Index drawn with probability proportional to `exp(clamp((v - v_max) / alpha))`,
/// or the first maximizer when `alpha < greedy_threshold`. Falls back to a
/// uniform draw if the weights are unusable.
pub fn select_candidate(values: &[f64], alpha: f64, greedy_threshold: f64, rng: &mut impl Rng) -> usize {
    let n = values.len();
    if n == 1 {
        return 0;
    }
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if alpha < greedy_threshold {
        if let Some(i) = values.iter().position(|&v| v == best) {
            return i;
        }
    }
    let w: Vec<f64> =
        values.iter().map(|&v| ((v - best) / alpha).clamp(-WEIGHT_EXPONENT_CLAMP, WEIGHT_EXPONENT_CLAMP).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        log::warn!("candidate weights unusable (sum {total}); selecting uniformly");
        return rng.random_range(0..n);
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, wi) in w.iter().enumerate() {
        acc += wi;
        if u < acc {
            return i;
        }
    }
    // rounding left u at the very top
    w.iter().rposition(|&v| v > 0.0).unwrap_or(n - 1)
}

pub struct StepOutcome {
    pub next: Vec<f64>,
    /// 0-based.
    pub index: usize,
    pub values: Vec<f64>,
}

/// One guided step from `x_t` (normalized). `rng` is the step's stream: the
/// `M` proposal noises are drawn from it first, then the selection draw.
pub fn svdd_step(
    xt: &[f64],
    t: usize,
    model: &DiffusionModel,
    reward: &dyn RewardModel,
    cfg: &SvddConfig,
    rng: &mut StreamRng,
) -> Result<StepOutcome> {
    let sched = &model.schedule;
    if t == 0 || t > sched.steps() {
        return Err(Error::Index { t, max: sched.steps() });
    }
    let d = xt.len();
    if d != model.dim() {
        return Err(Error::Argument(format!("state width {d} vs model width {}", model.dim())));
    }
    let eps = model.net.predict_noise(xt, t)?;
    let mut cands = vec![0.0; cfg.m * d];
    let mut z = vec![0.0; d];
    for c in cands.chunks_exact_mut(d) {
        rng::standard_normal(rng, &mut z);
        reverse_step_into(xt, t, &eps, sched, &z, c);
    }
    let values = candidate_values(&cands, t - 1, model, reward)?;
    let index = select_candidate(&values, cfg.alpha, cfg.greedy_threshold, rng);
    Ok(StepOutcome { next: cands[index * d..(index + 1) * d].to_vec(), index, values })
}

/// Soft values of candidates at time `t`; at `t = 0` the candidates are
/// themselves clean designs.
fn candidate_values(cands: &[f64], t: usize, model: &DiffusionModel, reward: &dyn RewardModel) -> Result<Vec<f64>> {
    let d = model.dim();
    let score = |x: &[f64], stats: &ColumnStats| reward.reward(&stats.denormalize(x));
    if t == 0 {
        return cands.chunks_exact(d).map(|c| score(c, &model.stats)).collect();
    }
    let ab = model.schedule.alpha_bar(t);
    if ab < crate::diffusion::MIN_ALPHA_BAR {
        return Err(Error::Numerical(format!("alpha_bar({t}) = {ab:e} too small for the posterior-mean value")));
    }
    let eps = model.net.predict_batch_at(cands, t)?;
    let mut x0 = vec![0.0; d];
    cands
        .chunks_exact(d)
        .zip(eps.chunks_exact(d))
        .map(|(c, e)| {
            posterior_mean_into(c, ab, e, &mut x0);
            score(&x0, &model.stats)
        })
        .collect()
}

fn run_trajectory(i: usize, model: &DiffusionModel, reward: &dyn RewardModel, cfg: &SvddConfig) -> Result<Trajectory> {
    let steps = model.schedule.steps();
    let d = model.dim();
    let mut x = rng::normal_vec(&mut trajectory_stream(cfg.seed, i), d);
    let mut states = Vec::new();
    if cfg.record_states {
        states.push(model.stats.denormalize(&x));
    }
    let mut chosen = Vec::with_capacity(steps);
    let mut values = Vec::with_capacity(steps);
    for t in (1..=steps).rev() {
        let out = svdd_step(&x, t, model, reward, cfg, &mut step_stream(cfg.seed, i, t))?;
        x = out.next;
        chosen.push(out.index + 1);
        if cfg.record_states {
            states.push(model.stats.denormalize(&x));
        }
        values.push(out.values);
    }
    let design = model.stats.denormalize(&x);
    // the t = 1 candidates were scored on exactly this design
    let reward = match values.last() {
        Some(v) => v[chosen[steps - 1] - 1],
        None => reward.reward(&design)?,
    };
    Ok(Trajectory { states, design, chosen, values, reward })
}

/// `cfg.n_traj` independent guided trajectories, ordered by index.
pub fn svdd_generate(model: &DiffusionModel, reward: &dyn RewardModel, cfg: &SvddConfig) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    (0..cfg.n_traj).into_par_iter().map(|i| run_trajectory(i, model, reward, cfg)).collect()
}

/// Row-major final designs of `trajs`.
pub fn designs(trajs: &[Trajectory]) -> Vec<f64> {
    trajs.iter().flat_map(|t| t.design.iter().copied()).collect()
}
