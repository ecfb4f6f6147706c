//! Noise schedules and the forward/reverse Gaussian kernels.
//!
//! Timesteps are 1-based: `t = 1..=T`. The convention `alpha_bar(0) = 1`
//! covers the clean design itself. The forward kernel has mean
//! `sqrt(alpha_t) * x_{t-1}`, which makes the step-by-step chain and the
//! closed-form marginal agree exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this cumulative product the posterior-mean estimate amplifies
/// noise-prediction error by more than 1e6.
pub const MIN_ALPHA_BAR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub beta_start: f64,
    pub beta_end: f64,
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(steps: usize, beta_start: f64, beta_end: f64, kind: ScheduleKind) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Config(format!(
                "beta range must satisfy 0 < start <= end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        let betas: Vec<f64> = match kind {
            ScheduleKind::Linear if steps == 1 => vec![beta_start],
            ScheduleKind::Linear => (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect(),
        };
        Self::from_betas_inner(kind, beta_start, beta_end, betas)
    }

    /// Schedule from an explicit beta table.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Config("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("beta {b} outside (0, 1)")));
        }
        let (lo, hi) = (betas[0], betas[betas.len() - 1]);
        Self::from_betas_inner(ScheduleKind::Linear, lo, hi, betas)
    }

    fn from_betas_inner(kind: ScheduleKind, beta_start: f64, beta_end: f64, betas: Vec<f64>) -> Result<Self> {
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        let sigmas = betas
            .iter()
            .enumerate()
            .map(|(i, b)| if i == 0 { 0.0 } else { b.sqrt() })
            .collect();
        Ok(Self { kind, beta_start, beta_end, betas, alphas, alpha_bars, sigmas })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    fn check(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps() {
            Err(Error::Index { t, max: self.steps() })
        } else {
            Ok(t - 1)
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// Cumulative product up to `t`; `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

/// Closed-form marginal `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn forward_marginal(x0: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check(t)?;
    same_len(x0, eps)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// One forward kernel step from `x_{t-1}` to `x_t`.
pub fn forward_step(x_prev: &[f64], t: usize, eps: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    sched.check(t)?;
    same_len(x_prev, eps)?;
    let (a, b) = (sched.alpha(t).sqrt(), sched.beta(t).sqrt());
    Ok(x_prev.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
}

/// Ancestral reverse step from `x_t` to `x_{t-1}` given predicted noise.
/// `z` is ignored at `t = 1`.
pub fn reverse_step(
    xt: &[f64],
    t: usize,
    eps_pred: &[f64],
    sched: &NoiseSchedule,
    z: &[f64],
) -> Result<Vec<f64>> {
    sched.check(t)?;
    same_len(xt, eps_pred)?;
    same_len(xt, z)?;
    let mut out = vec![0.0; xt.len()];
    reverse_step_into(xt, t, eps_pred, sched, z, &mut out);
    Ok(out)
}

/// Unchecked variant used in the sampling hot loops.
pub(crate) fn reverse_step_into(
    xt: &[f64],
    t: usize,
    eps_pred: &[f64],
    sched: &NoiseSchedule,
    z: &[f64],
    out: &mut [f64],
) {
    let inv_sqrt_alpha = 1.0 / sched.alpha(t).sqrt();
    let coef = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let sigma = sched.sigma(t);
    for i in 0..xt.len() {
        let mean = inv_sqrt_alpha * (xt[i] - coef * eps_pred[i]);
        out[i] = if sigma == 0.0 { mean } else { mean + sigma * z[i] };
    }
}

/// Posterior-mean estimate of the clean design,
/// `(x_t - sqrt(1 - abar_t) eps_pred) / sqrt(abar_t)`.
///
/// `t = 0` is accepted and returns `xt` unchanged.
pub fn posterior_mean_x0(xt: &[f64], t: usize, eps_pred: &[f64], sched: &NoiseSchedule) -> Result<Vec<f64>> {
    if t > sched.steps() {
        return Err(Error::Index { t, max: sched.steps() });
    }
    same_len(xt, eps_pred)?;
    let ab = sched.alpha_bar(t);
    if ab < MIN_ALPHA_BAR {
        return Err(Error::Numerical(format!(
            "alpha_bar({t}) = {ab:e} is below {MIN_ALPHA_BAR:e}; schedule too aggressive for the posterior-mean estimate"
        )));
    }
    let mut out = vec![0.0; xt.len()];
    posterior_mean_into(xt, ab, eps_pred, &mut out);
    Ok(out)
}

pub(crate) fn posterior_mean_into(xt: &[f64], alpha_bar: f64, eps_pred: &[f64], out: &mut [f64]) {
    let s = (1.0 - alpha_bar).sqrt();
    let inv = 1.0 / alpha_bar.sqrt();
    for i in 0..xt.len() {
        out[i] = (xt[i] - s * eps_pred[i]) * inv;
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!("dimension mismatch: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}
