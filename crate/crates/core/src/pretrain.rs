//! Unguided DDPM training and ancestral sampling.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::denoiser::{Adam, Denoiser, Example, NetConfig};
use crate::diffusion::{reverse_step_into, NoiseSchedule};
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Cosine-annealed step size at the last epoch; equal to `lr` for a
    /// constant rate.
    pub lr_final: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch: 128, lr: 1e-3, lr_final: 5e-5, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.lr_final > 0.0 && self.lr_final <= self.lr) {
            return Err(Error::Config(format!("lr_final must be in (0, lr], got {}", self.lr_final)));
        }
        Ok(())
    }

    /// Step size for 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.lr_final + (self.lr - self.lr_final) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Owns the parameters being trained. After a failed epoch `net` still holds
/// the last finite parameters, so callers can checkpoint it.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: Denoiser,
    pub opt: Adam,
}

impl Trainer {
    pub fn new(net: Denoiser, lr: f64) -> Self {
        let opt = Adam::new(net.num_params(), lr);
        Self { net, opt }
    }

    /// One shuffled pass over `rows` (normalized space). Each example gets
    /// `t ~ U{1..T}` and fresh Gaussian noise, drawn from `rng` in visiting
    /// order. Returns the example-averaged loss.
    pub fn epoch(
        &mut self,
        rows: &Dataset,
        weights: Option<&[f64]>,
        sched: &NoiseSchedule,
        batch: usize,
        rng: &mut StreamRng,
        anchor: Option<(&Denoiser, f64)>,
    ) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::Argument("cannot train on an empty dataset".into()));
        }
        if let Some(w) = weights {
            if w.len() != rows.len() {
                return Err(Error::Argument(format!("{} weights for {} rows", w.len(), rows.len())));
            }
        }
        let d = rows.dim();
        let steps = sched.steps();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch.max(1)) {
            let mut ts = Vec::with_capacity(chunk.len());
            let mut noise = vec![0.0; chunk.len() * d];
            for (k, _) in chunk.iter().enumerate() {
                ts.push(rng.random_range(1..=steps));
                rng::standard_normal(rng, &mut noise[k * d..(k + 1) * d]);
            }
            let examples: Vec<Example> = chunk
                .iter()
                .enumerate()
                .map(|(k, &i)| Example { x0: rows.row(i), t: ts[k], eps: &noise[k * d..(k + 1) * d] })
                .collect();
            let w: Vec<f64> = match weights {
                Some(w) => chunk.iter().map(|&i| w[i]).collect(),
                None => vec![1.0; chunk.len()],
            };
            let (loss, grad) = self.net.loss_and_grad_anchored(&examples, sched, &w, anchor)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step: self.opt.step + 1, reason: format!("loss is {loss}") });
            }
            self.opt.update(self.net.params_mut(), &grad)?;
            total += loss * chunk.len() as f64;
        }
        Ok(total / rows.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Denoiser,
    pub epoch_losses: Vec<f64>,
}

/// Trains a fresh network on an already-normalized dataset.
pub fn train_ddpm(
    data: &Dataset,
    sched: &NoiseSchedule,
    net_cfg: &NetConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let net = Denoiser::new(data.dim(), sched.steps(), net_cfg, cfg.seed)?;
    let mut trainer = Trainer::new(net, cfg.lr);
    let epoch_losses = run_epochs(&mut trainer, data, sched, cfg)?;
    Ok(TrainOutcome { net: trainer.net, epoch_losses })
}

/// Runs `cfg.epochs` unweighted epochs on an existing trainer.
pub fn run_epochs(trainer: &mut Trainer, data: &Dataset, sched: &NoiseSchedule, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let mut r = rng::stream(cfg.seed, &[0xDA7A]);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for e in 0..cfg.epochs {
        trainer.opt.lr = cfg.lr_at(e);
        let loss = trainer.epoch(data, None, sched, cfg.batch, &mut r, None)?;
        log::info!("pretrain epoch {:>4}: loss {loss:.6}", e + 1);
        losses.push(loss);
    }
    Ok(losses)
}

/// Stream for the initial state of trajectory `traj`.
pub(crate) fn trajectory_stream(seed: u64, traj: usize) -> StreamRng {
    rng::stream(seed, &[traj as u64])
}

/// Stream for reverse step `t` of trajectory `traj`.
pub(crate) fn step_stream(seed: u64, traj: usize, t: usize) -> StreamRng {
    rng::stream(seed, &[traj as u64, t as u64])
}

const CHUNK: usize = 64;

/// Ancestral sampling in normalized space. Returns `n` row-major designs.
///
/// `x_T` of trajectory `i` comes from its own stream and each reverse step
/// from a per-step substream, so output does not depend on the thread count.
pub fn ancestral_sample_normalized(net: &Denoiser, sched: &NoiseSchedule, n: usize, seed: u64) -> Result<Vec<f64>> {
    rollout(&|_| net, sched, n, seed, false)
}

/// Runs `n` reverse chains where step `t` uses `policy(t)`. With `keep`, every
/// state `x_T..x_0` of each trajectory is returned (trajectory-major);
/// otherwise only `x_0`.
pub(crate) fn rollout<'a>(
    policy: &(dyn Fn(usize) -> &'a Denoiser + Sync),
    sched: &NoiseSchedule,
    n: usize,
    seed: u64,
    keep: bool,
) -> Result<Vec<f64>> {
    let steps = sched.steps();
    let d = policy(steps).dim();
    for t in 1..=steps {
        let net = policy(t);
        if net.steps() != steps || net.dim() != d {
            return Err(Error::Config("network and schedule shapes differ".into()));
        }
    }
    let per_traj = if keep { (steps + 1) * d } else { d };
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            let mut x = Vec::with_capacity((hi - lo) * d);
            for i in lo..hi {
                x.extend(rng::normal_vec(&mut trajectory_stream(seed, i), d));
            }
            let mut out = vec![0.0; (hi - lo) * per_traj];
            let mut record = |x: &[f64], t: usize| {
                if keep {
                    for k in 0..hi - lo {
                        let at = k * per_traj + (steps - t) * d;
                        out[at..at + d].copy_from_slice(&x[k * d..(k + 1) * d]);
                    }
                }
            };
            record(&x, steps);
            let mut z = vec![0.0; d];
            let mut next = vec![0.0; d];
            for t in (1..=steps).rev() {
                let eps = policy(t).predict_batch_at(&x, t)?;
                for (k, i) in (lo..hi).enumerate() {
                    rng::standard_normal(&mut step_stream(seed, i, t), &mut z);
                    let row = k * d..(k + 1) * d;
                    reverse_step_into(&x[row.clone()], t, &eps[row.clone()], sched, &z, &mut next);
                    x[row].copy_from_slice(&next);
                }
                record(&x, t - 1);
            }
            Ok(if keep { out } else { x })
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Ancestral samples mapped back to physical coordinates.
pub fn ancestral_sample(model: &DiffusionModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut x = ancestral_sample_normalized(&model.net, &model.schedule, n, seed)?;
    for row in x.chunks_exact_mut(model.dim()) {
        model.stats.denormalize_in_place(row);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::ScheduleKind;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::new(20, 1e-3, 0.3, ScheduleKind::Linear).unwrap()
    }

    #[test]
    fn cosine_step_size_endpoints() {
        let cfg = TrainConfig { epochs: 11, lr: 1e-3, lr_final: 1e-4, ..TrainConfig::default() };
        assert_eq!(cfg.lr_at(0), 1e-3);
        assert!((cfg.lr_at(10) - 1e-4).abs() < 1e-18);
        assert!((cfg.lr_at(5) - 5.5e-4).abs() < 1e-15);
        assert!((0..10).all(|e| cfg.lr_at(e + 1) < cfg.lr_at(e)));
        let flat = TrainConfig { lr_final: 1e-3, ..cfg.clone() };
        assert!((0..11).all(|e| flat.lr_at(e) == 1e-3));
        assert!(TrainConfig { lr_final: 2e-3, ..cfg }.validate().is_err());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let data = Dataset::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let net_cfg = NetConfig { hidden: vec![8], embed_dim: 4 };
        let out = train_ddpm(&data, &sched(), &net_cfg, &cfg).unwrap();
        assert_eq!(out.net, Denoiser::new(2, 20, &net_cfg, cfg.seed).unwrap());
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn single_row_is_memorized() {
        let data = Dataset::from_rows(&[vec![0.8, -0.4]]).unwrap();
        let s = NoiseSchedule::new(10, 0.05, 0.5, ScheduleKind::Linear).unwrap();
        let cfg = TrainConfig { epochs: 2000, batch: 1, lr: 2e-3, lr_final: 2e-3, seed: 3 };
        let out = train_ddpm(&data, &s, &NetConfig { hidden: vec![128, 128], embed_dim: 16 }, &cfg).unwrap();
        let tail: f64 = out.epoch_losses[1900..].iter().sum::<f64>() / 100.0;
        let head: f64 = out.epoch_losses[..100].iter().sum::<f64>() / 100.0;
        assert!(tail < 0.05, "running loss {tail}");
        assert!(tail < head);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let net = Denoiser::new(2, 20, &NetConfig { hidden: vec![8], embed_dim: 4 }, 1).unwrap();
        let a = ancestral_sample_normalized(&net, &sched(), 70, 5).unwrap();
        let b = ancestral_sample_normalized(&net, &sched(), 70, 5).unwrap();
        let c = ancestral_sample_normalized(&net, &sched(), 70, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(ancestral_sample_normalized(&net, &sched(), 0, 5).unwrap().is_empty());
        // prefix property: sample i does not depend on n
        let short = ancestral_sample_normalized(&net, &sched(), 3, 5).unwrap();
        assert_eq!(short, a[..6].to_vec());
    }

    #[test]
    fn zero_network_sampling_matches_linear_recursion_variance() {
        // eps_theta == 0 makes each step x_{t-1} = x_t / sqrt(a_t) + sigma_t z,
        // so Var[x_0] = prod_t 1/a_t + sum_{t>=2} sigma_t^2 prod_{s<t} 1/a_s.
        let s = sched();
        let net = Denoiser::zeros(3, 20, &NetConfig { hidden: vec![4], embed_dim: 4 }).unwrap();
        let x = ancestral_sample_normalized(&net, &s, 4000, 9).unwrap();
        let mut var = 1.0;
        for t in (1..=20).rev() {
            var = var / s.alpha(t) + s.sigma(t).powi(2);
        }
        for j in 0..3 {
            let col: Vec<f64> = x.chunks_exact(3).map(|r| r[j]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 4.0 * (var / 4000.0).sqrt(), "mean {m}");
            assert!((v / var - 1.0).abs() < 0.1, "var {v} vs {var}");
        }
    }
}
