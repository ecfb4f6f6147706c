//! Commands behind the CLI: each reads a [`RunConfig`], writes its outputs
//! into `cfg.output` next to an archived copy of the config, and records
//! wall-clock timings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SyntheticConfig};
use crate::data::{fmt_f64, load_dataset, save_samples, Dataset};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::finetune::{Finetuner, IterationStats};
use crate::hull::{self, HullParams, ResistanceResult};
use crate::metrics::{self, BeyondDistribution, BoxplotStats, Summary};
use crate::model::DiffusionModel;
use crate::pretrain::{ancestral_sample, Trainer};
use crate::rewards::{
    fit_ship_scale, AirfoilReward, HullReward, ResistanceSource, RewardModel, RewardSpec, SurrogateReward, SyntheticReward,
};
use crate::rng;
use crate::surrogate::{r2_score, TreeEnsemble};
use crate::svdd::{self, svdd_generate};

pub const MODEL_FILE: &str = "model.bin";
pub const FINETUNED_FILE: &str = "model_ft.bin";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const BASELINE_FILE: &str = "samples_pretrained.csv";
pub const SURROGATE_FILE: &str = "surrogate.bin";

/// Stage timings of one command, written as `<command>_log.json`.
#[derive(Debug, Default, Serialize)]
pub struct RunLog {
    pub command: String,
    pub stages: Vec<(String, f64)>,
    pub total_seconds: f64,
    #[serde(skip)]
    start: Option<Instant>,
}

impl RunLog {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), stages: vec![], total_seconds: 0.0, start: Some(Instant::now()) }
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        let secs = t0.elapsed().as_secs_f64();
        log::info!("{stage}: {secs:.3} s");
        self.stages.push((stage.into(), secs));
        Ok(out)
    }

    fn finish(mut self, out: &Path) -> Result<()> {
        self.total_seconds = self.start.map_or(0.0, |s| s.elapsed().as_secs_f64());
        write_json(&out.join(format!("{}_log.json", self.command)), &self)
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Creates the output directory and archives the resolved config in it.
pub fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.output.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_text(&out.join("config.json"), &(cfg.to_json() + "\n"))?;
    Ok(out)
}

/// Rows drawn from an equal-weight isotropic Gaussian mixture.
pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<Dataset> {
    let d = cfg.modes.first().map_or(0, Vec::len);
    let mut r = rng::stream(cfg.seed, &[0x5EED]);
    let mut values = Vec::with_capacity(cfg.rows * d);
    for i in 0..cfg.rows {
        let mode = &cfg.modes[i % cfg.modes.len()];
        let z = rng::normal_vec(&mut r, d);
        values.extend(mode.iter().zip(z).map(|(m, e)| m + cfg.std * e));
    }
    Dataset::new(d, values, None)
}

/// Hull parameter ranges used for generated hull datasets.
pub const HULL_SAMPLING_RANGES: [(f64, f64); 6] =
    [(0.1, 0.4), (0.1, 0.4), (0.08, 0.2), (0.05, 0.12), (0.3, 1.0), (0.5, 0.9)];

/// `n` uniformly drawn hull parameter vectors labeled with their aggregate
/// resistance (N).
pub fn hull_dataset(n: usize, seed: u64, hull_cfg: &crate::config::HullConfig) -> Result<Dataset> {
    let mut r = rng::stream(seed, &[0x4011]);
    let params: Vec<[f64; 6]> = (0..n)
        .map(|_| {
            let mut p = [0.0; 6];
            for (v, (lo, hi)) in p.iter_mut().zip(HULL_SAMPLING_RANGES) {
                *v = r.random_range(lo..=hi);
            }
            p
        })
        .collect();
    let labels = params
        .par_iter()
        .map(|p| {
            hull::evaluate_params(&HullParams(*p), hull_cfg.loa, &hull_cfg.environment, &hull_cfg.quadrature)
                .map(|r| r.aggregate)
        })
        .collect::<Result<Vec<f64>>>()?;
    Dataset::new(6, params.concat(), Some(labels))
}

pub fn load_training(cfg: &RunConfig) -> Result<Dataset> {
    match &cfg.data.train {
        Some(p) => load_dataset(p),
        None => synthetic_dataset(&cfg.data.synthetic),
    }
}

/// Reward model for `cfg.reward`. Hull scaling left unset is fitted to the
/// resistances of `training`.
pub fn build_reward(cfg: &RunConfig, training: Option<&Dataset>) -> Result<Box<dyn RewardModel>> {
    Ok(match &cfg.reward {
        RewardSpec::Synthetic { target } => Box::new(SyntheticReward { target: target.clone() }),
        RewardSpec::Airfoil { surrogate, penalty } => {
            Box::new(AirfoilReward { surrogate: TreeEnsemble::load(Path::new(surrogate))?, penalty: *penalty })
        }
        RewardSpec::Hull { loa, scale, offset, surrogate, penalty } => {
            let source = match surrogate {
                Some(p) => ResistanceSource::Surrogate(TreeEnsemble::load(Path::new(p))?),
                None => ResistanceSource::Analytic(cfg.hull.environment),
            };
            let mut rw = HullReward { loa: *loa, scale: 1.0, offset: 0.0, source, penalty: *penalty };
            let (s, o) = match scale {
                Some(s) => (*s, offset.unwrap_or(0.0)),
                None => {
                    let data = training.ok_or_else(|| {
                        Error::Config("reward.scale is unset and no training data is available to fit it".into())
                    })?;
                    let res = data.rows().collect::<Vec<_>>().par_iter().map(|x| rw.resistance(x)).collect::<Result<Vec<_>>>()?;
                    let (s, o) = fit_ship_scale(&res)?;
                    (s, offset.unwrap_or(o))
                }
            };
            rw.scale = s;
            rw.offset = o;
            Box::new(rw)
        }
        RewardSpec::Surrogate { path, scale, offset } => {
            Box::new(SurrogateReward { model: TreeEnsemble::load(Path::new(path))?, scale: *scale, offset: *offset })
        }
    })
}

pub fn score(designs: &[f64], dim: usize, reward: &dyn RewardModel) -> Result<Vec<f64>> {
    designs.par_chunks(dim).map(|x| reward.reward(x)).collect()
}

fn write_losses(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    write_text(path, &text)
}

/// Trains the denoiser on the training set; writes `model.bin` and
/// `pretrain_loss.csv`. A diverged run leaves `model.partial.bin` behind.
pub fn pretrain(cfg: &RunConfig) -> Result<DiffusionModel> {
    let out = prepare_output(cfg)?;
    let mut log = RunLog::new("pretrain");
    let data = log.time("load", || load_training(cfg))?;
    let (norm, stats) = data.normalize()?;
    let sched = cfg.schedule.build()?;
    let net = Denoiser::new(data.dim(), sched.steps(), &cfg.net, cfg.pretrain.seed)?;
    let mut trainer = Trainer::new(net, cfg.pretrain.lr);
    let mut r = rng::stream(cfg.pretrain.seed, &[0xDA7A]);
    let mut losses = Vec::with_capacity(cfg.pretrain.epochs);
    let trained = log.time("train", || {
        for e in 0..cfg.pretrain.epochs {
            trainer.opt.lr = cfg.pretrain.lr_at(e);
            match trainer.epoch(&norm, None, &sched, cfg.pretrain.batch, &mut r, None) {
                Ok(l) => {
                    log::info!("pretrain epoch {:>4}: loss {l:.6}", e + 1);
                    losses.push(l);
                }
                Err(err) => {
                    let partial = DiffusionModel::new(trainer.net.clone(), sched.clone(), stats.clone())?;
                    partial.save(&out.join("model.partial.bin"))?;
                    return Err(err);
                }
            }
        }
        Ok(())
    });
    trained?;
    let model = DiffusionModel::new(trainer.net, sched, stats)?;
    model.save(&out.join(MODEL_FILE))?;
    write_losses(
        &out.join("pretrain_loss.csv"),
        "epoch,loss",
        losses.iter().enumerate().map(|(i, l)| format!("{},{}", i + 1, fmt_f64(*l))),
    )?;
    log.finish(&out)?;
    Ok(model)
}

/// Reward-weighted fine-tuning; writes `model_ft.bin` and
/// `finetune_history.csv`. A diverged run leaves `model_ft.partial.bin`.
pub fn finetune(cfg: &RunConfig, model: &DiffusionModel) -> Result<(DiffusionModel, Vec<IterationStats>)> {
    let out = prepare_output(cfg)?;
    let mut log = RunLog::new("finetune");
    let data = load_training(cfg)?;
    let reward = build_reward(cfg, Some(&data))?;
    let train_rewards = log.time("score training set", || score(data.values(), data.dim(), reward.as_ref()))?;
    let mut ft = Finetuner::new(model, cfg.finetune.clone(), Some(&train_rewards))?;
    let ran = log.time("finetune", || {
        for _ in 0..cfg.finetune.iterations {
            if let Err(e) = ft.step(reward.as_ref()) {
                ft.model().save(&out.join("model_ft.partial.bin"))?;
                return Err(e);
            }
        }
        Ok(())
    });
    ran?;
    let tuned = ft.model();
    tuned.save(&out.join(FINETUNED_FILE))?;
    write_losses(
        &out.join("finetune_history.csv"),
        "iteration,mean_reward,mean_loss",
        ft.history.iter().map(|h| format!("{},{},{}", h.iteration, fmt_f64(h.mean_reward), fmt_f64(h.mean_loss))),
    )?;
    log.finish(&out)?;
    Ok((tuned, ft.history))
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
    pub mean_reward: f64,
    pub median_reward: f64,
    pub max_reward: f64,
    pub seconds: f64,
}

/// Guided sampling with `cfg.svdd`; writes `samples.csv` (or `file_name`)
/// and `sample_summary.json`.
pub fn sample(cfg: &RunConfig, model: &DiffusionModel, file_name: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let out = prepare_output(cfg)?;
    let mut log = RunLog::new("sample");
    let data = cfg.reward_needs_training().then(|| load_training(cfg)).transpose()?;
    let reward = build_reward(cfg, data.as_ref())?;
    let t0 = Instant::now();
    let trajs = log.time("svdd", || svdd_generate(model, reward.as_ref(), &cfg.svdd))?;
    let seconds = t0.elapsed().as_secs_f64();
    let designs = svdd::designs(&trajs);
    let rewards: Vec<f64> = trajs.iter().map(|t| t.reward).collect();
    save_samples(&out.join(file_name), model.dim(), &designs, Some(&rewards))?;
    let s = metrics::summarize(&rewards)?;
    let summary = SampleSummary {
        n: rewards.len(),
        m: cfg.svdd.m,
        alpha: cfg.svdd.alpha,
        seed: cfg.svdd.seed,
        mean_reward: s.mean,
        median_reward: s.median,
        max_reward: s.max,
        seconds,
    };
    write_json(&out.join("sample_summary.json"), &summary)?;
    log.finish(&out)?;
    Ok((designs, rewards))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub samples: Summary,
    pub training: Summary,
    pub samples_boxplot: BoxplotStats,
    pub training_boxplot: BoxplotStats,
    pub beyond: BeyondDistribution,
    pub bandwidth: f64,
}

/// Reward statistics of `samples` against the training set; writes
/// `stats.json` and `density.csv` (grid, sample density, training density).
pub fn evaluate(cfg: &RunConfig, samples: &Dataset) -> Result<EvalReport> {
    let out = prepare_output(cfg)?;
    let mut log = RunLog::new("eval");
    let data = load_training(cfg)?;
    if data.dim() != samples.dim() {
        return Err(Error::Argument(format!("samples have width {}, training data {}", samples.dim(), data.dim())));
    }
    let reward = build_reward(cfg, Some(&data))?;
    let train_r = log.time("score training set", || score(data.values(), data.dim(), reward.as_ref()))?;
    let sample_r = match &samples.rewards {
        Some(r) => r.clone(),
        None => score(samples.values(), samples.dim(), reward.as_ref())?,
    };
    let bandwidth = metrics::silverman_bandwidth(&sample_r)?;
    let all: Vec<f64> = sample_r.iter().chain(&train_r).copied().collect();
    let grid = metrics::kde_grid(&all, bandwidth, cfg.eval.grid_pad, cfg.eval.grid_points)?;
    let ds = metrics::kde(&sample_r, bandwidth, &grid)?;
    let dt = metrics::kde(&train_r, metrics::silverman_bandwidth(&train_r)?, &grid)?;
    let report = EvalReport {
        samples: metrics::summarize(&sample_r)?,
        training: metrics::summarize(&train_r)?,
        samples_boxplot: metrics::boxplot_stats(&sample_r)?,
        training_boxplot: metrics::boxplot_stats(&train_r)?,
        beyond: metrics::beyond_distribution(&sample_r, &train_r)?,
        bandwidth,
    };
    write_json(&out.join("stats.json"), &report)?;
    let mut text = String::from("# reward sample_density training_density\n");
    for ((g, a), b) in grid.iter().zip(&ds).zip(&dt) {
        text.push_str(&format!("{} {} {}\n", fmt_f64(*g), fmt_f64(*a), fmt_f64(*b)));
    }
    write_text(&out.join("density.csv"), &text)?;
    log.finish(&out)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct SurrogateReport {
    pub n_train: usize,
    pub n_test: usize,
    pub r2_train: f64,
    pub r2_test: f64,
    pub final_train_mse: f64,
}

/// Seeded train/test row split; the first `n_test` shuffled rows are held out.
pub fn split_rows(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[0x5911]));
    let n_test = ((n as f64) * test_fraction).round() as usize;
    let test = idx[..n_test].to_vec();
    let train = idx[n_test..].to_vec();
    (train, test)
}

fn gather(data: &Dataset, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let y = data.rewards.as_ref().expect("checked by caller");
    let x = rows.iter().flat_map(|&i| data.row(i).iter().copied()).collect();
    (x, rows.iter().map(|&i| y[i]).collect())
}

/// Fits the tree surrogate on a labeled CSV and reports held-out R^2;
/// writes `surrogate.bin` and `surrogate_fit.json`.
pub fn surrogate_fit(cfg: &RunConfig, data: &Dataset) -> Result<(TreeEnsemble, SurrogateReport)> {
    let out = prepare_output(cfg)?;
    let mut log = RunLog::new("surrogate_fit");
    if data.rewards.is_none() {
        return Err(Error::Argument("surrogate fitting needs a reward column".into()));
    }
    let (train, test) = split_rows(data.len(), cfg.surrogate.test_fraction, cfg.surrogate.seed);
    let (xtr, ytr) = gather(data, &train);
    let (xte, yte) = gather(data, &test);
    let fit = log.time("fit", || TreeEnsemble::fit_xy(&xtr, data.dim(), &ytr, &cfg.surrogate.trees))?;
    let report = SurrogateReport {
        n_train: ytr.len(),
        n_test: yte.len(),
        r2_train: r2_score(&fit.model.predict_rows(&xtr)?, &ytr)?,
        r2_test: r2_score(&fit.model.predict_rows(&xte)?, &yte)?,
        final_train_mse: *fit.train_mse.last().expect("base entry"),
    };
    fit.model.save(&out.join(SURROGATE_FILE))?;
    write_json(&out.join("surrogate_fit.json"), &report)?;
    log.finish(&out)?;
    Ok((fit.model, report))
}

/// Predictions for every row, plus R^2 when the data carries rewards.
pub fn surrogate_eval(model: &TreeEnsemble, data: &Dataset) -> Result<(Vec<f64>, Option<f64>)> {
    let pred = model.predict_rows(data.values())?;
    let r2 = match &data.rewards {
        Some(y) => Some(r2_score(&pred, y)?),
        None => None,
    };
    Ok((pred, r2))
}

pub fn hull_eval(cfg: &RunConfig, params: &[f64]) -> Result<ResistanceResult> {
    if params.len() != 6 {
        return Err(Error::Argument(format!("expected 6 hull parameters, got {}", params.len())));
    }
    let p = HullParams::from_slice(params)?;
    hull::evaluate_params(&p, cfg.hull.loa, &cfg.hull.environment, &cfg.hull.quadrature)
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub history: Vec<IterationStats>,
    pub guided: EvalReport,
    pub unguided: EvalReport,
}

/// Pretrain, fine-tune, guided sampling and evaluation in one output
/// directory. Unguided samples of the pretrained model are written to
/// `samples_pretrained.csv` for comparison.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineReport> {
    let out = prepare_output(cfg)?;
    let pre = pretrain(cfg)?;
    let (tuned, history) = finetune(cfg, &pre)?;
    let (designs, rewards) = sample(cfg, &tuned, SAMPLES_FILE)?;
    let guided = evaluate(cfg, &Dataset::new(tuned.dim(), designs, Some(rewards))?)?;
    fs::rename(out.join("stats.json"), out.join("stats_guided.json")).map_err(|e| Error::io(&out, e))?;
    let data = cfg.reward_needs_training().then(|| load_training(cfg)).transpose()?;
    let reward = build_reward(cfg, data.as_ref())?;
    let base = ancestral_sample(&pre, cfg.svdd.n_traj, cfg.svdd.seed)?;
    let base_r = score(&base, pre.dim(), reward.as_ref())?;
    save_samples(&out.join(BASELINE_FILE), pre.dim(), &base, Some(&base_r))?;
    let unguided = evaluate(cfg, &Dataset::new(pre.dim(), base, Some(base_r))?)?;
    fs::rename(out.join("stats.json"), out.join("stats_pretrained.json")).map_err(|e| Error::io(&out, e))?;
    let report = PipelineReport { history, guided, unguided };
    let mut f = fs::File::create(out.join("summary.json")).map_err(|e| Error::io(&out, e))?;
    let summary = serde_json::json!({
        "guided": report.guided.samples,
        "unguided": report.unguided.samples,
        "guided_beyond": report.guided.beyond,
        "unguided_beyond": report.unguided.beyond,
    });
    writeln!(f, "{}", serde_json::to_string_pretty(&summary).expect("json")).map_err(|e| Error::io(&out, e))?;
    Ok(report)
}

impl RunConfig {
    /// Whether building the reward needs the training set.
    pub fn reward_needs_training(&self) -> bool {
        matches!(self.reward, RewardSpec::Hull { scale: None, .. })
    }
}
