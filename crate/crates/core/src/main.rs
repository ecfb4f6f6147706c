use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rdd::config::{parse_config, RunConfig};
use rdd::data::{load_dataset, save_samples};
use rdd::model::DiffusionModel;
use rdd::pipeline::{self, write_json};
use rdd::surrogate::TreeEnsemble;
use rdd::{Error, Result};

#[derive(Parser)]
#[command(name = "rdd", version, about = "Reward-directed diffusion for tabular design data")]
struct Cli {
    /// JSON run config; every omitted field takes its default.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config).
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, env = "RDD_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the denoiser on the training set.
    Pretrain,
    /// Reward-weighted fine-tuning of a pretrained model.
    Finetune {
        /// Pretrained model (default: <out>/model.bin).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Guided sampling with soft-value importance sampling.
    Sample(SampleArgs),
    /// Reward statistics of a samples CSV against the training set.
    Eval {
        #[arg(long)]
        samples: PathBuf,
    },
    /// Tree-ensemble surrogate.
    #[command(subcommand)]
    Surrogate(SurrogateCommand),
    /// Analytic hull resistance.
    #[command(subcommand)]
    Hull(HullCommand),
    /// Pretrain, fine-tune, sample and evaluate in one go.
    Pipeline,
}

#[derive(Args)]
struct SampleArgs {
    /// Model to sample from (default: <out>/model_ft.bin, else <out>/model.bin).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_traj: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum SurrogateCommand {
    /// Fit on a labeled CSV; reports held-out R^2.
    Fit {
        #[arg(long)]
        data: PathBuf,
    },
    /// Predict every row of a CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Subcommand)]
enum HullCommand {
    /// Resistance of one hull, as JSON on stdout.
    Eval {
        /// Six comma-separated shape parameters.
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        params: Vec<f64>,
    },
    /// Random hulls labeled with aggregate resistance, as a CSV.
    Dataset {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    Ok(cfg)
}

fn model_or_default(explicit: &Option<PathBuf>, candidates: &[PathBuf]) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        candidates.iter().find(|p| p.exists()).unwrap_or(&candidates[candidates.len() - 1]).clone()
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let out = cfg.output.clone();
    match cli.command {
        Command::Pretrain => {
            pipeline::pretrain(&cfg)?;
        }
        Command::Finetune { model } => {
            let path = model.unwrap_or_else(|| out.join(pipeline::MODEL_FILE));
            let pre = DiffusionModel::load(&path)?;
            pipeline::finetune(&cfg, &pre)?;
        }
        Command::Sample(a) => {
            if let Some(m) = a.m {
                cfg.svdd.m = m;
            }
            if let Some(v) = a.alpha {
                cfg.svdd.alpha = v;
            }
            if let Some(n) = a.n_traj {
                cfg.svdd.n_traj = n;
            }
            if let Some(s) = a.seed {
                cfg.svdd.seed = s;
            }
            cfg.svdd.validate()?;
            let path = model_or_default(&a.model, &[out.join(pipeline::FINETUNED_FILE), out.join(pipeline::MODEL_FILE)]);
            let model = DiffusionModel::load(&path)?;
            pipeline::sample(&cfg, &model, pipeline::SAMPLES_FILE)?;
        }
        Command::Eval { samples } => {
            let data = load_dataset(&samples)?;
            let report = pipeline::evaluate(&cfg, &data)?;
            println!("{}", serde_json::to_string_pretty(&report.beyond).expect("json"));
        }
        Command::Surrogate(SurrogateCommand::Fit { data }) => {
            let data = load_dataset(&data)?;
            let (_, report) = pipeline::surrogate_fit(&cfg, &data)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
        }
        Command::Surrogate(SurrogateCommand::Eval { model, data }) => {
            let model = TreeEnsemble::load(&model)?;
            let data = load_dataset(&data)?;
            let (pred, r2) = pipeline::surrogate_eval(&model, &data)?;
            pipeline::prepare_output(&cfg)?;
            save_samples(&out.join("surrogate_predictions.csv"), data.dim(), data.values(), Some(&pred))?;
            let summary = serde_json::json!({ "n": pred.len(), "r2": r2 });
            write_json(&out.join("surrogate_eval.json"), &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
        }
        Command::Hull(HullCommand::Eval { params }) => {
            let result = pipeline::hull_eval(&cfg, &params)?;
            let unconverged = result.cells.iter().filter(|c| c.warning.is_some()).count();
            if unconverged > 0 {
                log::warn!("{unconverged} of {} cells did not converge to 1%", result.cells.len());
            }
            println!("{}", serde_json::to_string_pretty(&result).expect("json"));
        }
        Command::Hull(HullCommand::Dataset { n, seed }) => {
            pipeline::prepare_output(&cfg)?;
            let data = pipeline::hull_dataset(n, seed, &cfg.hull)?;
            let path: &Path = &out.join("hull_dataset.csv");
            save_samples(path, 6, data.values(), data.rewards.as_deref())?;
        }
        Command::Pipeline => {
            let report = pipeline::run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report.guided.beyond).expect("json"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build();
    let result = match pool {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(Error::Argument(format!("thread pool: {e}"))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
