//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use rand::Rng;
use rdd::config::RunConfig;
use rdd::data::Dataset;
use rdd::denoiser::{Denoiser, Example, NetConfig};
use rdd::diffusion::{forward_step, posterior_mean_x0, reverse_step, NoiseSchedule, ScheduleKind};
use rdd::finetune::weighted_epoch;
use rdd::hull::{self, Environment, HullParams, Quadrature};
use rdd::metrics;
use rdd::model::DiffusionModel;
use rdd::pipeline::{self, synthetic_dataset};
use rdd::pretrain::{ancestral_sample, train_ddpm, Trainer, TrainConfig};
use rdd::rewards::{synthetic_benchmark_reward, RewardModel, SyntheticReward};
use rdd::rng;
use rdd::svdd::{svdd_generate, SvddConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Report {
    failures: Vec<usize>,
}

impl Report {
    fn run(&mut self, id: usize, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        let t0 = Instant::now();
        let out = f();
        let secs = t0.elapsed();
        let in_time = budget.is_none_or(|b| secs <= b);
        let pass = out.pass && in_time;
        let budget_note = budget.map_or(String::new(), |b| format!(" / {} s", b.as_secs()));
        println!(
            "[{}] {:>2} {name}: {}{} ({:.1} s{budget_note})",
            if pass { "PASS" } else { "FAIL" },
            id,
            out.detail,
            if in_time { "" } else { "; over time budget" },
            secs.as_secs_f64(),
        );
        if !pass {
            self.failures.push(id);
        }
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// One-sided Welch statistic for mean(b) > mean(a).
fn z_greater(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    (mb - ma) / (va / a.len() as f64 + vb / b.len() as f64).sqrt()
}

const Z99: f64 = 2.326;
const Z95: f64 = 1.645;

fn schedule(steps: usize) -> NoiseSchedule {
    NoiseSchedule::new(steps, 1e-4, 0.02, ScheduleKind::Linear).unwrap()
}

fn c1_forward_marginal() -> Outcome {
    let steps = 50;
    let sched = schedule(steps);
    // independent closed form: prod (1 - beta_t), beta linear in t
    let abar: f64 = (0..steps).map(|i| 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / (steps - 1) as f64)).product();
    let x0 = [1.5, -0.7];
    let n = 10_000;
    let mut r = rng::stream(11, &[1]);
    let mut samples = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for _ in 0..n {
        let mut x = x0.to_vec();
        for t in 1..=steps {
            let eps = rng::normal_vec(&mut r, 2);
            x = forward_step(&x, t, &eps, &sched).unwrap();
        }
        samples[0].push(x[0]);
        samples[1].push(x[1]);
    }
    let var = 1.0 - abar;
    let mut worst: f64 = 0.0;
    for (d, s) in samples.iter().enumerate() {
        let (m, v) = mean_var(s);
        let se_mean = (var / n as f64).sqrt();
        let se_var = var * (2.0 / (n as f64 - 1.0)).sqrt();
        worst = worst.max(((m - abar.sqrt() * x0[d]) / se_mean).abs());
        worst = worst.max(((v - var) / se_var).abs());
    }
    check(worst < 3.0, format!("largest deviation {worst:.2} standard errors"))
}

fn c2_gradient() -> Outcome {
    let sched = schedule(20);
    let net = Denoiser::new(2, 20, &NetConfig { hidden: vec![4], embed_dim: 4 }, 5).unwrap();
    let mut r = rng::stream(2, &[]);
    let x0s: Vec<Vec<f64>> = (0..6).map(|_| rng::normal_vec(&mut r, 2)).collect();
    let eps: Vec<Vec<f64>> = (0..6).map(|_| rng::normal_vec(&mut r, 2)).collect();
    let batch: Vec<Example> =
        (0..6).map(|i| Example { x0: &x0s[i], t: 1 + 3 * i, eps: &eps[i] }).collect();
    let w = [1.0, 0.3, 2.0, 0.7, 1.1, 0.9];
    let (_, grad) = net.loss_and_grad(&batch, &sched, &w).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (i, g) in grad.iter().enumerate() {
        let mut p = net.clone();
        p.params_mut()[i] += h;
        let mut m = net.clone();
        m.params_mut()[i] -= h;
        let fd = (p.loss_and_grad(&batch, &sched, &w).unwrap().0 - m.loss_and_grad(&batch, &sched, &w).unwrap().0)
            / (2.0 * h);
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-8));
    }
    check(worst < 1e-4, format!("{} parameters, max relative error {worst:.2e}", net.num_params()))
}

fn mixture_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.schedule.steps = 100;
    cfg.pretrain.epochs = 200;
    cfg
}

fn pretrain_mixture(cfg: &RunConfig) -> (Dataset, DiffusionModel) {
    let data = synthetic_dataset(&cfg.data.synthetic).unwrap();
    let (norm, stats) = data.normalize().unwrap();
    let sched = cfg.schedule.build().unwrap();
    let out = train_ddpm(&norm, &sched, &cfg.net, &cfg.pretrain).unwrap();
    (data, DiffusionModel::new(out.net, sched, stats).unwrap())
}

fn moments(rows: &[f64]) -> ([f64; 2], [[f64; 2]; 2]) {
    let n = (rows.len() / 2) as f64;
    let mut m = [0.0; 2];
    for r in rows.chunks(2) {
        m[0] += r[0] / n;
        m[1] += r[1] / n;
    }
    let mut c = [[0.0; 2]; 2];
    for r in rows.chunks(2) {
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] += (r[i] - m[i]) * (r[j] - m[j]) / (n - 1.0);
            }
        }
    }
    (m, c)
}

fn c3_pretraining(data: &Dataset, model: &DiffusionModel) -> Outcome {
    let x = ancestral_sample(model, 5000, 3).unwrap();
    let (ms, cs) = moments(&x);
    let (md, cd) = moments(data.values());
    let mean_err = (0..2).map(|i| (ms[i] - md[i]).abs()).fold(0.0, f64::max);
    let frob = (0..4).map(|k| (cs[k / 2][k % 2] - cd[k / 2][k % 2]).powi(2)).sum::<f64>().sqrt();
    let left = x.chunks(2).filter(|r| r[0] < 0.0).count() as f64 / 5000.0;
    let pass = mean_err < 0.05 && frob < 0.1 && (0.25..=0.75).contains(&left);
    check(
        pass,
        format!("mean error {mean_err:.4}, covariance Frobenius {frob:.4}, mode shares {left:.3}/{:.3}", 1.0 - left),
    )
}

fn c4_degeneracy(model: &DiffusionModel) -> Outcome {
    let reward = SyntheticReward { target: vec![0.0, 3.0] };
    let cfg = SvddConfig { m: 1, n_traj: 200, seed: 21, ..Default::default() };
    let trajs = svdd_generate(model, &reward, &cfg).unwrap();
    let a = rdd::svdd::designs(&trajs);
    let b = ancestral_sample(model, 200, 21).unwrap();
    let same = a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    check(same, format!("{} trajectories compared bitwise", trajs.len()))
}

fn c5_monotone(model: &DiffusionModel) -> Outcome {
    let reward = SyntheticReward { target: vec![0.0, 3.0] };
    let mut rewards = vec![];
    for m in [1, 3, 5, 10] {
        let cfg = SvddConfig { m, n_traj: 1000, seed: 5, ..Default::default() };
        rewards.push(svdd_generate(model, &reward, &cfg).unwrap().iter().map(|t| t.reward).collect::<Vec<f64>>());
    }
    let means: Vec<f64> = rewards.iter().map(|r| mean_var(r).0).collect();
    let pairs: Vec<f64> = (0..3).map(|i| z_greater(&rewards[i], &rewards[i + 1])).collect();
    let z_10_1 = z_greater(&rewards[0], &rewards[3]);
    let pass = z_10_1 > Z99 && pairs.iter().all(|&z| z > Z95);
    check(
        pass,
        format!(
            "means M=1,3,5,10: {:.3} {:.3} {:.3} {:.3}; z(10>1) {z_10_1:.1}, adjacent z {:.2} {:.2} {:.2}",
            means[0], means[1], means[2], means[3], pairs[0], pairs[1], pairs[2]
        ),
    )
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            r[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, va) = mean_var(&ra);
    let (mb, vb) = mean_var(&rb);
    let cov = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
    cov / (va * vb).sqrt()
}

fn c6_soft_value() -> Outcome {
    let steps = 20;
    let sched = NoiseSchedule::new(steps, 1e-3, 0.2, ScheduleKind::Linear).unwrap();
    let data = synthetic_dataset(&rdd::config::SyntheticConfig {
        rows: 2000,
        modes: vec![vec![-1.0], vec![1.0]],
        std: 0.3,
        seed: 6,
    })
    .unwrap();
    let (norm, stats) = data.normalize().unwrap();
    let net_cfg = NetConfig { hidden: vec![64, 64], embed_dim: 16 };
    let train = TrainConfig { epochs: 150, batch: 64, lr: 2e-3, lr_final: 1e-4, seed: 6 };
    let net = train_ddpm(&norm, &sched, &net_cfg, &train).unwrap().net;
    let model = DiffusionModel::new(net, sched.clone(), stats).unwrap();
    let target = [1.5];
    let alpha = 0.5;
    let r = |x: f64| synthetic_benchmark_reward(&model.stats.denormalize(&[x]), &target).unwrap();
    let mut out = vec![];
    let mut rng_ = rng::stream(66, &[]);
    for t in [5usize, 10, 15] {
        let mut est = vec![];
        let mut mc = vec![];
        for s in 0..50 {
            // state from the forward marginal of a training row
            let x0 = norm.row(s * 37 % norm.len())[0];
            let ab = sched.alpha_bar(t);
            let xt = ab.sqrt() * x0 + (1.0 - ab).sqrt() * rng::normal_vec(&mut rng_, 1)[0];
            let eps = model.net.predict_noise(&[xt], t).unwrap();
            est.push(r(posterior_mean_x0(&[xt], t, &eps, &sched).unwrap()[0]));
            let mut xs = vec![xt; 1000];
            for k in (1..=t).rev() {
                let e = model.net.predict_batch_at(&xs, k).unwrap();
                let z = rng::normal_vec(&mut rng_, xs.len());
                for i in 0..xs.len() {
                    xs[i] = reverse_step(&[xs[i]], k, &[e[i]], &sched, &[z[i]]).unwrap()[0];
                }
            }
            let rs: Vec<f64> = xs.iter().map(|&x| r(x) / alpha).collect();
            let top = rs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = top + (rs.iter().map(|v| (v - top).exp()).sum::<f64>() / rs.len() as f64).ln();
            mc.push(alpha * lse);
        }
        out.push((t, spearman(&est, &mc)));
    }
    let pass = out.iter().all(|(_, rho)| *rho > 0.9);
    let text: Vec<String> = out.iter().map(|(t, rho)| format!("t={t}: {rho:.3}")).collect();
    check(pass, format!("Spearman {}", text.join(", ")))
}

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = ys.iter().sum::<f64>() / n;
    let num: f64 = ys.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - ym)).sum();
    let den: f64 = (0..ys.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    num / den
}

fn c7_finetune(dir: &std::path::Path, cfg: &RunConfig, history: &[f64]) -> Outcome {
    let pre = DiffusionModel::load(&dir.join(pipeline::MODEL_FILE)).unwrap();
    let tuned = DiffusionModel::load(&dir.join(pipeline::FINETUNED_FILE)).unwrap();
    let reward = pipeline::build_reward(cfg, None).unwrap();
    let score = |m: &DiffusionModel| {
        let x = ancestral_sample(m, 1000, 77).unwrap();
        pipeline::score(&x, 2, reward.as_ref()).unwrap()
    };
    let (before, after) = (score(&pre), score(&tuned));
    let z = z_greater(&before, &after);
    let b = slope(history);

    // equal rewards must reduce to the plain epoch
    let data = synthetic_dataset(&cfg.data.synthetic).unwrap().normalize().unwrap().0;
    let sched = pre.schedule.clone();
    let mut t1 = Trainer::new(pre.net.clone(), 1e-3);
    let mut t2 = t1.clone();
    let l1 = weighted_epoch(&mut t1, &data, &vec![-2.5; data.len()], 0.3, &sched, 64, &mut rng::stream(9, &[]), None)
        .unwrap();
    let l2 = t2.epoch(&data, None, &sched, 64, &mut rng::stream(9, &[]), None).unwrap();
    let identical = l1.to_bits() == l2.to_bits()
        && t1.net.params().iter().zip(t2.net.params()).all(|(a, b)| a.to_bits() == b.to_bits());

    check(
        b > 0.0 && z > Z99 && identical,
        format!(
            "history slope {b:.4} over {} iterations; mean reward {:.3} -> {:.3} (z {z:.1}); uniform epoch identical: {identical}",
            history.len(),
            mean_var(&before).0,
            mean_var(&after).0
        ),
    )
}

fn c8_beyond(dir: &std::path::Path, cfg: &RunConfig) -> Outcome {
    let data = synthetic_dataset(&cfg.data.synthetic).unwrap();
    let reward = pipeline::build_reward(cfg, None).unwrap();
    let train_max = data.rows().map(|x| reward.reward(x).unwrap()).fold(f64::NEG_INFINITY, f64::max);
    let frac = |file: &str| {
        let s = rdd::data::load_dataset(&dir.join(file)).unwrap();
        let above = s.rows().filter(|x| reward.reward(x).unwrap() > train_max).count();
        above as f64 / s.len() as f64
    };
    let (guided, unguided) = (frac(pipeline::SAMPLES_FILE), frac(pipeline::BASELINE_FILE));
    check(
        guided > 0.2 && unguided < 0.01,
        format!("above training max {train_max:.3}: guided {:.1}%, unguided {:.1}%", 100.0 * guided, 100.0 * unguided),
    )
}

fn c9_friction() -> Outcome {
    let cases = [(1e6, 0.0046875), (1e8, 0.075 / 36.0), (1e4, 0.01875)];
    let worst = cases.iter().map(|&(re, c)| (hull::friction_coefficient(re).unwrap() - c).abs()).fold(0.0, f64::max);
    check(worst < 1e-9, format!("max abs error {worst:.1e}"))
}

fn c10_michell() -> Outcome {
    let env = Environment::default();
    let quad = Quadrature::default();
    let base = hull::scale_params(&HullParams([0.25, 0.25, 0.12, 0.08, 0.5, 0.75]), 80.0).unwrap();
    let speed = |fr: f64| fr * (env.g * 80.0).sqrt();
    let zero = hull::michell_wave_resistance(&base.with_beam_scaled(0.0), speed(0.3), 0.5, &quad, &env).unwrap();
    let mut scale_err: f64 = 0.0;
    for fr in [0.15, 0.3, 0.45] {
        let r1 = hull::michell_wave_resistance(&base, speed(fr), 0.5, &quad, &env).unwrap();
        let r2 = hull::michell_wave_resistance(&base.with_beam_scaled(1.7), speed(fr), 0.5, &quad, &env).unwrap();
        scale_err = scale_err.max((r2 / r1 / 1.7f64.powi(2) - 1.0).abs());
    }
    let q256 = Quadrature { nlambda: 256, ..quad };
    let mut conv: f64 = 0.0;
    for draft in [0.25, 0.33, 0.5, 0.67] {
        let a = hull::michell_wave_resistance(&base, speed(0.3), draft, &q256, &env).unwrap();
        let b = hull::michell_wave_resistance(&base, speed(0.3), draft, &quad, &env).unwrap();
        conv = conv.max((a - b).abs() / b);
    }
    let agg = |q: &Quadrature| hull::aggregate_total_resistance(&base, &env, q).unwrap().aggregate;
    let agg_conv = (agg(&q256) - agg(&quad)).abs() / agg(&quad);

    let mut r = rng::stream(10, &[]);
    let mut negative = 0;
    let mut evaluated = 0;
    while evaluated < 1000 {
        let p: [f64; 6] = std::array::from_fn(|i| match i {
            0 | 1 => r.random_range(0.0..0.5),
            2 | 3 | 5 => r.random_range(0.01..1.0),
            _ => r.random_range(0.0..1.0),
        });
        let p = HullParams(p);
        if !p.is_feasible() {
            continue;
        }
        let res = hull::evaluate_params(&p, 80.0, &env, &quad).unwrap();
        negative += res.cells.iter().filter(|c| !(c.r_w >= 0.0 && c.r_f >= 0.0)).count();
        evaluated += 1;
    }
    check(
        zero == 0.0 && scale_err < 5e-3 && conv < 1e-3 && agg_conv < 1e-3 && negative == 0,
        format!(
            "zero-beam R_w {zero}; beam^2 error {scale_err:.1e}; 256->512 change {conv:.1e} (Fr 0.3), {agg_conv:.1e} (aggregate); {negative} negative cells in {evaluated} hulls"
        ),
    )
}

fn c11_surrogate() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { output: dir.path().to_path_buf(), ..RunConfig::default() };
    let data = pipeline::hull_dataset(5000, 11, &cfg.hull).unwrap();
    let (model, report) = pipeline::surrogate_fit(&cfg, &data).unwrap();
    // retrace the boosting curve through the public model
    let (train, _) = pipeline::split_rows(data.len(), cfg.surrogate.test_fraction, cfg.surrogate.seed);
    let y = data.rewards.as_ref().unwrap();
    let mut pred = vec![model.base_prediction; train.len()];
    let mut mse = vec![];
    for tree in &model.trees {
        for (k, &i) in train.iter().enumerate() {
            pred[k] += model.shrinkage * tree.predict(data.row(i));
        }
        mse.push(train.iter().enumerate().map(|(k, &i)| (pred[k] - y[i]).powi(2)).sum::<f64>() / train.len() as f64);
    }
    let monotone = mse.windows(2).all(|w| w[1] <= w[0]);
    check(
        report.r2_test > 0.9 && monotone,
        format!("held-out R^2 {:.4} (train {:.4}); boosting MSE monotone: {monotone}", report.r2_test, report.r2_train),
    )
}

fn c12_metrics() -> Outcome {
    let mut r = rng::stream(12, &[]);
    let mut box_ok = true;
    for _ in 0..1000 {
        let n = r.random_range(1..60);
        let v: Vec<f64> = (0..n).map(|_| (r.random_range(-50..50) as f64) / 4.0).collect();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            s[lo] + (h - lo as f64) * (s[hi] - s[lo])
        };
        let b = metrics::boxplot_stats(&v).unwrap();
        let (q1, q3) = (q(0.25), q(0.75));
        let iqr = q3 - q1;
        let (lf, uf) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let lw = s.iter().copied().find(|&x| x >= lf).unwrap();
        let uw = s.iter().rev().copied().find(|&x| x <= uf).unwrap();
        let mut outl: Vec<f64> = v.iter().copied().filter(|&x| x < lf || x > uf).collect();
        let mut got = b.outliers.clone();
        outl.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        box_ok &= b.median == q(0.5)
            && b.q1 == q1
            && b.q3 == q3
            && b.lower_whisker == lw
            && b.upper_whisker == uw
            && got == outl;
    }
    let mut worst_mass: f64 = 0.0;
    for k in 0..20 {
        let v: Vec<f64> = (0..200).map(|_| r.random_range(-3.0..3.0) * (1.0 + k as f64 / 5.0)).collect();
        let bw = metrics::silverman_bandwidth(&v).unwrap();
        let grid = metrics::kde_grid(&v, bw, 6.0, 4001).unwrap();
        let d = metrics::kde(&v, bw, &grid).unwrap();
        worst_mass = worst_mass.max((metrics::trapezoid(&grid, &d) - 1.0).abs());
    }
    let mut beyond_ok = true;
    for _ in 0..200 {
        let train: Vec<f64> = (0..50).map(|_| r.random_range(-2.0..2.0)).collect();
        let samples: Vec<f64> = (0..80).map(|_| r.random_range(-1.0..3.0)).collect();
        let mut max = f64::NEG_INFINITY;
        for &x in &train {
            if x > max {
                max = x;
            }
        }
        let mut above = 0usize;
        for &x in &samples {
            if x > max {
                above += 1;
            }
        }
        let b = metrics::beyond_distribution(&samples, &train).unwrap();
        beyond_ok &= b.fraction_above_max == above as f64 / samples.len() as f64;
    }
    check(
        box_ok && worst_mass < 1e-3 && beyond_ok,
        format!("boxplot oracle agrees: {box_ok}; max |KDE mass - 1| {worst_mass:.1e}; beyond scan agrees: {beyond_ok}"),
    )
}

fn c13_reproducible() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.pretrain.epochs = 10;
    cfg.data.synthetic.rows = 1000;
    cfg.finetune.iterations = 5;
    cfg.finetune.samples = 128;
    cfg.svdd.n_traj = 200;
    let run = |threads: usize, name: &str| {
        let mut c = cfg.clone();
        c.output = root.path().join(name);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| pipeline::run_pipeline(&c)).unwrap();
        std::fs::read(c.output.join(pipeline::SAMPLES_FILE)).unwrap()
    };
    let a = run(1, "one");
    let b = run(4, "four");
    let c = run(4, "again");
    check(a == b && b == c, format!("samples CSV ({} bytes) identical across 1/4/4 threads: {}", a.len(), a == b && b == c))
}

fn main() {
    let mut report = Report { failures: vec![] };
    let secs = Duration::from_secs;
    report.run(1, "forward-marginal equivalence", Some(secs(10)), c1_forward_marginal);
    report.run(2, "gradient exactness", Some(secs(5)), c2_gradient);

    let cfg3 = mixture_config();
    let t0 = Instant::now();
    let (data, model) = pretrain_mixture(&cfg3);
    let train_time = t0.elapsed();
    report.run(3, "pretraining fidelity", Some(secs(300).saturating_sub(train_time)), || {
        let mut o = c3_pretraining(&data, &model);
        o.detail = format!("{}; training {:.0} s", o.detail, train_time.as_secs_f64());
        o
    });
    let model = &model;
    report.run(4, "SVDD M=1 degeneracy", None, || c4_degeneracy(model));
    report.run(5, "guidance monotonicity", Some(secs(600)), || c5_monotone(model));
    report.run(6, "soft-value approximation", Some(secs(300)), c6_soft_value);

    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig { output: dir.path().to_path_buf(), ..RunConfig::default() };
    let mut history = vec![];
    report.run(8, "beyond-distribution generation", Some(secs(900)), || {
        let rep = pipeline::run_pipeline(&cfg).unwrap();
        history = rep.history.iter().map(|h| h.mean_reward).collect();
        c8_beyond(dir.path(), &cfg)
    });
    report.run(7, "fine-tuning improvement", None, || c7_finetune(dir.path(), &cfg, &history));

    report.run(9, "friction line", None, c9_friction);
    report.run(10, "Michell integral", Some(secs(120)), c10_michell);
    report.run(11, "surrogate quality", Some(secs(120)), c11_surrogate);
    report.run(12, "metrics", None, c12_metrics);
    report.run(13, "reproducibility", None, c13_reproducible);

    if !report.failures.is_empty() {
        eprintln!("failed criteria: {:?}", report.failures);
        std::process::exit(1);
    }
    println!("all criteria passed");
}
