//! Summaries of reward populations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: Vec<f64>,
}

/// Quantile of ascending `sorted` by linear interpolation between closest ranks.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_finite(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Argument("empty value list".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Argument("value list contains NaN".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Quartiles, 1.5 IQR whiskers clamped to the most extreme inside points,
/// and the points beyond them (in ascending order).
pub fn boxplot_stats(values: &[f64]) -> Result<BoxplotStats> {
    let v = sorted_finite(values)?;
    let q1 = quantile_sorted(&v, 0.25);
    let median = quantile_sorted(&v, 0.5);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |x: &&f64| **x >= lo_fence && **x <= hi_fence;
    let lower_whisker = *v.iter().find(inside).expect("quartiles lie inside the fences");
    let upper_whisker = *v.iter().rev().find(inside).expect("quartiles lie inside the fences");
    let outliers = v.iter().copied().filter(|x| *x < lo_fence || *x > hi_fence).collect();
    Ok(BoxplotStats { median, q1, q3, iqr, lower_whisker, upper_whisker, outliers })
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) n^(-1/5)`, falling back to the
/// non-zero spread measure (or 1) for degenerate data.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let v = sorted_finite(values)?;
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let iqr = (quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => 1.0,
    };
    Ok(0.9 * spread * n.powf(-0.2))
}

/// Evenly spaced grid over the data range padded by `pad` bandwidths.
pub fn kde_grid(values: &[f64], bandwidth: f64, pad: f64, points: usize) -> Result<Vec<f64>> {
    let v = sorted_finite(values)?;
    if points < 2 {
        return Err(Error::Argument("grid needs at least 2 points".into()));
    }
    let lo = v[0] - pad * bandwidth;
    let hi = v[v.len() - 1] + pad * bandwidth;
    Ok((0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect())
}

/// Gaussian kernel density of `values` evaluated at `grid`.
pub fn kde(values: &[f64], bandwidth: f64, grid: &[f64]) -> Result<Vec<f64>> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::Argument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if values.is_empty() {
        return Err(Error::Argument("empty value list".into()));
    }
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| values.iter().map(|&x| (-0.5 * ((g - x) / bandwidth).powi(2)).exp()).sum::<f64>() * norm)
        .collect())
}

pub fn trapezoid(grid: &[f64], ys: &[f64]) -> f64 {
    grid.windows(2).zip(ys.windows(2)).map(|(g, y)| 0.5 * (g[1] - g[0]) * (y[0] + y[1])).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeyondDistribution {
    /// Share of samples strictly above the best training reward.
    pub fraction_above_max: f64,
    pub mean_shift: f64,
    /// `mean_shift / |mean_train|`; infinite when the training mean is 0.
    pub relative_improvement: f64,
}

pub fn beyond_distribution(samples: &[f64], training: &[f64]) -> Result<BeyondDistribution> {
    if samples.is_empty() || training.is_empty() {
        return Err(Error::Argument("beyond_distribution needs non-empty inputs".into()));
    }
    let best = training.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let above = samples.iter().filter(|&&s| s > best).count();
    let ms = samples.iter().sum::<f64>() / samples.len() as f64;
    let mt = training.iter().sum::<f64>() / training.len() as f64;
    let shift = ms - mt;
    Ok(BeyondDistribution {
        fraction_above_max: above as f64 / samples.len() as f64,
        mean_shift: shift,
        relative_improvement: shift / mt.abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    let v = sorted_finite(values)?;
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let std = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    Ok(Summary { n, mean, std, min: v[0], median: quantile_sorted(&v, 0.5), max: v[n - 1] })
}

/// One-sided Welch statistic for `mean(b) > mean(a)`.
pub fn welch_z(a: &[f64], b: &[f64]) -> Result<f64> {
    let (sa, sb) = (summarize(a)?, summarize(b)?);
    let se = (sa.std.powi(2) / sa.n as f64 + sb.std.powi(2) / sb.n as f64).sqrt();
    if se == 0.0 {
        return Ok(if sb.mean > sa.mean { f64::INFINITY } else if sb.mean < sa.mean { f64::NEG_INFINITY } else { 0.0 });
    }
    Ok((sb.mean - sa.mean) / se)
}
