//! Black-box rewards `r(x0) = r_hat(x0) - g_hat(x0)`.
//!
//! Rewards are evaluated, never differentiated: the only thing samplers and
//! fine-tuners can do with a [`RewardModel`] is call [`RewardModel::reward`].

use robust::{orient2d, Coord};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hull::{self, Environment, HullParams};
use crate::surrogate::TreeEnsemble;

/// Bound on `|r / alpha|` before exponentiation.
pub const WEIGHT_EXPONENT_CLAMP: f64 = 20.0;

/// Number of (x, y) points in an airfoil design row.
pub const AIRFOIL_POINTS: usize = 192;

pub trait RewardModel: Send + Sync {
    /// Reward of one design in physical coordinates.
    fn reward(&self, design: &[f64]) -> Result<f64>;
}

impl<R: RewardModel + ?Sized> RewardModel for &R {
    fn reward(&self, design: &[f64]) -> Result<f64> {
        (**self).reward(design)
    }
}

impl<R: RewardModel + ?Sized> RewardModel for Box<R> {
    fn reward(&self, design: &[f64]) -> Result<f64> {
        (**self).reward(design)
    }
}

pub fn composite_reward(r_hat: f64, g_hat: f64) -> f64 {
    r_hat - g_hat
}

/// `exp(clamp(r / alpha, -20, 20))`.
pub fn soft_weight(r: f64, alpha: f64) -> f64 {
    (r / alpha).clamp(-WEIGHT_EXPONENT_CLAMP, WEIGHT_EXPONENT_CLAMP).exp()
}

/// Negative squared distance to `target`; maximal (0) at the target.
pub fn synthetic_benchmark_reward(x: &[f64], target: &[f64]) -> Result<f64> {
    if x.len() != target.len() {
        return Err(Error::Argument(format!("design width {} vs target width {}", x.len(), target.len())));
    }
    Ok(-x.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
}

/// Linear reward decreasing in total resistance.
pub fn ship_reward(total_resistance: f64, scale: f64, offset: f64) -> f64 {
    offset - scale * total_resistance
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    orient2d(Coord { x: a.0, y: a.1 }, Coord { x: b.0, y: b.1 }, Coord { x: c.0, y: c.1 })
}

fn properly_cross(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Number of properly crossing, non-adjacent segment pairs of the closed
/// polyline through `points`. Touching and collinear overlaps are not counted.
///
/// Segments are swept in order of their left x-extent so that only pairs with
/// overlapping x-ranges reach the exact orientation predicates.
pub fn check_self_intersection(points: &[(f64, f64)]) -> usize {
    let n = points.len();
    if n < 4 {
        return 0;
    }
    let seg = |i: usize| (points[i], points[(i + 1) % n]);
    let mut order: Vec<usize> = (0..n).collect();
    let xmin = |i: usize| seg(i).0 .0.min(seg(i).1 .0);
    let xmax = |i: usize| seg(i).0 .0.max(seg(i).1 .0);
    order.sort_by(|&a, &b| xmin(a).total_cmp(&xmin(b)).then(a.cmp(&b)));
    let mut count = 0;
    for (k, &i) in order.iter().enumerate() {
        let (a, b) = seg(i);
        let right = xmax(i);
        let (ylo, yhi) = (a.1.min(b.1), a.1.max(b.1));
        for &j in &order[k + 1..] {
            if xmin(j) > right {
                break;
            }
            let adjacent = (i + 1) % n == j || (j + 1) % n == i;
            if adjacent {
                continue;
            }
            let (c, d) = seg(j);
            if c.1.max(d.1) < ylo || c.1.min(d.1) > yhi {
                continue;
            }
            if properly_cross(a, b, c, d) {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyWeights {
    pub range: f64,
    pub intersect: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self { range: 10.0, intersect: 1.0 }
    }
}

/// Interleaved `(x0, y0, x1, y1, ...)` row as points.
pub fn airfoil_points(design: &[f64]) -> Result<Vec<(f64, f64)>> {
    if design.len() != 2 * AIRFOIL_POINTS {
        return Err(Error::Argument(format!(
            "airfoil designs have {} values ({} points), got {}",
            2 * AIRFOIL_POINTS,
            AIRFOIL_POINTS,
            design.len()
        )));
    }
    Ok(design.chunks_exact(2).map(|p| (p[0], p[1])).collect())
}

/// Sum of per-coordinate distances outside `[0, 1]`.
pub fn range_overshoot(values: &[f64]) -> f64 {
    values.iter().map(|&v| (v - 1.0).max(0.0) + (-v).max(0.0)).sum()
}

/// `lambda_range * overshoot + lambda_intersect * crossings`; zero iff feasible.
pub fn airfoil_feasibility_penalty(design: &[f64], w: &PenaltyWeights) -> Result<f64> {
    let pts = airfoil_points(design)?;
    Ok(w.range * range_overshoot(design) + w.intersect * check_self_intersection(&pts) as f64)
}

/// Which reward back-end a run uses, with its constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RewardSpec {
    /// `-||x - target||^2`.
    Synthetic { target: Vec<f64> },
    /// Surrogate prediction of the normalized lift-to-drag ratio minus the
    /// airfoil feasibility penalty.
    Airfoil {
        surrogate: String,
        #[serde(default)]
        penalty: PenaltyWeights,
    },
    /// Scaled negative aggregate resistance of the 6-parameter hull minus the
    /// hull feasibility penalty. `scale`/`offset` default to a fit of the
    /// training set onto roughly `[-1, 1]`. With `surrogate` set, resistance
    /// comes from a fitted tree ensemble instead of the analytic model.
    Hull {
        #[serde(default = "default_loa")]
        loa: f64,
        #[serde(default)]
        scale: Option<f64>,
        #[serde(default)]
        offset: Option<f64>,
        #[serde(default)]
        surrogate: Option<String>,
        #[serde(default)]
        penalty: PenaltyWeights,
    },
    /// `offset + scale * prediction` of a fitted tree ensemble.
    Surrogate {
        path: String,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn default_loa() -> f64 {
    hull::DEFAULT_LOA
}

fn one() -> f64 {
    1.0
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec::Synthetic { target: vec![0.0, 3.0] }
    }
}

pub struct SyntheticReward {
    pub target: Vec<f64>,
}

impl RewardModel for SyntheticReward {
    fn reward(&self, design: &[f64]) -> Result<f64> {
        synthetic_benchmark_reward(design, &self.target)
    }
}

pub struct AirfoilReward {
    pub surrogate: TreeEnsemble,
    pub penalty: PenaltyWeights,
}

impl RewardModel for AirfoilReward {
    fn reward(&self, design: &[f64]) -> Result<f64> {
        let g = airfoil_feasibility_penalty(design, &self.penalty)?;
        Ok(composite_reward(self.surrogate.predict(design)?, g))
    }
}

/// Source of the aggregate resistance for [`HullReward`].
pub enum ResistanceSource {
    Analytic(Environment),
    Surrogate(TreeEnsemble),
}

pub struct HullReward {
    pub loa: f64,
    pub scale: f64,
    pub offset: f64,
    pub source: ResistanceSource,
    pub penalty: PenaltyWeights,
}

impl HullReward {
    /// Aggregate resistance of the projected (feasible) hull.
    pub fn resistance(&self, design: &[f64]) -> Result<f64> {
        let p = HullParams::from_slice(design)?.project();
        match &self.source {
            ResistanceSource::Analytic(env) => {
                let dims = hull::scale_params(&p, self.loa)?;
                Ok(hull::aggregate_total_resistance(&dims, env, &hull::Quadrature::default())?.aggregate)
            }
            ResistanceSource::Surrogate(model) => model.predict(&p.0),
        }
    }
}

impl RewardModel for HullReward {
    fn reward(&self, design: &[f64]) -> Result<f64> {
        let g = self.penalty.range * hull::feasibility_overshoot(&HullParams::from_slice(design)?);
        Ok(composite_reward(ship_reward(self.resistance(design)?, self.scale, self.offset), g))
    }
}

pub struct SurrogateReward {
    pub model: TreeEnsemble,
    pub scale: f64,
    pub offset: f64,
}

impl RewardModel for SurrogateReward {
    fn reward(&self, design: &[f64]) -> Result<f64> {
        Ok(self.offset + self.scale * self.model.predict(design)?)
    }
}

/// `scale`/`offset` mapping `[min, max]` of `resistances` onto `[1, -1]`.
pub fn fit_ship_scale(resistances: &[f64]) -> Result<(f64, f64)> {
    let lo = resistances.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = resistances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::Argument("resistance spread is zero; cannot fit reward scale".into()));
    }
    let scale = 2.0 / (hi - lo);
    Ok((scale, 1.0 + scale * lo))
}
