//! Six-parameter hull family and calm-water resistance.
//!
//! The half-breadth is separable, `eta(x, z) = f(x) * h(z)`, with `x` from
//! the bow (0) to the stern (LOA) and `z <= 0` below the waterplane. `f` rises
//! quadratically over the bow taper, holds `B_d / 2` over the midbody and
//! falls quadratically to `B_s / 2` over the stern taper. `h = 1 - (z/D_d)^2`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LOA: f64 = 80.0;
pub const FROUDE_NUMBERS: [f64; 8] = [0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45];
pub const DRAFT_FRACTIONS: [f64; 4] = [0.25, 0.33, 0.5, 0.67];

/// Lower bounds of the six parameters; all upper bounds are 1.
pub const PARAM_LOWER: [f64; 6] = [0.0, 0.0, 0.01, 0.01, 0.0, 0.01];

/// Relative change between the `N/2` and `N` lambda rules above which a
/// warning is attached to a cell.
const CONVERGENCE_WARN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Environment {
    pub rho: f64,
    pub g: f64,
    pub nu: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self { rho: 1000.0, g: 9.81, nu: 1.19e-6 }
    }
}

/// Node counts. `nx` and `nz` are intervals per hull segment and over depth,
/// `nlambda` intervals of the `u` grid with `lambda = cosh(u)`, `u <= u_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Quadrature {
    pub nx: usize,
    pub nz: usize,
    pub nlambda: usize,
    pub u_max: f64,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { nx: 128, nz: 32, nlambda: 512, u_max: 5.0 }
    }
}

impl Quadrature {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("nx", self.nx), ("nz", self.nz), ("nlambda", self.nlambda)] {
            if n < 2 || n % 2 != 0 {
                return Err(Error::Config(format!("quadrature {name} must be even and at least 2, got {n}")));
            }
        }
        if !(self.u_max > 0.0 && self.u_max.is_finite()) {
            return Err(Error::Config(format!("quadrature u_max must be positive, got {}", self.u_max)));
        }
        Ok(())
    }

    /// Same rule with every node count doubled.
    pub fn refined(&self) -> Self {
        Self { nx: 2 * self.nx, nz: 2 * self.nz, nlambda: 2 * self.nlambda, u_max: self.u_max }
    }
}

/// Non-dimensional hull parameters `p1..p6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullParams(pub [f64; 6]);

impl HullParams {
    /// First six values of `values`; trailing padding is ignored.
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        if values.len() < 6 {
            return Err(Error::Argument(format!("hull designs need 6 parameters, got {}", values.len())));
        }
        let mut p = [0.0; 6];
        p.copy_from_slice(&values[..6]);
        Ok(Self(p))
    }

    pub fn is_feasible(&self) -> bool {
        feasibility_overshoot(self) == 0.0
    }

    /// Nearest feasible point: clamp to bounds, then shrink the tapers so
    /// that `p1 + p2 <= 1`.
    pub fn project(&self) -> Self {
        let mut p = self.0;
        for (v, lo) in p.iter_mut().zip(PARAM_LOWER) {
            *v = if v.is_nan() { lo } else { v.clamp(lo, 1.0) };
        }
        let taper = p[0] + p[1];
        if taper > 1.0 {
            p[0] /= taper;
            p[1] /= taper;
        }
        Self(p)
    }
}

/// Total distance outside the bounds plus the excess of `p1 + p2` over 1.
/// Zero exactly for feasible parameters.
pub fn feasibility_overshoot(p: &HullParams) -> f64 {
    let bounds: f64 = p.0.iter().zip(PARAM_LOWER).map(|(&v, lo)| (lo - v).max(0.0) + (v - 1.0).max(0.0)).sum();
    if bounds.is_nan() {
        return f64::INFINITY;
    }
    bounds + (p.0[0] + p.0[1] - 1.0).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullDims {
    pub loa: f64,
    pub l_b: f64,
    pub l_s: f64,
    pub b_d: f64,
    pub d_d: f64,
    pub b_s: f64,
    pub wl: f64,
}

pub fn scale_params(p: &HullParams, loa: f64) -> Result<HullDims> {
    if !(loa > 0.0 && loa.is_finite()) {
        return Err(Error::InfeasibleHull(format!("LOA must be positive, got {loa}")));
    }
    let over = feasibility_overshoot(p);
    if over > 0.0 {
        return Err(Error::InfeasibleHull(format!("parameters {:?} violate bounds by {over}", p.0)));
    }
    let [p1, p2, p3, p4, p5, p6] = p.0;
    let b_d = p3 * loa;
    let d_d = p4 * loa;
    Ok(HullDims { loa, l_b: p1 * loa, l_s: p2 * loa, b_d, d_d, b_s: p5 * b_d / 2.0, wl: p6 * d_d })
}

impl HullDims {
    /// Same hull with every half-breadth multiplied by `c`.
    pub fn with_beam_scaled(&self, c: f64) -> Self {
        Self { b_d: self.b_d * c, b_s: self.b_s * c, ..*self }
    }

    fn stern_start(&self) -> f64 {
        self.loa - self.l_s
    }

    /// Waterline half-breadth `f(x)`.
    pub fn waterline(&self, x: f64) -> f64 {
        let half = self.b_d / 2.0;
        if x < self.l_b {
            let s = (self.l_b - x) / self.l_b;
            half * (1.0 - s * s)
        } else if x <= self.stern_start() || self.l_s == 0.0 {
            half
        } else {
            let s = (x - self.stern_start()) / self.l_s;
            half - (half - self.b_s / 2.0) * s * s
        }
    }

    /// `f'(x)`, one-sided at the segment breaks.
    pub fn waterline_slope(&self, x: f64) -> f64 {
        let half = self.b_d / 2.0;
        if x < self.l_b {
            2.0 * half * (self.l_b - x) / (self.l_b * self.l_b)
        } else if x <= self.stern_start() || self.l_s == 0.0 {
            0.0
        } else {
            let s = (x - self.stern_start()) / self.l_s;
            -2.0 * (half - self.b_s / 2.0) * s / self.l_s
        }
    }

    pub fn depth_factor(&self, z: f64) -> f64 {
        1.0 - (z / self.d_d).powi(2)
    }

    fn depth_factor_slope(&self, z: f64) -> f64 {
        -2.0 * z / (self.d_d * self.d_d)
    }

    /// Non-empty `[start, end)` segments: bow taper, midbody, stern taper.
    fn segments(&self) -> Vec<(f64, f64)> {
        [(0.0, self.l_b), (self.l_b, self.stern_start()), (self.stern_start(), self.loa)]
            .into_iter()
            .filter(|(a, b)| b > a)
            .collect()
    }
}

pub fn half_breadth(x: f64, z: f64, dims: &HullDims) -> Result<f64> {
    if !(0.0..=dims.loa).contains(&x) || !(-dims.wl..=0.0).contains(&z) {
        return Err(Error::Domain(format!("point ({x}, {z}) outside 0 <= x <= {}, -{} <= z <= 0", dims.loa, dims.wl)));
    }
    Ok(dims.waterline(x) * dims.depth_factor(z))
}

fn check_draft(draft: f64) -> Result<()> {
    if draft > 0.0 && draft <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("draft fraction must be in (0, 1], got {draft}")))
    }
}

fn simpson_weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n {
        1.0
    } else if i % 2 == 1 {
        4.0
    } else {
        2.0
    }
}

/// Wetted area of both hull sides up to depth `draft * WL`, over `LOA^2`.
pub fn wetted_surface_area(dims: &HullDims, draft: f64, quad: &Quadrature) -> Result<f64> {
    check_draft(draft)?;
    quad.validate()?;
    let depth = draft * dims.wl;
    let hz = depth / quad.nz as f64;
    let zs: Vec<(f64, f64, f64)> = (0..=quad.nz)
        .map(|j| {
            let z = -depth + j as f64 * hz;
            (simpson_weight(j, quad.nz) * hz / 3.0, dims.depth_factor(z), dims.depth_factor_slope(z))
        })
        .collect();
    let mut total = 0.0;
    for (a, b) in dims.segments() {
        let hx = (b - a) / quad.nx as f64;
        for i in 0..=quad.nx {
            // evaluate at the interior side of each break
            let x = if i == quad.nx { b - 1e-12 * (b - a) } else { a + i as f64 * hx };
            let (f, fp) = (dims.waterline(x), dims.waterline_slope(x));
            let wx = simpson_weight(i, quad.nx) * hx / 3.0;
            let col: f64 = zs.iter().map(|&(wz, h, hp)| wz * (1.0 + (fp * h).powi(2) + (f * hp).powi(2)).sqrt()).sum();
            total += wx * col;
        }
    }
    let area = 2.0 * total / (dims.loa * dims.loa);
    if !area.is_finite() {
        return Err(Error::Numerical(format!("wetted area quadrature produced {area}")));
    }
    Ok(area)
}

/// `(int_0^1 e^{-w s} ds, int_0^1 s e^{-w s} ds)`.
fn hat_moments(w: Complex64) -> (Complex64, Complex64) {
    if w.norm() < 0.1 {
        // series: sum (-w)^k / (k! (k+1)), sum (-w)^k / (k! (k+2))
        let mut p = Complex64::new(0.0, 0.0);
        let mut q = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 0..10 {
            p += term / (k as f64 + 1.0);
            q += term / (k as f64 + 2.0);
            term *= -w / (k as f64 + 1.0);
        }
        (p, q)
    } else {
        let e = (-w).exp();
        ((1.0 - e) / w, (1.0 - e * (1.0 + w)) / (w * w))
    }
}

/// `int f'(x) e^{i kappa x} dx`. `f'` is linear on each segment, so the
/// piecewise-linear Filon rule on the segment ends is exact.
fn longitudinal_transform(dims: &HullDims, kappa: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, b) in dims.segments() {
        let ga = dims.waterline_slope(a);
        let gb = dims.waterline_slope(b - 1e-12 * (b - a));
        if ga == 0.0 && gb == 0.0 {
            continue;
        }
        let len = b - a;
        let (p, q) = hat_moments(Complex64::new(0.0, -kappa * len));
        let phase = Complex64::from_polar(1.0, kappa * a);
        acc += phase * len * (ga * (p - q) + gb * q);
    }
    acc
}

/// `int_{-depth}^0 h(z) e^{c z} dz` with `h` linearly interpolated on `n`
/// intervals and exact exponential weights.
fn vertical_transform(dims: &HullDims, depth: f64, c: f64, n: usize) -> f64 {
    let dz = depth / n as f64;
    let (p, q) = hat_moments(Complex64::new(c * dz, 0.0));
    let (p, q) = (p.re, q.re);
    let mut acc = 0.0;
    for j in 0..n {
        let lo = -depth + j as f64 * dz;
        let hi = lo + dz;
        acc += dz * (c * hi).exp() * (dims.depth_factor(hi) * (p - q) + dims.depth_factor(lo) * q);
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveResistance {
    pub value: f64,
    /// Same integral with half the lambda nodes.
    pub coarse: f64,
}

impl WaveResistance {
    pub fn relative_change(&self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            (self.value - self.coarse).abs() / self.value.abs()
        }
    }
}

fn michell(dims: &HullDims, speed: f64, draft: f64, quad: &Quadrature, env: &Environment) -> Result<WaveResistance> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::Domain(format!("speed must be positive, got {speed}")));
    }
    check_draft(draft)?;
    quad.validate()?;
    let depth = draft * dims.wl;
    let k0 = env.g / (speed * speed);
    let n = quad.nlambda;
    let du = quad.u_max / n as f64;
    let mut fine = 0.0;
    let mut coarse = 0.0;
    for i in 0..=n {
        let lambda = (i as f64 * du).cosh();
        let fx = longitudinal_transform(dims, lambda * k0);
        let hz = vertical_transform(dims, depth, lambda * lambda * k0, quad.nz);
        // dlambda / sqrt(lambda^2 - 1) = du
        let g = fx.norm_sqr() * hz * hz * lambda * lambda;
        fine += simpson_weight(i, n) * g;
        if i % 2 == 0 {
            coarse += simpson_weight(i / 2, n / 2) * g;
        }
    }
    let pre = 4.0 * env.rho * env.g * env.g / (std::f64::consts::PI * speed * speed);
    let value = pre * fine * du / 3.0;
    let coarse = pre * coarse * 2.0 * du / 3.0;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("Michell integral produced {value}")));
    }
    Ok(WaveResistance { value, coarse })
}

/// Thin-ship wave resistance (N) at `speed` (m/s) and draft fraction `draft`.
pub fn michell_wave_resistance(dims: &HullDims, speed: f64, draft: f64, quad: &Quadrature, env: &Environment) -> Result<f64> {
    Ok(michell(dims, speed, draft, quad, env)?.value)
}

/// Like [`michell_wave_resistance`], also returning the half-resolution value.
pub fn michell_wave_resistance_checked(
    dims: &HullDims,
    speed: f64,
    draft: f64,
    quad: &Quadrature,
    env: &Environment,
) -> Result<WaveResistance> {
    michell(dims, speed, draft, quad, env)
}

pub fn wave_resistance_coefficient(r_w: f64, speed: f64, loa: f64, rho: f64) -> f64 {
    r_w / (0.5 * rho * speed * speed * loa * loa)
}

/// `0.075 / (log10(Re) - 2)^2`.
pub fn friction_coefficient(re: f64) -> Result<f64> {
    if !(re > 100.0) {
        return Err(Error::Domain(format!("Reynolds number must exceed 100, got {re}")));
    }
    Ok(0.075 / (re.log10() - 2.0).powi(2))
}

/// `0.5 * C_f * rho * U^2 * S * LOA^2` with `S` the non-dimensional wetted area.
pub fn friction_resistance(c_f: f64, speed: f64, wetted: f64, loa: f64, rho: f64) -> f64 {
    0.5 * c_f * rho * speed * speed * wetted * loa * loa
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub froude: f64,
    pub draft: f64,
    pub speed: f64,
    pub reynolds: f64,
    pub wetted_area: f64,
    pub r_w: f64,
    pub r_f: f64,
    pub r_t: f64,
    pub c_w: f64,
    pub c_f: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceResult {
    pub dims: HullDims,
    pub cells: Vec<CellResult>,
    pub aggregate: f64,
}

/// One (Froude, draft) cell.
pub fn resistance_cell(dims: &HullDims, froude: f64, draft: f64, env: &Environment, quad: &Quadrature) -> Result<CellResult> {
    let speed = froude * (env.g * dims.loa).sqrt();
    let wave = michell(dims, speed, draft, quad, env)?;
    let wetted = wetted_surface_area(dims, draft, quad)?;
    let reynolds = speed * dims.loa / env.nu;
    let c_f = friction_coefficient(reynolds)?;
    let r_f = friction_resistance(c_f, speed, wetted, dims.loa, env.rho);
    let r_w = wave.value;
    let warning = (wave.relative_change() > CONVERGENCE_WARN).then(|| {
        format!("wave integral changed by {:.2}% between the two finest lambda rules", 100.0 * wave.relative_change())
    });
    if let Some(w) = &warning {
        log::debug!("Fr {froude}, draft {draft}: {w}");
    }
    Ok(CellResult {
        froude,
        draft,
        speed,
        reynolds,
        wetted_area: wetted,
        r_w,
        r_f,
        r_t: r_w + r_f,
        c_w: wave_resistance_coefficient(r_w, speed, dims.loa, env.rho),
        c_f,
        warning,
    })
}

/// All 8 x 4 cells (Froude-major) and their uniform sum.
pub fn aggregate_total_resistance(dims: &HullDims, env: &Environment, quad: &Quadrature) -> Result<ResistanceResult> {
    let grid: Vec<(f64, f64)> =
        FROUDE_NUMBERS.iter().flat_map(|&fr| DRAFT_FRACTIONS.iter().map(move |&d| (fr, d))).collect();
    let cells: Vec<CellResult> =
        grid.par_iter().map(|&(fr, d)| resistance_cell(dims, fr, d, env, quad)).collect::<Result<_>>()?;
    let aggregate = cells.iter().map(|c| c.r_t).sum();
    Ok(ResistanceResult { dims: *dims, cells, aggregate })
}

/// Parameters -> aggregate resistance, failing on infeasible input.
pub fn evaluate_params(p: &HullParams, loa: f64, env: &Environment, quad: &Quadrature) -> Result<ResistanceResult> {
    aggregate_total_resistance(&scale_params(p, loa)?, env, quad)
}
