//! The observables `O(x, N)` of the quadrant models and of the dynamic
//! exclusion processes, their exact averages (contour integrals, residue
//! sums, exact enumeration) and Monte Carlo estimates.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{IrfError, Result};
use crate::identities::CheckReport;
use crate::params::{to_six_vertex, IrfParams, SixVertexParams};
use crate::samplers::{
    enumerate_distribution, enumerate_hs6v_distribution, run_trajectories, sample_irf, trajectory_seed,
    ExclusionKind, ExclusionState, LineDistribution, SimulationOptions,
};
use crate::special::{
    contour_integral_with, f_prime_zero, q_pochhammer, rising_factorial, Circle, FunctionMode, Quadrature,
    QuadratureOptions, C64, I,
};
use crate::weights::checked_ratio;

/// Agreement required between the residue sum and the quadrature of a
/// one-variable integral.
pub const RESIDUE_AGREEMENT: f64 = 1e-8;

/// Largest time for which the SSEP integral is taken over small circles
/// around the origin (its essential singularity there grows like `e^{t/r}`).
pub const SSEP_SMALL_CIRCLE_MAX_T: f64 = 6.0;

/// Largest time for which the residue series of the one-point SSEP and
/// ASEP integrals are summed.
pub const SERIES_MAX_T: f64 = 3.0;

const QUAD_TOL: f64 = 1e-12;

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn e2pii(x: C64) -> C64 {
    (2.0 * PI * I * x).exp()
}

/// Where the observables are read: at row `N` of a quadrant model or at
/// time `t` of an exclusion process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Horizon {
    Rows(usize),
    Time(f64),
}

/// Positions `x₁ ≥ … ≥ x_n` and the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub xs: Vec<i64>,
    pub horizon: Horizon,
}

impl ObservableSpec {
    pub fn new(xs: Vec<i64>, horizon: Horizon) -> Result<Self> {
        if xs.is_empty() {
            return Err(IrfError::InvalidInput("at least one position is required".into()));
        }
        if xs.windows(2).any(|w| w[0] < w[1]) {
            return Err(IrfError::InvalidInput(format!("positions must be nonincreasing, got {xs:?}")));
        }
        if let Horizon::Time(t) = horizon {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(IrfError::InvalidInput(format!("time must be finite and nonnegative, got {t}")));
            }
        }
        Ok(ObservableSpec { xs, horizon })
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    fn rows(&self) -> Result<usize> {
        match self.horizon {
            Horizon::Rows(n) if n >= 1 => Ok(n),
            _ => Err(IrfError::InvalidInput("quadrant observables need a row index N ≥ 1".into())),
        }
    }

    fn time(&self) -> Result<f64> {
        match self.horizon {
            Horizon::Time(t) => Ok(t),
            _ => Err(IrfError::InvalidInput("exclusion observables need a time t".into())),
        }
    }

    /// Positions as column indices `≥ 1`.
    fn columns(&self) -> Result<Vec<usize>> {
        self.xs
            .iter()
            .map(|&x| {
                usize::try_from(x)
                    .ok()
                    .filter(|&c| c >= 1)
                    .ok_or_else(|| IrfError::InvalidInput(format!("quadrant positions must be ≥ 1, got {x}")))
            })
            .collect()
    }
}

/// A model together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Trigonometric stochastic IRF model in the quadrant.
    Irf(IrfParams),
    /// Rational stochastic IRF model in the quadrant (`2η = 1`).
    Rational(IrfParams),
    DynamicAsep { q: f64, alpha: f64 },
    DynamicSsep { lambda_bar: f64 },
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::Irf(_) => "irf",
            Model::Rational(_) => "rational",
            Model::DynamicAsep { .. } => "asep",
            Model::DynamicSsep { .. } => "ssep",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Model::Irf(p) => {
                if p.mode != FunctionMode::Trigonometric {
                    return Err(IrfError::InvalidParameter(
                        "the quadrant observables are defined for f(z) = sin(πz)".into(),
                    ));
                }
            }
            Model::Rational(p) => {
                if p.mode != FunctionMode::Rational || (2.0 * p.eta - 1.0).norm() > 1e-12 {
                    return Err(IrfError::InvalidParameter(
                        "the rational model needs f(z) = z and 2η = 1".into(),
                    ));
                }
                if p.columns().iter().any(|c| (c.lambda - 1.0).norm() > 1e-12) {
                    return Err(IrfError::InvalidParameter("the rational model needs Λ_j = 1".into()));
                }
            }
            Model::DynamicAsep { q, alpha } => {
                ExclusionKind::DynamicAsep { q: *q, alpha: *alpha }.validate()?;
                if *alpha == 0.0 {
                    return Err(IrfError::InvalidParameter("the ASEP observable needs α > 0".into()));
                }
            }
            Model::DynamicSsep { lambda_bar } => ExclusionKind::DynamicSsep { lambda_bar: *lambda_bar }.validate()?,
        }
        Ok(())
    }
}

/// `O(x, N) = e^{2πi(λ−2ηh)} + e^{4πiη(h−N+Λ_{[1,x)})}` with `λ = λ₀`.
pub fn obs_o(h: u32, x: usize, n: usize, params: &IrfParams) -> Result<C64> {
    let eta = params.eta;
    let h = h as f64;
    let lam_sum = params.lambda_sum(1, x)?;
    Ok(e2pii(params.lambda0 - 2.0 * eta * h) + e2pii(2.0 * eta * (h - n as f64 + lam_sum)))
}

/// The same observable written through `q`, `α` and `s_j`:
/// `−α^{−1} q^h + (s₁⋯s_{x−1})² q^{N−h}`.
pub fn obs_o_six_vertex(h: u32, x: usize, n: usize, sv: &SixVertexParams) -> Result<C64> {
    if sv.s.len() < x {
        return Err(IrfError::InvalidInput(format!("need s_j for j < {x}")));
    }
    let prod: C64 = sv.s[1..x].iter().product();
    Ok(-sv.q.powi(h as i32) / sv.alpha + prod * prod * sv.q.powi(n as i32 - h as i32))
}

/// Observable of the rational model, `h(h − λ − N + x − 1)`.
pub fn obs_rational(h: u32, x: usize, n: usize, lambda: C64) -> C64 {
    let h = h as f64;
    h * (h - lambda - n as f64 + x as f64 - 1.0)
}

/// Observable of the dynamic ASEP, `−α^{−1}q^{(s−x)/2} + q^{(−s−x)/2}`.
pub fn obs_asep(s: i64, x: i64, q: f64, alpha: f64) -> f64 {
    -q.powf((s - x) as f64 / 2.0) / alpha + q.powf((-s - x) as f64 / 2.0)
}

/// Observable of the dynamic SSEP, `h(h + x + λ̄)` with `h = (s−x)/2`.
pub fn obs_ssep(s: i64, x: i64, lambda_bar: f64) -> f64 {
    let h = (s - x) as f64 / 2.0;
    h * (h + x as f64 + lambda_bar)
}

/// Positive root `h` of `O = h(h + x + λ̄)`. Provided for reporting only:
/// the estimators never reconstruct heights from observables.
pub fn ssep_height_from_observable(o: f64, x: f64, lambda_bar: f64) -> f64 {
    let half = (x + lambda_bar) / 2.0;
    (o + half * half).sqrt() - half
}

/// The estimator functional of a model evaluated on the heights
/// `h(x_{k+1})`, including the normalizing prefactor.
pub fn estimator(model: &Model, spec: &ObservableSpec, heights: &[i64]) -> Result<C64> {
    let n = spec.n();
    if heights.len() != n {
        return Err(IrfError::InvalidInput("one height per position is required".into()));
    }
    match model {
        Model::Irf(p) => {
            let rows = spec.rows()?;
            let q = e2pii(-2.0 * p.eta);
            let e = e2pii(p.lambda0);
            let mut acc = one();
            for (k, (&x, &h)) in spec.columns()?.iter().zip(heights).enumerate() {
                let qn = e2pii(-2.0 * p.eta * (rows as f64 - p.lambda_sum(1, x)?));
                let qk = q.powi(k as i32);
                acc *= qn + e * qk * qk - qk * obs_o(h as u32, x, rows, p)?;
            }
            checked_ratio(acc, q_pochhammer(e, q, n), "(e^{2πiλ};q)_n")
        }
        Model::Rational(p) => {
            let rows = spec.rows()? as f64;
            let lam = p.lambda0;
            let mut acc = one();
            for (k, (&x, &h)) in spec.columns()?.iter().zip(heights).enumerate() {
                let kf = k as f64;
                let o = obs_rational(h as u32, x, rows as usize, lam);
                acc *= kf * kf - kf * (lam + rows - x as f64 + 1.0) - o;
            }
            checked_ratio(acc, rising_factorial(-lam, n), "(−λ)_n")
        }
        Model::DynamicAsep { q, alpha } => {
            let (q, alpha) = (*q, *alpha);
            let mut acc = 1.0;
            for (k, (&x, &h)) in spec.xs.iter().zip(heights).enumerate() {
                let qk = q.powi(k as i32);
                let s = 2 * h + x;
                acc *= q.powi(-x as i32) - qk * qk / alpha - qk * obs_asep(s, x, q, alpha);
            }
            let poch = q_pochhammer(C64::new(-1.0 / alpha, 0.0), C64::new(q, 0.0), n);
            checked_ratio(C64::new(acc, 0.0), poch, "(−α^{−1};q)_n")
        }
        Model::DynamicSsep { lambda_bar } => {
            let lb = *lambda_bar;
            let mut acc = 1.0;
            for (k, (&x, &h)) in spec.xs.iter().zip(heights).enumerate() {
                let kf = k as f64;
                let s = 2 * h + x;
                acc *= kf * kf + kf * (lb + x as f64) - obs_ssep(s, x, lb);
            }
            Ok(C64::new(acc / rising_factorial(C64::new(lb, 0.0), n).re, 0.0))
        }
    }
}

/// An exact average with its evaluation details.
#[derive(Debug, Clone, Serialize)]
pub struct ExactValue {
    pub value: C64,
    pub method: String,
    /// Residue-sum evaluation of a one-variable integral.
    pub residue_sum: Option<C64>,
    pub nodes: usize,
}

/// Relative difference `|a − b| / max(1, |b|)`.
pub fn relative_gap(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Exact average of the estimator by contour integration. For `n = 1` the
/// integral is also summed by residues, and the two must agree to
/// [`RESIDUE_AGREEMENT`] (when the residue series is available).
pub fn exact_e(model: &Model, spec: &ObservableSpec) -> Result<ExactValue> {
    model.validate()?;
    let (quad, residue, method) = match model {
        Model::Irf(p) => {
            let q = irf_integral(p, spec)?;
            let r = if spec.n() == 1 { Some(irf_residue_sum(p, spec)?) } else { None };
            (q, r, "contour-integral")
        }
        Model::Rational(p) => {
            let q = rational_integral(p, spec)?;
            let r = if spec.n() == 1 { Some(rational_residue_sum(p, spec)?) } else { None };
            (q, r, "contour-integral")
        }
        Model::DynamicAsep { q, .. } => {
            let t = spec.time()?;
            let quad = asep_integral(*q, spec)?;
            let r = if spec.n() == 1 && t <= SERIES_MAX_T {
                Some(asep_residue_series(*q, spec.xs[0], t)?)
            } else {
                None
            };
            (quad, r, "contour-integral")
        }
        Model::DynamicSsep { .. } => {
            let t = spec.time()?;
            let quad = ssep_integral(spec)?;
            let r = if spec.n() == 1 && t <= SERIES_MAX_T {
                Some(ssep_residue_series(spec.xs[0], t)?)
            } else {
                None
            };
            (quad, r, "contour-integral")
        }
    };
    if let Some(r) = residue {
        let gap = relative_gap(quad.value, r);
        if gap > RESIDUE_AGREEMENT {
            return Err(IrfError::Convergence {
                previous: r,
                last: quad.value,
                nodes: quad.nodes,
            });
        }
    }
    Ok(ExactValue {
        value: quad.value,
        method: method.into(),
        residue_sum: residue,
        nodes: quad.nodes,
    })
}

/// Center and radius of the smallest circle about the mean of `points`.
fn cluster(points: &[C64]) -> (C64, f64) {
    let c = points.iter().sum::<C64>() / points.len() as f64;
    let r = points.iter().map(|p| (p - c).norm()).fold(0.0, f64::max);
    (c, r)
}

/// Equal circles around the row cluster that contain every `w_k` but none
/// of the shifted poles `v_j ∓ 2η` of the cross factor, which requires the
/// radius to lie between the cluster radius and `|η|`.
fn row_circles(ws: &[C64], eta: C64, n: usize) -> Result<Vec<Circle>> {
    let (c, spread) = cluster(ws);
    let limit = eta.norm();
    if spread >= 0.9 * limit {
        return Err(IrfError::InvalidParameter(format!(
            "row parameters spread {spread:.3e} too wide for contours around them (|η| = {limit:.3e})"
        )));
    }
    let r = 0.5 * (spread + limit);
    Ok(vec![Circle::new(c, r)?; n])
}

fn irf_integrand_prefactor(p: &IrfParams, spec: &ObservableSpec, rows: usize) -> Result<C64> {
    let n = spec.n() as f64;
    let s = n * (n - 1.0) / 2.0 + n * rows as f64;
    let mut lam = zero();
    for &x in &spec.columns()? {
        lam += p.lambda_sum(1, x)?;
    }
    // the display integrates against plain dv, the quadrature against dv/(2πi)
    let two_pi_i = 2.0 * PI * I;
    Ok((-two_pi_i * p.eta * (C64::new(s, 0.0) - lam)).exp() * two_pi_i.powi(spec.n() as i32))
}

/// `E_N` as the contour integral in IRF variables. The integral is taken
/// against plain `dv` in every variable; equal circles around the row
/// parameters exclude the poles of the cross factor.
pub fn irf_integral(p: &IrfParams, spec: &ObservableSpec) -> Result<Quadrature> {
    let rows = spec.rows()?;
    let cols = spec.columns()?;
    p.require_columns(cols[0] + 1)?;
    let ws: Vec<C64> = (1..=rows).map(|k| p.w(k)).collect::<Result<_>>()?;
    let eta = p.eta;
    let pre = irf_integrand_prefactor(p, spec, rows)?;
    let pq: Vec<(C64, C64)> = (1..cols[0])
        .map(|j| {
            let c = p.column(j)?;
            Ok((c.z + (1.0 - c.lambda) * eta, c.z + (1.0 + c.lambda) * eta))
        })
        .collect::<Result<_>>()?;
    let f = |z: C64| p.f(z);
    let circles = row_circles(&ws, eta, cols.len())?;
    let integrand = |v: &[C64]| -> Result<C64> {
        let mut g = pre;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                g *= f(v[i] - v[j]) / f(v[i] - v[j] + 2.0 * eta);
            }
            for &(pj, qj) in &pq[..cols[i] - 1] {
                g *= f(v[i] - pj) / f(v[i] - qj);
            }
            for &w in &ws {
                g *= f(v[i] - w - 2.0 * eta) / f(v[i] - w);
            }
        }
        Ok(g)
    };
    contour_integral_with(integrand, &circles, QuadratureOptions::new(32, QUAD_TOL))
}

/// The `n = 1` IRF integral as the sum of its residues at `v = w_k`
/// (the row parameters must be distinct).
pub fn irf_residue_sum(p: &IrfParams, spec: &ObservableSpec) -> Result<C64> {
    let rows = spec.rows()?;
    let x = spec.columns()?[0];
    let ws: Vec<C64> = (1..=rows).map(|k| p.w(k)).collect::<Result<_>>()?;
    let eta = p.eta;
    let f = |z: C64| p.f(z);
    let mut total = zero();
    for (k, &wk) in ws.iter().enumerate() {
        let mut r = f(-2.0 * eta) / f_prime_zero(p.mode);
        for j in 1..x {
            let c = p.column(j)?;
            r *= f(wk - c.z - (1.0 - c.lambda) * eta) / f(wk - c.z - (1.0 + c.lambda) * eta);
        }
        for (l, &wl) in ws.iter().enumerate() {
            if l != k {
                r *= checked_ratio(f(wk - wl - 2.0 * eta), f(wk - wl), "f(w_k − w_l)")?;
            }
        }
        total += r;
    }
    Ok(total * irf_integrand_prefactor(p, spec, rows)?)
}

/// The six-vertex form of the same average,
/// `q^{n(n−1)/2} ∮ Π (y_i−y_j)/(y_i−qy_j) Π (ξ_j−s_jy)/(ξ_j−s_j^{−1}y) Π (1−qu_ky)/(1−u_ky) dy/(2πi y)`
/// with contours around the points `u_k^{−1}`.
pub fn six_vertex_integral(sv: &SixVertexParams, spec: &ObservableSpec) -> Result<Quadrature> {
    let rows = spec.rows()?;
    let cols = spec.columns()?;
    if sv.u.len() < rows || sv.s.len() < cols[0] {
        return Err(IrfError::InvalidInput("six-vertex data does not cover the observation window".into()));
    }
    let n = cols.len();
    let q = sv.q;
    let poles: Vec<C64> = sv.u[..rows].iter().map(|u| 1.0 / u).collect();
    let (c, spread) = cluster(&poles);
    let limit = c.norm() * (1.0 - q.norm()).abs() / (1.0 + q.norm());
    if spread >= 0.9 * limit {
        return Err(IrfError::InvalidParameter(
            "the points u_k^{-1} are too spread for contours excluding y = q y'".into(),
        ));
    }
    let circles = vec![Circle::new(c, 0.5 * (spread + limit))?; n];
    let pre = q.powi((n * (n - 1) / 2) as i32);
    let integrand = |y: &[C64]| -> Result<C64> {
        let mut g = pre;
        for i in 0..y.len() {
            for j in i + 1..y.len() {
                g *= (y[i] - y[j]) / (y[i] - q * y[j]);
            }
            for j in 1..cols[i] {
                g *= (sv.xi[j] - sv.s[j] * y[i]) / (sv.xi[j] - y[i] / sv.s[j]);
            }
            for u in &sv.u[..rows] {
                g *= (1.0 - q * u * y[i]) / (1.0 - u * y[i]);
            }
            g /= y[i];
        }
        Ok(g)
    };
    contour_integral_with(integrand, &circles, QuadratureOptions::new(32, QUAD_TOL))
}

/// Rational model integral with loops around the `w_k`.
pub fn rational_integral(p: &IrfParams, spec: &ObservableSpec) -> Result<Quadrature> {
    let rows = spec.rows()?;
    let cols = spec.columns()?;
    p.require_columns(cols[0] + 1)?;
    let ws: Vec<C64> = (1..=rows).map(|k| p.w(k)).collect::<Result<_>>()?;
    let zs: Vec<C64> = (1..cols[0]).map(|j| p.column(j).map(|c| c.z)).collect::<Result<_>>()?;
    let circles = row_circles(&ws, p.eta, cols.len())?;
    let integrand = |v: &[C64]| -> Result<C64> {
        let mut g = one();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                g *= (v[i] - v[j]) / (v[i] - v[j] + 1.0);
            }
            for &z in &zs[..cols[i] - 1] {
                g *= (v[i] - z) / (v[i] - z - 1.0);
            }
            for &w in &ws {
                g *= (v[i] - w - 1.0) / (v[i] - w);
            }
        }
        Ok(g)
    };
    contour_integral_with(integrand, &circles, QuadratureOptions::new(32, QUAD_TOL))
}

/// Residue sum of the `n = 1` rational integral.
pub fn rational_residue_sum(p: &IrfParams, spec: &ObservableSpec) -> Result<C64> {
    let rows = spec.rows()?;
    let x = spec.columns()?[0];
    let ws: Vec<C64> = (1..=rows).map(|k| p.w(k)).collect::<Result<_>>()?;
    let mut total = zero();
    for (k, &wk) in ws.iter().enumerate() {
        let mut r = C64::new(-1.0, 0.0);
        for j in 1..x {
            let z = p.column(j)?.z;
            r *= (wk - z) / (wk - z - 1.0);
        }
        for (l, &wl) in ws.iter().enumerate() {
            if l != k {
                r *= checked_ratio(wk - wl - 1.0, wk - wl, "w_k − w_l")?;
            }
        }
        total += r;
    }
    Ok(total)
}

/// ASEP integral over equal circles around 1 small enough to exclude the
/// poles `y = q y'` and `y = 1/q`.
pub fn asep_integral(q: f64, spec: &ObservableSpec) -> Result<Quadrature> {
    let t = spec.time()?;
    if !(q > 0.0 && q < 1.0) {
        return Err(IrfError::InvalidParameter(format!(
            "the ASEP integral is evaluated for 0 < q < 1, got {q}"
        )));
    }
    let n = spec.n();
    let r = 0.75 * (1.0 - q) / (1.0 + q);
    let circles = vec![Circle::new(one(), r)?; n];
    let pre = q.powi((n * (n - 1) / 2) as i32);
    let xs = spec.xs.clone();
    let integrand = move |y: &[C64]| -> Result<C64> {
        let mut g = C64::new(pre, 0.0);
        for i in 0..y.len() {
            for j in i + 1..y.len() {
                g *= (y[i] - y[j]) / (y[i] - q * y[j]);
            }
            let a = 1.0 - y[i];
            let b = 1.0 - q * y[i];
            g *= (a / b).powi(xs[i] as i32) * ((1.0 - q) * (1.0 - q) * y[i] * t / (a * b)).exp() / y[i];
        }
        Ok(g)
    };
    contour_integral_with(integrand, &circles, QuadratureOptions::new(64, QUAD_TOL))
}

/// Coefficients of `(1 + a e)^p` up to `e^order`, for any real `p`.
fn binomial_series(a: f64, p: f64, order: usize) -> Vec<f64> {
    let mut c = vec![0.0; order + 1];
    c[0] = 1.0;
    for j in 1..=order {
        c[j] = c[j - 1] * (p - (j - 1) as f64) / j as f64 * a;
    }
    c
}

/// Sums a power series in `t` whose terms eventually decay; stops once the
/// terms have been negligible for a while past the largest one.
fn sum_t_series<F>(t: f64, mut term: F) -> Result<C64>
where
    F: FnMut(usize) -> f64,
{
    let mut total = 0.0;
    let mut largest: f64 = 0.0;
    let mut quiet = 0;
    let mut coeff = 1.0; // t^m / m!
    for m in 0..400usize {
        if m > 0 {
            coeff *= t / m as f64;
        }
        let v = coeff * term(m);
        total += v;
        largest = largest.max(v.abs());
        if v.abs() <= 1e-18 * largest.max(1e-300) && m > 8 {
            quiet += 1;
            if quiet >= 4 {
                return Ok(C64::new(total, 0.0));
            }
        } else {
            quiet = 0;
        }
        if t == 0.0 && m > 0 {
            return Ok(C64::new(total, 0.0));
        }
    }
    Err(IrfError::Divergence(format!("t-series did not settle at t = {t}")))
}

/// The `n = 1` SSEP integral as a power series in `t` whose coefficients
/// are residues at `v = 0` of `v^{x−m}(v−1)^{−x−m}`.
pub fn ssep_residue_series(x: i64, t: f64) -> Result<C64> {
    sum_t_series(t, |m| {
        let m = m as i64;
        let a = x - m;
        if a >= 0 {
            return 0.0;
        }
        // coefficient of v^j in (v−1)^b = (−1)^b (1−v)^b
        let (b, j) = (-x - m, (-a - 1) as usize);
        let sign_b = if b.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        sign_b * binomial_series(-1.0, b as f64, j)[j]
    })
}

/// The `n = 1` ASEP integral as a power series in `t`; the `m`-th
/// coefficient is a residue at `y = 1` read off from binomial series.
pub fn asep_residue_series(q: f64, x: i64, t: f64) -> Result<C64> {
    let rho = q / (1.0 - q);
    sum_t_series(t, |m| {
        let mi = m as i64;
        let order = mi - x - 1;
        if order < 0 {
            return 0.0;
        }
        let order = order as usize;
        let left = binomial_series(-rho, (-x - mi) as f64, order);
        let right = binomial_series(1.0, (mi - 1) as f64, order);
        let coeff: f64 = (0..=order).map(|j| left[j] * right[order - j]).sum();
        let sign = if (x - mi).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        sign * (1.0 - q).powi((mi - x) as i32) * coeff
    })
}

/// The SSEP integral `E_t[Π (k − h(x_{k+1}))]` of the usual SSEP.
///
/// For `n ≤ 2` the variables are moved to `u = v/(v−1)`, which sends the
/// small loops around 0 to circles `|u| = ρ` that can be pushed up to the
/// saddle point at `u = 1`. For `n = 2` this deformation crosses the pole
/// `v₁ = v₂ − 1` of the cross factor, whose residue is added back as a
/// one-variable integral. For `n ≥ 3` small circles around 0 are used,
/// which limits `t` to [`SSEP_SMALL_CIRCLE_MAX_T`].
pub fn ssep_integral(spec: &ObservableSpec) -> Result<Quadrature> {
    let t = spec.time()?;
    match spec.n() {
        1 => ssep_one_point(spec.xs[0], t),
        2 => ssep_two_point(spec.xs[0], spec.xs[1], t),
        _ => ssep_small_circles(&spec.xs, t),
    }
}

fn saddle_gap(t: f64) -> f64 {
    (1.0 / t.max(1.0).sqrt()).min(0.2)
}

fn ssep_factor(u: C64, x: i64, t: f64) -> C64 {
    // u^x e^{t(u+1/u−2)} · (−1/(u−1)²): the image of (v/(v−1))^x e^{t/(v(v−1))} dv
    -u.powi(x as i32) * (t * (u + 1.0 / u - 2.0)).exp() / ((u - 1.0) * (u - 1.0))
}

fn initial_nodes(t: f64) -> usize {
    let k = (8.0 * t.sqrt()).max(32.0) as usize;
    k.next_power_of_two()
}

fn ssep_one_point(x: i64, t: f64) -> Result<Quadrature> {
    let rho = 1.0 - saddle_gap(t);
    let circle = Circle::new(zero(), rho)?;
    let integrand = |u: &[C64]| Ok(ssep_factor(u[0], x, t));
    contour_integral_with(integrand, &[circle], QuadratureOptions::new(initial_nodes(t), QUAD_TOL))
}

fn ssep_two_point(x1: i64, x2: i64, t: f64) -> Result<Quadrature> {
    let d = saddle_gap(t);
    let circles = [Circle::new(zero(), 1.0 - d)?, Circle::new(zero(), 1.0 - 2.0 * d)?];
    let main = pair_trapezoid_doubling(x1, x2, t, circles, initial_nodes(t))?;
    // residue at v₁ = v₂ − 1: ∮ G(v) dv with G(v) = F₁(v−1)F₂(v), written
    // in w = v/2 and then u = w/(w−1)
    let single = |u: &[C64]| {
        let u = u[0];
        let g = ((u + 1.0) / 2.0).powi(x1 as i32) * (2.0 * u / (u + 1.0)).powi(x2 as i32)
            * (t / 2.0 * (u + 1.0 / u - 2.0)).exp()
            * (-1.0 / ((u - 1.0) * (u - 1.0)));
        Ok(2.0 * g)
    };
    let rho = 1.0 - saddle_gap(t / 2.0);
    let extra = contour_integral_with(
        single,
        &[Circle::new(zero(), rho)?],
        QuadratureOptions::new(initial_nodes(t), QUAD_TOL),
    )?;
    Ok(Quadrature {
        value: main.value + extra.value,
        previous: main.previous + extra.previous,
        nodes: main.nodes.max(extra.nodes),
        evaluations: main.evaluations + extra.evaluations,
    })
}

/// Trapezoidal rule for the two-point integrand in `u` coordinates. The
/// one-variable factors are tabulated once per node, so each pair of nodes
/// only costs the cross factor.
fn pair_trapezoid(x1: i64, x2: i64, t: f64, circles: [Circle; 2], k: usize) -> C64 {
    let nodes = |c: Circle, x: i64| -> Vec<(C64, C64)> {
        (0..k)
            .map(|j| {
                let e = C64::from_polar(1.0, 2.0 * PI * j as f64 / k as f64);
                let u = c.center + c.radius * e;
                (u, ssep_factor(u, x, t) * c.radius * e / k as f64)
            })
            .collect()
    };
    let (a, b) = (nodes(circles[0], x1), nodes(circles[1], x2));
    let rows: Vec<C64> = a
        .par_iter()
        .map(|&(u1, f1)| {
            let inner: C64 = b.iter().map(|&(u2, f2)| f2 * (u2 - u1) / (u1 * u2 - 2.0 * u1 + 1.0)).sum();
            f1 * inner
        })
        .collect();
    pairwise_sum(&rows)
}

fn pair_trapezoid_doubling(x1: i64, x2: i64, t: f64, circles: [Circle; 2], start: usize) -> Result<Quadrature> {
    // rounding over K² summands limits the attainable agreement
    let tol = 1e-10;
    let cap = 1 << 13;
    let mut k = start;
    let mut previous = pair_trapezoid(x1, x2, t, circles, k);
    let mut evaluations = (k * k) as u64;
    while 2 * k <= cap {
        k *= 2;
        let value = pair_trapezoid(x1, x2, t, circles, k);
        evaluations += (k * k) as u64;
        if (value - previous).norm() < tol * value.norm().max(1.0) {
            return Ok(Quadrature {
                value,
                previous,
                nodes: k,
                evaluations,
            });
        }
        previous = value;
    }
    Err(IrfError::Convergence {
        previous,
        last: previous,
        nodes: k,
    })
}

fn ssep_small_circles(xs: &[i64], t: f64) -> Result<Quadrature> {
    if t > SSEP_SMALL_CIRCLE_MAX_T {
        return Err(IrfError::InvalidInput(format!(
            "the {}-point SSEP integral is evaluated for t ≤ {SSEP_SMALL_CIRCLE_MAX_T}",
            xs.len()
        )));
    }
    let circles = vec![Circle::new(zero(), 0.4)?; xs.len()];
    let xs = xs.to_vec();
    let integrand = move |v: &[C64]| -> Result<C64> {
        let mut g = one();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                g *= (v[i] - v[j]) / (v[i] - v[j] + 1.0);
            }
            g *= (v[i] / (v[i] - 1.0)).powi(xs[i] as i32) * (t / (v[i] * (v[i] - 1.0))).exp();
        }
        Ok(g)
    };
    contour_integral_with(integrand, &circles, QuadratureOptions::new(64, QUAD_TOL))
}

/// Exact average of the estimator by enumerating the quadrant model with
/// `X = x₁ − 1` columns (at least one); complex weights are allowed.
pub fn enumerated_e(model: &Model, spec: &ObservableSpec) -> Result<C64> {
    model.validate()?;
    let params = match model {
        Model::Irf(p) | Model::Rational(p) => p,
        _ => {
            return Err(IrfError::InvalidInput(
                "exact enumeration is available for the quadrant models only".into(),
            ))
        }
    };
    let rows = spec.rows()?;
    let cols = spec.columns()?;
    let dist = enumerate_distribution(params, rows, (cols[0] - 1).max(1))?;
    expectation_over(model, spec, &dist)
}

fn expectation_over(model: &Model, spec: &ObservableSpec, dist: &LineDistribution) -> Result<C64> {
    let cols = spec.columns()?;
    let mut total = zero();
    for (state, &p) in &dist.states {
        let hs: Vec<i64> = cols.iter().map(|&x| state.height(x, dist.rows) as i64).collect();
        total += p * estimator(model, spec, &hs)?;
    }
    Ok(total)
}

/// `E[Π_k (q^{h(x_{k+1},N)} − q^k)]` under the stochastic higher spin
/// six-vertex model, by exact enumeration.
pub fn hs6v_q_moment(sv: &SixVertexParams, spec: &ObservableSpec) -> Result<C64> {
    let rows = spec.rows()?;
    let cols = spec.columns()?;
    let dist = enumerate_hs6v_distribution(sv, rows, (cols[0] - 1).max(1))?;
    Ok(dist.expectation(|s| {
        cols.iter()
            .enumerate()
            .map(|(k, &x)| sv.q.powi(s.height(x, rows) as i32) - sv.q.powi(k as i32))
            .product()
    }))
}

/// Monte Carlo mean and its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct McEstimate {
    pub mean: C64,
    pub stderr: f64,
    pub samples: usize,
}

/// Pairwise summation, for a result independent of the thread count.
fn pairwise_sum(v: &[C64]) -> C64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn summarize(values: &[C64]) -> McEstimate {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<C64> = values.iter().map(|v| C64::new((v - mean).norm_sqr(), 0.0)).collect();
    let var = pairwise_sum(&dev).re / (n - 1.0).max(1.0);
    McEstimate {
        mean,
        stderr: (var / n).sqrt(),
        samples: values.len(),
    }
}

/// Smallest number of samples accepted by [`mc_e`].
pub const MIN_SAMPLES: usize = 1000;

/// Monte Carlo estimate of the averaged estimator. All positions of one
/// sample are read off the same trajectory.
pub fn mc_e(model: &Model, spec: &ObservableSpec, samples: usize, seed: u64) -> Result<McEstimate> {
    model.validate()?;
    if samples < MIN_SAMPLES {
        return Err(IrfError::InvalidInput(format!("at least {MIN_SAMPLES} samples are required")));
    }
    let values: Vec<C64> = match model {
        Model::Irf(p) | Model::Rational(p) => {
            let rows = spec.rows()?;
            let cols = spec.columns()?;
            let x_max = (cols[0] - 1).max(1);
            (0..samples as u64)
                .into_par_iter()
                .map(|i| {
                    let st = sample_irf(p, x_max, rows, trajectory_seed(seed, i))?;
                    let hs: Vec<i64> = cols
                        .iter()
                        .map(|&x| st.height(x, rows).map(i64::from))
                        .collect::<Result<_>>()?;
                    estimator(model, spec, &hs)
                })
                .collect::<Result<_>>()?
        }
        Model::DynamicAsep { q, alpha } => {
            let kind = ExclusionKind::DynamicAsep { q: *q, alpha: *alpha };
            exclusion_values(model, spec, kind, samples, seed)?
        }
        Model::DynamicSsep { lambda_bar } => {
            let kind = ExclusionKind::DynamicSsep { lambda_bar: *lambda_bar };
            exclusion_values(model, spec, kind, samples, seed)?
        }
    };
    Ok(summarize(&values))
}

fn exclusion_values(
    model: &Model,
    spec: &ObservableSpec,
    kind: ExclusionKind,
    samples: usize,
    seed: u64,
) -> Result<Vec<C64>> {
    let t = spec.time()?;
    let reach = spec.xs.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
    let init = ExclusionState::step(kind, reach + 8)?;
    let heights = run_trajectories(&init, t, seed, samples, SimulationOptions::default(), |s| {
        spec.xs.iter().map(|&x| s.height(x)).collect::<Vec<i64>>()
    })?;
    heights.iter().map(|hs| estimator(model, spec, hs)).collect()
}

/// Exact averages of the IRF estimator at several values of `λ₀`, compared
/// pairwise against the first; the report carries the largest gap.
pub fn lambda_independence_report(params: &IrfParams, spec: &ObservableSpec, lambdas: &[C64]) -> Result<CheckReport> {
    if lambdas.len() < 2 {
        return Err(IrfError::InvalidInput("at least two values of λ are required".into()));
    }
    let values: Vec<C64> = lambdas
        .iter()
        .map(|&l| enumerated_e(&Model::Irf(params.with_lambda0(l)), spec))
        .collect::<Result<_>>()?;
    let (worst, _) = values
        .iter()
        .enumerate()
        .map(|(i, v)| (i, relative_gap(*v, values[0])))
        .fold((0, -1.0), |acc, (i, g)| if g > acc.1 { (i, g) } else { acc });
    Ok(CheckReport::build(
        "lambda_independence",
        json!({
            "xs": spec.xs,
            "horizon": spec.horizon,
            "lambdas": lambdas.iter().map(|l| [l.re, l.im]).collect::<Vec<_>>(),
            "values": values.iter().map(|v| [v.re, v.im]).collect::<Vec<_>>(),
        }),
        values[worst],
        values[0],
        1.0,
        1e-9,
        None,
    ))
}

/// Monte Carlo version for the dynamic SSEP: estimates at each `λ̄` must
/// agree within four combined standard errors.
pub fn ssep_lambda_independence_mc(
    spec: &ObservableSpec,
    lambda_bars: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(Vec<McEstimate>, bool)> {
    let est: Vec<McEstimate> = lambda_bars
        .iter()
        .map(|&lb| mc_e(&Model::DynamicSsep { lambda_bar: lb }, spec, samples, seed))
        .collect::<Result<_>>()?;
    let ok = est.iter().all(|e| {
        let sigma = (e.stderr.powi(2) + est[0].stderr.powi(2)).sqrt();
        (e.mean - est[0].mean).norm() <= 4.0 * sigma
    });
    Ok((est, ok))
}

/// One line of the JSON output of the `observables` command.
#[derive(Debug, Clone, Serialize)]
pub struct ObservableRecord {
    pub model: String,
    pub spec: ObservableSpec,
    pub method: String,
    pub value: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

/// Evaluates the estimator by the requested method and wraps the result.
pub fn observable_record(model: &Model, spec: &ObservableSpec, method: &str, samples: usize, seed: u64) -> Result<ObservableRecord> {
    let (value, stderr) = match method {
        "exact" => (exact_e(model, spec)?.value, None),
        "enumeration" => (enumerated_e(model, spec)?, None),
        "mc" => {
            let e = mc_e(model, spec, samples, seed)?;
            (e.mean, Some(e.stderr))
        }
        other => {
            return Err(IrfError::Config(format!(
                "unknown method `{other}` (expected exact, enumeration or mc)"
            )))
        }
    };
    Ok(ObservableRecord {
        model: model.name().into(),
        spec: spec.clone(),
        method: method.into(),
        value: [value.re, value.im],
        stderr,
    })
}

/// The six-vertex parameters of an IRF parameter pack.
pub fn six_vertex_of(params: &IrfParams) -> SixVertexParams {
    to_six_vertex(params)
}
