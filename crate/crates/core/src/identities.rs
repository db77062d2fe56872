//! Executable checks of the identities satisfied by the symmetric functions.
//!
//! Every check evaluates both sides independently and returns a
//! [`CheckReport`]. Both sides are divided by a natural scale before they
//! are stored, so `residual` is a relative error: for truncated series the
//! scale is the largest of `|rhs|` and the largest single summand, for
//! contour integrals it is `|rhs|` or the trivial bound `max|g|·Π rᵢ` when
//! the right side vanishes, and for orthogonality it is `|c_μ|`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{IrfError, Result};
use crate::params::{check_admissible_columns, pq_grid, ContourFamily, IrfParams};
use crate::signature::{signatures_in_box, Signature};
use crate::special::{contour_integral_with, Circle, FunctionMode, QuadratureOptions, C64};
use crate::symfun::{
    b_mu, c_mu, d_nu, d_rho, dual_factor, norm_factor, skew_b_lattice, skew_d_lattice,
    symmetrization_rhs, symmetrization_terms,
};
use crate::weights::checked_ratio;

/// Tolerance for comparing two closed forms.
pub const TOL_CLOSED_FORM: f64 = 1e-10;
/// Tolerance for truncated series against a closed form.
pub const TOL_SERIES: f64 = 1e-7;
/// Tolerance for contour integrals against a closed form.
pub const TOL_QUADRATURE: f64 = 1e-6;

/// Node doubling stops once successive estimates agree to this level
/// (relative to the scale of the integral).
pub const QUADRATURE_TARGET: f64 = 1e-9;
pub const QUADRATURE_INITIAL_NODES: usize = 32;

/// Nodes per variable used for the trivial bound of an integral.
const BOUND_NODES: usize = 16;

/// Smallest `|f(uᵢ−uⱼ−2η)|` tolerated between nodes of nested contours.
pub const NESTING_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Passed,
    PassedWithWarning,
    Failed,
}

/// How a series or an integral was cut off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationInfo {
    /// Summands used, or nodes per variable for a quadrature.
    pub terms: usize,
    /// Largest `κ₁` summed (series only).
    pub cap: Option<u32>,
    /// Estimate of the omitted part, in units of the report scale.
    pub tail_estimate: f64,
    /// Largest modulus of the convergence product at depths `m` and `2m`.
    pub convergence_product: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub parameters: Value,
    /// Left side divided by `scale`.
    pub lhs: C64,
    /// Right side divided by `scale`.
    pub rhs: C64,
    pub scale: f64,
    /// `|lhs − rhs| / max(1, |rhs|)`.
    pub residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub status: CheckStatus,
    pub truncation_info: Option<TruncationInfo>,
}

impl CheckReport {
    pub(crate) fn build(
        name: &str,
        parameters: Value,
        lhs: C64,
        rhs: C64,
        scale: f64,
        tolerance: f64,
        mut truncation_info: Option<TruncationInfo>,
    ) -> Self {
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        let (lhs, rhs) = (lhs / scale, rhs / scale);
        if let Some(t) = truncation_info.as_mut() {
            t.tail_estimate /= scale;
        }
        let residual = (lhs - rhs).norm() / rhs.norm().max(1.0);
        let passed = residual <= tolerance;
        let warn = truncation_info.as_ref().is_some_and(|t| !(t.tail_estimate <= tolerance / 10.0));
        let status = match (passed, warn) {
            (false, _) => CheckStatus::Failed,
            (true, true) => CheckStatus::PassedWithWarning,
            (true, false) => CheckStatus::Passed,
        };
        CheckReport {
            name: name.to_string(),
            parameters,
            lhs,
            rhs,
            scale,
            residual,
            tolerance,
            passed,
            status,
            truncation_info,
        }
    }

    /// Replaces the default tolerance, recomputing the verdict.
    pub fn with_tolerance(self, tolerance: f64) -> Self {
        let mut r = self;
        r.tolerance = tolerance;
        r.passed = r.residual <= tolerance;
        let warn = r.truncation_info.as_ref().is_some_and(|t| !(t.tail_estimate <= tolerance / 10.0));
        r.status = match (r.passed, warn) {
            (false, _) => CheckStatus::Failed,
            (true, true) => CheckStatus::PassedWithWarning,
            (true, false) => CheckStatus::Passed,
        };
        r
    }
}

/// Sorts reports by name (stable for equal names) for order-independent output.
pub fn sort_reports(reports: &mut [CheckReport]) {
    reports.sort_by(|a, b| a.name.cmp(&b.name));
}

fn sig_json(s: &Signature) -> Value {
    json!(s.parts())
}

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

// ---------------------------------------------------------------------------
// Symmetrization lemma

/// `Σ_σ σ(…)` against `f(β)f(2β)⋯f(mβ)/f(β)^m`.
pub fn check_symmetrization_lemma(m: usize, vs: &[C64], beta: C64, mode: FunctionMode) -> Result<CheckReport> {
    if !(1..=7).contains(&m) || vs.len() != m {
        return Err(IrfError::InvalidInput(format!(
            "the symmetrization lemma needs 1 ≤ m ≤ 7 and m variables, got m = {m} with {} variables",
            vs.len()
        )));
    }
    let terms = symmetrization_terms(vs, beta, mode)?;
    let lhs: C64 = terms.iter().sum();
    let rhs = symmetrization_rhs(m, beta, mode);
    let largest = terms.iter().map(|t| t.norm()).fold(0.0, f64::max);
    let nonzero = terms.iter().filter(|t| t.norm() > 1e-12 * largest).count();
    let params = json!({ "m": m, "vs": vs, "beta": beta, "mode": mode.name(), "nonzero_terms": nonzero });
    Ok(CheckReport::build("symmetrization_lemma", params, lhs, rhs, 1.0, TOL_CLOSED_FORM, None))
}

// ---------------------------------------------------------------------------
// Truncated series

struct SeriesSum {
    total: C64,
    largest: f64,
    terms: usize,
    tail: f64,
}

/// Sums `term(κ)` over the box `lo ≤ κ ≤ hi` shell by shell in `κ₁`, from
/// `lo₁` up to `cap`, and estimates the tail from the last two shells.
fn sum_box<F>(lo: &[u32], hi: &[u32], cap: u32, mut term: F) -> Result<SeriesSum>
where
    F: FnMut(&Signature) -> Result<C64>,
{
    let mut total = zero();
    let mut largest = 0.0f64;
    let mut terms = 0usize;
    let mut shells: Vec<f64> = Vec::new();
    if lo.is_empty() {
        let t = term(&Signature::empty())?;
        return Ok(SeriesSum { total: t, largest: t.norm(), terms: 1, tail: 0.0 });
    }
    let top = hi[0].min(cap);
    for big_k in lo[0]..=top {
        let mut l = lo.to_vec();
        let mut h: Vec<u32> = hi.iter().map(|&x| x.min(big_k)).collect();
        l[0] = big_k;
        h[0] = big_k;
        let mut shell = zero();
        for kappa in signatures_in_box(&l, &h) {
            let t = term(&kappa)?;
            largest = largest.max(t.norm());
            shell += t;
            terms += 1;
        }
        total += shell;
        shells.push(shell.norm());
    }
    let tail = if hi[0] <= cap {
        // The box is finite in κ₁, so nothing was omitted.
        0.0
    } else {
        tail_estimate(&shells, total.norm().max(largest))?
    };
    Ok(SeriesSum { total, largest, terms, tail })
}

/// Geometric tail `|s_K|·r/(1−r)` from the last two shells.
fn tail_estimate(shells: &[f64], size: f64) -> Result<f64> {
    let n = shells.len();
    let last = shells.last().copied().unwrap_or(0.0);
    if n < 2 || last == 0.0 {
        return Ok(last);
    }
    let r = last / shells[n - 2].max(f64::MIN_POSITIVE);
    if r < 1.0 {
        return Ok(last * r / (1.0 - r));
    }
    // A non-decaying shell at round-off level carries no information.
    if last <= 1e-14 * size {
        return Ok(last);
    }
    Err(IrfError::Divergence(format!(
        "shell contributions grow (ratio {r:.3}, last shell {last:.3e})"
    )))
}

/// The limit quantity of the skew-Cauchy convergence condition, truncated
/// after column `m`.
fn convergence_product(u: C64, v: C64, lambda: C64, n: usize, m: usize, params: &IrfParams) -> Result<C64> {
    let eta = params.eta;
    let f = |x: C64| params.f(x);
    let big = lambda - 2.0 * eta * (params.lambda_sum(0, m + 1)? - 2.0 * n as f64);
    let mut p = checked_ratio(f(u - v + big), f(big), "f(λ-2η(Λ_[0,m]-2n))")?;
    for i in 0..=m {
        let c = params.column(i)?;
        p *= checked_ratio(
            f(c.z - u + (1.0 - c.lambda) * eta) * f(c.z - v + (c.lambda + 1.0) * eta),
            f(c.z - u + (c.lambda + 1.0) * eta) * f(c.z - v + (1.0 - c.lambda) * eta),
            "convergence product",
        )?;
    }
    Ok(p)
}

/// Largest modulus of the convergence product over all variable pairs and
/// `n ∈ 1..=n_max`, at depths `m` and `2m` with `m` chosen to fit the
/// configured columns.
fn monitor_convergence(us: &[C64], vs: &[C64], lambda: C64, n_max: usize, cap: u32, params: &IrfParams) -> Result<[f64; 2]> {
    let m = (cap as usize).min(params.num_columns().saturating_sub(1) / 2).max(1);
    let mut at = [0.0f64; 2];
    for &u in us {
        for &v in vs {
            for n in 1..=n_max.max(1) {
                at[0] = at[0].max(convergence_product(u, v, lambda, n, m, params)?.norm());
                at[1] = at[1].max(convergence_product(u, v, lambda, n, 2 * m, params)?.norm());
            }
        }
    }
    if !(at[1] < at[0]) {
        return Err(IrfError::Divergence(format!(
            "the convergence product does not decay: {:.3e} at depth {m}, {:.3e} at depth {}",
            at[0],
            at[1],
            2 * m
        )));
    }
    Ok(at)
}

fn cross_product(us: &[C64], vs: &[C64], params: &IrfParams) -> Result<C64> {
    let eta = params.eta;
    let mut p = one();
    for &u in us {
        for &v in vs {
            p *= checked_ratio(params.f(v - u - 2.0 * eta), params.f(v - u), "f(v-u)")?;
        }
    }
    Ok(p)
}

/// General skew-Cauchy identity
/// `Σ_κ D_{κ/μ}(λ;v) B_{κ/ν}(λ+2ηl;u) = Π f(v_j−u_i−2η)/f(v_j−u_i) · Σ_ρ B_{μ/ρ}(λ;u) D_{ν/ρ}(λ+2ηk;v)`
/// with `k = |u|`, `l = |v|`, the left side truncated at `κ₁ ≤ cap`.
pub fn check_skew_cauchy(
    mu: &Signature,
    nu: &Signature,
    us: &[C64],
    vs: &[C64],
    params: &IrfParams,
    cap: u32,
) -> Result<CheckReport> {
    let (k, l) = (us.len(), vs.len());
    if k == 0 || l == 0 {
        return Err(IrfError::InvalidInput("skew-Cauchy needs at least one u and one v".into()));
    }
    if mu.len() != nu.len() + k {
        return Err(IrfError::InvalidInput(format!(
            "skew-Cauchy needs ℓ(μ) = ℓ(ν) + k, got ℓ(μ) = {}, ℓ(ν) = {}, k = {k}",
            mu.len(),
            nu.len()
        )));
    }
    let lambda = params.lambda0;
    let eta = params.eta;
    params.require_columns(cap as usize + 1)?;
    let at = monitor_convergence(us, vs, lambda, mu.len(), cap, params)?;

    let len = mu.len();
    let (mp, np) = (mu.parts(), nu.parts());
    let mut lo = vec![0u32; len];
    let mut hi = vec![u32::MAX; len];
    for i in 0..len {
        lo[i] = mp[i].max(np.get(i).copied().unwrap_or(0));
        if i >= l {
            hi[i] = hi[i].min(mp[i - l]);
        }
        if i >= k {
            hi[i] = hi[i].min(np[i - k]);
        }
    }
    let lam_b = lambda + 2.0 * eta * l as f64;
    let series = sum_box(&lo, &hi, cap, |kappa| {
        let d = skew_d_lattice(kappa, mu, lambda, vs, params)?;
        if d == zero() {
            return Ok(zero());
        }
        Ok(d * skew_b_lattice(kappa, nu, lam_b, us, params, false)?)
    })?;

    // ρ lies k B-steps below μ and l D-steps below ν.
    let mut rlo = vec![0u32; nu.len()];
    let mut rhi = vec![0u32; nu.len()];
    for i in 0..nu.len() {
        rlo[i] = mp.get(i + k).copied().unwrap_or(0).max(np.get(i + l).copied().unwrap_or(0));
        rhi[i] = mp[i].min(np[i]);
    }
    let lam_d = lambda + 2.0 * eta * k as f64;
    let mut finite = zero();
    if rlo.iter().zip(&rhi).all(|(a, b)| a <= b) {
        for rho in signatures_in_box(&rlo, &rhi) {
            let b = skew_b_lattice(mu, &rho, lambda, us, params, false)?;
            if b != zero() {
                finite += b * skew_d_lattice(nu, &rho, lam_d, vs, params)?;
            }
        }
    }
    let rhs = cross_product(us, vs, params)? * finite;
    let scale = rhs.norm().max(series.largest);
    let info = TruncationInfo {
        terms: series.terms,
        cap: Some(cap),
        tail_estimate: series.tail,
        convergence_product: Some(at),
    };
    let parameters = json!({
        "mu": sig_json(mu), "nu": sig_json(nu), "u": us, "v": vs,
        "lambda": lambda, "cap": cap, "mode": params.mode.name(),
    });
    Ok(CheckReport::build("skew_cauchy", parameters, series.total, rhs, scale, TOL_SERIES, Some(info)))
}

/// The three consequences of the skew-Cauchy identity.
#[derive(Debug, Clone, PartialEq)]
pub enum PieriInput {
    /// `Σ_κ D_κ(λ;v₁..v_l) B_{κ/ν}(λ+2ηl;u)` with one `u`.
    Pieri2 { nu: Signature, u: C64, vs: Vec<C64> },
    /// `Σ_κ D^norm_{κ/μ}(λ;v) B^norm_κ(λ+2η;u₁..u_k)` with `k = ℓ(μ)`.
    Pieri { mu: Signature, us: Vec<C64>, v: C64 },
    /// `Σ_κ D^norm_κ(λ;v₁..v_l) B^norm_κ(λ+2ηl;u₁..u_k)` over `ℓ(κ) = k`.
    Cauchy { us: Vec<C64>, vs: Vec<C64> },
}

/// `B_{0^{N+1}/0^N}(λ;u)`: one `b`-plaquette in column 0 over `N` paths.
fn b_at_origin(n: usize, lambda: C64, u: C64, params: &IrfParams) -> Result<C64> {
    let eta = params.eta;
    let c = params.column(0)?;
    let x = c.z - u;
    let num = -params.f(-lambda + x + (c.lambda - 1.0 - 2.0 * n as f64) * eta) * params.f(2.0 * eta);
    checked_ratio(num, params.f(x + (c.lambda + 1.0) * eta) * params.f(lambda), "f(z-u+(Λ+1)η)f(λ)")
}

pub fn check_pieri(input: &PieriInput, params: &IrfParams, cap: u32) -> Result<CheckReport> {
    let lambda = params.lambda0;
    let eta = params.eta;
    params.require_columns(cap as usize + 1)?;
    match input {
        PieriInput::Pieri2 { nu, u, vs } => {
            let l = vs.len();
            let n = nu.len();
            let at = monitor_convergence(&[*u], vs, lambda, n + 1, cap, params)?;
            // κ has N+1 parts, interlaces over ν, and at most l nonzero parts.
            let len = n + 1;
            let mut lo = vec![0u32; len];
            let mut hi = vec![u32::MAX; len];
            for i in 0..len {
                lo[i] = nu.parts().get(i).copied().unwrap_or(0);
                if i >= 1 {
                    hi[i] = nu.parts()[i - 1];
                }
                if i >= l {
                    hi[i] = 0;
                }
            }
            let base = Signature::repeated(0, len);
            let lam_b = lambda + 2.0 * eta * l as f64;
            let series = sum_box(&lo, &hi, cap, |kappa| {
                let d = skew_d_lattice(kappa, &base, lambda, vs, params)?;
                if d == zero() {
                    return Ok(zero());
                }
                Ok(d * skew_b_lattice(kappa, nu, lam_b, &[*u], params, false)?)
            })?;
            let rhs = b_at_origin(n, lambda, *u, params)?
                * cross_product(&[*u], vs, params)?
                * d_nu(nu, lambda + 2.0 * eta, vs, params)?;
            let info = TruncationInfo {
                terms: series.terms,
                cap: Some(cap),
                tail_estimate: series.tail,
                convergence_product: Some(at),
            };
            let parameters = json!({
                "variant": "pieri2", "nu": sig_json(nu), "u": u, "v": vs,
                "lambda": lambda, "cap": cap, "mode": params.mode.name(),
            });
            let scale = rhs.norm().max(series.largest);
            Ok(CheckReport::build("pieri2", parameters, series.total, rhs, scale, TOL_SERIES, Some(info)))
        }
        PieriInput::Pieri { mu, us, v } => {
            let k = us.len();
            if mu.len() != k {
                return Err(IrfError::InvalidInput(format!(
                    "the Pieri rule needs ℓ(μ) = k, got ℓ(μ) = {} and k = {k}",
                    mu.len()
                )));
            }
            let at = monitor_convergence(us, &[*v], lambda, k, cap, params)?;
            let lo = mu.parts().to_vec();
            let mut hi = vec![u32::MAX; k];
            for i in 1..k {
                hi[i] = mu.parts()[i - 1];
            }
            let empty = Signature::empty();
            let lam_b = lambda + 2.0 * eta;
            let d_norm = norm_factor(lambda, 1, params);
            let b_norm = norm_factor(lam_b, k, params);
            let series = sum_box(&lo, &hi, cap, |kappa| {
                let d = skew_d_lattice(kappa, mu, lambda, &[*v], params)?;
                if d == zero() {
                    return Ok(zero());
                }
                Ok(d_norm * d * b_norm * skew_b_lattice(kappa, &empty, lam_b, us, params, false)?)
            })?;
            let rhs = cross_product(us, &[*v], params)?
                * norm_factor(lambda, k, params)
                * skew_b_lattice(mu, &empty, lambda, us, params, false)?;
            let info = TruncationInfo {
                terms: series.terms,
                cap: Some(cap),
                tail_estimate: series.tail,
                convergence_product: Some(at),
            };
            let parameters = json!({
                "variant": "pieri", "mu": sig_json(mu), "u": us, "v": v,
                "lambda": lambda, "cap": cap, "mode": params.mode.name(),
            });
            let scale = rhs.norm().max(series.largest);
            Ok(CheckReport::build("pieri", parameters, series.total, rhs, scale, TOL_SERIES, Some(info)))
        }
        PieriInput::Cauchy { us, vs } => {
            let (k, l) = (us.len(), vs.len());
            if k == 0 {
                return Err(IrfError::InvalidInput("the Cauchy identity needs at least one u".into()));
            }
            let at = monitor_convergence(us, vs, lambda, k, cap, params)?;
            let lo = vec![0u32; k];
            let hi: Vec<u32> = (0..k).map(|i| if i < l { u32::MAX } else { 0 }).collect();
            let base = Signature::repeated(0, k);
            let empty = Signature::empty();
            let lam_b = lambda + 2.0 * eta * l as f64;
            let d_norm = norm_factor(lambda, l, params);
            let b_norm = norm_factor(lam_b, k, params);
            let series = sum_box(&lo, &hi, cap, |kappa| {
                let d = skew_d_lattice(kappa, &base, lambda, vs, params)?;
                if d == zero() {
                    return Ok(zero());
                }
                Ok(d_norm * d * b_norm * skew_b_lattice(kappa, &empty, lam_b, us, params, false)?)
            })?;
            let c0 = params.column(0)?;
            let mut rhs = cross_product(us, vs, params)?;
            for &u in us {
                rhs *= checked_ratio(
                    params.f(2.0 * eta) * params.f(lambda - c0.z + u + eta * (2.0 * k as f64 - 1.0 - c0.lambda)),
                    params.f(c0.z - u + eta * (c0.lambda + 1.0)),
                    "f(z₀-u+η(Λ₀+1))",
                )?;
            }
            let info = TruncationInfo {
                terms: series.terms,
                cap: Some(cap),
                tail_estimate: series.tail,
                convergence_product: Some(at),
            };
            let parameters = json!({
                "variant": "cauchy", "u": us, "v": vs,
                "lambda": lambda, "cap": cap, "mode": params.mode.name(),
            });
            let scale = rhs.norm().max(series.largest);
            Ok(CheckReport::build("cauchy", parameters, series.total, rhs, scale, TOL_SERIES, Some(info)))
        }
    }
}

/// `Σ_κ D^norm_κ(λ;ρ) B^norm_κ(λ;u₁..u_N)` against
/// `(−f(2η))^N Π f(uᵢ−p₀)/f(uᵢ−q₀)`.
pub fn check_cauchy_rho(n: usize, us: &[C64], params: &IrfParams, cap: u32) -> Result<CheckReport> {
    if params.mode != FunctionMode::Trigonometric {
        return Err(IrfError::InvalidParameter(
            "the ρ-Cauchy identity is stated in the trigonometric mode".into(),
        ));
    }
    if n == 0 || us.len() != n {
        return Err(IrfError::InvalidInput(format!(
            "ρ-Cauchy needs N ≥ 1 variables, got N = {n} with {} variables",
            us.len()
        )));
    }
    params.require_columns(cap as usize + 1)?;
    let lambda = params.lambda0;
    let eta = params.eta;
    let g = pq_grid(params);
    let empty = Signature::empty();
    let b_norm = norm_factor(lambda, n, params);
    let series = sum_box(&vec![1; n], &vec![u32::MAX; n], cap, |kappa| {
        let d = d_rho(kappa, lambda, params)?;
        Ok(d * b_norm * skew_b_lattice(kappa, &empty, lambda, us, params, false)?)
    })?;
    let mut rhs = (-params.f(2.0 * eta)).powu(n as u32);
    for &u in us {
        rhs *= checked_ratio(params.f(u - g.p[0]), params.f(u - g.q[0]), "f(u-q₀)")?;
    }
    let info = TruncationInfo {
        terms: series.terms,
        cap: Some(cap),
        tail_estimate: series.tail,
        convergence_product: None,
    };
    let parameters = json!({ "n": n, "u": us, "lambda": lambda, "cap": cap, "mode": params.mode.name() });
    let scale = rhs.norm().max(series.largest);
    Ok(CheckReport::build("cauchy_rho", parameters, series.total, rhs, scale, TOL_SERIES, Some(info)))
}

// ---------------------------------------------------------------------------
// Contour integrals

pub(crate) fn contours_for(params: &IrfParams, m: usize, max_part: u32) -> Result<ContourFamily> {
    check_admissible_columns(params, m, 0..max_part as usize + 1)
        .map_err(|d| IrfError::InvalidParameter(format!("contours are not admissible: {d}")))
}

/// `Π_{i<j} f(uᵢ−uⱼ)/f(uᵢ−uⱼ−2η)`, refusing node pairs where the
/// denominator falls below [`NESTING_GUARD`].
fn nested_kernel(us: &[C64], params: &IrfParams) -> Result<C64> {
    let eta = params.eta;
    let mut k = one();
    for i in 0..us.len() {
        for j in i + 1..us.len() {
            let d = us[i] - us[j];
            let den = params.f(d - 2.0 * eta);
            if den.norm() <= NESTING_GUARD {
                return Err(IrfError::Singular {
                    factor: "f(u_i-u_j-2η) on nested contours".into(),
                    magnitude: den.norm(),
                });
            }
            k *= params.f(d) / den;
        }
    }
    Ok(k)
}

/// `max|g|·Π rᵢ` over a coarse product grid, a bound for the loop integral.
fn trivial_bound<F>(g: &F, circles: &[Circle]) -> Result<f64>
where
    F: Fn(&[C64]) -> Result<C64>,
{
    let m = circles.len();
    let mut idx = vec![0usize; m];
    let mut pts = vec![zero(); m];
    let mut best = 0.0f64;
    loop {
        for v in 0..m {
            let e = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (idx[v] as f64 + 0.5) / BOUND_NODES as f64);
            pts[v] = circles[v].center + circles[v].radius * e;
        }
        best = best.max(g(&pts)?.norm());
        let mut v = m;
        loop {
            if v == 0 {
                return Ok(best * circles.iter().map(|c| c.radius).product::<f64>());
            }
            v -= 1;
            idx[v] += 1;
            if idx[v] < BOUND_NODES {
                break;
            }
            idx[v] = 0;
        }
    }
}

/// Integrates `g / scale` and returns the value in original units together
/// with the truncation record (tail in original units).
fn integrate<F>(g: F, circles: &[Circle], scale: f64) -> Result<(C64, TruncationInfo)>
where
    F: Fn(&[C64]) -> Result<C64> + Sync,
{
    let q = contour_integral_with(
        |u: &[C64]| Ok(g(u)? / scale),
        circles,
        QuadratureOptions::new(QUADRATURE_INITIAL_NODES, QUADRATURE_TARGET),
    )?;
    let info = TruncationInfo {
        terms: q.nodes,
        cap: None,
        tail_estimate: q.difference() * scale,
        convergence_product: None,
    };
    Ok((q.value * scale, info))
}

/// `∮ B_μ(λ;u) Π_{i<j} f(uᵢ−uⱼ)/f(uᵢ−uⱼ−2η) Π ψ-factors du/(2πi)` against
/// `c_μ·1_{ν=μ}`, with both sides reported in units of `|c_μ|`.
pub fn check_orthogonality(mu: &Signature, nu: &Signature, params: &IrfParams) -> Result<CheckReport> {
    let m = mu.len();
    if m == 0 || nu.len() != m || m > 3 {
        return Err(IrfError::InvalidInput(format!(
            "orthogonality needs ℓ(μ) = ℓ(ν) between 1 and 3, got {} and {}",
            mu.len(),
            nu.len()
        )));
    }
    let lambda = params.lambda0;
    let family = contours_for(params, m, mu.max_part().max(nu.max_part()))?;
    let c = c_mu(mu, lambda, params)?;
    let g = |u: &[C64]| -> Result<C64> {
        let mut v = b_mu(mu, lambda, u, params)? * nested_kernel(u, params)?;
        for (i, &ui) in u.iter().enumerate() {
            v *= dual_factor(nu, i + 1, lambda, ui, params)?;
        }
        Ok(v)
    };
    let scale = c.norm();
    let (integral, info) = integrate(g, &family.gammas, scale)?;
    let rhs = if mu == nu { c } else { zero() };
    let parameters = json!({
        "mu": sig_json(mu), "nu": sig_json(nu), "lambda": lambda,
        "contours": family.gammas, "mode": params.mode.name(),
    });
    Ok(CheckReport::build("orthogonality", parameters, integral, rhs, scale, TOL_QUADRATURE, Some(info)))
}

/// `D_ν(λ−2ηn; v)` from the symmetrization formula against its `N`-fold
/// contour integral representation (`n = |v|`).
pub fn check_d_integral(nu: &Signature, vs: &[C64], params: &IrfParams) -> Result<CheckReport> {
    let big_n = nu.len();
    let n = vs.len();
    if big_n == 0 || n == 0 {
        return Err(IrfError::InvalidInput("the D-integral needs N ≥ 1 and n ≥ 1".into()));
    }
    let lambda = params.lambda0;
    let eta = params.eta;
    let family = contours_for(params, big_n, nu.max_part())?;
    for &v in vs {
        if family.gammas[0].encloses(v) {
            return Err(IrfError::InvalidInput(format!("v = {v} lies inside γ₁")));
        }
    }
    let g0 = pq_grid(params);
    let q0 = g0.q[0];
    let mut pre = C64::new(if big_n % 2 == 1 { -1.0 } else { 1.0 }, 0.0) * params.f(2.0 * eta).powu(big_n as u32);
    let mut den = c_mu(nu, lambda, params)?;
    for i in -(n as i64)..big_n as i64 {
        den *= params.f(lambda + 2.0 * eta * i as f64);
    }
    pre = checked_ratio(pre, den, "Π f(λ+2ηi)·c_ν(λ)")?;
    let shift = 2.0 * eta * (big_n as f64 - n as f64);
    let g = |u: &[C64]| -> Result<C64> {
        let mut val = pre * nested_kernel(u, params)?;
        for (i, &ui) in u.iter().enumerate() {
            val *= dual_factor(nu, i + 1, lambda, ui, params)?;
            val *= params.f(lambda + ui - q0 + shift) / params.f(ui - q0);
            for &v in vs {
                val *= params.f(ui - v + 2.0 * eta) / params.f(ui - v);
            }
        }
        Ok(val)
    };
    let closed = d_nu(nu, lambda - 2.0 * eta * n as f64, vs, params)?;
    let scale = if closed.norm() > 0.0 { closed.norm() } else { trivial_bound(&g, &family.gammas)? };
    let (integral, info) = integrate(g, &family.gammas, scale)?;
    let parameters = json!({
        "nu": sig_json(nu), "n": n, "v": vs, "lambda": lambda,
        "contours": family.gammas, "mode": params.mode.name(),
    });
    Ok(CheckReport::build("d_integral", parameters, integral, closed, scale, TOL_QUADRATURE, Some(info)))
}

/// The integral defining `D^norm_ν(λ;ρ)` against its closed form (which
/// vanishes unless `ν_N ≥ 1`).
pub fn check_d_rho_integral(nu: &Signature, params: &IrfParams) -> Result<CheckReport> {
    if params.mode != FunctionMode::Trigonometric {
        return Err(IrfError::InvalidParameter(
            "the ρ-specialization is defined in the trigonometric mode".into(),
        ));
    }
    let big_n = nu.len();
    if big_n == 0 {
        return Err(IrfError::InvalidInput("the ρ-integral needs N ≥ 1".into()));
    }
    let lambda = params.lambda0;
    let eta = params.eta;
    let family = contours_for(params, big_n, nu.max_part())?;
    let g0 = pq_grid(params);
    let (p0, q0) = (g0.p[0], g0.q[0]);
    let sign = if big_n % 2 == 1 { -1.0 } else { 1.0 };
    let pre = checked_ratio(
        sign * params.f(2.0 * eta).powu(big_n as u32),
        norm_factor(lambda, big_n, params) * c_mu(nu, lambda, params)?,
        "Π f(λ+2ηi)·c_ν(λ)",
    )?;
    let g = |u: &[C64]| -> Result<C64> {
        let mut val = pre * nested_kernel(u, params)?;
        for (i, &ui) in u.iter().enumerate() {
            val *= dual_factor(nu, i + 1, lambda, ui, params)?;
            val *= params.f(ui - p0) / params.f(ui - q0);
        }
        Ok(val)
    };
    let closed = d_rho(nu, lambda, params)?;
    let scale = if closed.norm() > 0.0 { closed.norm() } else { trivial_bound(&g, &family.gammas)? };
    let (integral, info) = integrate(g, &family.gammas, scale)?;
    let parameters = json!({
        "nu": sig_json(nu), "lambda": lambda, "contours": family.gammas, "mode": params.mode.name(),
    });
    Ok(CheckReport::build("d_rho_integral", parameters, integral, closed, scale, TOL_QUADRATURE, Some(info)))
}

// ---------------------------------------------------------------------------
// Nested sums

/// Brute-force side of the nested-sum lemma: the sum over pairwise distinct
/// `1 ≤ tᵢ ≤ Tᵢ` of `Π_i Y^{(i)}_{tᵢ + inv_{≤i}}`, where `inv_{≤i}` counts
/// earlier indices `j < i` with `tⱼ > tᵢ`. `y[i][t−1]` holds `Y^{(i+1)}_t`.
pub fn nested_sum_brute(ts: &[usize], y: &[Vec<f64>]) -> f64 {
    fn go(i: usize, ts: &[usize], y: &[Vec<f64>], chosen: &mut Vec<usize>, acc: f64) -> f64 {
        if i == ts.len() {
            return acc;
        }
        let mut total = 0.0;
        for t in 1..=ts[i] {
            if chosen.contains(&t) {
                continue;
            }
            let inv = chosen.iter().filter(|&&s| s > t).count();
            let factor = y[i][t + inv - 1];
            chosen.push(t);
            total += go(i + 1, ts, y, chosen, acc * factor);
            chosen.pop();
        }
        total
    }
    go(0, ts, y, &mut Vec::with_capacity(ts.len()), 1.0)
}

/// Product side `Π_j (Y^{(j)}_j + … + Y^{(j)}_{T_j})`, zero if a sum is empty.
pub fn nested_sum_product(ts: &[usize], y: &[Vec<f64>]) -> f64 {
    ts.iter()
        .enumerate()
        .map(|(j, &t)| (j + 1..=t).map(|i| y[j][i - 1]).sum::<f64>())
        .product()
}

/// Nested-sum lemma for `n ≤ 5` and nondecreasing `T₁ ≤ … ≤ T_n ≤ 8`.
pub fn check_nested_sum_lemma(ts: &[usize], y: &[Vec<f64>]) -> Result<CheckReport> {
    let n = ts.len();
    if !(1..=5).contains(&n) || ts.iter().any(|&t| !(1..=8).contains(&t)) {
        return Err(IrfError::InvalidInput(format!(
            "the nested-sum lemma is checked for 1 ≤ n ≤ 5 and 1 ≤ T ≤ 8, got T = {ts:?}"
        )));
    }
    if ts.windows(2).any(|w| w[0] > w[1]) {
        return Err(IrfError::InvalidInput(format!(
            "the nested-sum lemma needs T₁ ≤ … ≤ T_n, got {ts:?}"
        )));
    }
    if y.len() != n || y.iter().zip(ts).any(|(row, &t)| row.len() < t) {
        return Err(IrfError::InvalidInput("Y must have n rows with at least T_j entries".into()));
    }
    let lhs = nested_sum_brute(ts, y);
    let rhs = nested_sum_product(ts, y);
    let parameters = json!({ "n": n, "T": ts, "Y": y });
    Ok(CheckReport::build(
        "nested_sum_lemma",
        parameters,
        C64::new(lhs, 0.0),
        C64::new(rhs, 0.0),
        1.0,
        1e-12,
        None,
    ))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::params::preset_trig_admissible;
    use crate::special::I;

    fn sig(p: &[u32]) -> Signature {
        Signature::new(p.to_vec()).unwrap()
    }

    fn assert_pass(r: &CheckReport) {
        assert!(r.passed, "{} failed: residual {:.3e} in {}", r.name, r.residual, r.parameters);
        assert_eq!(r.status, CheckStatus::Passed, "{}: {:?}", r.name, r.truncation_info);
    }

    /// Two `u`'s near the `p`-cluster and two `v`'s between the clusters.
    fn series_vars(params: &IrfParams) -> (Vec<C64>, Vec<C64>) {
        let g = pq_grid(params);
        let us = vec![params.w(1).unwrap(), params.w(2).unwrap()];
        let vs = vec![g.p[0] + C64::new(0.25, 0.02), g.p[0] + C64::new(0.22, -0.03)];
        (us, vs)
    }

    #[test]
    fn symmetrization_lemma_cases() {
        let beta = C64::new(0.13, 0.04);
        let trig = FunctionMode::Trigonometric;
        let one_var = check_symmetrization_lemma(1, &[C64::new(0.3, 0.1)], beta, trig).unwrap();
        assert!((one_var.lhs - 1.0).norm() < 1e-15 && (one_var.rhs - 1.0).norm() < 1e-15);

        let vs = [C64::new(0.21, 0.05), C64::new(-0.17, 0.11), C64::new(0.33, -0.08)];
        assert_pass(&check_symmetrization_lemma(3, &vs, beta, trig).unwrap());
        let ell = FunctionMode::elliptic(C64::new(0.1, 1.1)).unwrap();
        assert_pass(&check_symmetrization_lemma(3, &vs, beta, ell).unwrap());

        let special = [beta, 2.0 * beta, 3.0 * beta];
        let r = check_symmetrization_lemma(3, &special, beta, trig).unwrap();
        assert_pass(&r);
        assert_eq!(r.parameters["nonzero_terms"], 1);
    }

    #[test]
    fn skew_cauchy_cases() {
        let params = preset_trig_admissible();
        let (us, vs) = series_vars(&params);
        // The seed: μ = (0), ν = ∅ leaves a single ρ = ∅.
        assert_pass(&check_skew_cauchy(&sig(&[0]), &Signature::empty(), &us[..1], &vs[..1], &params, 12).unwrap());
        assert_pass(&check_skew_cauchy(&sig(&[2, 1]), &sig(&[1]), &us[..1], &vs[..1], &params, 12).unwrap());
        assert_pass(&check_skew_cauchy(&sig(&[3, 1, 0]), &sig(&[2]), &us, &vs, &params, 12).unwrap());
        assert!(check_skew_cauchy(&sig(&[1]), &sig(&[1]), &us[..1], &vs[..1], &params, 12).is_err());
    }

    #[test]
    fn pieri_and_cauchy_cases() {
        let params = preset_trig_admissible();
        let (us, vs) = series_vars(&params);
        let cases = [
            PieriInput::Cauchy { us: us[..1].to_vec(), vs: vs[..1].to_vec() },
            PieriInput::Cauchy { us: us.clone(), vs: vs.clone() },
            PieriInput::Pieri { mu: sig(&[2, 1]), us: us.clone(), v: vs[0] },
            PieriInput::Pieri2 { nu: Signature::empty(), u: us[0], vs: vs[..1].to_vec() },
            PieriInput::Pieri2 { nu: sig(&[2, 0]), u: us[0], vs: vs.clone() },
        ];
        for case in &cases {
            let r = check_pieri(case, &params, 12).unwrap();
            assert!(r.residual < 1e-8, "{r:?}");
            assert_pass(&r);
        }
    }

    #[test]
    fn pieri2_needs_z0_in_prefactor() {
        // Dropping z₀ and flipping the sign of the Λ₀ shift breaks the identity.
        let params = preset_trig_admissible();
        let (us, vs) = series_vars(&params);
        let (eta, lam, c0) = (params.eta, params.lambda0, params.column(0).unwrap());
        let nu = sig(&[1]);
        let r = check_pieri(&PieriInput::Pieri2 { nu: nu.clone(), u: us[0], vs: vs[..1].to_vec() }, &params, 12).unwrap();
        assert_pass(&r);
        let altered = params.f(lam + us[0] + (c0.lambda - 3.0) * eta) / params.f(c0.z - us[0] + (c0.lambda + 1.0) * eta)
            * params.f(2.0 * eta)
            / params.f(lam)
            * cross_product(&us[..1], &vs[..1], &params).unwrap()
            * d_nu(&nu, lam + 2.0 * eta, &vs[..1], &params).unwrap();
        assert!((r.lhs * r.scale - altered).norm() > 0.1 * altered.norm());
    }

    #[test]
    fn cauchy_rho_cases() {
        let params = preset_trig_admissible();
        let (us, _) = series_vars(&params);
        assert_pass(&check_cauchy_rho(1, &us[..1], &params, 16).unwrap());
        assert_pass(&check_cauchy_rho(2, &us, &params, 16).unwrap());
        assert_pass(&check_cauchy_rho(2, &[us[0], us[0]], &params, 16).unwrap());
    }

    #[test]
    fn orthogonality_cases() {
        let params = preset_trig_admissible();
        assert_pass(&check_orthogonality(&sig(&[1]), &sig(&[1]), &params).unwrap());
        let off = check_orthogonality(&sig(&[2]), &sig(&[1]), &params).unwrap();
        assert_pass(&off);
        assert_eq!(off.rhs, C64::new(0.0, 0.0));
        assert_pass(&check_orthogonality(&sig(&[2, 1]), &sig(&[2, 1]), &params).unwrap());
    }

    #[test]
    fn d_integral_cases() {
        let params = preset_trig_admissible();
        for (nu, n) in [(&[1u32][..], 1usize), (&[2, 1], 2), (&[1, 0], 1)] {
            let fam = contours_for(&params, nu.len(), nu[0]).unwrap();
            let outer = fam.gammas[0];
            let vs: Vec<C64> = (0..n).map(|j| outer.center - (outer.radius + 0.1 + 0.03 * j as f64)).collect();
            assert_pass(&check_d_integral(&sig(nu), &vs, &params).unwrap());
        }
        // A v inside γ₁ is rejected.
        let fam = contours_for(&params, 1, 1).unwrap();
        assert!(check_d_integral(&sig(&[1]), &[fam.gammas[0].center], &params).is_err());
    }

    #[test]
    fn d_rho_integral_vanishes_for_zero_part() {
        let params = preset_trig_admissible();
        assert_pass(&check_d_rho_integral(&sig(&[2, 1]), &params).unwrap());
        let zero_part = check_d_rho_integral(&sig(&[2, 0]), &params).unwrap();
        assert_pass(&zero_part);
        assert_eq!(zero_part.rhs, C64::new(0.0, 0.0));
    }

    fn random_table(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn nested_sum_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = random_table(&mut rng, 1, 4);
        let r = check_nested_sum_lemma(&[4], &y).unwrap();
        assert!((r.lhs.re - y[0].iter().sum::<f64>()).abs() < 1e-15);

        let y = random_table(&mut rng, 2, 8);
        let r = check_nested_sum_lemma(&[1, 1], &y).unwrap();
        assert_eq!((r.lhs, r.rhs), (C64::new(0.0, 0.0), C64::new(0.0, 0.0)));

        let y = random_table(&mut rng, 3, 8);
        assert_pass(&check_nested_sum_lemma(&[2, 3, 5], &y).unwrap());
        for _ in 0..20 {
            let n = rng.gen_range(1..=5);
            let mut ts: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=8)).collect();
            ts.sort_unstable();
            let y = random_table(&mut rng, n, 8);
            assert_pass(&check_nested_sum_lemma(&ts, &y).unwrap());
        }
        assert!(check_nested_sum_lemma(&[3, 2], &random_table(&mut rng, 2, 8)).is_err());
    }

    #[test]
    fn reports_round_trip_and_downgrade() {
        let r = check_symmetrization_lemma(2, &[C64::new(0.2, 0.1), C64::new(-0.3, 0.05)], 0.1 * I + 0.07, FunctionMode::Trigonometric)
            .unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: CheckReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert!(text.contains("\"status\":\"passed\""));

        let info = TruncationInfo { terms: 3, cap: Some(3), tail_estimate: 1e-3, convergence_product: None };
        let warned = CheckReport::build("t", Value::Null, one(), one(), 1.0, 1e-7, Some(info));
        assert!(warned.passed);
        assert_eq!(warned.status, CheckStatus::PassedWithWarning);
        let failed = warned.with_tolerance(0.0).with_tolerance(-1.0);
        assert_eq!(failed.status, CheckStatus::Failed);
    }
}
