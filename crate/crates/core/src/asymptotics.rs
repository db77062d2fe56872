//! Large-time behaviour of the dynamic SSEP from the step initial condition:
//! the hydrodynamic profile `H(χ, τ)`, the limits of the four scaling
//! regimes of `λ̄`, and gamma-law moments.

use std::f64::consts::PI;

use serde::Serialize;
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{IrfError, Result};
use crate::identities::CheckReport;
use crate::observables::{ssep_integral, Horizon, ObservableSpec};
use crate::samplers::{run_trajectories, ExclusionKind, ExclusionState, SimulationOptions};
use crate::special::{erfc_real, rising_factorial, C64};

/// Step of the central differences used for the heat-equation residual.
pub const FD_STEP: f64 = 1e-4;

/// Tolerances for the finite-`L` comparisons.
pub const HYDRO_TOL: f64 = 0.02;
pub const MOMENT_TOL_N1: f64 = 0.05;
pub const MOMENT_TOL_N2: f64 = 0.08;

fn require_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(IrfError::InvalidParameter(format!("τ must be positive, got {tau}")));
    }
    Ok(())
}

/// `H(χ,τ) = √(τ/π) e^{−χ²/4τ} − (χ/2) erfc(χ/(2√τ))`.
pub fn h_profile(chi: f64, tau: f64) -> Result<f64> {
    require_tau(tau)?;
    Ok((tau / PI).sqrt() * (-chi * chi / (4.0 * tau)).exp() - 0.5 * chi * erfc_real(chi / (2.0 * tau.sqrt())))
}

/// `∂H/∂τ − ∂²H/∂χ²` by central differences with step [`FD_STEP`].
pub fn heat_residual(chi: f64, tau: f64) -> Result<f64> {
    let h = FD_STEP;
    require_tau(tau - h)?;
    let dt = (h_profile(chi, tau + h)? - h_profile(chi, tau - h)?) / (2.0 * h);
    let dxx = (h_profile(chi + h, tau)? - 2.0 * h_profile(chi, tau)? + h_profile(chi - h, tau)?) / (h * h);
    Ok(dt - dxx)
}

/// `m`-th moment `b^m (a)_m` of the gamma law with shape `a` and scale `b`.
pub fn gamma_moment(a: f64, b: f64, m: usize) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(IrfError::InvalidParameter(format!("gamma parameters must be positive, got ({a}, {b})")));
    }
    Ok(b.powi(m as i32) * rising_factorial(C64::new(a, 0.0), m).re)
}

/// How `λ̄` scales with the large parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "regime")]
pub enum Regime {
    /// `λ̄ ≫ L^{1/2}`: the usual SSEP profile.
    I,
    /// `λ̄ = l·L^{1/2}`.
    II { l: f64 },
    /// `1 ≪ λ̄ ≪ L^{1/2}`, heights of order `(λ̄²L)^{1/4}`.
    III,
    /// `λ̄` fixed, heights of order `L^{1/4}` with a random limit.
    IV { lambda_bar: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeSpec {
    pub regime: Regime,
    pub chi: f64,
    pub tau: f64,
}

impl RegimeSpec {
    pub fn new(regime: Regime, chi: f64, tau: f64) -> Result<Self> {
        require_tau(tau)?;
        match regime {
            Regime::II { l } if !(l > 0.0 && l.is_finite()) => {
                return Err(IrfError::InvalidParameter(format!("regime II needs l in (0, ∞), got {l}")))
            }
            Regime::IV { lambda_bar } if !(lambda_bar > 0.0) => {
                return Err(IrfError::InvalidParameter(format!("regime IV needs λ̄ > 0, got {lambda_bar}")))
            }
            _ => {}
        }
        Ok(RegimeSpec { regime, chi, tau })
    }
}

/// Limit of the rescaled height in one of the regimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LimitProfile {
    Deterministic { value: f64 },
    /// `√(Y + (χ/2)²) − χ/2` with `Y ~ Γ(shape, scale)`.
    Random { shape: f64, scale: f64, chi: f64 },
}

impl LimitProfile {
    /// Image of a gamma variate under the height map.
    pub fn height_of(chi: f64, y: f64) -> f64 {
        (y + chi * chi / 4.0).sqrt() - chi / 2.0
    }

    /// Distribution function of the limit at `v`.
    pub fn cdf(&self, v: f64) -> Result<f64> {
        match *self {
            LimitProfile::Deterministic { value } => Ok(if v >= value { 1.0 } else { 0.0 }),
            LimitProfile::Random { shape, scale, chi } => {
                // √(Y + χ²/4) − χ/2 ≤ v  ⇔  Y ≤ v² + vχ  (the map is increasing in Y)
                let lo = LimitProfile::height_of(chi, 0.0);
                if v < lo {
                    return Ok(0.0);
                }
                let g = Gamma::new(shape, 1.0 / scale)
                    .map_err(|e| IrfError::InvalidParameter(format!("gamma law: {e}")))?;
                Ok(g.cdf(v * v + v * chi))
            }
        }
    }
}

/// The limiting profile of a regime.
pub fn limit_profile(spec: &RegimeSpec) -> Result<LimitProfile> {
    let (chi, tau) = (spec.chi, spec.tau);
    Ok(match spec.regime {
        Regime::I => LimitProfile::Deterministic { value: h_profile(chi, tau)? },
        Regime::II { l } => {
            let c = (chi + l) / 2.0;
            LimitProfile::Deterministic {
                value: (l * h_profile(chi, tau)? + c * c).sqrt() - c,
            }
        }
        Regime::III => LimitProfile::Deterministic {
            value: ((tau / PI).sqrt() + chi * chi / 4.0).sqrt() - chi / 2.0,
        },
        Regime::IV { lambda_bar } => LimitProfile::Random {
            shape: lambda_bar,
            scale: (tau / PI).sqrt(),
            chi,
        },
    })
}

/// `E[Π_{k<n}(h(x,t) − k)]` for the usual SSEP from the exact integral.
pub fn usual_factorial_moment(n: usize, x: i64, t: f64) -> Result<f64> {
    let spec = ObservableSpec::new(vec![x; n], Horizon::Time(t))?;
    let v = ssep_integral(&spec)?.value;
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(sign * v.re)
}

/// Raw moments `E[O^m]`, `m = 1..=n`, of the dynamic SSEP observable
/// `O = h(h + x + λ̄)`, from the bridge
/// `E[Π_{k<m}(O − k(λ̄+x) − k²)] = (λ̄)_m E[Π_{k<m}(h − k)]`.
pub fn observable_moments(n: usize, x: i64, t: f64, lambda_bar: f64) -> Result<Vec<f64>> {
    let c = |k: usize| k as f64 * (lambda_bar + x as f64) + (k * k) as f64;
    let mut raw = vec![1.0]; // raw[m] = E[O^m]
    for m in 1..=n {
        let target = rising_factorial(C64::new(lambda_bar, 0.0), m).re * usual_factorial_moment(m, x, t)?;
        // Π_{k<m}(O − c_k) = Σ_j e_j O^j; the top coefficient is one
        let mut poly = vec![1.0];
        for k in 0..m {
            let mut next = vec![0.0; poly.len() + 1];
            for (j, &a) in poly.iter().enumerate() {
                next[j + 1] += a;
                next[j] -= a * c(k);
            }
            poly = next;
        }
        let lower: f64 = (0..m).map(|j| poly[j] * raw[j]).sum();
        raw.push(target - lower);
    }
    Ok(raw[1..].to_vec())
}

/// Compares `E[O(0, Lτ)^n]` with `L^{n/2}(λ̄)_n(τ/π)^{n/2}`.
pub fn regime_moment_check(n: usize, l: f64, tau: f64, lambda_bar: f64) -> Result<CheckReport> {
    require_tau(tau)?;
    if !(1..=3).contains(&n) {
        return Err(IrfError::InvalidInput(format!("moment order must be 1, 2 or 3, got {n}")));
    }
    let t = l * tau;
    let moments = observable_moments(n, 0, t, lambda_bar)?;
    let exact = moments[n - 1];
    let predicted = l.powf(n as f64 / 2.0) * gamma_moment(lambda_bar, (tau / PI).sqrt(), n)?;
    let tol = if n == 1 { MOMENT_TOL_N1 } else { MOMENT_TOL_N2 };
    Ok(CheckReport::build(
        &format!("regime_iv_moment_n{n}"),
        json!({"n": n, "L": l, "tau": tau, "lambda_bar": lambda_bar}),
        C64::new(exact / predicted, 0.0),
        C64::new(1.0, 0.0),
        1.0,
        tol,
        None,
    ))
}

/// `L^{−1/2} E h(L^{1/2}χ, Lτ)` for the usual SSEP from the exact integral.
pub fn scaled_mean_height(l: f64, chi: f64, tau: f64) -> Result<f64> {
    require_tau(tau)?;
    let x = (l.sqrt() * chi).round() as i64;
    Ok(usual_factorial_moment(1, x, l * tau)? / l.sqrt())
}

/// Compares the scaled mean height with `H(χ, τ)` within [`HYDRO_TOL`].
pub fn hydrodynamic_check(l: f64, chi: f64, tau: f64) -> Result<CheckReport> {
    let exact = scaled_mean_height(l, chi, tau)?;
    let h = h_profile(chi, tau)?;
    Ok(CheckReport::build(
        "hydrodynamic_limit",
        json!({"L": l, "chi": chi, "tau": tau}),
        C64::new(exact, 0.0),
        C64::new(h, 0.0),
        h,
        HYDRO_TOL,
        None,
    ))
}

/// Bound on the finite-difference heat-equation residual of `H`.
pub const HEAT_TOL: f64 = 1e-5;

/// `∂H/∂τ − ∂²H/∂χ²` at one point, as a report with tolerance [`HEAT_TOL`].
pub fn heat_check(chi: f64, tau: f64) -> Result<CheckReport> {
    let res = heat_residual(chi, tau)?;
    Ok(CheckReport::build(
        "heat_equation",
        json!({"chi": chi, "tau": tau, "H": h_profile(chi, tau)?}),
        C64::new(res, 0.0),
        C64::new(0.0, 0.0),
        1.0,
        HEAT_TOL,
        None,
    ))
}

/// One row of the profile table: `χ`, the limit `H`, the finite-`L`
/// exact value and optionally a Monte Carlo mean.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProfileRow {
    pub chi: f64,
    pub profile: f64,
    pub exact: f64,
    pub empirical: Option<f64>,
}

/// Profile table on a grid of `χ`, with Monte Carlo means of the usual
/// SSEP when `trajectories > 0`.
pub fn profile_table(l: f64, tau: f64, chis: &[f64], trajectories: usize, seed: u64) -> Result<Vec<ProfileRow>> {
    let t = l * tau;
    let xs: Vec<i64> = chis.iter().map(|c| (l.sqrt() * c).round() as i64).collect();
    let empirical = if trajectories > 0 {
        let kind = ExclusionKind::DynamicSsep { lambda_bar: USUAL_SSEP_LAMBDA };
        let reach = xs.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
        let init = ExclusionState::step(kind, reach + 8)?;
        let hs = run_trajectories(&init, t, seed, trajectories, SimulationOptions::default(), |s| {
            xs.iter().map(|&x| s.height(x) as f64).collect::<Vec<f64>>()
        })?;
        Some(
            (0..xs.len())
                .map(|i| hs.iter().map(|h| h[i]).sum::<f64>() / trajectories as f64 / l.sqrt())
                .collect::<Vec<f64>>(),
        )
    } else {
        None
    };
    chis.iter()
        .enumerate()
        .map(|(i, &chi)| {
            Ok(ProfileRow {
                chi,
                profile: h_profile(chi, tau)?,
                exact: scaled_mean_height(l, chi, tau)?,
                empirical: empirical.as_ref().map(|e| e[i]),
            })
        })
        .collect()
}

/// `λ̄` large enough that the dynamic SSEP rates equal one to double
/// precision for every reachable height.
pub const USUAL_SSEP_LAMBDA: f64 = 1e15;

/// Result of the soft distributional check in regime IV.
#[derive(Debug, Clone, Serialize)]
pub struct KsReport {
    #[serde(rename = "L")]
    pub l: f64,
    pub chi: f64,
    pub tau: f64,
    pub lambda_bar: f64,
    pub trajectories: usize,
    pub distance: f64,
    pub threshold: f64,
    pub within: bool,
}

/// Kolmogorov–Smirnov distance between the empirical law of
/// `L^{−1/4} h(L^{1/4}χ, Lτ)` and the regime IV limit.
pub fn regime_iv_ks(l: f64, chi: f64, tau: f64, lambda_bar: f64, trajectories: usize, seed: u64) -> Result<KsReport> {
    let spec = RegimeSpec::new(Regime::IV { lambda_bar }, chi, tau)?;
    let limit = limit_profile(&spec)?;
    let scale = l.powf(0.25);
    let x = (scale * chi).round() as i64;
    let kind = ExclusionKind::DynamicSsep { lambda_bar };
    let init = ExclusionState::step(kind, x.unsigned_abs() as usize + 8)?;
    let mut hs = run_trajectories(&init, l * tau, seed, trajectories, SimulationOptions::default(), |s| {
        s.height(x) as f64 / scale
    })?;
    hs.sort_by(f64::total_cmp);
    let n = hs.len() as f64;
    let mut distance: f64 = 0.0;
    let mut i = 0;
    while i < hs.len() {
        let v = hs[i];
        let mut j = i;
        while j < hs.len() && hs[j] == v {
            j += 1;
        }
        let f = limit.cdf(v)?;
        distance = distance.max((f - i as f64 / n).abs()).max((f - j as f64 / n).abs());
        i = j;
    }
    Ok(KsReport {
        l,
        chi,
        tau,
        lambda_bar,
        trajectories,
        distance,
        threshold: 0.05,
        within: distance <= 0.05,
    })
}
