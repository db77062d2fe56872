//! Theta and sine functions, q-Pochhammer symbols, `erfc` and a trapezoidal
//! quadrature engine for products of circles.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IrfError, Result};

pub type C64 = Complex64;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Absolute tail bound used when `f` is evaluated through the theta series.
const THETA_TOL: f64 = 1e-18;

/// The function `f` entering all weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FunctionMode {
    /// `f(z) = θ(z, τ)`, requires `Im τ > 0`.
    Elliptic { tau: C64 },
    /// `f(z) = sin(πz)`.
    Trigonometric,
    /// `f(z) = z`.
    Rational,
}

impl FunctionMode {
    pub fn elliptic(tau: C64) -> Result<Self> {
        if tau.im <= 0.0 {
            return Err(IrfError::InvalidParameter(format!(
                "elliptic nome needs Im(tau) > 0, got {tau}"
            )));
        }
        Ok(FunctionMode::Elliptic { tau })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionMode::Elliptic { tau } => FunctionMode::elliptic(*tau).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FunctionMode::Elliptic { .. } => "elliptic",
            FunctionMode::Trigonometric => "trigonometric",
            FunctionMode::Rational => "rational",
        }
    }
}

/// Number of half-integer indices `|j + 1/2| <= J` needed so that the
/// discarded part of the theta series stays below `tol`.
fn theta_cutoff(z: C64, tau: C64, tol: f64) -> i64 {
    let t = tau.im;
    let shift = z.im.abs() / t;
    let spread = ((1.0 / tol).ln().max(1.0) / (PI * t)).sqrt();
    (shift + spread).ceil() as i64 + 1
}

/// Odd theta function `θ(z,τ) = −Σ_j exp(πi(j+½)²τ + 2πi(j+½)(z+½))`.
pub fn theta(z: C64, tau: C64, tol: f64) -> Result<C64> {
    if tau.im <= 0.0 {
        return Err(IrfError::InvalidParameter(format!(
            "theta needs Im(tau) > 0, got {tau}"
        )));
    }
    if !(tol > 0.0) {
        return Err(IrfError::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let cut = theta_cutoff(z, tau, tol);
    let mut sum = C64::new(0.0, 0.0);
    for j in -cut - 1..=cut {
        let h = j as f64 + 0.5;
        if h.abs() > cut as f64 {
            continue;
        }
        sum += (I * PI * h * h * tau + 2.0 * PI * I * h * (z + 0.5)).exp();
    }
    Ok(-sum)
}

/// Derivative of [`theta`] in `z`, from the term-wise differentiated series.
pub fn theta_derivative(z: C64, tau: C64, tol: f64) -> Result<C64> {
    if tau.im <= 0.0 {
        return Err(IrfError::InvalidParameter(format!(
            "theta needs Im(tau) > 0, got {tau}"
        )));
    }
    // The extra factor 2π|h| is absorbed by one more index of margin.
    let cut = theta_cutoff(z, tau, tol) + 1;
    let mut sum = C64::new(0.0, 0.0);
    for j in -cut - 1..=cut {
        let h = j as f64 + 0.5;
        if h.abs() > cut as f64 {
            continue;
        }
        sum += 2.0 * PI * I * h * (I * PI * h * h * tau + 2.0 * PI * I * h * (z + 0.5)).exp();
    }
    Ok(-sum)
}

/// Evaluates `f` in the given mode.
///
/// The elliptic nome is assumed valid (checked when parameters are built);
/// an invalid one yields `NaN`.
pub fn f_eval(mode: FunctionMode, z: C64) -> C64 {
    match mode {
        FunctionMode::Trigonometric => (PI * z).sin(),
        FunctionMode::Rational => z,
        FunctionMode::Elliptic { tau } => {
            theta(z, tau, THETA_TOL).unwrap_or(C64::new(f64::NAN, f64::NAN))
        }
    }
}

/// `f'(0)`: `π` for the sine, `1` for the rational case.
pub fn f_prime_zero(mode: FunctionMode) -> C64 {
    match mode {
        FunctionMode::Trigonometric => C64::new(PI, 0.0),
        FunctionMode::Rational => C64::new(1.0, 0.0),
        FunctionMode::Elliptic { tau } => theta_derivative(C64::new(0.0, 0.0), tau, THETA_TOL)
            .unwrap_or(C64::new(f64::NAN, f64::NAN)),
    }
}

/// `(x; q)_n = (1 − x)(1 − qx)···(1 − q^{n−1}x)`.
pub fn q_pochhammer(x: C64, q: C64, n: usize) -> C64 {
    let mut acc = C64::new(1.0, 0.0);
    let mut qk = C64::new(1.0, 0.0);
    for _ in 0..n {
        acc *= 1.0 - qk * x;
        qk *= q;
    }
    acc
}

/// Rising factorial `(a)_n = a(a+1)···(a+n−1)`.
pub fn rising_factorial(a: C64, n: usize) -> C64 {
    (0..n).fold(C64::new(1.0, 0.0), |acc, k| acc * (a + k as f64))
}

/// Complementary error function.
///
/// Delegates to `libm`, a port of the fdlibm rational approximations
/// (error within one ulp on the real line).
pub fn erfc_real(x: f64) -> f64 {
    libm::erfc(x)
}

/// A positively oriented circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: C64,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: C64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(IrfError::InvalidParameter(format!(
                "circle radius must be positive, got {radius}"
            )));
        }
        Ok(Circle { center, radius })
    }

    /// Whether `p` lies strictly inside the circle.
    pub fn encloses(&self, p: C64) -> bool {
        (p - self.center).norm() < self.radius
    }
}

/// Node-doubling policy for [`contour_integral_with`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub initial_nodes: usize,
    /// Convergence threshold on `|I_{2K} − I_K| / max(1, |I_{2K}|)`.
    pub tol: f64,
    pub max_nodes_per_variable: usize,
    /// Upper bound on `K^m` for a single pass.
    pub max_evaluations: u64,
}

impl QuadratureOptions {
    pub fn new(initial_nodes: usize, tol: f64) -> Self {
        QuadratureOptions {
            initial_nodes,
            tol,
            max_nodes_per_variable: 1 << 14,
            max_evaluations: 1 << 26,
        }
    }
}

/// Value and bookkeeping of a converged quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: C64,
    pub previous: C64,
    pub nodes: usize,
    pub evaluations: u64,
}

impl Quadrature {
    pub fn difference(&self) -> f64 {
        (self.value - self.previous).norm()
    }
}

/// Trapezoidal rule with `k` nodes per circle, normalized by `(2πi)^{-m}`.
fn trapezoid<F>(integrand: &F, circles: &[Circle], k: usize) -> Result<C64>
where
    F: Fn(&[C64]) -> Result<C64> + Sync,
{
    let m = circles.len();
    // points[var][node] = (v, weight) with weight = r e^{iθ} / k.
    let points: Vec<Vec<(C64, C64)>> = circles
        .iter()
        .map(|c| {
            (0..k)
                .map(|j| {
                    let e = C64::from_polar(1.0, 2.0 * PI * j as f64 / k as f64);
                    (c.center + c.radius * e, c.radius * e / k as f64)
                })
                .collect()
        })
        .collect();
    if m == 0 {
        return integrand(&[]);
    }
    let partial: Vec<Result<C64>> = (0..k)
        .into_par_iter()
        .map(|first| {
            let mut vars = vec![C64::new(0.0, 0.0); m];
            let mut idx = vec![0usize; m];
            idx[0] = first;
            let mut sum = C64::new(0.0, 0.0);
            loop {
                let mut w = C64::new(1.0, 0.0);
                for v in 0..m {
                    let (p, wt) = points[v][idx[v]];
                    vars[v] = p;
                    w *= wt;
                }
                sum += w * integrand(&vars)?;
                // Odometer over variables 1..m.
                let mut v = m;
                loop {
                    if v == 1 {
                        return Ok(sum);
                    }
                    v -= 1;
                    idx[v] += 1;
                    if idx[v] < k {
                        break;
                    }
                    idx[v] = 0;
                }
            }
        })
        .collect();
    let mut total = C64::new(0.0, 0.0);
    for p in partial {
        total += p?;
    }
    Ok(total)
}

/// Multi-variable loop integral `∮…∮ g(v) Π dv_i/(2πi)` over circles, with
/// node doubling until successive estimates agree.
///
/// The summation order is fixed, so the result does not depend on the size
/// of the rayon thread pool.
pub fn contour_integral_with<F>(
    integrand: F,
    circles: &[Circle],
    opts: QuadratureOptions,
) -> Result<Quadrature>
where
    F: Fn(&[C64]) -> Result<C64> + Sync,
{
    if opts.initial_nodes < 16 {
        return Err(IrfError::InvalidParameter(format!(
            "at least 16 quadrature nodes are required, got {}",
            opts.initial_nodes
        )));
    }
    let m = circles.len() as u32;
    let budget = |k: usize| (k as u64).checked_pow(m).is_some_and(|e| e <= opts.max_evaluations);
    let mut k = opts.initial_nodes;
    let mut previous = trapezoid(&integrand, circles, k)?;
    let mut evaluations = (k as u64).pow(m);
    loop {
        let next_k = 2 * k;
        if next_k > opts.max_nodes_per_variable || !budget(next_k) {
            return Err(IrfError::Convergence {
                previous,
                last: previous,
                nodes: k,
            });
        }
        let value = trapezoid(&integrand, circles, next_k)?;
        evaluations += (next_k as u64).pow(m);
        let diff = (value - previous).norm();
        if diff < opts.tol * value.norm().max(1.0) {
            return Ok(Quadrature {
                value,
                previous,
                nodes: next_k,
                evaluations,
            });
        }
        if 2 * next_k > opts.max_nodes_per_variable || !budget(2 * next_k) {
            return Err(IrfError::Convergence {
                previous,
                last: value,
                nodes: next_k,
            });
        }
        previous = value;
        k = next_k;
    }
}

/// [`contour_integral_with`] with the default cap of `2^14` nodes per variable.
pub fn contour_integral<F>(integrand: F, circles: &[Circle], nodes: usize, tol: f64) -> Result<C64>
where
    F: Fn(&[C64]) -> Result<C64> + Sync,
{
    contour_integral_with(integrand, circles, QuadratureOptions::new(nodes, tol)).map(|q| q.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn theta_vanishes_at_origin() {
        assert!(theta(c(0.0, 0.0), c(0.0, 2.0), 1e-15).unwrap().norm() < 1e-15);
    }

    #[test]
    fn theta_rejects_lower_half_plane() {
        assert!(matches!(
            theta(c(0.1, 0.0), c(0.3, -1.0), 1e-12),
            Err(IrfError::InvalidParameter(_))
        ));
        assert!(FunctionMode::elliptic(c(0.0, 0.0)).is_err());
    }

    #[test]
    fn theta_is_antiperiodic() {
        let tau = c(0.0, 1.5);
        let z = c(0.3, 0.1);
        let a = theta(z + 1.0, tau, 1e-16).unwrap();
        let b = theta(z, tau, 1e-16).unwrap();
        assert!((a + b).norm() < 1e-12 * b.norm());
    }

    #[test]
    fn theta_degenerates_to_sine() {
        let tau = c(0.0, 10.0);
        let v = theta(c(0.25, 0.0), tau, 1e-20).unwrap() / (2.0 * (-10.0 * PI / 4.0).exp());
        assert!((v - c((PI / 4.0).sin(), 0.0)).norm() < 1e-6);
    }

    #[test]
    fn theta_derivative_matches_difference_quotient() {
        let tau = c(0.1, 0.9);
        let z = c(0.2, -0.1);
        let h = 1e-5;
        let fd = (theta(z + h, tau, 1e-16).unwrap() - theta(z - h, tau, 1e-16).unwrap()) / (2.0 * h);
        let d = theta_derivative(z, tau, 1e-16).unwrap();
        assert!((fd - d).norm() < 1e-7 * d.norm().max(1.0));
    }

    #[test]
    fn f_eval_examples() {
        assert!((f_eval(FunctionMode::Trigonometric, c(0.5, 0.0)) - 1.0).norm() < 1e-15);
        let z = c(0.2, 0.3);
        let m = FunctionMode::Trigonometric;
        assert!((f_eval(m, -z) + f_eval(m, z)).norm() < 1e-15);
        assert_eq!(f_eval(FunctionMode::Rational, c(2.5, 0.0)), c(2.5, 0.0));
        assert_eq!(f_prime_zero(FunctionMode::Rational), c(1.0, 0.0));
    }

    #[test]
    fn pochhammer_examples() {
        let q = c(0.3, 0.2);
        assert_eq!(q_pochhammer(c(0.7, 0.1), q, 0), c(1.0, 0.0));
        assert_eq!(q_pochhammer(c(1.0, 0.0), q, 3), c(0.0, 0.0));
        assert!((q_pochhammer(c(0.5, 0.0), c(0.5, 0.0), 2) - 0.375).norm() < 1e-15);
        assert!((rising_factorial(c(2.0, 0.0), 3) - 24.0).norm() < 1e-12);
    }

    #[test]
    fn erfc_examples() {
        assert_eq!(erfc_real(0.0), 1.0);
        assert!((erfc_real(-0.7) - (2.0 - erfc_real(0.7))).abs() < 1e-15);
        let frozen = 0.157_299_207_050_285_13;
        assert!((erfc_real(1.0) - frozen).abs() < 1e-12 * frozen);
    }

    #[test]
    fn quadrature_examples() {
        let unit = Circle::new(c(0.0, 0.0), 1.0).unwrap();
        let v = contour_integral(|v| Ok(1.0 / v[0]), &[unit], 16, 1e-12).unwrap();
        assert!((v - 1.0).norm() < 1e-12);
        let v = contour_integral(|v| Ok(1.0 / (v[0] - 5.0)), &[unit], 16, 1e-12).unwrap();
        assert!(v.norm() < 1e-12);
        let two = Circle::new(c(0.0, 0.0), 2.0).unwrap();
        let v = contour_integral(|v| Ok(1.0 / (v[0] * v[1])), &[unit, two], 16, 1e-12).unwrap();
        assert!((v - 1.0).norm() < 1e-12);
    }

    #[test]
    fn quadrature_reports_nonconvergence() {
        let unit = Circle::new(c(0.0, 0.0), 1.0).unwrap();
        let opts = QuadratureOptions {
            initial_nodes: 16,
            tol: 1e-14,
            max_nodes_per_variable: 64,
            max_evaluations: 1 << 20,
        };
        // Pole at distance 1e-3 from the contour.
        let r = contour_integral_with(|v| Ok(1.0 / (v[0] - 1.001)), &[unit], opts);
        assert!(matches!(r, Err(IrfError::Convergence { .. })));
        assert!(Circle::new(c(0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn quadrature_needs_sixteen_nodes() {
        let unit = Circle::new(c(0.0, 0.0), 1.0).unwrap();
        assert!(contour_integral(|v| Ok(1.0 / v[0]), &[unit], 8, 1e-12).is_err());
    }
}
