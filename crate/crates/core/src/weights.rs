//! Plaquette weights: the operator coefficients, their pre-stochastic
//! renormalization, and the higher-spin six-vertex, dynamic six-vertex and
//! rational degenerations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{IrfError, Result};
use crate::params::IrfParams;
use crate::special::{f_eval, FunctionMode, C64, I};

/// Relative size below which a denominator counts as vanishing.
pub const SINGULAR_THRESHOLD: f64 = 1e-13;

/// The four plaquette types. `A` and `D` keep the vertical occupation,
/// `B` increments it (absorbing the path from the left) and `C` decrements
/// it (emitting a path to the right).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlaquetteKind {
    A,
    B,
    C,
    D,
}

impl PlaquetteKind {
    pub const ALL: [PlaquetteKind; 4] = [PlaquetteKind::A, PlaquetteKind::B, PlaquetteKind::C, PlaquetteKind::D];

    /// Whether a path enters the plaquette from the left.
    pub fn path_in(self) -> bool {
        matches!(self, PlaquetteKind::B | PlaquetteKind::D)
    }

    /// Whether a path leaves the plaquette to the right.
    pub fn path_out(self) -> bool {
        matches!(self, PlaquetteKind::C | PlaquetteKind::D)
    }

    /// Vertical occupation above the plaquette given the one below.
    pub fn output(self, k: u32) -> Option<u32> {
        match self {
            PlaquetteKind::A | PlaquetteKind::D => Some(k),
            PlaquetteKind::B => Some(k + 1),
            PlaquetteKind::C => k.checked_sub(1),
        }
    }

    /// The plaquette determined by the horizontal occupations on both sides.
    pub fn from_paths(path_in: bool, path_out: bool) -> PlaquetteKind {
        match (path_in, path_out) {
            (false, false) => PlaquetteKind::A,
            (true, false) => PlaquetteKind::B,
            (false, true) => PlaquetteKind::C,
            (true, true) => PlaquetteKind::D,
        }
    }
}

/// Local data needed to evaluate a plaquette weight.
#[derive(Debug, Clone, Copy)]
pub struct WeightContext {
    /// Filling of the top-left unit square.
    pub lambda: C64,
    pub w: C64,
    pub z: C64,
    pub cap_lambda: C64,
    pub eta: C64,
    pub mode: FunctionMode,
}

impl WeightContext {
    /// Context for column `j` and row parameter `w` of a parameter pack.
    pub fn at(params: &IrfParams, column: usize, w: C64, lambda: C64) -> Result<Self> {
        let col = params.column(column)?;
        Ok(WeightContext {
            lambda,
            w,
            z: col.z,
            cap_lambda: col.lambda,
            eta: params.eta,
            mode: params.mode,
        })
    }

    fn f(&self, x: C64) -> C64 {
        f_eval(self.mode, x)
    }
}

/// `num / den`, refusing denominators that vanish relative to the numerator.
pub(crate) fn checked_ratio(num: C64, den: C64, factor: &str) -> Result<C64> {
    let scale = num.norm().max(1.0);
    let mag = den.norm();
    if !(mag >= SINGULAR_THRESHOLD * scale) {
        return Err(IrfError::Singular {
            factor: factor.to_string(),
            magnitude: mag,
        });
    }
    Ok(num / den)
}

fn require_decrement(kind: PlaquetteKind, k: u32) -> Result<()> {
    if kind == PlaquetteKind::C && k == 0 {
        return Err(IrfError::InvalidInput(
            "a C plaquette needs at least one path below it".into(),
        ));
    }
    Ok(())
}

/// Plaquette weight with vertical occupation `k` below the plaquette.
///
/// Non-stochastic weights are the operator coefficients; stochastic weights
/// are their renormalizations that make `A + C` and `B + D` sum to one.
pub fn weight(kind: PlaquetteKind, k: u32, ctx: &WeightContext, stochastic: bool) -> Result<C64> {
    require_decrement(kind, k)?;
    let eta = ctx.eta;
    let cl = ctx.cap_lambda;
    let lam = ctx.lambda;
    let x = ctx.z - ctx.w;
    let kf = k as f64;
    let f = |v: C64| ctx.f(v);
    let common_den = f(x + (cl + 1.0) * eta);
    if !stochastic {
        let fl = f(lam);
        match kind {
            PlaquetteKind::A => {
                let s = checked_ratio(f(x + (cl + 1.0 - 2.0 * kf) * eta), common_den, "f(z-w+(Λ+1)η)")?;
                Ok(s * checked_ratio(f(lam + 2.0 * kf * eta), fl, "f(λ)")?)
            }
            PlaquetteKind::B => {
                let s = checked_ratio(f(-lam + x + (cl - 1.0 - 2.0 * kf) * eta), common_den, "f(z-w+(Λ+1)η)")?;
                Ok(-s * checked_ratio(f(2.0 * eta), fl, "f(λ)")?)
            }
            PlaquetteKind::C => {
                let s = checked_ratio(f(-lam - x + (cl + 1.0 - 2.0 * kf) * eta), common_den, "f(z-w+(Λ+1)η)")?;
                let t = checked_ratio(f(2.0 * (cl + 1.0 - kf) * eta), fl, "f(λ)")?;
                let u = checked_ratio(f(2.0 * kf * eta), f(2.0 * eta), "f(2η)")?;
                Ok(-s * t * u)
            }
            PlaquetteKind::D => {
                let s = checked_ratio(f(x + (1.0 - cl + 2.0 * kf) * eta), common_den, "f(z-w+(Λ+1)η)")?;
                Ok(s * checked_ratio(f(lam - 2.0 * (cl - kf) * eta), fl, "f(λ)")?)
            }
        }
    } else {
        match kind {
            PlaquetteKind::A => {
                let s = checked_ratio(f(x + (cl + 1.0 - 2.0 * kf) * eta), common_den, "f(z-w+(Λ+1)η)")?;
                let t = checked_ratio(
                    f(-lam + 2.0 * (cl + 1.0 - kf) * eta),
                    f(-lam + 2.0 * (cl + 1.0 - 2.0 * kf) * eta),
                    "f(-λ+2(Λ+1-2k)η)",
                )?;
                Ok(s * t)
            }
            PlaquetteKind::B => {
                let s = checked_ratio(f(-lam + x + (cl - 1.0 - 2.0 * kf) * eta), common_den, "f(z-w+(Λ+1)η)")?;
                let t = checked_ratio(
                    f(2.0 * (kf - cl) * eta),
                    f(lam - 2.0 * (cl - 1.0 - 2.0 * kf) * eta),
                    "f(λ-2(Λ-1-2k)η)",
                )?;
                Ok(s * t)
            }
            PlaquetteKind::C => {
                let s = checked_ratio(f(-lam - x + (cl + 1.0 - 2.0 * kf) * eta), common_den, "f(z-w+(Λ+1)η)")?;
                let t = checked_ratio(
                    f(2.0 * kf * eta),
                    f(-lam + 2.0 * (cl + 1.0 - 2.0 * kf) * eta),
                    "f(-λ+2(Λ+1-2k)η)",
                )?;
                Ok(s * t)
            }
            PlaquetteKind::D => {
                let s = checked_ratio(f(x + (1.0 - cl + 2.0 * kf) * eta), common_den, "f(z-w+(Λ+1)η)")?;
                let t = checked_ratio(
                    f(lam + 2.0 * (kf + 1.0) * eta),
                    f(lam - 2.0 * (cl - 1.0 - 2.0 * kf) * eta),
                    "f(λ-2(Λ-1-2k)η)",
                )?;
                Ok(s * t)
            }
        }
    }
}

/// The `w`-independent ratio between a stochastic weight and the
/// corresponding operator coefficient.
pub fn hat_ratio(
    kind: PlaquetteKind,
    k: u32,
    lambda: C64,
    cap_lambda: C64,
    eta: C64,
    mode: FunctionMode,
) -> Result<C64> {
    require_decrement(kind, k)?;
    let f = |v: C64| f_eval(mode, v);
    let kf = k as f64;
    let cl = cap_lambda;
    let fl = f(lambda);
    match kind {
        PlaquetteKind::A => {
            let s = checked_ratio(fl, f(lambda - 2.0 * (cl + 1.0 - 2.0 * kf) * eta), "f(λ-2(Λ+1-2k)η)")?;
            let t = checked_ratio(
                f(lambda - 2.0 * (cl + 1.0 - kf) * eta),
                f(lambda + 2.0 * kf * eta),
                "f(λ+2kη)",
            )?;
            Ok(s * t)
        }
        PlaquetteKind::B => {
            let s = checked_ratio(fl, f(lambda - 2.0 * (cl - 1.0 - 2.0 * kf) * eta), "f(λ-2(Λ-1-2k)η)")?;
            let t = checked_ratio(f(2.0 * (cl - kf) * eta), f(2.0 * eta), "f(2η)")?;
            Ok(s * t)
        }
        PlaquetteKind::C => {
            let s = checked_ratio(fl, f(lambda - 2.0 * (cl + 1.0 - 2.0 * kf) * eta), "f(λ-2(Λ+1-2k)η)")?;
            let t = checked_ratio(f(2.0 * eta), f(2.0 * (cl + 1.0 - kf) * eta), "f(2(Λ+1-k)η)")?;
            Ok(s * t)
        }
        PlaquetteKind::D => {
            let s = checked_ratio(fl, f(lambda - 2.0 * (cl - 1.0 - 2.0 * kf) * eta), "f(λ-2(Λ-1-2k)η)")?;
            let t = checked_ratio(
                f(lambda + 2.0 * (kf + 1.0) * eta),
                f(lambda - 2.0 * (cl - kf) * eta),
                "f(λ-2(Λ-k)η)",
            )?;
            Ok(s * t)
        }
    }
}

/// Both sides of `f(B−C)f(w−A) = f(A−C)f(w−B) − f(A−B)f(w−C)` for the sine.
pub fn sine_identity_sides(a: C64, b: C64, c: C64, w: C64) -> (C64, C64) {
    let f = |v: C64| (PI * v).sin();
    (f(b - c) * f(w - a), f(a - c) * f(w - b) - f(a - b) * f(w - c))
}

/// Which of the two higher-spin six-vertex tables to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hs6vTable {
    Plain,
    Stochastic,
}

/// Higher-spin six-vertex weight with `i1` paths entering from below, `j1`
/// from the left, `i2` leaving at the top and `j2` to the right.
pub fn hs6v_weight(
    table: Hs6vTable,
    i1: u32,
    j1: u32,
    i2: u32,
    j2: u32,
    q: C64,
    s: C64,
    xi: C64,
    u: C64,
) -> Result<C64> {
    let kind = hs6v_kind(i1, j1, i2, j2)?;
    let k = i1 as i32;
    let qk = q.powi(k);
    let den = 1.0 - s * xi * u;
    let num = match (table, kind) {
        (Hs6vTable::Plain, PlaquetteKind::A) => 1.0 - s * qk * xi * u,
        (Hs6vTable::Plain, PlaquetteKind::B) => 1.0 - qk * q,
        (Hs6vTable::Plain, PlaquetteKind::C) => (1.0 - s * s * qk / q) * xi * u,
        (Hs6vTable::Plain, PlaquetteKind::D) => xi * u - s * qk,
        (Hs6vTable::Stochastic, PlaquetteKind::A) => 1.0 - s * qk * xi * u,
        (Hs6vTable::Stochastic, PlaquetteKind::B) => 1.0 - s * s * qk,
        (Hs6vTable::Stochastic, PlaquetteKind::C) => -s * xi * u + s * qk * xi * u,
        (Hs6vTable::Stochastic, PlaquetteKind::D) => -s * xi * u + s * s * qk,
    };
    checked_ratio(num, den, "1-sξu")
}

fn hs6v_kind(i1: u32, j1: u32, i2: u32, j2: u32) -> Result<PlaquetteKind> {
    let illegal = || {
        IrfError::InvalidInput(format!(
            "illegal six-vertex occupation pattern ({i1},{j1};{i2},{j2})"
        ))
    };
    if j1 > 1 || j2 > 1 || i1 + j1 != i2 + j2 {
        return Err(illegal());
    }
    let kind = PlaquetteKind::from_paths(j1 == 1, j2 == 1);
    if kind.output(i1) != Some(i2) {
        return Err(illegal());
    }
    Ok(kind)
}

/// Correction factor `F` with `lim_{λ→−i∞} (operator coefficient) =
/// F · w(…)` in the higher-spin limit; `q_half = e^{−2πiη}`.
pub fn hs6v_limit_factor(kind: PlaquetteKind, k: u32, q_half: C64, s: C64) -> C64 {
    let q = q_half * q_half;
    let k = k as i32;
    match kind {
        PlaquetteKind::A => q.powi(-k),
        PlaquetteKind::B => (q - 1.0) / (q_half.powi(k + 2) * (1.0 - q.powi(k + 1))),
        PlaquetteKind::C => (1.0 - q.powi(k)) / (s * q_half.powi(3 * (k - 1)) * (1.0 - q)),
        PlaquetteKind::D => -q.powi(-k) / s,
    }
}

/// The six spin ½ plaquettes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpinHalfPlaquette {
    /// No paths.
    Empty,
    /// A path passing vertically.
    Vertical,
    /// A path entering from the left and turning up.
    Sink,
    /// A path entering from below and turning right.
    Source,
    /// A path passing horizontally.
    Horizontal,
    /// Two crossing paths.
    Cross,
}

impl SpinHalfPlaquette {
    pub const ALL: [SpinHalfPlaquette; 6] = [
        SpinHalfPlaquette::Empty,
        SpinHalfPlaquette::Vertical,
        SpinHalfPlaquette::Sink,
        SpinHalfPlaquette::Source,
        SpinHalfPlaquette::Horizontal,
        SpinHalfPlaquette::Cross,
    ];

    /// Plaquette kind and vertical occupation below.
    pub fn kind_and_k(self) -> (PlaquetteKind, u32) {
        match self {
            SpinHalfPlaquette::Empty => (PlaquetteKind::A, 0),
            SpinHalfPlaquette::Vertical => (PlaquetteKind::A, 1),
            SpinHalfPlaquette::Sink => (PlaquetteKind::B, 0),
            SpinHalfPlaquette::Source => (PlaquetteKind::C, 1),
            SpinHalfPlaquette::Horizontal => (PlaquetteKind::D, 0),
            SpinHalfPlaquette::Cross => (PlaquetteKind::D, 1),
        }
    }
}

/// Dynamic stochastic six-vertex weights in the variables `q`, `ξ`, `u` and
/// `e^{2πiλ}`, with `q^{1/2}` the principal square root.
pub fn dyn6v_weight(symbol: SpinHalfPlaquette, lambda: C64, q: C64, xi: C64, u: C64) -> Result<C64> {
    let qh = q.sqrt();
    let e = (2.0 * PI * I * lambda).exp();
    let r = xi * u;
    let den = 1.0 - r / qh;
    let dyn_den = 1.0 - e;
    let (num, dyn_num) = match symbol {
        SpinHalfPlaquette::Empty | SpinHalfPlaquette::Cross => return Ok(C64::new(1.0, 0.0)),
        SpinHalfPlaquette::Vertical => (1.0 - qh * r, 1.0 / q - e),
        SpinHalfPlaquette::Sink => (1.0 - 1.0 / q, qh * r - e),
        SpinHalfPlaquette::Source => ((qh - 1.0 / qh) * r, 1.0 / (qh * r) - e),
        SpinHalfPlaquette::Horizontal => (1.0 / q - r / qh, q - e),
    };
    Ok(checked_ratio(num, den, "1-q^{-1/2}ξu")? * checked_ratio(dyn_num, dyn_den, "1-e^{2πiλ}")?)
}

/// Rational dynamic stochastic six-vertex weights (`2η = 1`).
pub fn rational_weight(symbol: SpinHalfPlaquette, lambda: f64, z: f64, w: f64) -> Result<f64> {
    let d = z - w;
    let den = lambda * (d + 1.0);
    let num = match symbol {
        SpinHalfPlaquette::Empty | SpinHalfPlaquette::Cross => return Ok(1.0),
        SpinHalfPlaquette::Vertical => (lambda - 1.0) * d,
        SpinHalfPlaquette::Sink => lambda - d,
        SpinHalfPlaquette::Source => lambda + d,
        SpinHalfPlaquette::Horizontal => (lambda + 1.0) * d,
    };
    if den.abs() < SINGULAR_THRESHOLD * num.abs().max(1.0) {
        return Err(IrfError::Singular {
            factor: "λ(z-w+1)".into(),
            magnitude: den.abs(),
        });
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{eta_from_q, preset_dyn6v_positive, to_six_vertex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rc(rng: &mut ChaCha8Rng, scale: f64) -> C64 {
        c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
    }

    fn random_ctx(rng: &mut ChaCha8Rng, mode: FunctionMode) -> WeightContext {
        WeightContext {
            lambda: rc(rng, 0.5),
            w: rc(rng, 0.3),
            z: rc(rng, 0.3),
            cap_lambda: c(1.0, 0.0) + rc(rng, 0.8),
            eta: rc(rng, 0.1),
            mode,
        }
    }

    #[test]
    fn stochastic_empty_and_cross_are_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let mut ctx = random_ctx(&mut rng, FunctionMode::Trigonometric);
            assert!((weight(PlaquetteKind::A, 0, &ctx, true).unwrap() - 1.0).norm() < 1e-12);
            ctx.cap_lambda = c(1.0, 0.0);
            assert!((weight(PlaquetteKind::D, 1, &ctx, true).unwrap() - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn stochastic_pairs_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let ctx = random_ctx(&mut rng, FunctionMode::Trigonometric);
            let a = weight(PlaquetteKind::A, 2, &ctx, true).unwrap();
            let cc = weight(PlaquetteKind::C, 2, &ctx, true).unwrap();
            assert!((a + cc - 1.0).norm() < 1e-10);
        }
    }

    #[test]
    fn c_plaquette_needs_a_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ctx = random_ctx(&mut rng, FunctionMode::Trigonometric);
        assert!(weight(PlaquetteKind::C, 0, &ctx, false).is_err());
    }

    #[test]
    fn vanishing_denominator_is_reported() {
        let ctx = WeightContext {
            lambda: c(0.0, 0.0),
            w: c(0.1, 0.0),
            z: c(0.2, 0.0),
            cap_lambda: c(1.0, 0.0),
            eta: c(0.05, 0.0),
            mode: FunctionMode::Trigonometric,
        };
        assert!(matches!(
            weight(PlaquetteKind::A, 1, &ctx, false),
            Err(IrfError::Singular { .. })
        ));
    }

    #[test]
    fn hat_ratios_are_w_independent_and_renormalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let ctx = random_ctx(&mut rng, FunctionMode::Trigonometric);
            for kind in PlaquetteKind::ALL {
                let k = 2;
                let h = hat_ratio(kind, k, ctx.lambda, ctx.cap_lambda, ctx.eta, ctx.mode).unwrap();
                let plain = weight(kind, k, &ctx, false).unwrap();
                let st = weight(kind, k, &ctx, true).unwrap();
                assert!((h * plain - st).norm() < 1e-12 * st.norm().max(1.0));
            }
            let a = hat_ratio(PlaquetteKind::A, 1, ctx.lambda, ctx.cap_lambda, ctx.eta, ctx.mode).unwrap()
                * weight(PlaquetteKind::A, 1, &ctx, false).unwrap();
            let cc = hat_ratio(PlaquetteKind::C, 1, ctx.lambda, ctx.cap_lambda, ctx.eta, ctx.mode).unwrap()
                * weight(PlaquetteKind::C, 1, &ctx, false).unwrap();
            assert!((a + cc - 1.0).norm() < 1e-10);
        }
    }

    /// The stochastic table written with the arguments of the `A` and `C`
    /// numerators and denominators negated.
    #[test]
    fn negated_argument_form_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let ctx = random_ctx(&mut rng, FunctionMode::Trigonometric);
            let f = |v: C64| f_eval(ctx.mode, v);
            let (lam, cl, eta, k) = (ctx.lambda, ctx.cap_lambda, ctx.eta, 2.0);
            let x = ctx.z - ctx.w;
            let alt_a = f(x + (cl + 1.0 - 2.0 * k) * eta) / f(x + (cl + 1.0) * eta)
                * f(lam - 2.0 * (cl + 1.0 - k) * eta)
                / f(lam - 2.0 * (cl + 1.0 - 2.0 * k) * eta);
            let a = weight(PlaquetteKind::A, 2, &ctx, true).unwrap();
            assert!((a - alt_a).norm() < 1e-12 * a.norm().max(1.0));
        }
    }

    #[test]
    fn hs6v_stochastic_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let (q, s, xi, u) = (rc(&mut rng, 1.0), rc(&mut rng, 1.0), rc(&mut rng, 1.0), rc(&mut rng, 1.0));
            for k in 1..4 {
                let st = Hs6vTable::Stochastic;
                let a = hs6v_weight(st, k, 0, k, 0, q, s, xi, u).unwrap();
                let cc = hs6v_weight(st, k, 0, k - 1, 1, q, s, xi, u).unwrap();
                assert!((a + cc - 1.0).norm() < 1e-10);
                let b = hs6v_weight(st, k, 1, k + 1, 0, q, s, xi, u).unwrap();
                let d = hs6v_weight(st, k, 1, k, 1, q, s, xi, u).unwrap();
                assert!((b + d - 1.0).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn hs6v_rejects_illegal_patterns_and_vanishes_at_roots_of_unity() {
        let one = c(1.0, 0.0);
        assert!(hs6v_weight(Hs6vTable::Plain, 1, 1, 1, 0, one, one, one, c(0.5, 0.0)).is_err());
        assert!(hs6v_weight(Hs6vTable::Plain, 0, 0, 0, 2, one, one, one, c(0.5, 0.0)).is_err());
        let q = C64::from_polar(1.0, 2.0 * PI / 3.0);
        let w = hs6v_weight(Hs6vTable::Plain, 2, 1, 3, 0, q, c(0.3, 0.0), one, c(0.5, 0.0)).unwrap();
        assert!(w.norm() < 1e-12);
    }

    /// At `λ = −5i` the stochastic IRF weights are within `e^{−10π}` of the
    /// stochastic higher-spin weights.
    #[test]
    fn stochastic_weights_approach_hs6v_at_large_negative_imaginary_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut ctx = random_ctx(&mut rng, FunctionMode::Trigonometric);
            ctx.lambda = c(0.0, -5.0);
            let q = (-4.0 * PI * I * ctx.eta).exp();
            let s = (2.0 * PI * I * ctx.eta * ctx.cap_lambda).exp();
            let xi = (2.0 * PI * I * ctx.z).exp();
            let u = (2.0 * PI * I * (ctx.eta - ctx.w)).exp();
            for k in 1..4u32 {
                for kind in PlaquetteKind::ALL {
                    let (j1, j2) = (kind.path_in() as u32, kind.path_out() as u32);
                    let i2 = kind.output(k).unwrap();
                    let l = hs6v_weight(Hs6vTable::Stochastic, k, j1, i2, j2, q, s, xi, u).unwrap();
                    let st = weight(kind, k, &ctx, true).unwrap();
                    assert!((l - st).norm() < 1e-8 * l.norm().max(1.0), "{kind:?} {k}");
                    let plain = weight(kind, k, &ctx, false).unwrap();
                    let qh = (-2.0 * PI * I * ctx.eta).exp();
                    let wv = hs6v_weight(Hs6vTable::Plain, k, j1, i2, j2, q, s, xi, u).unwrap();
                    let lim = hs6v_limit_factor(kind, k, qh, s) * wv;
                    assert!((plain - lim).norm() < 1e-6 * lim.norm().max(1.0), "{kind:?} {k}");
                }
            }
        }
    }

    #[test]
    fn dyn6v_table_matches_spin_half_stochastic_weights() {
        let p = preset_dyn6v_positive();
        let sv = to_six_vertex(&p);
        for lam in [p.lambda0, p.lambda0 + 3.0 * p.eta, c(0.2, 0.3)] {
            let ctx = WeightContext::at(&p, 1, p.rows()[0], lam).unwrap();
            for sym in SpinHalfPlaquette::ALL {
                let (kind, k) = sym.kind_and_k();
                let st = weight(kind, k, &ctx, true).unwrap();
                let d = dyn6v_weight(sym, lam, sv.q, sv.xi[1], sv.u[0]).unwrap();
                assert!((st - d).norm() < 1e-12, "{sym:?}: {st} vs {d}");
            }
        }
    }

    #[test]
    fn dyn6v_examples() {
        let q = c(0.7, 0.0);
        let lam = c(0.31, 0.12);
        let (xi, u) = (c(1.1, 0.2), c(2.0, -0.3));
        assert_eq!(dyn6v_weight(SpinHalfPlaquette::Empty, lam, q, xi, u).unwrap(), c(1.0, 0.0));
        let v = dyn6v_weight(SpinHalfPlaquette::Vertical, lam, q, xi, u).unwrap();
        let so = dyn6v_weight(SpinHalfPlaquette::Source, lam, q, xi, u).unwrap();
        assert!((v + so - 1.0).norm() < 1e-12);
        let h = dyn6v_weight(SpinHalfPlaquette::Horizontal, lam, q, xi, u).unwrap();
        let si = dyn6v_weight(SpinHalfPlaquette::Sink, lam, q, xi, u).unwrap();
        assert!((h + si - 1.0).norm() < 1e-12);
    }

    #[test]
    fn dyn6v_epsilon_expansion() {
        let q: f64 = 0.6;
        let alpha = 1.7;
        let lam = crate::params::lambda_from_alpha(alpha);
        let eps = 1e-6;
        let r = (1.0 + (1.0 - q) * eps) / q.sqrt();
        let v = dyn6v_weight(SpinHalfPlaquette::Vertical, lam, c(q, 0.0), c(r, 0.0), c(1.0, 0.0)).unwrap();
        assert!((v / eps - (q + alpha) / (1.0 + alpha)).norm() < 1e-5);
        let h = dyn6v_weight(SpinHalfPlaquette::Horizontal, lam, c(q, 0.0), c(r, 0.0), c(1.0, 0.0)).unwrap();
        assert!((h / eps - (1.0 + alpha * q) / (1.0 + alpha)).norm() < 1e-5);
        let _ = eta_from_q(q);
    }

    #[test]
    fn rational_examples() {
        assert_eq!(rational_weight(SpinHalfPlaquette::Empty, -3.0, 1.0, 0.2).unwrap(), 1.0);
        let v = rational_weight(SpinHalfPlaquette::Vertical, -3.3, 1.0, 0.2).unwrap();
        let s = rational_weight(SpinHalfPlaquette::Source, -3.3, 1.0, 0.2).unwrap();
        assert!((v + s - 1.0).abs() < 1e-14);
        for sym in SpinHalfPlaquette::ALL {
            let w = rational_weight(sym, -100.0, 0.5, 0.0).unwrap();
            assert!((0.0..=1.0).contains(&w), "{sym:?} {w}");
        }
        assert!(rational_weight(SpinHalfPlaquette::Vertical, 0.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn rational_table_is_the_rational_mode_of_the_general_weights() {
        let (lam, z, w) = (-7.3, 2.2, 0.4);
        let ctx = WeightContext {
            lambda: c(lam, 0.0),
            w: c(w, 0.0),
            z: c(z, 0.0),
            cap_lambda: c(1.0, 0.0),
            eta: c(0.5, 0.0),
            mode: FunctionMode::Rational,
        };
        for sym in SpinHalfPlaquette::ALL {
            let (kind, k) = sym.kind_and_k();
            let g = weight(kind, k, &ctx, true).unwrap();
            let r = rational_weight(sym, lam, z, w).unwrap();
            assert!((g - r).norm() < 1e-13, "{sym:?}");
        }
    }

    #[test]
    fn sine_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let (l, r) = sine_identity_sides(rc(&mut rng, 1.0), rc(&mut rng, 1.0), rc(&mut rng, 1.0), rc(&mut rng, 1.0));
            assert!((l - r).norm() < 1e-10 * r.norm().max(1.0));
        }
    }
}
