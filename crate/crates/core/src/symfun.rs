//! Closed-form symmetric functions: the symmetrization formulas for `B_μ`
//! and `D_ν`, their normalized versions, the norm constants `c_μ`, the
//! `ρ`-specialization, and the skew `B`-functions as sums over lattice paths.

use std::collections::HashMap;

use itertools::Itertools;
use serde::Serialize;

use crate::error::{IrfError, Result};
use crate::params::{pq_grid, IrfParams, PqGrid};
use crate::signature::{interlacing_between, Signature};
use crate::special::{f_prime_zero, FunctionMode, C64};
use crate::weights::{checked_ratio, weight, PlaquetteKind, WeightContext};

/// Largest number of variables accepted by the permutation sums.
pub const MAX_SYMMETRIZED: usize = 9;

/// Largest `ℓ(ν) − m₀` accepted by the `D_ν` formula.
pub const MAX_D_NONZERO: usize = 6;

fn one() -> C64 {
    C64::new(1.0, 0.0)
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

fn grid_for(params: &IrfParams, max_index: usize) -> Result<PqGrid> {
    params.require_columns(max_index + 1)?;
    Ok(pq_grid(params))
}

/// `φ_k(u) = f(u−q_k)^{-1} Π_{i<k} f(u−p_i)/f(u−q_i)`.
pub fn phi(k: usize, u: C64, params: &IrfParams) -> Result<C64> {
    let g = grid_for(params, k)?;
    phi_on(&g, k, u, params)
}

fn phi_on(g: &PqGrid, k: usize, u: C64, params: &IrfParams) -> Result<C64> {
    let f = |x: C64| params.f(x);
    let mut v = checked_ratio(one(), f(u - g.q[k]), "f(u-q_k)")?;
    for i in 0..k {
        v *= checked_ratio(f(u - g.p[i]), f(u - g.q[i]), "f(u-q_i)")?;
    }
    Ok(v)
}

/// `ψ_l(v) = f(v−p_l)^{-1} Π_{j<l} f(v−q_j)/f(v−p_j)`.
pub fn psi(l: usize, v: C64, params: &IrfParams) -> Result<C64> {
    let g = grid_for(params, l)?;
    psi_on(&g, l, v, params)
}

fn psi_on(g: &PqGrid, l: usize, v: C64, params: &IrfParams) -> Result<C64> {
    let f = |x: C64| params.f(x);
    let mut r = checked_ratio(one(), f(v - g.p[l]), "f(v-p_l)")?;
    for j in 0..l {
        r *= checked_ratio(f(v - g.q[j]), f(v - g.p[j]), "f(v-p_j)")?;
    }
    Ok(r)
}

/// `φ̃_k(w) = f(w−q_k)^{-1} Π_{j=k+1}^{m} f(w−p_j)/f(w−q_j)` for `1 ≤ k ≤ m`.
pub fn phi_tilde(k: usize, m: usize, w: C64, params: &IrfParams) -> Result<C64> {
    let g = grid_for(params, m)?;
    let f = |x: C64| params.f(x);
    let mut v = checked_ratio(one(), f(w - g.q[k]), "f(w-q_k)")?;
    for j in k + 1..=m {
        v *= checked_ratio(f(w - g.p[j]), f(w - g.q[j]), "f(w-q_j)")?;
    }
    Ok(v)
}

/// `Σ_σ Π_{a<b} cross[σa][σb] · Π_a local[a][σa]` over bijections from
/// slots to variables.
fn symmetrize(cross: &[Vec<C64>], local: &[Vec<C64>]) -> Result<C64> {
    let m = local.len();
    if m > MAX_SYMMETRIZED {
        return Err(IrfError::ResourceLimit(format!(
            "symmetrization over {m} variables exceeds the limit of {MAX_SYMMETRIZED}"
        )));
    }
    let mut total = zero();
    for sigma in (0..m).permutations(m) {
        let mut term = one();
        for a in 0..m {
            term *= local[a][sigma[a]];
            for b in a + 1..m {
                term *= cross[sigma[a]][sigma[b]];
            }
        }
        total += term;
    }
    Ok(total)
}

fn cross_matrix(vars: &[C64], shift: C64, params: &IrfParams) -> Result<Vec<Vec<C64>>> {
    let n = vars.len();
    let mut c = vec![vec![one(); n]; n];
    for x in 0..n {
        for y in 0..n {
            if x != y {
                let d = vars[x] - vars[y];
                c[x][y] = checked_ratio(params.f(d + shift), params.f(d), "f(u_i-u_j)")?;
            }
        }
    }
    Ok(c)
}

/// `Π_{i=0}^{count−1} f(λ + 2ηi)`, the factor relating `B^norm, D^norm` to `B, D`.
pub fn norm_factor(lambda: C64, count: usize, params: &IrfParams) -> C64 {
    (0..count).map(|i| params.f(lambda + 2.0 * params.eta * i as f64)).product()
}

/// Passes from `B` or `D` to the normalized function with `count` variables.
pub fn normalize(value: C64, lambda: C64, count: usize, params: &IrfParams) -> C64 {
    value * norm_factor(lambda, count, params)
}

/// `B_μ(λ; u₁,…,u_M)` by the symmetrization formula.
pub fn b_mu(mu: &Signature, lambda: C64, us: &[C64], params: &IrfParams) -> Result<C64> {
    let m = mu.len();
    if us.len() != m {
        return Err(IrfError::InvalidInput(format!(
            "B_μ with ℓ(μ) = {m} needs {m} variables, got {}",
            us.len()
        )));
    }
    if m == 0 {
        return Ok(one());
    }
    let g = grid_for(params, mu.max_part() as usize)?;
    let eta = params.eta;
    let f = |x: C64| params.f(x);
    let f2 = f(2.0 * eta);
    let mut pre = f2.powu(m as u32) * if m % 2 == 1 { -1.0 } else { 1.0 };
    pre = checked_ratio(pre, norm_factor(lambda, m, params), "f(λ+2ηi)")?;
    for x in 0..=mu.max_part() {
        for j in 1..=mu.multiplicity(x) {
            pre *= checked_ratio(f2, f(2.0 * eta * j as f64), "f(2ηj)")?;
        }
    }
    let cross = cross_matrix(us, -2.0 * eta, params)?;
    let mut local = vec![vec![zero(); m]; m];
    for (a, &part) in mu.parts().iter().enumerate() {
        let k = part as usize;
        let shift = 2.0 * eta + 4.0 * eta * (m - 1 - a) as f64 - 2.0 * eta * params.lambda_sum(0, k)?;
        for (x, &u) in us.iter().enumerate() {
            local[a][x] = phi_on(&g, k, u, params)? * f(lambda + u - g.q[k] + shift);
        }
    }
    Ok(pre * symmetrize(&cross, &local)?)
}

/// `D_ν(λ; v₁,…,v_n)` by the symmetrization formula over subsets and
/// bijections.
pub fn d_nu(nu: &Signature, lambda: C64, vs: &[C64], params: &IrfParams) -> Result<C64> {
    let big_n = nu.len();
    let n0 = nu.multiplicity(0);
    let n = vs.len();
    let r = big_n - n0;
    if r > n {
        return Ok(zero());
    }
    if r > MAX_D_NONZERO {
        return Err(IrfError::ResourceLimit(format!(
            "D_ν with {r} nonzero parts exceeds the limit of {MAX_D_NONZERO}"
        )));
    }
    let g = grid_for(params, nu.max_part() as usize)?;
    let eta = params.eta;
    let f = |x: C64| params.f(x);
    let lt = lambda + 2.0 * eta * n as f64;
    let l0 = params.column(0)?.lambda;

    let mut pre = checked_ratio(f(2.0 * eta).powu(r as u32), norm_factor(lambda, n, params), "f(λ+2ηi)")?;
    for i in big_n..n + n0 {
        let i = i as f64;
        pre *= checked_ratio(
            f(lambda + 2.0 * eta * (i - l0)),
            f(lambda + 2.0 * eta * (i + n0 as f64 - l0)),
            "f(λ+2η(i+n₀-Λ₀))",
        )?;
    }
    for x in 1..=nu.max_part() {
        let nx = nu.multiplicity(x);
        let below = nu.count_below(x) as f64;
        let cl = params.column(x as usize)?.lambda;
        let upto = params.lambda_sum(0, x as usize + 1)?;
        let before = params.lambda_sum(0, x as usize)?;
        for j in 0..nx {
            let j = j as f64;
            let den = f(lt + 2.0 * eta * (2.0 * below + nx as f64 + j - upto))
                * f(lt + 2.0 * eta * (2.0 * below + 1.0 + j - before));
            pre *= checked_ratio(f(2.0 * eta * (cl - j)), den, "cluster denominator")?;
        }
    }

    let nonzero: Vec<usize> = nu.parts()[..r].iter().map(|&p| p as usize).collect();
    let mut local_all = vec![vec![zero(); n]; r];
    for (a, &k) in nonzero.iter().enumerate() {
        let shift = p_shift(&g, k, eta, big_n - 1 - a, params)?;
        for (x, &v) in vs.iter().enumerate() {
            local_all[a][x] = psi_on(&g, k, v, params)? * f(lt - v + shift);
        }
    }
    let cross_all = cross_matrix(vs, 2.0 * eta, params)?;
    let q0 = g.q[0];
    let p0 = g.p[0];
    let mut total = zero();
    for subset in (0..n).combinations(r) {
        let mut t = one();
        for x in 0..n {
            let v = vs[x];
            if subset.contains(&x) {
                t *= checked_ratio(f(lambda + v - q0 + 2.0 * eta * big_n as f64), f(v - q0), "f(v-q₀)")?;
            } else {
                t *= checked_ratio(f(v - p0 - 2.0 * eta * n0 as f64), f(v - p0), "f(v-p₀)")?;
                for &i in &subset {
                    let d = v - vs[i];
                    t *= checked_ratio(f(d - 2.0 * eta), f(d), "f(v_j-v_i)")?;
                }
            }
        }
        let cross: Vec<Vec<C64>> = subset
            .iter()
            .map(|&x| subset.iter().map(|&y| cross_all[x][y]).collect())
            .collect();
        let local: Vec<Vec<C64>> = (0..r)
            .map(|a| subset.iter().map(|&x| local_all[a][x]).collect())
            .collect();
        total += t * symmetrize(&cross, &local)?;
    }
    Ok(pre * total)
}

/// `p_k + 2η + 4η·slot − 2ηΛ_{[0,k)}`, the shift shared by the `ψ`-side
/// factors.
fn p_shift(g: &PqGrid, k: usize, eta: C64, slot: usize, params: &IrfParams) -> Result<C64> {
    Ok(g.p[k] + 2.0 * eta + 4.0 * eta * slot as f64 - 2.0 * eta * params.lambda_sum(0, k)?)
}

/// The factor `ψ_{ν_i}(u) f(λ − u + p_{ν_i} + 2η + 4η(N−i) − 2ηΛ_{[0,ν_i)})`
/// that pairs with `B_μ` in the orthogonality integrand (`i` is 1-based).
pub fn dual_factor(nu: &Signature, i: usize, lambda: C64, u: C64, params: &IrfParams) -> Result<C64> {
    let n = nu.len();
    let k = nu.parts()[i - 1] as usize;
    let g = grid_for(params, k)?;
    let shift = p_shift(&g, k, params.eta, n - i, params)?;
    Ok(psi_on(&g, k, u, params)? * params.f(lambda - u + shift))
}

/// The squared norm `c_μ(λ)`.
pub fn c_mu(mu: &Signature, lambda: C64, params: &IrfParams) -> Result<C64> {
    if params.mode == FunctionMode::Rational {
        return Err(IrfError::InvalidParameter(
            "the norm constants need the trigonometric or elliptic mode".into(),
        ));
    }
    let m = mu.len();
    let eta = params.eta;
    let f = |x: C64| params.f(x);
    let fp = f_prime_zero(params.mode);
    let mut v = checked_ratio(
        f(2.0 * eta).powu(m as u32),
        fp.powu(m as u32) * norm_factor(lambda, m, params),
        "f(λ+2ηi)",
    )?;
    if m == 0 {
        return Ok(v);
    }
    params.require_columns(mu.max_part() as usize + 1)?;
    for x in 0..=mu.max_part() {
        let mx = mu.multiplicity(x);
        let below = mu.count_below(x) as f64;
        let cl = params.column(x as usize)?.lambda;
        let upto = params.lambda_sum(0, x as usize + 1)?;
        let before = params.lambda_sum(0, x as usize)?;
        for j in 0..mx {
            let j = j as f64;
            let num = f(lambda + 2.0 * eta * (2.0 * below + mx as f64 + j - upto))
                * f(lambda + 2.0 * eta * (2.0 * below + 1.0 + j - before));
            v *= checked_ratio(num, f(2.0 * eta * (cl - j)), "f(2η(Λ_i-j))")?;
        }
    }
    Ok(v)
}

/// `D^norm_ν(λ; ρ)` in closed form (trigonometric mode only).
pub fn d_rho(nu: &Signature, lambda: C64, params: &IrfParams) -> Result<C64> {
    if params.mode != FunctionMode::Trigonometric {
        return Err(IrfError::InvalidParameter(
            "the ρ-specialization is defined in the trigonometric mode".into(),
        ));
    }
    let n = nu.len();
    if n == 0 {
        return Ok(one());
    }
    if nu.min_part() == Some(0) {
        return Ok(zero());
    }
    let eta = params.eta;
    let f = |x: C64| params.f(x);
    let l0 = params.column(0)?.lambda;
    let sign = if n % 2 == 1 { -1.0 } else { 1.0 };
    let pi_n = std::f64::consts::PI.powi(n as i32);
    let mut v = checked_ratio(
        sign * f(2.0 * eta).powu(n as u32),
        pi_n * c_mu(nu, lambda, params)?,
        "c_ν(λ)",
    )?;
    for i in 0..n {
        v *= checked_ratio(
            f(lambda - 2.0 * eta * l0 + 2.0 * eta * (i + 1) as f64),
            f(lambda + 2.0 * eta * i as f64),
            "f(λ+2ηi)",
        )?;
    }
    Ok(v)
}

/// Closed form of the vacuum coefficient of `c(w₁)⋯c(w_p)` applied to
/// `e_{k₁} ⊗ ⋯ ⊗ e_{k_m}` in the columns `1..=m`.
pub fn c_product_closed(ws: &[C64], ks: &[u32], lambda: C64, params: &IrfParams) -> Result<C64> {
    let m = ks.len();
    let p = ws.len();
    let total: usize = ks.iter().map(|&k| k as usize).sum();
    if total != p {
        return Ok(zero());
    }
    let g = grid_for(params, m)?;
    let eta = params.eta;
    let f = |x: C64| params.f(x);
    let lh = lambda - 2.0 * eta * p as f64;
    let all = params.lambda_sum(1, m + 1)?;
    let mut pre: C64 = (0..p).map(|i| f(lambda - 2.0 * eta * all + 2.0 * eta * i as f64)).product();
    let mut below = 0.0;
    for i in 1..=m {
        let ki = ks[i - 1] as usize;
        let cl = params.column(i)?.lambda;
        let upto = params.lambda_sum(1, i + 1)?;
        let before = params.lambda_sum(1, i)?;
        for j in 0..ki {
            let j = j as f64;
            let den = f(lh + 2.0 * eta * (2.0 * below + ki as f64 + j - upto))
                * f(lh + 2.0 * eta * (2.0 * below + 1.0 + j - before));
            pre *= checked_ratio(f(2.0 * eta * (cl - j)), den, "cluster denominator")?;
        }
        below += ki as f64;
    }
    if p % 2 == 1 {
        pre = -pre;
    }
    let kappa: Vec<usize> = (1..=m).rev().flat_map(|i| std::iter::repeat_n(i, ks[i - 1] as usize)).collect();
    let mut local = vec![vec![zero(); p]; p];
    for (a, &k) in kappa.iter().enumerate() {
        let shift = g.p[k] + 2.0 * eta + 4.0 * eta * (p - 1 - a) as f64 - 2.0 * eta * params.lambda_sum(1, k)?;
        for (x, &w) in ws.iter().enumerate() {
            local[a][x] = phi_tilde(k, m, w, params)? * f(lh - w + shift);
        }
    }
    let cross = cross_matrix(ws, 2.0 * eta, params)?;
    Ok(pre * symmetrize(&cross, &local)?)
}

/// The left side of the symmetrization lemma,
/// `Σ_σ σ(Π_{i<j} f(v_i−v_j−β)/f(v_i−v_j) Π_k f(v_k+(m−2k+1)β)/f(v_k))`.
pub fn symmetrization_lhs(vs: &[C64], beta: C64, mode: FunctionMode) -> Result<C64> {
    let m = vs.len();
    let f = |x: C64| crate::special::f_eval(mode, x);
    let mut cross = vec![vec![one(); m]; m];
    for x in 0..m {
        for y in 0..m {
            if x != y {
                let d = vs[x] - vs[y];
                cross[x][y] = checked_ratio(f(d - beta), f(d), "f(v_i-v_j)")?;
            }
        }
    }
    let mut local = vec![vec![zero(); m]; m];
    for k in 0..m {
        let shift = (m as f64 - 2.0 * (k + 1) as f64 + 1.0) * beta;
        for (x, &v) in vs.iter().enumerate() {
            local[k][x] = checked_ratio(f(v + shift), f(v), "f(v_k)")?;
        }
    }
    symmetrize(&cross, &local)
}

/// The individual permutation terms of [`symmetrization_lhs`], in the
/// lexicographic order of the permutations.
pub fn symmetrization_terms(vs: &[C64], beta: C64, mode: FunctionMode) -> Result<Vec<C64>> {
    let m = vs.len();
    if m > MAX_SYMMETRIZED {
        return Err(IrfError::ResourceLimit(format!(
            "symmetrization over {m} variables exceeds the limit of {MAX_SYMMETRIZED}"
        )));
    }
    let f = |x: C64| crate::special::f_eval(mode, x);
    let mut terms = Vec::new();
    for sigma in (0..m).permutations(m) {
        let mut term = one();
        for a in 0..m {
            let v = vs[sigma[a]];
            let shift = (m as f64 - 2.0 * (a + 1) as f64 + 1.0) * beta;
            term *= checked_ratio(f(v + shift), f(v), "f(v_k)")?;
            for b in a + 1..m {
                let d = v - vs[sigma[b]];
                term *= checked_ratio(f(d - beta), f(d), "f(v_i-v_j)")?;
            }
        }
        terms.push(term);
    }
    Ok(terms)
}

/// The right side `f(β)f(2β)⋯f(mβ)/f(β)^m` of the symmetrization lemma.
pub fn symmetrization_rhs(m: usize, beta: C64, mode: FunctionMode) -> C64 {
    let f = |x: C64| crate::special::f_eval(mode, x);
    let fb = f(beta);
    (1..=m).map(|j| f(beta * j as f64) / fb).product()
}

/// Weight of the unique single-row path configuration from `below` to
/// `above`, with the top-left filling `lambda` at column `first`.
///
/// Columns run from `first` up to the last occupied one; past it every
/// plaquette is empty and has weight one.
pub fn single_row_weight(
    above: &Signature,
    below: &Signature,
    lambda: C64,
    w: C64,
    params: &IrfParams,
    stochastic: bool,
) -> Result<C64> {
    if above.len() != below.len() + 1 {
        return Ok(zero());
    }
    let first = usize::from(stochastic);
    if stochastic && !(above.all_positive() && below.all_positive()) {
        return Ok(zero());
    }
    let cols = above.max_part().max(below.max_part()) as usize + 1;
    params.require_columns(cols)?;
    let up = above.occupation(cols)?;
    let down = below.occupation(cols)?;
    let eta = params.eta;
    let mut lam = lambda;
    let mut path = true;
    let mut value = one();
    for j in first..cols {
        let (k, k_out) = (down[j], up[j]);
        let kind = if k_out == k {
            PlaquetteKind::from_paths(path, path)
        } else if k_out == k + 1 && path {
            PlaquetteKind::B
        } else if k_out + 1 == k && !path {
            PlaquetteKind::C
        } else {
            return Ok(zero());
        };
        let ctx = WeightContext::at(params, j, w, lam)?;
        value *= weight(kind, k, &ctx, stochastic)?;
        path = kind.path_out();
        lam -= 2.0 * eta * (params.column(j)?.lambda - 2.0 * k_out as f64);
    }
    if path {
        return Ok(zero());
    }
    Ok(value)
}

/// `B_{κ/ν}(λ; w₁,…,w_n)` as a sum over lattice path configurations.
///
/// Row `r` (counted from the top) has top-left filling `λ + 2η(r−1)`, or
/// `λ − 2ηΛ₀ + 2η(r−1)` with columns starting at 1 in the stochastic case.
/// Rows are glued by summing over the intermediate interlacing signatures.
pub fn skew_b_lattice(
    kappa: &Signature,
    nu: &Signature,
    lambda: C64,
    ws: &[C64],
    params: &IrfParams,
    stochastic: bool,
) -> Result<C64> {
    let n = ws.len();
    if kappa.len() != nu.len() + n {
        return Ok(zero());
    }
    if n == 0 {
        return Ok(if kappa == nu { one() } else { zero() });
    }
    let eta = params.eta;
    let top = if stochastic {
        lambda - 2.0 * eta * params.column(0)?.lambda
    } else {
        lambda
    };
    // layer r holds the signatures between rows r and r+1 (r = n is ν)
    let mut layer: HashMap<Signature, C64> = HashMap::new();
    layer.insert(nu.clone(), one());
    for r in (1..=n).rev() {
        let w = ws[r - 1];
        let row_lambda = top + 2.0 * eta * (r - 1) as f64;
        let len = nu.len() + n - r + 1;
        let mut next: HashMap<Signature, C64> = HashMap::new();
        for (below, &acc) in &layer {
            let candidates = if r == 1 {
                if crate::signature::interlaces(kappa, below) {
                    vec![kappa.clone()]
                } else {
                    Vec::new()
                }
            } else {
                interlacing_between(None, Some(below), len, kappa.max_part())
                    .into_iter()
                    .filter(|s| fits_under(s, kappa, r - 1))
                    .collect()
            };
            for above in candidates {
                let wgt = single_row_weight(&above, below, row_lambda, w, params, stochastic)?;
                if wgt != zero() {
                    *next.entry(above).or_default() += acc * wgt;
                }
            }
        }
        layer = next;
    }
    Ok(layer.get(kappa).copied().unwrap_or_default())
}

/// Weight of the unique single-row configuration of the normalized `d̄`
/// taking `E_upper` to `E_lower` (same length), with filling `lambda`.
pub fn single_row_d_weight(upper: &Signature, lower: &Signature, lambda: C64, v: C64, params: &IrfParams) -> Result<C64> {
    if upper.len() != lower.len() {
        return Ok(zero());
    }
    let cols = upper.max_part().max(lower.max_part()) as usize + 1;
    params.require_columns(cols)?;
    let below = upper.occupation(cols)?;
    let above = lower.occupation(cols)?;
    let eta = params.eta;
    let mut lam = lambda;
    let mut path = true;
    let mut value = one();
    for j in 0..cols {
        let (k, k_out) = (below[j], above[j]);
        let kind = if k_out == k {
            PlaquetteKind::from_paths(path, path)
        } else if k_out == k + 1 && path {
            PlaquetteKind::B
        } else if k_out + 1 == k && !path {
            PlaquetteKind::C
        } else {
            return Ok(zero());
        };
        let col = params.column(j)?;
        let ctx = WeightContext::at(params, j, v, lam)?;
        value *= weight(kind, k, &ctx, false)?;
        let x = col.z - v;
        value *= checked_ratio(
            params.f(x + (col.lambda + 1.0) * eta),
            params.f(x + (1.0 - col.lambda) * eta),
            "f(z-w+(1-Λ)η)",
        )?;
        path = kind.path_out();
        lam -= 2.0 * eta * (col.lambda - 2.0 * k_out as f64);
    }
    if !path {
        return Ok(zero());
    }
    // lam is now λ − 2η(Λ_[0,m] − 2ℓ), the telescoped filling
    checked_ratio(value, params.f(lam), "f(λ-2η(Λ_[0,m]-2ℓ))")
}

/// `D_{κ/μ}(λ; v₁,…,v_l)` as a sum over lattice paths: the row with
/// `v_l` and filling `λ+2η(l−1)` acts first on `E_κ`.
pub fn skew_d_lattice(kappa: &Signature, mu: &Signature, lambda: C64, vs: &[C64], params: &IrfParams) -> Result<C64> {
    if kappa.len() != mu.len() {
        return Ok(zero());
    }
    let l = vs.len();
    if l == 0 {
        return Ok(if kappa == mu { one() } else { zero() });
    }
    let eta = params.eta;
    let mut layer: HashMap<Signature, C64> = HashMap::new();
    layer.insert(kappa.clone(), one());
    for r in (1..=l).rev() {
        let row_lambda = lambda + 2.0 * eta * (r - 1) as f64;
        let mut next: HashMap<Signature, C64> = HashMap::new();
        for (upper, &acc) in &layer {
            let candidates = if r == 1 {
                if crate::signature::interlaces(upper, mu) {
                    vec![mu.clone()]
                } else {
                    Vec::new()
                }
            } else {
                interlacing_between(Some(upper), None, upper.len(), upper.max_part())
                    .into_iter()
                    .filter(|s| fits_above(s, mu, r - 1))
                    .collect()
            };
            for lower in candidates {
                let wgt = single_row_d_weight(upper, &lower, row_lambda, vs[r - 1], params)?;
                if wgt != zero() {
                    *next.entry(lower).or_default() += acc * wgt;
                }
            }
        }
        layer = next;
    }
    Ok(layer.get(mu).copied().unwrap_or_default())
}

/// Whether `s` can sit `steps` same-length interlacing steps above `mu`.
fn fits_above(s: &Signature, mu: &Signature, steps: usize) -> bool {
    s.parts()
        .iter()
        .enumerate()
        .all(|(i, &v)| v >= mu.parts()[i] && (i < steps || v <= mu.parts()[i - steps]))
}

/// Whether `s` can sit `steps` interlacing steps below `kappa`.
fn fits_under(s: &Signature, kappa: &Signature, steps: usize) -> bool {
    s.parts()
        .iter()
        .enumerate()
        .all(|(i, &v)| v <= kappa.parts()[i] && kappa.parts().get(i + steps).is_none_or(|&low| v >= low))
}

/// `B^stoch_{κ/ν}(λ; u₁,…,u_k)` from the plain skew function and the
/// `ρ`-specialized `D`'s (both signatures need positive parts).
pub fn b_stoch_formula(kappa: &Signature, nu: &Signature, lambda: C64, us: &[C64], params: &IrfParams) -> Result<C64> {
    if !(kappa.all_positive() && nu.all_positive()) {
        return Err(IrfError::InvalidInput(
            "stochastic B-functions need signatures with positive parts".into(),
        ));
    }
    let k = us.len();
    let eta = params.eta;
    let f = |x: C64| params.f(x);
    let g = grid_for(params, 0)?;
    let mut v = C64::new(if k % 2 == 1 { -1.0 } else { 1.0 }, 0.0);
    v = checked_ratio(v, f(2.0 * eta).powu(k as u32), "f(2η)")?;
    for &u in us {
        v *= checked_ratio(f(u - g.q[0]), f(u - g.p[0]), "f(u-p₀)")?;
    }
    let plain = skew_b_lattice(kappa, nu, lambda, us, params, false)?;
    let bnorm = normalize(plain, lambda, k, params);
    let ratio = checked_ratio(
        d_rho(kappa, lambda, params)?,
        d_rho(nu, lambda + 2.0 * eta * k as f64, params)?,
        "D^norm_ν(λ+2ηk;ρ)",
    )?;
    Ok(v * ratio * bnorm)
}

/// Result of summing `B^stoch_{κ/ν}(λ; u)` over `κ`.
#[derive(Debug, Clone, Serialize)]
pub struct StochasticSum {
    pub total: C64,
    /// Contribution of each shell `κ₁ = K`, starting at `K = ν₁`.
    pub shells: Vec<C64>,
    /// Geometric estimate of the omitted tail.
    pub tail_bound: f64,
}

/// Sums the single-variable stochastic skew functions over all `κ ≻ ν`,
/// shell by shell in `κ₁`, until the tail rule is met.
///
/// The rule: the last three shell contributions are each below `1e-12`
/// of the running total and the last shell ratio is below one half.
pub fn b_stoch_sum(nu: &Signature, lambda: C64, u: C64, params: &IrfParams) -> Result<StochasticSum> {
    if !nu.all_positive() {
        return Err(IrfError::InvalidInput(
            "stochastic B-functions need signatures with positive parts".into(),
        ));
    }
    let start = nu.max_part().max(1);
    let last = params.num_columns().saturating_sub(1) as u32;
    let mut total = zero();
    let mut shells = Vec::new();
    for big_k in start..=last {
        let mut shell = zero();
        for kappa in interlacing_between(None, Some(nu), nu.len() + 1, big_k) {
            if kappa.max_part() != big_k || !kappa.all_positive() {
                continue;
            }
            shell += skew_b_lattice(&kappa, nu, lambda, &[u], params, true)?;
        }
        total += shell;
        shells.push(shell);
        let s = shells.len();
        if s >= 4 {
            let small = shells[s - 3..].iter().all(|c| c.norm() < 1e-12 * total.norm());
            let ratio = shells[s - 1].norm() / shells[s - 2].norm().max(1e-300);
            if small && ratio < 0.5 {
                let tail_bound = shells[s - 1].norm() * ratio / (1.0 - ratio);
                return Ok(StochasticSum {
                    total,
                    shells,
                    tail_bound,
                });
            }
        }
    }
    Err(IrfError::Divergence(format!(
        "shell contributions did not decay within {} columns (last shell {:.3e})",
        params.num_columns(),
        shells.last().map_or(0.0, |c| c.norm())
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{c_matrix_element, skew_b_oracle, skew_d_oracle};
    use crate::params::preset_trig_admissible;

    fn sig(p: &[u32]) -> Signature {
        Signature::new(p.to_vec()).unwrap()
    }

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * a.norm().max(b.norm()).max(1e-300)
    }

    fn vars(params: &IrfParams, n: usize) -> Vec<C64> {
        (1..=n).map(|k| params.w(k).unwrap()).collect()
    }

    #[test]
    fn phi_psi_empty_products() {
        let params = preset_trig_admissible();
        let g = pq_grid(&params);
        let u = C64::new(0.31, 0.07);
        assert!(close(phi(0, u, &params).unwrap(), 1.0 / params.f(u - g.q[0]), 1e-14));
        assert!(close(psi(0, u, &params).unwrap(), 1.0 / params.f(u - g.p[0]), 1e-14));
        let r = phi(1, u, &params).unwrap() * params.f(u - g.q[1]) * params.f(u - g.q[0]) / params.f(u - g.p[0]);
        assert!(close(r, C64::new(1.0, 0.0), 1e-13));
    }

    #[test]
    fn b_mu_matches_oracle() {
        let params = preset_trig_admissible();
        let lam = params.lambda0;
        for parts in [&[0u32][..], &[2], &[1, 0], &[2, 2], &[3, 1], &[2, 1, 0], &[1, 1, 1]] {
            let mu = sig(parts);
            let us = vars(&params, mu.len());
            let closed = b_mu(&mu, lam, &us, &params).unwrap();
            let brute = skew_b_oracle(&mu, &Signature::empty(), lam, &us, &params).unwrap();
            assert!(close(closed, brute, 1e-8), "μ={mu}: {closed} vs {brute}");
        }
    }

    #[test]
    fn d_nu_matches_oracle() {
        let params = preset_trig_admissible();
        let lam = params.lambda0;
        for (parts, n) in [
            (&[0u32][..], 1usize),
            (&[0, 0], 2),
            (&[1], 1),
            (&[1], 2),
            (&[2, 0], 2),
            (&[1, 1], 2),
            (&[2, 1], 3),
            (&[3, 1, 0], 2),
        ] {
            let nu = sig(parts);
            let vs = vars(&params, n);
            let closed = d_nu(&nu, lam, &vs, &params).unwrap();
            let base = Signature::repeated(0, nu.len());
            let brute = skew_d_oracle(&nu, &base, lam, &vs, &params).unwrap();
            assert!(close(closed, brute, 1e-8), "ν={nu}, n={n}: {closed} vs {brute}");
        }
    }

    #[test]
    fn c_product_matches_oracle() {
        let params = preset_trig_admissible();
        let lam = params.lambda0;
        for ks in [&[1u32][..], &[2], &[1, 1], &[0, 2], &[2, 1], &[1, 0, 1]] {
            let p: u32 = ks.iter().sum();
            let ws = vars(&params, p as usize);
            let closed = c_product_closed(&ws, ks, lam, &params).unwrap();
            let brute = c_matrix_element(&ws, ks, lam, &params).unwrap();
            assert!(close(closed, brute, 1e-8), "k={ks:?}: {closed} vs {brute}");
        }
    }

    #[test]
    fn lattice_matches_oracle() {
        let params = preset_trig_admissible();
        let lam = params.lambda0;
        for (k, n, rows) in [
            (&[2u32][..], &[][..], 1usize),
            (&[3, 1], &[2], 1),
            (&[3, 1, 0], &[1], 2),
            (&[2, 2, 1], &[], 3),
        ] {
            let kappa = sig(k);
            let nu = sig(n);
            let ws = vars(&params, rows);
            let lat = skew_b_lattice(&kappa, &nu, lam, &ws, &params, false).unwrap();
            let brute = skew_b_oracle(&kappa, &nu, lam, &ws, &params).unwrap();
            assert!(close(lat, brute, 1e-10), "κ={kappa}/ν={nu}: {lat} vs {brute}");
        }
    }

    #[test]
    fn d_lattice_matches_oracle() {
        let params = preset_trig_admissible();
        let lam = params.lambda0;
        for (k, m, rows) in [
            (&[1u32][..], &[0u32][..], 1usize),
            (&[3, 1], &[2, 0], 1),
            (&[3, 1], &[1, 0], 2),
            (&[2, 2, 1], &[1, 0, 0], 2),
            (&[2, 1, 0], &[0, 0, 0], 3),
        ] {
            let kappa = sig(k);
            let mu = sig(m);
            let vs = vars(&params, rows);
            let lat = skew_d_lattice(&kappa, &mu, lam, &vs, &params).unwrap();
            let brute = skew_d_oracle(&kappa, &mu, lam, &vs, &params).unwrap();
            assert!(lat.norm() > 0.0);
            assert!(close(lat, brute, 1e-10), "κ={kappa}/μ={mu}: {lat} vs {brute}");
        }
    }

    #[test]
    fn stochastic_lattice_matches_formula() {
        let params = preset_trig_admissible();
        let lam = params.lambda0;
        for (k, n, rows) in [
            (&[3u32][..], &[][..], 1usize),
            (&[3, 1], &[2], 1),
            (&[4, 2, 1], &[2], 2),
            (&[2, 1], &[], 2),
        ] {
            let kappa = sig(k);
            let nu = sig(n);
            let ws = vars(&params, rows);
            let lat = skew_b_lattice(&kappa, &nu, lam, &ws, &params, true).unwrap();
            let formula = b_stoch_formula(&kappa, &nu, lam, &ws, &params).unwrap();
            assert!(close(lat, formula, 1e-8), "κ={kappa}/ν={nu}: {lat} vs {formula}");
        }
    }

    #[test]
    fn symmetrization_lemma() {
        let mode = FunctionMode::Trigonometric;
        let vs = [C64::new(0.13, 0.02), C64::new(0.41, -0.05), C64::new(-0.22, 0.11)];
        let beta = C64::new(0.07, 0.03);
        let l = symmetrization_lhs(&vs, beta, mode).unwrap();
        let r = symmetrization_rhs(3, beta, mode);
        assert!(close(l, r, 1e-10));
    }
}
