//! Brute-force action of the `a, b, c, d` operators on finite tensor
//! products, used as the reference for every closed formula.
//!
//! Vectors are sparse maps from occupation tuples to coefficients. An
//! operator acts on a basis vector by summing over the horizontal path
//! states between consecutive columns; the filling seen by column `j` is
//! `λ − 2η Σ_{i<j} (Λ_i − 2k'_i)` with `k'_i` the occupation after the action.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{IrfError, Result};
use crate::params::IrfParams;
use crate::signature::Signature;
use crate::special::C64;
use crate::weights::{weight, PlaquetteKind, WeightContext};

/// Default bound on the occupation of a single column.
pub const DEFAULT_CAP: u32 = 8;

/// Coefficients below this fraction of the largest one are dropped.
pub const PRUNE_RELATIVE: f64 = 1e-15;

/// Relative agreement required between two truncation depths.
pub const STABILIZATION_TOL: f64 = 1e-10;

/// The four operators of the evaluation module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Operator {
    A,
    B,
    C,
    D,
}

impl Operator {
    fn kind(self) -> PlaquetteKind {
        match self {
            Operator::A => PlaquetteKind::A,
            Operator::B => PlaquetteKind::B,
            Operator::C => PlaquetteKind::C,
            Operator::D => PlaquetteKind::D,
        }
    }
}

/// A finite linear combination of pure tensors `e_{m₀} ⊗ … ⊗ e_{m_N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitaryVector {
    columns: usize,
    cap: u32,
    terms: BTreeMap<Vec<u32>, C64>,
}

impl FinitaryVector {
    pub fn zero(columns: usize, cap: u32) -> Self {
        FinitaryVector {
            columns,
            cap,
            terms: BTreeMap::new(),
        }
    }

    /// The basis vector `E_μ` over `columns` columns.
    pub fn basis(mu: &Signature, columns: usize, cap: u32) -> Result<Self> {
        let occ = mu.occupation(columns)?;
        if let Some((j, _)) = occ.iter().enumerate().find(|(_, &m)| m > cap) {
            return Err(IrfError::CapExceeded { cap, column: j });
        }
        let mut v = FinitaryVector::zero(columns, cap);
        v.terms.insert(occ, C64::new(1.0, 0.0));
        Ok(v)
    }

    /// The basis vector with an explicit occupation tuple.
    pub fn from_occupation(occ: Vec<u32>, cap: u32) -> Result<Self> {
        if let Some((j, _)) = occ.iter().enumerate().find(|(_, &m)| m > cap) {
            return Err(IrfError::CapExceeded { cap, column: j });
        }
        let mut v = FinitaryVector::zero(occ.len(), cap);
        v.terms.insert(occ, C64::new(1.0, 0.0));
        Ok(v)
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn cap(&self) -> u32 {
        self.cap
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, C64> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of the pure tensor with the given occupations.
    pub fn coefficient(&self, occ: &[u32]) -> C64 {
        self.terms.get(occ).copied().unwrap_or_default()
    }

    /// Coefficient of `E_ν`; zero if `ν` does not fit.
    pub fn coefficient_of(&self, nu: &Signature) -> C64 {
        match nu.occupation(self.columns) {
            Ok(occ) => self.coefficient(&occ),
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn scale(&mut self, s: C64) {
        for v in self.terms.values_mut() {
            *v *= s;
        }
    }

    fn add(&mut self, occ: Vec<u32>, value: C64) {
        *self.terms.entry(occ).or_default() += value;
    }

    fn prune(&mut self) {
        let max = self.terms.values().map(|c| c.norm()).fold(0.0, f64::max);
        let threshold = PRUNE_RELATIVE * max;
        self.terms.retain(|_, c| c.norm() > threshold && c.norm() > 0.0);
    }
}

/// One operator application with row parameter `w`.
pub fn apply_operator(
    op: Operator,
    lambda: C64,
    w: C64,
    v: &FinitaryVector,
    params: &IrfParams,
) -> Result<FinitaryVector> {
    params.require_columns(v.columns)?;
    let kind = op.kind();
    let mut out = FinitaryVector::zero(v.columns, v.cap);
    for (occ, &coef) in &v.terms {
        for (new_occ, value) in apply_to_basis(kind, lambda, w, occ, v.cap, params)? {
            out.add(new_occ, coef * value);
        }
    }
    out.prune();
    Ok(out)
}

struct Partial {
    occ: Vec<u32>,
    path: bool,
    lambda: C64,
    value: C64,
}

fn apply_to_basis(
    kind: PlaquetteKind,
    lambda: C64,
    w: C64,
    occ: &[u32],
    cap: u32,
    params: &IrfParams,
) -> Result<Vec<(Vec<u32>, C64)>> {
    let n = occ.len();
    let eta = params.eta;
    let mut states = vec![Partial {
        occ: Vec::with_capacity(n),
        path: kind.path_in(),
        lambda,
        value: C64::new(1.0, 0.0),
    }];
    for (j, &k) in occ.iter().enumerate() {
        let last = j + 1 == n;
        let col = params.column(j)?;
        let mut next = Vec::with_capacity(states.len() * 2);
        for s in &states {
            for out_path in [false, true] {
                if last && out_path != kind.path_out() {
                    continue;
                }
                let local = PlaquetteKind::from_paths(s.path, out_path);
                let Some(k_out) = local.output(k) else {
                    continue;
                };
                let ctx = WeightContext::at(params, j, w, s.lambda)?;
                let wgt = weight(local, k, &ctx, false)?;
                if wgt.norm() == 0.0 {
                    continue;
                }
                if k_out > cap {
                    return Err(IrfError::CapExceeded { cap, column: j });
                }
                let mut o = s.occ.clone();
                o.push(k_out);
                next.push(Partial {
                    occ: o,
                    path: out_path,
                    lambda: s.lambda - 2.0 * eta * (col.lambda - 2.0 * k_out as f64),
                    value: s.value * wgt,
                });
            }
        }
        states = next;
    }
    Ok(states.into_iter().map(|s| (s.occ, s.value)).collect())
}

fn relative_gap(a: C64, b: C64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn stabilized(a: C64, b: C64, what: &str) -> Result<C64> {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 || relative_gap(a, b) <= STABILIZATION_TOL {
        Ok(b)
    } else {
        Err(IrfError::Stabilization(format!(
            "{what}: values {a} and {b} at two truncation depths differ"
        )))
    }
}

fn b_coefficient_at(
    nu: &Signature,
    mu: &Signature,
    lambda: C64,
    ws: &[C64],
    params: &IrfParams,
    columns: usize,
) -> Result<C64> {
    let mut v = FinitaryVector::basis(mu, columns, DEFAULT_CAP)?;
    for (i, &w) in ws.iter().enumerate().rev() {
        v = apply_operator(Operator::B, lambda + 2.0 * params.eta * i as f64, w, &v, params)?;
    }
    Ok(v.coefficient_of(nu))
}

/// Coefficient of `E_ν` in `b(λ,w₁) b(λ+2η,w₂) ⋯ b(λ+2η(n−1),w_n) E_μ`.
///
/// Evaluated with `N` and `N+1` columns where `N = max(μ₁, ν₁) + 1`; the
/// two values must agree.
pub fn skew_b_oracle(nu: &Signature, mu: &Signature, lambda: C64, ws: &[C64], params: &IrfParams) -> Result<C64> {
    if nu.len() != mu.len() + ws.len() {
        return Ok(C64::new(0.0, 0.0));
    }
    let n = nu.max_part().max(mu.max_part()) as usize + 1;
    let first = b_coefficient_at(nu, mu, lambda, ws, params, n)?;
    let second = b_coefficient_at(nu, mu, lambda, ws, params, n + 1)?;
    stabilized(first, second, "skew B coefficient")
}

/// Applies the normalized `d̄(λ, w)` over columns `0..depth`.
pub fn apply_d_normalized(lambda: C64, w: C64, v: &FinitaryVector, params: &IrfParams) -> Result<FinitaryVector> {
    let depth = v.columns;
    let eta = params.eta;
    let mut total: Option<u64> = None;
    for occ in v.terms.keys() {
        let t: u64 = occ.iter().map(|&m| m as u64).sum();
        if total.is_some_and(|x| x != t) {
            return Err(IrfError::InvalidInput(
                "normalized d needs a vector of fixed length".into(),
            ));
        }
        total = Some(t);
    }
    let len = total.unwrap_or(0) as f64;
    let mut norm = C64::new(1.0, 0.0);
    for j in 0..depth {
        let col = params.column(j)?;
        let x = col.z - w;
        let num = params.f(x + (col.lambda + 1.0) * eta);
        let den = params.f(x + (1.0 - col.lambda) * eta);
        norm *= crate::weights::checked_ratio(num, den, "f(z-w+(1-Λ)η)")?;
    }
    let tele = params.f(lambda - 2.0 * eta * (params.lambda_sum(0, depth)? - 2.0 * len));
    norm *= crate::weights::checked_ratio(C64::new(1.0, 0.0), tele, "f(λ-2η(Λ_[0,m]-2ℓ))")?;
    let mut out = apply_operator(Operator::D, lambda, w, v, params)?;
    out.scale(norm);
    Ok(out)
}

fn d_coefficient_at(
    nu: &Signature,
    mu: &Signature,
    lambda: C64,
    ws: &[C64],
    params: &IrfParams,
    depth: usize,
) -> Result<C64> {
    let mut v = FinitaryVector::basis(nu, depth, DEFAULT_CAP)?;
    for (i, &w) in ws.iter().enumerate().rev() {
        v = apply_d_normalized(lambda + 2.0 * params.eta * i as f64, w, &v, params)?;
    }
    Ok(v.coefficient_of(mu))
}

/// Coefficient of `E_μ` in `d̄(λ,w₁) d̄(λ+2η,w₂) ⋯ d̄(λ+2η(n−1),w_n) E_ν`.
///
/// Evaluated at depths `m` and `m+2` with `m = max(ν₁, μ₁) + 1` columns.
pub fn skew_d_oracle(nu: &Signature, mu: &Signature, lambda: C64, ws: &[C64], params: &IrfParams) -> Result<C64> {
    if nu.len() != mu.len() {
        return Ok(C64::new(0.0, 0.0));
    }
    let m = nu.max_part().max(mu.max_part()) as usize + 1;
    let first = d_coefficient_at(nu, mu, lambda, ws, params, m)?;
    let second = d_coefficient_at(nu, mu, lambda, ws, params, m + 2)?;
    stabilized(first, second, "skew D coefficient")
}

/// Coefficient of `e₀ ⊗ ⋯ ⊗ e₀` in `c(λ,w₁) c(λ−2η,w₂) ⋯ c(λ−2η(p−1),w_p)`
/// applied to `e_{k₁} ⊗ ⋯ ⊗ e_{k_m}` in the columns `1..=m`.
pub fn c_matrix_element(ws: &[C64], ks: &[u32], lambda: C64, params: &IrfParams) -> Result<C64> {
    let m = ks.len();
    if m == 0 {
        return Err(IrfError::InvalidInput("at least one column is required".into()));
    }
    params.require_columns(m + 1)?;
    let total: u64 = ks.iter().map(|&k| k as u64).sum();
    if total != ws.len() as u64 {
        return Ok(C64::new(0.0, 0.0));
    }
    let shifted = params.with_columns(params.columns()[1..=m].to_vec())?;
    let cap = ks.iter().copied().max().unwrap_or(0).max(DEFAULT_CAP);
    let mut v = FinitaryVector::from_occupation(ks.to_vec(), cap)?;
    for (i, &w) in ws.iter().enumerate().rev() {
        v = apply_operator(Operator::C, lambda - 2.0 * shifted.eta * i as f64, w, &v, &shifted)?;
    }
    Ok(v.coefficient(&vec![0; m]))
}
