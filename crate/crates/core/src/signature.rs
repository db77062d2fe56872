//! Nonnegative signatures and the interlacing relation between them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{IrfError, Result};

/// A weakly decreasing finite sequence of nonnegative integers.
///
/// The multiplicative view `0^{m₀} 1^{m₁} 2^{m₂} …` is the occupation vector
/// of the tensor product: `m_i` paths sit in column `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Signature {
    parts: Vec<u32>,
}

impl Signature {
    /// Builds a signature from parts that must already be nonincreasing.
    pub fn new(parts: Vec<u32>) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(IrfError::InvalidInput(format!(
                "signature parts must be nonincreasing, got {parts:?}"
            )));
        }
        Ok(Signature { parts })
    }

    /// Sorts the parts into nonincreasing order.
    pub fn from_unsorted(mut parts: Vec<u32>) -> Self {
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Signature { parts }
    }

    pub fn empty() -> Self {
        Signature { parts: Vec::new() }
    }

    /// The signature `x^n`.
    pub fn repeated(x: u32, n: usize) -> Self {
        Signature { parts: vec![x; n] }
    }

    /// Reads a signature off an occupation vector `(m₀, m₁, …)`.
    pub fn from_occupation(occ: &[u32]) -> Self {
        let mut parts = Vec::new();
        for (i, &m) in occ.iter().enumerate().rev() {
            parts.extend(std::iter::repeat_n(i as u32, m as usize));
        }
        Signature { parts }
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    /// Number of parts `ℓ`.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Largest part, or 0 for the empty signature.
    pub fn max_part(&self) -> u32 {
        self.parts.first().copied().unwrap_or(0)
    }

    /// Smallest part, or `None` for the empty signature.
    pub fn min_part(&self) -> Option<u32> {
        self.parts.last().copied()
    }

    /// `|ν| = ν₁ + ν₂ + …`.
    pub fn size(&self) -> u64 {
        self.parts.iter().map(|&p| p as u64).sum()
    }

    /// Multiplicity `m_i` of the value `i`.
    pub fn multiplicity(&self, i: u32) -> usize {
        self.parts.iter().filter(|&&p| p == i).count()
    }

    /// Number of parts strictly below `k` (the count `m_{<k}`).
    pub fn count_below(&self, k: u32) -> usize {
        self.parts.iter().filter(|&&p| p < k).count()
    }

    /// Occupation vector over `columns` columns.
    pub fn occupation(&self, columns: usize) -> Result<Vec<u32>> {
        if columns <= self.max_part() as usize && !self.is_empty() {
            return Err(IrfError::InvalidInput(format!(
                "signature with largest part {} does not fit in {columns} columns",
                self.max_part()
            )));
        }
        let mut occ = vec![0u32; columns];
        for &p in &self.parts {
            occ[p as usize] += 1;
        }
        Ok(occ)
    }

    /// Whether every part is at least one.
    pub fn all_positive(&self) -> bool {
        self.parts.iter().all(|&p| p >= 1)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

/// `ν ≻ μ`: `ν₁ ≥ μ₁ ≥ ν₂ ≥ μ₂ ≥ …` with `ℓ(ν) ∈ {ℓ(μ), ℓ(μ)+1}`.
pub fn interlaces(nu: &Signature, mu: &Signature) -> bool {
    let (n, m) = (nu.len(), mu.len());
    if n != m && n != m + 1 {
        return false;
    }
    let upper = mu.parts.iter().zip(&nu.parts).all(|(a, b)| b >= a);
    let lower = mu.parts.iter().zip(nu.parts.iter().skip(1)).all(|(a, b)| a >= b);
    upper && lower
}

/// All `κ` with `upper ≻ κ ≻ lower` (as far as each relation is given) and
/// `ℓ(κ) = len`, with the extra restriction `κ₁ ≤ max_part`.
///
/// `upper = None` leaves the top side free, which enumerates the
/// signatures lying above `lower` in a single interlacing step.
pub fn interlacing_between(
    upper: Option<&Signature>,
    lower: Option<&Signature>,
    len: usize,
    max_part: u32,
) -> Vec<Signature> {
    if let Some(u) = upper {
        if u.len() != len && u.len() != len + 1 {
            return Vec::new();
        }
    }
    if let Some(l) = lower {
        if len != l.len() && len != l.len() + 1 {
            return Vec::new();
        }
    }
    let mut bounds = Vec::with_capacity(len);
    for i in 0..len {
        let mut lo = 0u32;
        let mut hi = max_part;
        if let Some(u) = upper {
            // κ_i ≤ upper_i and κ_i ≥ upper_{i+1}
            match u.parts.get(i) {
                Some(&v) => hi = hi.min(v),
                None => return Vec::new(),
            }
            if let Some(&v) = u.parts.get(i + 1) {
                lo = lo.max(v);
            }
        }
        if let Some(l) = lower {
            // κ_i ≥ lower_i and κ_{i+1} ≤ lower_i ≤ κ_i
            if let Some(&v) = l.parts.get(i) {
                lo = lo.max(v);
            }
            if i > 0 {
                match l.parts.get(i - 1) {
                    Some(&v) => hi = hi.min(v),
                    None => return Vec::new(),
                }
            }
        }
        if lo > hi {
            return Vec::new();
        }
        bounds.push((lo, hi));
    }
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(len);
    fill(&bounds, 0, u32::MAX, &mut cur, &mut out);
    out
}

/// All nonincreasing `κ` with `lo_i ≤ κ_i ≤ hi_i` componentwise.
pub fn signatures_in_box(lo: &[u32], hi: &[u32]) -> Vec<Signature> {
    let bounds: Vec<(u32, u32)> = lo.iter().copied().zip(hi.iter().copied()).collect();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(bounds.len());
    fill(&bounds, 0, u32::MAX, &mut cur, &mut out);
    out
}

fn fill(bounds: &[(u32, u32)], i: usize, cap: u32, cur: &mut Vec<u32>, out: &mut Vec<Signature>) {
    if i == bounds.len() {
        out.push(Signature { parts: cur.clone() });
        return;
    }
    let (lo, hi) = bounds[i];
    let hi = hi.min(cap);
    if lo > hi {
        return;
    }
    for v in (lo..=hi).rev() {
        cur.push(v);
        fill(bounds, i + 1, v, cur, out);
        cur.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occupation_round_trip() {
        let s = Signature::new(vec![3, 1, 1, 0]).unwrap();
        let occ = s.occupation(5).unwrap();
        assert_eq!(occ, vec![1, 2, 0, 1, 0]);
        assert_eq!(Signature::from_occupation(&occ), s);
        assert_eq!(s.count_below(2), 3);
        assert!(s.occupation(3).is_err());
    }

    #[test]
    fn rejects_increasing_parts() {
        assert!(Signature::new(vec![1, 2]).is_err());
    }

    #[test]
    fn interlacing_relation() {
        let nu = Signature::new(vec![3, 1]).unwrap();
        let mu = Signature::new(vec![2]).unwrap();
        assert!(interlaces(&nu, &mu));
        assert!(!interlaces(&mu, &nu));
        let bad = Signature::new(vec![4]).unwrap();
        assert!(!interlaces(&nu, &bad));
    }

    #[test]
    fn enumeration_matches_filter() {
        let lower = Signature::new(vec![2, 1]).unwrap();
        let found = interlacing_between(None, Some(&lower), 3, 4);
        let mut brute = Vec::new();
        for a in 0..=4u32 {
            for b in 0..=a {
                for c in 0..=b {
                    let k = Signature::new(vec![a, b, c]).unwrap();
                    if interlaces(&k, &lower) {
                        brute.push(k);
                    }
                }
            }
        }
        let mut f = found.clone();
        f.sort();
        brute.sort();
        assert_eq!(f, brute);

        let upper = Signature::new(vec![4, 2, 1]).unwrap();
        let mid = interlacing_between(Some(&upper), Some(&lower), 2, u32::MAX);
        for k in &mid {
            assert!(interlaces(&upper, k) && interlaces(k, &lower));
        }
        assert_eq!(mid.len(), 6);
        assert_eq!(signatures_in_box(&[1, 0], &[2, 2]).len(), 2 + 3);
    }
}
