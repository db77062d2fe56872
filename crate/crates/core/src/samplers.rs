//! Random and exact realizations of the stochastic models: the quadrant
//! IRF sampler, an exact row transfer over quadrant configurations and an
//! event-driven simulator for the dynamic exclusion processes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IrfError, Result};
use crate::params::{IrfParams, SixVertexParams};
use crate::signature::Signature;
use crate::special::C64;
use crate::weights::{hs6v_weight, weight, Hs6vTable, PlaquetteKind, WeightContext};

/// Slack allowed when checking that a stochastic weight is a probability.
pub const POSITIVITY_EPS: f64 = 1e-9;

/// Default cap on the number of simulated sites of an exclusion window.
pub const DEFAULT_MAX_WINDOW: usize = 1 << 20;

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Uniform variate attached to the vertex `(x, y)` of a sample with the
/// given seed. Each vertex reads its own ChaCha stream, so the value does
/// not depend on the order in which vertices are visited.
pub fn vertex_uniform(seed: u64, x: usize, y: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((x as u64) << 32) | y as u64);
    rng.gen::<f64>()
}

/// Seed of trajectory `index` in a batch started from `base`.
pub fn trajectory_seed(base: u64, index: u64) -> u64 {
    base ^ index
}

/// A configuration of the stochastic IRF model on `[1, X] × [1, Y]`.
///
/// `vert[x-1][y]` is the number of paths on the vertical edge of column `x`
/// between rows `y` and `y+1` (so `vert[x-1][0] = 0`), and
/// `horiz[x-1][y-1]` is the horizontal occupation entering vertex `(x, y)`
/// from the left. The extra column `horiz[X]` records the paths that leave
/// the window to the right.
#[derive(Debug, Clone)]
pub struct QuadrantState {
    pub x_max: usize,
    pub y_max: usize,
    pub vert: Vec<Vec<u32>>,
    pub horiz: Vec<Vec<u8>>,
    pub lambda0: C64,
    pub params: IrfParams,
}

impl QuadrantState {
    /// The state with no vertex resolved yet: every row carries a path at
    /// its left boundary and nothing enters from the bottom.
    fn boundary(params: &IrfParams, x_max: usize, y_max: usize) -> Self {
        let mut horiz = vec![vec![0u8; y_max]; x_max + 1];
        if let Some(first) = horiz.first_mut() {
            first.iter_mut().for_each(|h| *h = 1);
        }
        QuadrantState {
            x_max,
            y_max,
            vert: vec![vec![0u32; y_max + 1]; x_max],
            horiz,
            lambda0: params.lambda0,
            params: params.clone(),
        }
    }

    /// Plaquette kind at vertex `(x, y)`, both 1-based.
    pub fn kind_at(&self, x: usize, y: usize) -> PlaquetteKind {
        let path_in = self.horiz[x - 1][y - 1] == 1;
        let path_out = self.horiz[x][y - 1] == 1;
        PlaquetteKind::from_paths(path_in, path_out)
    }

    /// Number of paths that left the window through its right side.
    pub fn escaped(&self) -> usize {
        self.horiz[self.x_max].iter().filter(|&&h| h == 1).count()
    }

    /// Filling of the unit square `[x, x+1] × [y, y+1]`, reached by walking
    /// right along row `y` from the left boundary.
    pub fn filling(&self, x: usize, y: usize) -> Result<C64> {
        self.check_square(x, y)?;
        let eta = self.params.eta;
        let mut lam = self.lambda0 - 2.0 * eta * y as f64;
        for j in 1..=x {
            let k = self.vert[j - 1][y];
            lam += 4.0 * eta * k as f64 - 2.0 * eta * self.params.column(j)?.lambda;
        }
        Ok(lam)
    }

    /// The same filling reached by walking up column `x` from the bottom
    /// boundary. Crossing a horizontal edge upwards subtracts `(2δ−1)·2η`.
    pub fn filling_by_column(&self, x: usize, y: usize) -> Result<C64> {
        self.check_square(x, y)?;
        let eta = self.params.eta;
        let mut lam = self.lambda0 - 2.0 * eta * self.params.lambda_sum(1, x + 1)?;
        for r in 1..=y {
            let delta = self.horiz[x][r - 1] as f64;
            lam -= (2.0 * delta - 1.0) * 2.0 * eta;
        }
        Ok(lam)
    }

    fn check_square(&self, x: usize, y: usize) -> Result<()> {
        if x > self.x_max || y > self.y_max {
            return Err(IrfError::InvalidInput(format!(
                "square ({x},{y}) lies outside the {}×{} window",
                self.x_max, self.y_max
            )));
        }
        Ok(())
    }

    /// Largest mismatch between the two routes to every square.
    pub fn filling_discrepancy(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for x in 0..=self.x_max {
            for y in 0..=self.y_max {
                worst = worst.max((self.filling(x, y)? - self.filling_by_column(x, y)?).norm());
            }
        }
        Ok(worst)
    }

    /// Number of paths passing through or below vertex `(x, n)`: the rows
    /// up to `n` minus the paths that have already turned above row `n` in a
    /// column left of `x`. Paths that left the window are counted as below.
    pub fn height(&self, x: usize, n: usize) -> Result<u32> {
        if x == 0 || x > self.x_max + 1 || n > self.y_max {
            return Err(IrfError::InvalidInput(format!(
                "height at ({x},{n}) is outside the {}×{} window",
                self.x_max, self.y_max
            )));
        }
        let crossed: u32 = (1..x).map(|j| self.vert[j - 1][n]).sum();
        Ok(n as u32 - crossed)
    }

    /// Crossing signature at the line `y = n + ½`: one part per path that
    /// crosses it inside the window, listing its column.
    pub fn crossing_signature(&self, n: usize) -> Signature {
        let mut parts = Vec::new();
        for x in 1..=self.x_max {
            parts.extend(std::iter::repeat_n(x as u32, self.vert[x - 1][n] as usize));
        }
        Signature::from_unsorted(parts)
    }

    /// Checks arrow conservation at every vertex and the boundary data.
    pub fn validate(&self) -> Result<()> {
        for x in 1..=self.x_max {
            if self.vert[x - 1][0] != 0 {
                return Err(IrfError::InvalidInput(format!("a path enters column {x} from the bottom")));
            }
            for y in 1..=self.y_max {
                let inflow = self.vert[x - 1][y - 1] + self.horiz[x - 1][y - 1] as u32;
                let outflow = self.vert[x - 1][y] + self.horiz[x][y - 1] as u32;
                if inflow != outflow {
                    return Err(IrfError::InvalidInput(format!(
                        "arrow conservation fails at vertex ({x},{y})"
                    )));
                }
            }
        }
        if self.y_max > 0 && self.horiz[0].iter().any(|&h| h != 1) {
            return Err(IrfError::InvalidInput("every row must start with a path".into()));
        }
        Ok(())
    }
}

/// Probability of the first outcome at a vertex (A when no path enters from
/// the left, B when one does), validated to be a real number in `[0, 1]`.
fn bernoulli_parameter(
    params: &IrfParams,
    x: usize,
    y: usize,
    k: u32,
    path_in: bool,
    lambda: C64,
) -> Result<(f64, PlaquetteKind, PlaquetteKind)> {
    let w = params.w(y)?;
    let ctx = WeightContext::at(params, x, w, lambda)?;
    let (first, second) = if path_in {
        (PlaquetteKind::B, PlaquetteKind::D)
    } else {
        (PlaquetteKind::A, PlaquetteKind::C)
    };
    let p = weight(first, k, &ctx, true)?;
    let q = if second == PlaquetteKind::C && k == 0 {
        zero()
    } else {
        weight(second, k, &ctx, true)?
    };
    for value in [p, q] {
        let ok = value.im.abs() <= POSITIVITY_EPS
            && value.re >= -POSITIVITY_EPS
            && value.re <= 1.0 + POSITIVITY_EPS;
        if !ok {
            return Err(IrfError::NotStochastic {
                value,
                x,
                y,
            });
        }
    }
    Ok((p.re.clamp(0.0, 1.0), first, second))
}

/// Samples the quadrant model on `[1, X] × [1, Y]`.
///
/// Vertices are resolved row by row, which is one of the orders compatible
/// with the Markov rule (each vertex only needs its left and bottom edges).
/// Since every vertex draws from its own stream, any other compatible
/// order, such as sweeping anti-diagonals, yields the same configuration.
pub fn sample_irf(params: &IrfParams, x_max: usize, y_max: usize, seed: u64) -> Result<QuadrantState> {
    params.require_columns(x_max + 1)?;
    if y_max > 0 {
        params.w(y_max)?;
    }
    let mut state = QuadrantState::boundary(params, x_max, y_max);
    let eta = params.eta;
    for y in 1..=y_max {
        let mut lam = params.lambda0 - 2.0 * eta * y as f64;
        for x in 1..=x_max {
            let k = state.vert[x - 1][y - 1];
            let path_in = state.horiz[x - 1][y - 1] == 1;
            let (p, first, second) = bernoulli_parameter(params, x, y, k, path_in, lam)?;
            let kind = if vertex_uniform(seed, x, y) < p { first } else { second };
            let k_out = kind.output(k).expect("C is only chosen with a path below");
            state.vert[x - 1][y] = k_out;
            state.horiz[x][y - 1] = u8::from(kind.path_out());
            lam += 4.0 * eta * k_out as f64 - 2.0 * eta * params.column(x)?.lambda;
        }
    }
    Ok(state)
}

/// Occupations of the vertical edges of columns `1..=X` crossing one
/// horizontal line, plus the number of paths that already left the window.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineState {
    pub occupation: Vec<u32>,
    pub escaped: u32,
}

impl LineState {
    /// Height `h(x, N)` read off the line `y = N + ½`, valid for `x ≤ X+1`.
    pub fn height(&self, x: usize, n: usize) -> u32 {
        let crossed: u32 = self.occupation.iter().take(x.saturating_sub(1)).sum();
        n as u32 - crossed
    }

    pub fn signature(&self) -> Signature {
        let mut parts = Vec::new();
        for (i, &m) in self.occupation.iter().enumerate() {
            parts.extend(std::iter::repeat_n(i as u32 + 1, m as usize));
        }
        Signature::from_unsorted(parts)
    }
}

/// Exact law of the line state above row `N` of the quadrant model
/// restricted to `X` columns. Weights may be complex.
#[derive(Debug, Clone)]
pub struct LineDistribution {
    pub rows: usize,
    pub columns: usize,
    pub states: BTreeMap<LineState, C64>,
}

impl LineDistribution {
    /// Probabilities of crossing signatures with all parts inside the
    /// window, and the total mass of states where some path escaped.
    pub fn crossing_law(&self) -> (BTreeMap<Signature, C64>, C64) {
        let mut law = BTreeMap::new();
        let mut escaped = zero();
        for (s, &p) in &self.states {
            if s.escaped > 0 {
                escaped += p;
            } else {
                *law.entry(s.signature()).or_insert_with(zero) += p;
            }
        }
        (law, escaped)
    }

    pub fn total_mass(&self) -> C64 {
        self.states.values().sum()
    }

    /// Expectation of a function of the line state.
    pub fn expectation<F>(&self, mut g: F) -> C64
    where
        F: FnMut(&LineState) -> C64,
    {
        self.states.iter().map(|(s, &p)| p * g(s)).sum()
    }
}

/// Largest number of rows accepted by [`enumerate_distribution`].
pub const MAX_ENUMERATED_ROWS: usize = 5;
/// Largest number of columns accepted by [`enumerate_distribution`].
pub const MAX_ENUMERATED_COLUMNS: usize = 8;

/// Row transfer over the quadrant: propagates the law of the line state
/// from the empty bottom boundary through rows `1..=N`.
///
/// Row `y` starts with filling `λ₀ − 2ηy` and its fillings shift by
/// `4ηk − 2ηΛ_x` across column `x`. A path still travelling horizontally
/// after column `X` is recorded as escaped.
pub fn enumerate_distribution(params: &IrfParams, n: usize, x_max: usize) -> Result<LineDistribution> {
    check_enumeration_size(n, x_max)?;
    params.require_columns(x_max + 1)?;
    if n > 0 {
        params.w(n)?;
    }
    let eta = params.eta;
    transfer(
        n,
        x_max,
        |y| params.lambda0 - 2.0 * eta * y as f64,
        |x, y, kind, k, lam| {
            let ctx = WeightContext::at(params, x, params.w(y)?, lam)?;
            let k_out = kind.output(k).unwrap_or(0);
            let next = lam + 4.0 * eta * k_out as f64 - 2.0 * eta * params.column(x)?.lambda;
            Ok((weight(kind, k, &ctx, true)?, next))
        },
    )
}

/// The same row transfer for the stochastic higher spin six-vertex model
/// with column data `(s_x, ξ_x)` and row data `u_y`.
pub fn enumerate_hs6v_distribution(sv: &SixVertexParams, n: usize, x_max: usize) -> Result<LineDistribution> {
    check_enumeration_size(n, x_max)?;
    if sv.s.len() <= x_max || sv.xi.len() <= x_max || sv.u.len() < n {
        return Err(IrfError::InvalidInput(format!(
            "six-vertex data covers {} columns and {} rows, need {} and {n}",
            sv.s.len(),
            sv.u.len(),
            x_max + 1
        )));
    }
    transfer(
        n,
        x_max,
        |_| zero(),
        |x, y, kind, k, lam| {
            let k_out = kind.output(k).unwrap_or(0);
            let w = hs6v_weight(
                Hs6vTable::Stochastic,
                k,
                u32::from(kind.path_in()),
                k_out,
                u32::from(kind.path_out()),
                sv.q,
                sv.s[x],
                sv.xi[x],
                sv.u[y - 1],
            )?;
            Ok((w, lam))
        },
    )
}

fn check_enumeration_size(n: usize, x_max: usize) -> Result<()> {
    if n > MAX_ENUMERATED_ROWS || x_max > MAX_ENUMERATED_COLUMNS || x_max == 0 {
        return Err(IrfError::InvalidInput(format!(
            "enumeration needs N ≤ {MAX_ENUMERATED_ROWS} and 1 ≤ X ≤ {MAX_ENUMERATED_COLUMNS}, got N={n}, X={x_max}"
        )));
    }
    Ok(())
}

/// Generic row transfer. `step(x, y, kind, k, state)` returns the weight of
/// a plaquette and the auxiliary state (the filling) to its right.
fn transfer<S, F>(n: usize, x_max: usize, row_start: S, step: F) -> Result<LineDistribution>
where
    S: Fn(usize) -> C64,
    F: Fn(usize, usize, PlaquetteKind, u32, C64) -> Result<(C64, C64)>,
{
    let mut layer: BTreeMap<LineState, C64> = BTreeMap::new();
    layer.insert(
        LineState {
            occupation: vec![0; x_max],
            escaped: 0,
        },
        C64::new(1.0, 0.0),
    );
    for y in 1..=n {
        let mut next: BTreeMap<LineState, C64> = BTreeMap::new();
        for (below, &mass) in &layer {
            // partial rows: (occupation so far, path carried right, filling, weight)
            let mut partial = vec![(Vec::with_capacity(x_max), true, row_start(y), mass)];
            for x in 1..=x_max {
                let k = below.occupation[x - 1];
                let mut grown = Vec::with_capacity(partial.len() * 2);
                for (occ, carry, lam, wt) in partial {
                    let options: &[PlaquetteKind] = if carry {
                        &[PlaquetteKind::B, PlaquetteKind::D]
                    } else if k == 0 {
                        &[PlaquetteKind::A]
                    } else {
                        &[PlaquetteKind::A, PlaquetteKind::C]
                    };
                    for &kind in options {
                        let (p, lam_next) = step(x, y, kind, k, lam)?;
                        if p == zero() {
                            continue;
                        }
                        let mut occ = occ.clone();
                        occ.push(kind.output(k).expect("C needs k ≥ 1"));
                        grown.push((occ, kind.path_out(), lam_next, wt * p));
                    }
                }
                partial = grown;
            }
            for (occ, carry, _, wt) in partial {
                let state = LineState {
                    occupation: occ,
                    escaped: below.escaped + u32::from(carry),
                };
                *next.entry(state).or_insert_with(zero) += wt;
            }
        }
        layer = next;
    }
    Ok(LineDistribution {
        rows: n,
        columns: x_max,
        states: layer,
    })
}

/// Which dynamic exclusion process to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ExclusionKind {
    DynamicAsep { q: f64, alpha: f64 },
    DynamicSsep { lambda_bar: f64 },
}

impl ExclusionKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ExclusionKind::DynamicAsep { q, alpha } => {
                if !(q > 0.0 && q.is_finite() && alpha >= 0.0 && alpha.is_finite()) {
                    return Err(IrfError::InvalidParameter(format!(
                        "dynamic ASEP needs q > 0 and α ≥ 0, got q={q}, α={alpha}"
                    )));
                }
            }
            ExclusionKind::DynamicSsep { lambda_bar } => {
                if !(lambda_bar > 0.0) {
                    return Err(IrfError::InvalidParameter(format!(
                        "dynamic SSEP needs λ̄ > 0, got {lambda_bar}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rates `(down, up)` of the flips `s ↦ s−2` (particle jumps left) and
    /// `s ↦ s+2` (particle jumps right) at a site of height `s`.
    pub fn rates(&self, s: i64) -> (f64, f64) {
        match *self {
            ExclusionKind::DynamicAsep { q, alpha } => {
                let a = |e: i64| 1.0 + alpha * q.powi((-(s + e)) as i32);
                (q * a(0) / a(-1), a(0) / a(1))
            }
            ExclusionKind::DynamicSsep { lambda_bar } => {
                let s = s as f64;
                ((s + lambda_bar) / (s + lambda_bar - 1.0), (s + lambda_bar) / (s + lambda_bar + 1.0))
            }
        }
    }
}

/// Height profile of an exclusion process on a finite window, with the step
/// profile `s_x = |x|` outside of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionState {
    pub lo: i64,
    pub s: Vec<i64>,
    pub t: f64,
    pub kind: ExclusionKind,
    /// Number of flips performed so far.
    pub events: u64,
}

impl ExclusionState {
    /// Step initial condition `s_x = |x|` on `[−half_width, half_width]`.
    pub fn step(kind: ExclusionKind, half_width: usize) -> Result<Self> {
        kind.validate()?;
        let hw = half_width.max(4) as i64;
        Ok(ExclusionState {
            lo: -hw,
            s: (-hw..=hw).map(i64::abs).collect(),
            t: 0.0,
            kind,
            events: 0,
        })
    }

    pub fn hi(&self) -> i64 {
        self.lo + self.s.len() as i64 - 1
    }

    pub fn s_at(&self, x: i64) -> i64 {
        if x < self.lo || x > self.hi() {
            x.abs()
        } else {
            self.s[(x - self.lo) as usize]
        }
    }

    /// `h(x) = (s_x − x)/2`, the number of particles to the right of `x`.
    pub fn height(&self, x: i64) -> i64 {
        (self.s_at(x) - x) / 2
    }

    /// Sites `x` inside the window with a particle at `x + ½`.
    pub fn particles(&self) -> Vec<i64> {
        (self.lo..self.hi()).filter(|&x| self.s_at(x + 1) - self.s_at(x) == -1).collect()
    }

    /// Rebuilds a window state from particle positions: the slope is `−1`
    /// across occupied bonds `x + ½`, `+1` elsewhere, anchored by the step
    /// profile at the right end of the window.
    pub fn from_particles(kind: ExclusionKind, lo: i64, hi: i64, particles: &[i64], t: f64) -> Self {
        let mut s = vec![0i64; (hi - lo + 1) as usize];
        let last = s.len() - 1;
        s[last] = hi.abs();
        for x in (lo..hi).rev() {
            let i = (x - lo) as usize;
            let slope = if particles.contains(&x) { -1 } else { 1 };
            s[i] = s[i + 1] - slope;
        }
        ExclusionState {
            lo,
            s,
            t,
            kind,
            events: 0,
        }
    }

    /// `|s_{x+1} − s_x| = 1` across the window and its two edges.
    pub fn is_lipschitz(&self) -> bool {
        (self.lo - 1..=self.hi()).all(|x| (self.s_at(x + 1) - self.s_at(x)).abs() == 1)
    }

    /// Flip rate at `x` if it is a local extremum, `None` otherwise.
    fn flip_rate(&self, x: i64) -> Result<Option<f64>> {
        let (l, c, r) = (self.s_at(x - 1), self.s_at(x), self.s_at(x + 1));
        let (down, up) = self.kind.rates(c);
        let rate = if l == c - 1 && r == c - 1 {
            down
        } else if l == c + 1 && r == c + 1 {
            up
        } else {
            return Ok(None);
        };
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(IrfError::InvalidParameter(format!(
                "nonpositive jump rate {rate} at site {x} with s = {c} for {:?}",
                self.kind
            )));
        }
        Ok(Some(rate))
    }

    /// Grows the window by `extra` sites on the left or right.
    fn extend(&mut self, left: bool, extra: usize) {
        let extra = extra as i64;
        if left {
            let new_lo = self.lo - extra;
            let mut s: Vec<i64> = (new_lo..self.lo).map(i64::abs).collect();
            s.extend_from_slice(&self.s);
            self.s = s;
            self.lo = new_lo;
        } else {
            let hi = self.hi();
            self.s.extend((hi + 1..=hi + extra).map(i64::abs));
        }
    }
}

/// One flip of an exclusion trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipEvent {
    pub t: f64,
    pub x: i64,
    pub s_x: i64,
}

#[derive(Debug, Clone, Copy)]
pub struct SimulationOptions {
    /// Largest window length allowed before giving up.
    pub max_window: usize,
    /// Distance to the window edge that triggers growth.
    pub margin: i64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        SimulationOptions {
            max_window: DEFAULT_MAX_WINDOW,
            margin: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tentative {
    time: f64,
    x: i64,
    version: u64,
}

impl Eq for Tentative {}

impl Ord for Tentative {
    // reversed so that the max-heap pops the earliest time first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.x.cmp(&self.x))
            .then_with(|| other.version.cmp(&self.version))
    }
}

impl PartialOrd for Tentative {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exponential clock source keyed by `(seed, site, draw index)`.
struct Clocks {
    rng: ChaCha8Rng,
    draws: HashMap<i64, u64>,
}

impl Clocks {
    fn new(seed: u64) -> Self {
        Clocks {
            rng: ChaCha8Rng::seed_from_u64(seed),
            draws: HashMap::new(),
        }
    }

    fn exponential(&mut self, x: i64, rate: f64) -> f64 {
        let n = self.draws.entry(x).or_insert(0);
        // zigzag keeps negative sites on distinct streams
        let stream = ((x << 1) ^ (x >> 63)) as u64;
        self.rng.set_stream(stream);
        self.rng.set_word_pos(2 * *n as u128);
        *n += 1;
        let u: f64 = self.rng.gen();
        -(1.0 - u).ln() / rate
    }
}

/// Runs the exclusion process from `initial` up to time `t_end`.
///
/// Only local extrema can flip. After each flip the clocks of the site and
/// its two neighbours are redrawn, and stale heap entries are skipped by
/// version. `log`, if given, receives every flip.
pub fn simulate_exclusion(
    initial: &ExclusionState,
    t_end: f64,
    seed: u64,
    opts: SimulationOptions,
    mut log: Option<&mut Vec<FlipEvent>>,
) -> Result<ExclusionState> {
    initial.kind.validate()?;
    if !(t_end >= initial.t) {
        return Err(IrfError::InvalidInput(format!(
            "end time {t_end} precedes the current time {}",
            initial.t
        )));
    }
    let mut state = initial.clone();
    let mut clocks = Clocks::new(seed);
    let mut versions: HashMap<i64, u64> = HashMap::new();
    let mut heap = BinaryHeap::new();

    let schedule = |state: &ExclusionState,
                    x: i64,
                    now: f64,
                    clocks: &mut Clocks,
                    versions: &mut HashMap<i64, u64>,
                    heap: &mut BinaryHeap<Tentative>|
     -> Result<()> {
        let v = versions.entry(x).or_insert(0);
        *v += 1;
        if x < state.lo || x > state.hi() {
            return Ok(());
        }
        if let Some(rate) = state.flip_rate(x)? {
            heap.push(Tentative {
                time: now + clocks.exponential(x, rate),
                x,
                version: *v,
            });
        }
        Ok(())
    };

    for x in state.lo..=state.hi() {
        schedule(&state, x, state.t, &mut clocks, &mut versions, &mut heap)?;
    }
    while let Some(ev) = heap.pop() {
        if versions.get(&ev.x) != Some(&ev.version) {
            continue;
        }
        if ev.time > t_end {
            break;
        }
        let i = (ev.x - state.lo) as usize;
        let c = state.s[i];
        state.s[i] = if state.s_at(ev.x - 1) < c { c - 2 } else { c + 2 };
        state.t = ev.time;
        state.events += 1;
        if let Some(log) = log.as_deref_mut() {
            log.push(FlipEvent {
                t: ev.time,
                x: ev.x,
                s_x: state.s[i],
            });
        }
        let mut rescheduled = vec![ev.x - 1, ev.x, ev.x + 1];
        for left in [true, false] {
            let near = if left {
                ev.x - state.lo < opts.margin
            } else {
                state.hi() - ev.x < opts.margin
            };
            if near {
                let extra = state.s.len().max(8);
                if state.s.len() + extra > opts.max_window {
                    return Err(IrfError::ResourceLimit(format!(
                        "exclusion window would exceed {} sites",
                        opts.max_window
                    )));
                }
                let (old_lo, old_hi) = (state.lo, state.hi());
                state.extend(left, extra);
                if left {
                    rescheduled.extend(state.lo..old_lo);
                } else {
                    rescheduled.extend(old_hi + 1..=state.hi());
                }
            }
        }
        for x in rescheduled {
            schedule(&state, x, state.t, &mut clocks, &mut versions, &mut heap)?;
        }
    }
    state.t = t_end;
    Ok(state)
}

/// Runs `trajectories` independent copies in parallel and maps each final
/// state through `g`. Results are returned in trajectory order.
pub fn run_trajectories<T, G>(
    initial: &ExclusionState,
    t_end: f64,
    base_seed: u64,
    trajectories: usize,
    opts: SimulationOptions,
    g: G,
) -> Result<Vec<T>>
where
    T: Send,
    G: Fn(&ExclusionState) -> T + Sync,
{
    use rayon::prelude::*;
    (0..trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let fin = simulate_exclusion(initial, t_end, trajectory_seed(base_seed, i), opts, None)?;
            Ok(g(&fin))
        })
        .collect()
}
