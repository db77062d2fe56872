//! Parameter packs, the p/q grid, admissible contour families, the
//! exponential map to six-vertex parameters and the shipped presets.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{IrfError, Result};
use crate::special::{f_eval, Circle, FunctionMode, C64, I};

/// Spectral data of one column: inhomogeneity `z` and highest weight `Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub z: C64,
    #[serde(rename = "Lambda")]
    pub lambda: C64,
}

/// Full parameter pack of the IRF model.
///
/// Columns are indexed from 0 (column 0 is the boundary column that the
/// stochastic model drops); rows are indexed from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfParams {
    pub mode: FunctionMode,
    pub eta: C64,
    pub lambda0: C64,
    columns: Vec<Column>,
    rows: Vec<C64>,
    /// `prefix[j] = Λ_0 + … + Λ_{j−1}`.
    prefix: Vec<C64>,
}

impl IrfParams {
    pub fn new(
        mode: FunctionMode,
        eta: C64,
        lambda0: C64,
        columns: Vec<Column>,
        rows: Vec<C64>,
    ) -> Result<Self> {
        mode.validate()?;
        let finite = |c: C64| c.re.is_finite() && c.im.is_finite();
        if !finite(eta) || !finite(lambda0) {
            return Err(IrfError::InvalidParameter("eta and lambda0 must be finite".into()));
        }
        if eta.norm() == 0.0 {
            return Err(IrfError::InvalidParameter("eta must be nonzero".into()));
        }
        if columns.iter().any(|c| !finite(c.z) || !finite(c.lambda)) || rows.iter().any(|w| !finite(*w)) {
            return Err(IrfError::InvalidParameter("column and row data must be finite".into()));
        }
        let mut prefix = Vec::with_capacity(columns.len() + 1);
        let mut acc = C64::new(0.0, 0.0);
        prefix.push(acc);
        for c in &columns {
            acc += c.lambda;
            prefix.push(acc);
        }
        Ok(IrfParams {
            mode,
            eta,
            lambda0,
            columns,
            rows,
            prefix,
        })
    }

    pub fn f(&self, x: C64) -> C64 {
        f_eval(self.mode, x)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// Row parameters `w_1, w_2, …` (stored from index 0).
    pub fn rows(&self) -> &[C64] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Result<Column> {
        self.columns.get(j).copied().ok_or_else(|| {
            IrfError::InvalidInput(format!(
                "column {j} requested but only {} columns are configured",
                self.columns.len()
            ))
        })
    }

    /// Row parameter `w_k` for `k ≥ 1`.
    pub fn w(&self, k: usize) -> Result<C64> {
        if k == 0 {
            return Err(IrfError::InvalidInput("rows are indexed from 1".into()));
        }
        self.rows.get(k - 1).copied().ok_or_else(|| {
            IrfError::InvalidInput(format!(
                "row {k} requested but only {} rows are configured",
                self.rows.len()
            ))
        })
    }

    /// `Λ_{[a,b)} = Λ_a + … + Λ_{b−1}`.
    pub fn lambda_sum(&self, a: usize, b: usize) -> Result<C64> {
        if a > b || b > self.columns.len() {
            return Err(IrfError::InvalidInput(format!(
                "partial sum over [{a}, {b}) outside the {} configured columns",
                self.columns.len()
            )));
        }
        Ok(self.prefix[b] - self.prefix[a])
    }

    pub fn require_columns(&self, n: usize) -> Result<()> {
        if n > self.columns.len() {
            return Err(IrfError::InvalidInput(format!(
                "{n} columns needed but only {} are configured",
                self.columns.len()
            )));
        }
        Ok(())
    }

    pub fn with_rows(&self, rows: Vec<C64>) -> Self {
        IrfParams { rows, ..self.clone() }
    }

    pub fn with_lambda0(&self, lambda0: C64) -> Self {
        IrfParams { lambda0, ..self.clone() }
    }

    pub fn with_mode(&self, mode: FunctionMode) -> Result<Self> {
        mode.validate()?;
        Ok(IrfParams { mode, ..self.clone() })
    }

    pub fn with_columns(&self, columns: Vec<Column>) -> Result<Self> {
        IrfParams::new(self.mode, self.eta, self.lambda0, columns, self.rows.clone())
    }

    /// Parses the JSON configuration format (complex numbers as `[re, im]`).
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig =
            serde_json::from_str(text).map_err(|e| IrfError::Config(e.to_string()))?;
        raw.into_params()
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IrfError::Config(format!("{}: {e}", path.display())))?;
        IrfParams::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawConfig::from_params(self);
        serde_json::to_string_pretty(&raw).expect("parameter packs always serialize")
    }
}

#[derive(Serialize, Deserialize)]
struct RawColumn {
    z: [f64; 2],
    #[serde(rename = "Lambda")]
    lambda: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau: Option<[f64; 2]>,
    eta: [f64; 2],
    lambda0: [f64; 2],
    columns: Vec<RawColumn>,
    rows: Vec<[f64; 2]>,
}

fn cx(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

fn pair(c: C64) -> [f64; 2] {
    [c.re, c.im]
}

impl RawConfig {
    fn into_params(self) -> Result<IrfParams> {
        let mode = match (self.mode.to_ascii_lowercase().as_str(), self.tau) {
            ("elliptic", Some(t)) => FunctionMode::elliptic(cx(t))?,
            ("elliptic", None) => {
                return Err(IrfError::Config("elliptic mode needs a `tau` entry".into()))
            }
            ("trigonometric" | "trig", _) => FunctionMode::Trigonometric,
            ("rational", _) => FunctionMode::Rational,
            (other, _) => return Err(IrfError::Config(format!("unknown mode `{other}`"))),
        };
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                z: cx(c.z),
                lambda: cx(c.lambda),
            })
            .collect();
        let rows = self.rows.iter().map(|&w| cx(w)).collect();
        IrfParams::new(mode, cx(self.eta), cx(self.lambda0), columns, rows)
    }

    fn from_params(p: &IrfParams) -> Self {
        let tau = match p.mode {
            FunctionMode::Elliptic { tau } => Some(pair(tau)),
            _ => None,
        };
        RawConfig {
            mode: p.mode.name().to_string(),
            tau,
            eta: pair(p.eta),
            lambda0: pair(p.lambda0),
            columns: p
                .columns
                .iter()
                .map(|c| RawColumn {
                    z: pair(c.z),
                    lambda: pair(c.lambda),
                })
                .collect(),
            rows: p.rows.iter().map(|&w| pair(w)).collect(),
        }
    }
}

/// The points `p_j = z_j + (1−Λ_j)η` and `q_j = z_j + (1+Λ_j)η`.
#[derive(Debug, Clone, PartialEq)]
pub struct PqGrid {
    pub p: Vec<C64>,
    pub q: Vec<C64>,
}

pub fn pq_grid(params: &IrfParams) -> PqGrid {
    let eta = params.eta;
    let p = params.columns.iter().map(|c| c.z + (1.0 - c.lambda) * eta).collect();
    let q = params.columns.iter().map(|c| c.z + (1.0 + c.lambda) * eta).collect();
    PqGrid { p, q }
}

impl PqGrid {
    /// Recovers the column data from the grid.
    pub fn to_columns(&self, eta: C64) -> Vec<Column> {
        self.p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| Column {
                z: (p + q) / 2.0 - eta,
                lambda: (q - p) / (2.0 * eta),
            })
            .collect()
    }
}

/// Nested circles `γ₁ ⊃ γ₂ ⊃ … ⊃ γ_M` (stored outermost first).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContourFamily {
    pub gammas: Vec<Circle>,
}

impl ContourFamily {
    pub fn len(&self) -> usize {
        self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gammas.is_empty()
    }

    /// Circles in the order `γ_1, …, γ_m` restricted to the first `m`.
    pub fn outer(&self, m: usize) -> &[Circle] {
        &self.gammas[..m.min(self.gammas.len())]
    }
}

/// Why a contour family could not be certified.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityDiagnostic {
    pub condition: String,
    pub point: C64,
    pub contour: usize,
}

impl fmt::Display for AdmissibilityDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (point {}, contour γ{})", self.condition, self.point, self.contour)
    }
}

/// Geometry of a nested family of concentric circles.
#[derive(Debug, Clone, Copy)]
pub struct NestingPolicy {
    /// Innermost radius as a multiple of the cluster radius.
    pub inner_factor: f64,
    /// Smallest allowed innermost radius.
    pub inner_floor: f64,
    /// Extra radial gap between consecutive circles beyond `|2η|`.
    pub gap: f64,
}

impl NestingPolicy {
    /// Default gap `g = |2η|` between consecutive shifted circles.
    pub fn for_eta(eta: C64) -> Self {
        let two_eta = (2.0 * eta).norm();
        NestingPolicy {
            inner_factor: 2.0,
            inner_floor: 0.25 * two_eta,
            gap: two_eta,
        }
    }
}

/// Concentric circles around the centroid of `cluster`, innermost covering
/// the cluster and each next one `|2η| + gap` larger (returned outermost
/// first).
pub fn nested_circles(cluster: &[C64], m: usize, eta: C64, policy: NestingPolicy) -> Result<Vec<Circle>> {
    if cluster.is_empty() || m == 0 {
        return Err(IrfError::InvalidInput("nested circles need a nonempty cluster and m ≥ 1".into()));
    }
    let center = cluster.iter().sum::<C64>() / cluster.len() as f64;
    let spread = cluster.iter().map(|&p| (p - center).norm()).fold(0.0, f64::max);
    let inner = (policy.inner_factor * spread).max(policy.inner_floor).max(1e-6);
    let step = (2.0 * eta).norm() + policy.gap;
    (0..m)
        .rev()
        .map(|i| Circle::new(center, inner + step * i as f64))
        .collect()
}

fn periodic_images(mode: FunctionMode, p: C64) -> Vec<C64> {
    match mode {
        FunctionMode::Rational => vec![],
        FunctionMode::Trigonometric => vec![p + 1.0, p - 1.0],
        FunctionMode::Elliptic { tau } => vec![p + 1.0, p - 1.0, p + tau, p - tau],
    }
}

/// Builds concentric circles around the `p`-cluster of the given columns and
/// certifies the sufficient admissibility conditions: the innermost circle
/// encloses every `p_j`, each circle encloses the next one shifted by `2η`,
/// and no circle encloses any `q_j` (nor a periodic image of a `p_j` or
/// `q_j` in the trigonometric and elliptic modes).
pub fn check_admissible_columns(
    params: &IrfParams,
    m: usize,
    columns: std::ops::Range<usize>,
) -> std::result::Result<ContourFamily, AdmissibilityDiagnostic> {
    let diag = |condition: &str, point: C64, contour: usize| AdmissibilityDiagnostic {
        condition: condition.to_string(),
        point,
        contour,
    };
    if m == 0 {
        return Err(diag("M must be at least 1", C64::new(0.0, 0.0), 0));
    }
    let grid = pq_grid(params);
    let range = columns.start.min(grid.p.len())..columns.end.min(grid.p.len());
    let ps = &grid.p[range.clone()];
    let qs = &grid.q[range];
    if ps.is_empty() {
        return Err(diag("no columns in use", C64::new(0.0, 0.0), 0));
    }
    let gammas = nested_circles(ps, m, params.eta, NestingPolicy::for_eta(params.eta))
        .map_err(|_| diag("could not build circles", C64::new(0.0, 0.0), 0))?;
    let family = ContourFamily { gammas };
    audit_family(&family, ps, qs, params.eta, params.mode)?;
    Ok(family)
}

/// [`check_admissible_columns`] over every configured column.
pub fn check_admissible(
    params: &IrfParams,
    m: usize,
) -> std::result::Result<ContourFamily, AdmissibilityDiagnostic> {
    check_admissible_columns(params, m, 0..params.num_columns())
}

/// Verifies the three stated conditions on an already constructed family.
pub fn audit_family(
    family: &ContourFamily,
    ps: &[C64],
    qs: &[C64],
    eta: C64,
    mode: FunctionMode,
) -> std::result::Result<(), AdmissibilityDiagnostic> {
    let diag = |condition: &str, point: C64, contour: usize| AdmissibilityDiagnostic {
        condition: condition.to_string(),
        point,
        contour,
    };
    let m = family.gammas.len();
    let innermost = family.gammas[m - 1];
    for &p in ps {
        if !innermost.encloses(p) {
            return Err(diag(&format!("p outside γ{m}"), p, m));
        }
    }
    for i in 0..m.saturating_sub(1) {
        let (outer, inner) = (family.gammas[i], family.gammas[i + 1]);
        // A shifted circle lies inside a concentric-ish circle iff the
        // farthest point of the shifted circle does.
        let far = (inner.center + 2.0 * eta - outer.center).norm() + inner.radius;
        if far >= outer.radius {
            return Err(diag(
                &format!("γ{} does not contain γ{} shifted by 2η", i + 1, i + 2),
                inner.center + 2.0 * eta,
                i + 1,
            ));
        }
    }
    let outer = family.gammas[0];
    for &q in qs {
        if outer.encloses(q) {
            return Err(diag("q inside γ₁", q, 1));
        }
        for img in periodic_images(mode, q) {
            if outer.encloses(img) {
                return Err(diag("periodic image of q inside γ₁", img, 1));
            }
        }
    }
    for &p in ps {
        for img in periodic_images(mode, p) {
            if outer.encloses(img) {
                return Err(diag("periodic image of p inside γ₁", img, 1));
            }
        }
    }
    Ok(())
}

/// Parameters in six-vertex conventions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SixVertexParams {
    pub q: C64,
    /// `α = −e^{−2πiλ₀}`.
    pub alpha: C64,
    pub s: Vec<C64>,
    pub xi: Vec<C64>,
    pub u: Vec<C64>,
}

fn e2pii(x: C64) -> C64 {
    (2.0 * PI * I * x).exp()
}

/// Principal-branch logarithm divided by `2πi`.
fn log_2pii(x: C64) -> C64 {
    x.ln() / (2.0 * PI * I)
}

/// Exponential map `q = e^{−4πiη}`, `s = e^{2πiηΛ}`, `ξ = e^{2πiz}`,
/// `u = e^{2πi(η−w)}`.
pub fn to_six_vertex(params: &IrfParams) -> SixVertexParams {
    let eta = params.eta;
    SixVertexParams {
        q: e2pii(-2.0 * eta),
        alpha: -e2pii(-params.lambda0),
        s: params.columns.iter().map(|c| e2pii(eta * c.lambda)).collect(),
        xi: params.columns.iter().map(|c| e2pii(c.z)).collect(),
        u: params.rows.iter().map(|&w| e2pii(eta - w)).collect(),
    }
}

/// Inverse of [`to_six_vertex`] on principal branches.
pub fn from_six_vertex(sv: &SixVertexParams, mode: FunctionMode) -> Result<IrfParams> {
    if sv.s.len() != sv.xi.len() {
        return Err(IrfError::InvalidInput("s and xi must have one entry per column".into()));
    }
    let eta = -log_2pii(sv.q) / 2.0;
    let lambda0 = -log_2pii(-sv.alpha);
    let columns = sv
        .s
        .iter()
        .zip(&sv.xi)
        .map(|(&s, &xi)| Column {
            z: log_2pii(xi),
            lambda: log_2pii(s) / eta,
        })
        .collect();
    let rows = sv.u.iter().map(|&u| eta - log_2pii(u)).collect();
    IrfParams::new(mode, eta, lambda0, columns, rows)
}

/// `η` with `e^{−4πiη} = q` for real `q > 0`.
pub fn eta_from_q(q: f64) -> C64 {
    I * q.ln() / (4.0 * PI)
}

/// `λ` with `−e^{−2πiλ} = α` for real `α > 0`.
pub fn lambda_from_alpha(alpha: f64) -> C64 {
    C64::new(0.5, alpha.ln() / (2.0 * PI))
}

/// Deterministic low-discrepancy offsets in `[−½, ½]`.
fn jitter(j: usize, salt: f64) -> f64 {
    let golden = 0.618_033_988_749_894_9;
    ((j as f64 + salt) * golden).fract() - 0.5
}

/// Names of the shipped presets.
pub const PRESETS: [&str; 3] = ["trig-admissible", "dyn6v-positive", "rational-positive"];

/// Number of columns and rows configured in every preset.
pub const PRESET_COLUMNS: usize = 40;
pub const PRESET_ROWS: usize = 10;

/// Trigonometric parameters whose `p`-cluster is separated from the
/// `q`-cluster well enough for nested contours with up to three variables.
pub fn preset_trig_admissible() -> IrfParams {
    let eta = C64::new(0.04, 0.01);
    let columns: Vec<Column> = (0..PRESET_COLUMNS)
        .map(|j| Column {
            z: C64::new(0.1 + 0.01 * jitter(j, 0.1), 0.004 * jitter(j, 0.7)),
            lambda: C64::new(6.5 + 0.05 * jitter(j, 0.3), 0.0),
        })
        .collect();
    let p_mean = columns.iter().map(|c| c.z + (1.0 - c.lambda) * eta).sum::<C64>()
        / columns.len() as f64;
    let rows = (0..PRESET_ROWS)
        .map(|k| p_mean + C64::new(0.005 * jitter(k, 0.2), 0.005 * jitter(k, 0.9)))
        .collect();
    IrfParams::new(FunctionMode::Trigonometric, eta, C64::new(0.37, 0.21), columns, rows)
        .expect("preset is finite")
}

/// Spin ½ trigonometric parameters with `q = 0.8`, `α = 1.5` and products
/// `ξ_j u_k` near 4, for which every dynamic six-vertex weight is a
/// probability.
pub fn preset_dyn6v_positive() -> IrfParams {
    let q = 0.8;
    let eta = eta_from_q(q);
    let columns = (0..PRESET_COLUMNS)
        .map(|j| {
            let xi = 1.0 + 0.1 * jitter(j, 0.4);
            Column {
                z: -I * xi.ln() / (2.0 * PI),
                lambda: C64::new(1.0, 0.0),
            }
        })
        .collect();
    let rows = (0..PRESET_ROWS)
        .map(|k| {
            let u = 4.0 + 0.2 * jitter(k, 0.6);
            eta + I * u.ln() / (2.0 * PI)
        })
        .collect();
    IrfParams::new(FunctionMode::Trigonometric, eta, lambda_from_alpha(1.5), columns, rows)
        .expect("preset is finite")
}

/// Rational spin ½ parameters with `z − w ≈ 8` and `λ₀ = −100`.
pub fn preset_rational_positive() -> IrfParams {
    let columns = (0..PRESET_COLUMNS)
        .map(|j| Column {
            z: C64::new(8.0 + 0.2 * jitter(j, 0.5), 0.0),
            lambda: C64::new(1.0, 0.0),
        })
        .collect();
    let rows = (0..PRESET_ROWS)
        .map(|k| C64::new(0.2 * jitter(k, 0.8), 0.0))
        .collect();
    IrfParams::new(FunctionMode::Rational, C64::new(0.5, 0.0), C64::new(-100.0, 0.0), columns, rows)
        .expect("preset is finite")
}

pub fn preset(name: &str) -> Result<IrfParams> {
    match name {
        "trig-admissible" => Ok(preset_trig_admissible()),
        "dyn6v-positive" => Ok(preset_dyn6v_positive()),
        "rational-positive" => Ok(preset_rational_positive()),
        other => Err(IrfError::Config(format!(
            "unknown preset `{other}` (expected one of {})",
            PRESETS.join(", ")
        ))),
    }
}
