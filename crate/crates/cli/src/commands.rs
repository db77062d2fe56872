use std::collections::HashMap;

use clap::{Args, ValueEnum};
use irf_core::asymptotics::{heat_check, hydrodynamic_check, profile_table, regime_iv_ks, regime_moment_check};
use irf_core::identities::CheckReport;
use irf_core::observables::{observable_record, relative_gap, Horizon, Model, ObservableRecord, ObservableSpec};
use irf_core::params::{preset, IrfParams};
use irf_core::samplers::{
    sample_irf, simulate_exclusion, trajectory_seed, ExclusionKind, ExclusionState, FlipEvent, SimulationOptions,
};
use irf_core::suites::{run_suite, SuiteOptions, MC_SIGMAS};
use irf_core::C64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::{CliError, Common, Format, Outcome};

type CliResult<T> = Result<T, CliError>;

fn load_params(common: &Common, default: &str) -> CliResult<IrfParams> {
    match (&common.preset, &common.config) {
        (Some(_), Some(_)) => Err(CliError::Usage("--preset and --config are mutually exclusive".into())),
        (_, Some(path)) => Ok(IrfParams::from_json_file(path)?),
        (Some(name), None) => Ok(preset(name)?),
        (None, None) => Ok(preset(default)?),
    }
}

fn to_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Shortest round-trip form, switching to exponent notation for very
/// large or small magnitudes.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn failed_names(reports: &[CheckReport]) -> Vec<String> {
    reports.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect()
}

fn reports_csv(reports: &[CheckReport]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "residual", "tolerance", "passed", "status"])?;
    for r in reports {
        let status = serde_json::to_value(r.status)?;
        w.write_record([
            r.name.clone(),
            num(r.residual),
            num(r.tolerance),
            r.passed.to_string(),
            status.as_str().unwrap_or_default().to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

fn reports_output(reports: &[CheckReport], format: Format) -> CliResult<Vec<u8>> {
    match format {
        Format::Json => to_json(&reports),
        Format::Csv => reports_csv(reports),
    }
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suite to run: all, stochasticity, sine, symmetrization, oracle,
    /// crossing, identities, lambda, mc or hydrodynamics.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Random draws per randomized check.
    #[arg(long, default_value_t = 1000)]
    draws: usize,
}

pub fn verify(args: &VerifyArgs, common: &Common) -> CliResult<Outcome> {
    let params = match (&common.preset, &common.config) {
        (None, None) => None,
        _ => Some(load_params(common, "trig-admissible")?),
    };
    let opts = SuiteOptions {
        seed: common.seed,
        draws: args.draws,
        samples: common.samples.map_or(100_000, |s| s as usize),
        tolerance: common.tolerance,
        params,
    };
    let reports = run_suite(&args.suite, &opts)?;
    Ok(Outcome {
        output: reports_output(&reports, common.format.unwrap_or(Format::Json))?,
        failures: failed_names(&reports),
    })
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimModel {
    /// Dynamic symmetric simple exclusion process.
    Ssep,
    /// Dynamic asymmetric simple exclusion process.
    Asep,
    /// Dynamic stochastic six-vertex model in the quadrant.
    Dyn6v,
    /// Stochastic IRF model in the quadrant with the chosen parameters.
    Irf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    model: SimModel,
    #[arg(long = "lambda-bar", default_value_t = 2.0)]
    lambda_bar: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// Final time of the exclusion processes.
    #[arg(long = "t", default_value_t = 1.0)]
    t: f64,
    /// Row at which quadrant heights are read.
    #[arg(long = "N", default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    trajectories: usize,
    /// Positions whose heights are recorded.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-2,-1,0,1,2")]
    xs: Vec<i64>,
    /// Equally spaced snapshot times in (0, t] for the exclusion processes.
    #[arg(long, default_value_t = 1)]
    snapshots: usize,
    /// Writes every flip (trajectory, t, x, s_x) of the exclusion processes as CSV.
    #[arg(long, value_name = "PATH")]
    events: Option<std::path::PathBuf>,
}

struct Trajectory {
    heights: Vec<(f64, Vec<i64>)>,
    events: Vec<FlipEvent>,
}

/// Heights at `xs` after each snapshot time, by replaying the flips.
fn replay(xs: &[i64], events: &[FlipEvent], times: &[f64]) -> Vec<(f64, Vec<i64>)> {
    let mut s: HashMap<i64, i64> = xs.iter().map(|&x| (x, x.abs())).collect();
    let mut next = 0;
    times
        .iter()
        .map(|&t| {
            while next < events.len() && events[next].t <= t {
                let e = events[next];
                if let Some(v) = s.get_mut(&e.x) {
                    *v = e.s_x;
                }
                next += 1;
            }
            (t, xs.iter().map(|x| (s[x] - x) / 2).collect())
        })
        .collect()
}

pub fn simulate(args: &SimulateArgs, common: &Common) -> CliResult<Outcome> {
    if args.trajectories == 0 {
        return Err(CliError::Usage("--trajectories must be at least 1".into()));
    }
    if common.format == Some(Format::Json) {
        return Err(CliError::Usage("simulate writes CSV only".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    match args.model {
        SimModel::Ssep | SimModel::Asep => {
            if args.snapshots == 0 || !(args.t >= 0.0 && args.t.is_finite()) {
                return Err(CliError::Usage("need --snapshots ≥ 1 and a finite --t ≥ 0".into()));
            }
            let kind = match args.model {
                SimModel::Ssep => ExclusionKind::DynamicSsep { lambda_bar: args.lambda_bar },
                _ => ExclusionKind::DynamicAsep { q: args.q, alpha: args.alpha },
            };
            let reach = args.xs.iter().map(|x| x.unsigned_abs() as usize).max().unwrap_or(0);
            let init = ExclusionState::step(kind, reach + 8)?;
            let times: Vec<f64> = (1..=args.snapshots)
                .map(|j| args.t * j as f64 / args.snapshots as f64)
                .collect();
            let runs: Vec<Trajectory> = (0..args.trajectories as u64)
                .into_par_iter()
                .map(|i| {
                    let mut events = Vec::new();
                    let seed = trajectory_seed(common.seed, i);
                    simulate_exclusion(&init, args.t, seed, SimulationOptions::default(), Some(&mut events))?;
                    Ok(Trajectory {
                        heights: replay(&args.xs, &events, &times),
                        events,
                    })
                })
                .collect::<Result<_, irf_core::IrfError>>()?;
            w.write_record(["trajectory", "t", "x", "height"])?;
            for (i, run) in runs.iter().enumerate() {
                for (t, hs) in &run.heights {
                    for (x, h) in args.xs.iter().zip(hs) {
                        w.write_record([i.to_string(), num(*t), x.to_string(), h.to_string()])?;
                    }
                }
            }
            if let Some(path) = &args.events {
                let mut ev = csv::Writer::from_path(path)?;
                ev.write_record(["trajectory", "t", "x", "s_x"])?;
                for (i, run) in runs.iter().enumerate() {
                    for e in &run.events {
                        ev.write_record([i.to_string(), num(e.t), e.x.to_string(), e.s_x.to_string()])?;
                    }
                }
                ev.flush()?;
            }
        }
        SimModel::Dyn6v | SimModel::Irf => {
            let params = load_params(common, if args.model == SimModel::Dyn6v { "dyn6v-positive" } else { "trig-admissible" })?;
            if args.n == 0 || args.xs.iter().any(|&x| x < 1) {
                return Err(CliError::Usage("quadrant models need --N ≥ 1 and positions --xs ≥ 1".into()));
            }
            let x_max = (*args.xs.iter().max().unwrap_or(&1) as usize).saturating_sub(1).max(1);
            let rows: Vec<Vec<u32>> = (0..args.trajectories as u64)
                .into_par_iter()
                .map(|i| {
                    let st = sample_irf(&params, x_max, args.n, trajectory_seed(common.seed, i))?;
                    args.xs.iter().map(|&x| st.height(x as usize, args.n)).collect()
                })
                .collect::<Result<_, irf_core::IrfError>>()?;
            w.write_record(["trajectory", "N", "x", "height"])?;
            for (i, hs) in rows.iter().enumerate() {
                for (x, h) in args.xs.iter().zip(hs) {
                    w.write_record([i.to_string(), args.n.to_string(), x.to_string(), h.to_string()])?;
                }
            }
        }
    }
    Ok(Outcome {
        output: w.into_inner().map_err(|e| e.into_error())?,
        failures: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// observables

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObsModel {
    Dyn6v,
    Irf,
    Rational,
    Asep,
    Ssep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Contour integral (or its residue expansion).
    Exact,
    /// Exact enumeration of the quadrant model.
    Enum,
    /// Monte Carlo.
    Mc,
}

impl Method {
    fn core_name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Enum => "enumeration",
            Method::Mc => "mc",
        }
    }
}

#[derive(Debug, Args)]
pub struct ObservablesArgs {
    #[arg(long, value_enum)]
    model: ObsModel,
    /// Positions x₁ ≥ … ≥ x_n.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    xs: Vec<i64>,
    /// Row of the quadrant models.
    #[arg(long = "N")]
    n: Option<usize>,
    /// Time of the exclusion processes.
    #[arg(long = "t")]
    t: Option<f64>,
    #[arg(long = "lambda-bar", default_value_t = 2.0)]
    lambda_bar: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 1.5)]
    alpha: f64,
    /// Methods to evaluate; discrepancies are measured against the first.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "exact")]
    compare: Vec<Method>,
}

/// Default relative agreement between two deterministic methods.
const AGREEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Serialize)]
struct Comparison {
    method: String,
    value: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr: Option<f64>,
    /// `|value − reference|`.
    abs_discrepancy: f64,
    rel_discrepancy: f64,
    /// Discrepancy in combined standard errors, when one side is random.
    sigmas: Option<f64>,
    agrees: bool,
}

pub fn observables(args: &ObservablesArgs, common: &Common) -> CliResult<Outcome> {
    let (model, horizon) = match args.model {
        ObsModel::Dyn6v | ObsModel::Irf | ObsModel::Rational => {
            let n = args.n.ok_or_else(|| CliError::Usage("quadrant models need --N".into()))?;
            let model = match args.model {
                ObsModel::Dyn6v => Model::Irf(load_params(common, "dyn6v-positive")?),
                ObsModel::Irf => Model::Irf(load_params(common, "trig-admissible")?),
                _ => Model::Rational(load_params(common, "rational-positive")?),
            };
            (model, Horizon::Rows(n))
        }
        ObsModel::Asep | ObsModel::Ssep => {
            let t = args.t.ok_or_else(|| CliError::Usage("exclusion processes need --t".into()))?;
            let model = match args.model {
                ObsModel::Asep => Model::DynamicAsep { q: args.q, alpha: args.alpha },
                _ => Model::DynamicSsep { lambda_bar: args.lambda_bar },
            };
            (model, Horizon::Time(t))
        }
    };
    let spec = ObservableSpec::new(args.xs.clone(), horizon)?;
    let model_name = args.model.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
    let samples = common.samples.map_or(10_000, |s| s as usize);
    let records: Vec<ObservableRecord> = args
        .compare
        .iter()
        .map(|m| observable_record(&model, &spec, m.core_name(), samples, common.seed))
        .collect::<Result<_, _>>()?;
    let tol = common.tolerance.unwrap_or(AGREEMENT_TOL);
    let reference = &records[0];
    let rv = C64::new(reference.value[0], reference.value[1]);
    let comparisons: Vec<Comparison> = records
        .iter()
        .map(|r| {
            let v = C64::new(r.value[0], r.value[1]);
            let abs = (v - rv).norm();
            let sigma = (r.stderr.unwrap_or(0.0).powi(2) + reference.stderr.unwrap_or(0.0).powi(2)).sqrt();
            let sigmas = (sigma > 0.0).then(|| abs / sigma);
            let agrees = match sigmas {
                Some(z) => z <= MC_SIGMAS,
                None => relative_gap(v, rv) <= tol,
            };
            Comparison {
                method: r.method.clone(),
                value: r.value,
                stderr: r.stderr,
                abs_discrepancy: abs,
                rel_discrepancy: relative_gap(v, rv),
                sigmas,
                agrees,
            }
        })
        .collect();
    let failures = comparisons
        .iter()
        .filter(|c| !c.agrees)
        .map(|c| format!("{}/{} vs {}", model_name, c.method, reference.method))
        .collect();
    let output = match common.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({
            "model": model_name,
            "spec": spec,
            "reference": reference.method,
            "tolerance": tol,
            "samples": samples,
            "seed": common.seed,
            "results": comparisons,
        }))?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "method",
                "value_re",
                "value_im",
                "stderr",
                "abs_discrepancy",
                "rel_discrepancy",
                "sigmas",
                "agrees",
            ])?;
            for c in &comparisons {
                w.write_record([
                    c.method.clone(),
                    num(c.value[0]),
                    num(c.value[1]),
                    c.stderr.map(num).unwrap_or_default(),
                    num(c.abs_discrepancy),
                    num(c.rel_discrepancy),
                    c.sigmas.map(num).unwrap_or_default(),
                    c.agrees.to_string(),
                ])?;
            }
            w.into_inner().map_err(|e| e.into_error())?
        }
    };
    Ok(Outcome { output, failures })
}

// ---------------------------------------------------------------------------
// asymptotics

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    /// Scaled mean height of the usual SSEP against the limit profile.
    Profile,
    /// Regime IV moments of the dynamic SSEP from the exact integrals.
    Moments,
    /// Kolmogorov–Smirnov distance to the regime IV gamma law.
    Ks,
}

#[derive(Debug, Args)]
pub struct AsymptoticsArgs {
    #[arg(long, value_enum, default_value = "profile")]
    study: Study,
    /// Scale parameter L (400 for profile and ks, 10⁴ for moments by default).
    #[arg(long = "L")]
    l: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Rescaled positions χ of the profile study.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,0,1")]
    chis: Vec<f64>,
    /// Rescaled position χ of the ks study.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    chi: f64,
    #[arg(long = "lambda-bar", default_value_t = 2.0)]
    lambda_bar: f64,
    /// Monte Carlo trajectories (optional for the profile study).
    #[arg(long, default_value_t = 0)]
    trajectories: usize,
}

pub fn asymptotics(args: &AsymptoticsArgs, common: &Common) -> CliResult<Outcome> {
    let retol = |r: CheckReport| match common.tolerance {
        Some(t) => r.with_tolerance(t),
        None => r,
    };
    match args.study {
        Study::Profile => {
            let l = args.l.unwrap_or(400.0);
            let rows = profile_table(l, args.tau, &args.chis, args.trajectories, common.seed)?;
            let mut checks = Vec::new();
            for &chi in &args.chis {
                let mut r = retol(hydrodynamic_check(l, chi, args.tau)?);
                r.name = format!("hydrodynamics/profile/chi{chi}");
                checks.push(r);
                let mut r = retol(heat_check(chi, args.tau)?);
                r.name = format!("hydrodynamics/heat_equation/chi{chi}");
                checks.push(r);
            }
            let failures = failed_names(&checks);
            let output = match common.format.unwrap_or(Format::Csv) {
                Format::Json => to_json(&json!({"L": l, "tau": args.tau, "rows": rows, "checks": checks}))?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["chi", "profile", "exact", "empirical"])?;
                    for r in &rows {
                        w.write_record([
                            num(r.chi),
                            num(r.profile),
                            num(r.exact),
                            r.empirical.map(num).unwrap_or_default(),
                        ])?;
                    }
                    w.into_inner().map_err(|e| e.into_error())?
                }
            };
            Ok(Outcome { output, failures })
        }
        Study::Moments => {
            let l = args.l.unwrap_or(1e4);
            let reports: Vec<CheckReport> = [1, 2]
                .into_iter()
                .map(|n| regime_moment_check(n, l, args.tau, args.lambda_bar).map(retol))
                .collect::<Result<_, _>>()?;
            Ok(Outcome {
                output: reports_output(&reports, common.format.unwrap_or(Format::Json))?,
                failures: failed_names(&reports),
            })
        }
        Study::Ks => {
            if args.trajectories == 0 {
                return Err(CliError::Usage("the ks study needs --trajectories".into()));
            }
            let l = args.l.unwrap_or(400.0);
            let report = regime_iv_ks(l, args.chi, args.tau, args.lambda_bar, args.trajectories, common.seed)?;
            // The distance is reported, not enforced: at desk-scale L the
            // finite-size bias is comparable to the statistical threshold.
            Ok(Outcome {
                output: to_json(&report)?,
                failures: Vec::new(),
            })
        }
    }
}
