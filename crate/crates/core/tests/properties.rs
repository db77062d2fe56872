//! Property tests for the structural invariants: special-function identities,
//! parameter maps, oracle symmetries, lattice samplers and exclusion dynamics.

use std::collections::HashMap;

use irf_core::identities::{check_symmetrization_lemma, CheckReport};
use irf_core::observables::{exact_e, mc_e, Horizon, Model, ObservableSpec};
use irf_core::oracle::{apply_d_normalized, apply_operator, skew_b_oracle, skew_d_oracle, FinitaryVector, Operator, DEFAULT_CAP};
use irf_core::params::{
    from_six_vertex, pq_grid, preset_dyn6v_positive, preset_trig_admissible, to_six_vertex, Column, IrfParams,
};
use irf_core::samplers::{sample_irf, simulate_exclusion, ExclusionKind, ExclusionState, SimulationOptions};
use irf_core::signature::{signatures_in_box, Signature};
use irf_core::special::{q_pochhammer, theta};
use irf_core::symfun::{b_mu, skew_b_lattice};
use irf_core::weights::{hat_ratio, weight, PlaquetteKind, WeightContext};
use irf_core::{FunctionMode, C64};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1e-300)
}

fn complex(re: f64, im: f64) -> impl Strategy<Value = C64> {
    (-re..re, -im..im).prop_map(|(a, b)| C64::new(a, b))
}

fn signature(max_len: usize, max_part: u32) -> impl Strategy<Value = Signature> {
    prop::collection::vec(0..=max_part, 1..=max_len).prop_map(Signature::from_unsorted)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn theta_quasi_periodicity(x in 0.0..1.0f64, y in 0.0..1.0f64, tr in -0.5..0.5f64, ti in 0.6..1.5f64) {
        let tau = c(tr, ti);
        let z = c(x, 0.0) + y * tau;
        let tol = 1e-18;
        let th = theta(z, tau, tol).unwrap();
        let scale = th.norm().max(1e-3);
        prop_assert!((theta(z + 1.0, tau, tol).unwrap() + th).norm() <= 1e-10 * scale);
        prop_assert!((theta(-z, tau, tol).unwrap() - theta(z + 1.0, tau, tol).unwrap()).norm() <= 1e-10 * scale);
        let shifted = -(-C64::i() * std::f64::consts::PI * (tau + 2.0 * z)).exp() * th;
        let direct = theta(z + tau, tau, tol).unwrap();
        prop_assert!((direct - shifted).norm() <= 1e-10 * direct.norm().max(shifted.norm()).max(1e-3));
    }

    #[test]
    fn q_pochhammer_recurrence(x in complex(2.0, 2.0), q in complex(0.9, 0.9), n in 0usize..20) {
        let step = q_pochhammer(x, q, n) * (1.0 - q.powu(n as u32) * x);
        prop_assert!(close(q_pochhammer(x, q, n + 1), step, 1e-13));
    }

    #[test]
    fn pq_grid_inverts(eta in complex(0.2, 0.2), zs in prop::collection::vec((complex(1.0, 1.0), complex(4.0, 1.0)), 1..6)) {
        prop_assume!(eta.norm() > 1e-3);
        let columns: Vec<Column> = zs.iter().map(|&(z, l)| Column { z, lambda: l }).collect();
        let p = IrfParams::new(FunctionMode::Trigonometric, eta, c(0.3, 0.1), columns.clone(), vec![c(0.2, 0.0)]).unwrap();
        let back = pq_grid(&p).to_columns(eta);
        for (a, b) in columns.iter().zip(&back) {
            prop_assert!((a.z - b.z).norm() < 1e-12 && (a.lambda - b.lambda).norm() < 1e-12 * a.lambda.norm().max(1.0) / eta.norm().min(1.0));
        }
    }

    #[test]
    fn six_vertex_map_round_trips(er in 0.01..0.2f64, ei in -0.05..0.05f64, z in complex(0.4, 0.1), l in complex(2.0, 0.5), w in complex(0.25, 0.1), lam in complex(0.45, 0.3)) {
        let eta = c(er, ei);
        let p = IrfParams::new(FunctionMode::Trigonometric, eta, lam, vec![Column { z, lambda: l }], vec![w]).unwrap();
        let back = from_six_vertex(&to_six_vertex(&p), FunctionMode::Trigonometric).unwrap();
        prop_assert!((back.eta - eta).norm() < 1e-12);
        prop_assert!((back.lambda0 - lam).norm() < 1e-12);
        let (a, b) = (p.column(0).unwrap(), back.column(0).unwrap());
        prop_assert!((a.z - b.z).norm() < 1e-12);
        // Λ is recovered only modulo 1/η; the sampled range stays on the principal branch
        prop_assume!((eta * l).re.abs() < 0.5);
        prop_assert!((a.lambda - b.lambda).norm() < 1e-10);
        prop_assert!((back.rows()[0] - w).norm() < 1e-12);
    }

    #[test]
    fn hat_ratio_renormalizes(lam in complex(0.5, 0.3), w in complex(0.3, 0.3), z in complex(0.3, 0.3), cl in complex(3.0, 0.3), eta in complex(0.1, 0.1), k in 0u32..4) {
        prop_assume!(eta.norm() > 0.01);
        let ctx = WeightContext { lambda: lam, w, z, cap_lambda: cl, eta, mode: FunctionMode::Trigonometric };
        for kind in PlaquetteKind::ALL {
            if kind == PlaquetteKind::C && k == 0 {
                continue;
            }
            let (Ok(h), Ok(plain), Ok(st)) = (
                hat_ratio(kind, k, lam, cl, eta, ctx.mode),
                weight(kind, k, &ctx, false),
                weight(kind, k, &ctx, true),
            ) else {
                continue;
            };
            prop_assert!((h * plain - st).norm() <= 1e-12 * st.norm().max(1.0) * (h.norm() * plain.norm()).max(1.0));
        }
    }

    #[test]
    fn reports_round_trip_through_json(m in 1usize..5, seed in 0u64..1000) {
        let vs: Vec<C64> = (0..m).map(|i| c(0.1 * i as f64 - 0.17 + 1e-4 * seed as f64, 0.05)).collect();
        let r = check_symmetrization_lemma(m, &vs, c(0.07, 0.02), FunctionMode::Trigonometric).unwrap();
        let back: CheckReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        prop_assert_eq!(back, r);
    }
}

fn trig_rows(params: &IrfParams, n: usize) -> Vec<C64> {
    (1..=n).map(|k| params.w(k).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_is_symmetric_in_the_row_variables(nu in signature(3, 3), perm in Just(vec![0usize, 1, 2]).prop_shuffle()) {
        let params = preset_trig_admissible();
        let lam = params.lambda0;
        let n = nu.len();
        let ws = trig_rows(&params, n);
        let permuted: Vec<C64> = perm.iter().filter(|&&i| i < n).map(|&i| ws[i]).collect();
        let b1 = skew_b_oracle(&nu, &Signature::empty(), lam, &ws, &params).unwrap();
        let b2 = skew_b_oracle(&nu, &Signature::empty(), lam, &permuted, &params).unwrap();
        prop_assert!(close(b1, b2, 1e-10), "{} vs {}", b1, b2);
        let base = Signature::repeated(0, n);
        let d1 = skew_d_oracle(&nu, &base, lam, &ws, &params).unwrap();
        let d2 = skew_d_oracle(&nu, &base, lam, &permuted, &params).unwrap();
        prop_assert!(close(d1, d2, 1e-10), "{} vs {}", d1, d2);
    }

    #[test]
    fn b_mu_is_symmetric(mu in signature(3, 4)) {
        let params = preset_trig_admissible();
        let mut us = trig_rows(&params, mu.len());
        let a = b_mu(&mu, params.lambda0, &us, &params).unwrap();
        us.reverse();
        let b = b_mu(&mu, params.lambda0, &us, &params).unwrap();
        prop_assert!(close(a, b, 1e-10));
    }

    #[test]
    fn b_branching(nu in signature(3, 3), split in 0usize..=3) {
        let params = preset_trig_admissible();
        let lam = params.lambda0;
        let n = nu.len();
        let k = split.min(n);
        let ws = trig_rows(&params, n);
        let joint = skew_b_oracle(&nu, &Signature::empty(), lam, &ws, &params).unwrap();
        let len = n - k;
        let top = nu.max_part();
        let mut sum = C64::new(0.0, 0.0);
        for kappa in signatures_in_box(&vec![0; len], &vec![top; len]) {
            let upper = skew_b_oracle(&nu, &kappa, lam, &ws[..k], &params).unwrap();
            let lower = skew_b_oracle(&kappa, &Signature::empty(), lam + 2.0 * params.eta * k as f64, &ws[k..], &params).unwrap();
            sum += upper * lower;
        }
        prop_assert!((joint - sum).norm() <= 1e-10 * joint.norm().max(1.0), "{} vs {}", joint, sum);
    }

    #[test]
    fn trailing_empty_columns_do_not_matter(mu in signature(2, 2), op in 0usize..2) {
        let params = preset_trig_admissible();
        let w = params.w(1).unwrap();
        let cols = mu.max_part() as usize + 2;
        let small = FinitaryVector::basis(&mu, cols, DEFAULT_CAP).unwrap();
        let large = FinitaryVector::basis(&mu, cols + 2, DEFAULT_CAP).unwrap();
        let apply = |v: &FinitaryVector| match op {
            0 => apply_operator(Operator::B, params.lambda0, w, v, &params).unwrap(),
            _ => apply_d_normalized(params.lambda0, w, v, &params).unwrap(),
        };
        let (a, b) = (apply(&small), apply(&large));
        for (occ, &v) in a.terms() {
            if occ[cols - 1] != 0 {
                continue;
            }
            let mut padded = occ.clone();
            padded.extend([0, 0]);
            prop_assert!(close(v, b.coefficient(&padded), 1e-12), "{:?}: {} vs {}", occ, v, b.coefficient(&padded));
        }
    }
}

#[test]
fn finite_spin_kills_repeated_parts() {
    let base = preset_trig_admissible();
    let columns: Vec<Column> = base.columns().iter().map(|col| Column { z: col.z, lambda: c(1.0, 0.0) }).collect();
    let params = base.with_columns(columns).unwrap();
    let lam = params.lambda0;
    let b = |parts: &[u32]| {
        let mu = Signature::new(parts.to_vec()).unwrap();
        let us = trig_rows(&params, mu.len());
        skew_b_lattice(&mu, &Signature::empty(), lam, &us, &params, true).unwrap()
    };
    for parts in [&[1u32, 1][..], &[2, 2], &[2, 1, 1], &[3, 3, 1], &[2, 2, 2]] {
        assert!(b(parts).norm() < 1e-12, "μ={parts:?}: {}", b(parts));
    }
    for parts in [&[2u32, 1][..], &[3, 1], &[4, 2, 1]] {
        assert!(b(parts).norm() > 1e-6, "μ={parts:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn quadrant_samples_round_trip(seed in any::<u64>(), x in 1usize..7, y in 1usize..7) {
        let params = preset_dyn6v_positive();
        let st = sample_irf(&params, x, y, seed).unwrap();
        st.validate().unwrap();
        prop_assert!(st.filling_discrepancy().unwrap() < 1e-12);
    }

    #[test]
    fn exclusion_dynamics_keep_the_lattice_invariants(seed in any::<u64>(), t in 0.1..4.0f64, asep in any::<bool>(), par in 0.3..3.0f64) {
        let kind = if asep {
            ExclusionKind::DynamicAsep { q: 0.3 + 0.2 * par, alpha: par }
        } else {
            ExclusionKind::DynamicSsep { lambda_bar: par }
        };
        let init = ExclusionState::step(kind, 4).unwrap();
        let mut log = Vec::new();
        let fin = simulate_exclusion(&init, t, seed, SimulationOptions::default(), Some(&mut log)).unwrap();

        // every flip keeps |s_{x+1} − s_x| = 1
        let mut s: HashMap<i64, i64> = HashMap::new();
        let at = |s: &HashMap<i64, i64>, x: i64| *s.get(&x).unwrap_or(&x.abs());
        for e in &log {
            let before = at(&s, e.x);
            prop_assert_eq!((e.s_x - before).abs(), 2);
            s.insert(e.x, e.s_x);
            for y in [e.x - 1, e.x] {
                prop_assert_eq!((at(&s, y + 1) - at(&s, y)).abs(), 1);
            }
        }
        prop_assert!(fin.is_lipschitz());
        for x in fin.lo..=fin.hi() {
            prop_assert_eq!(fin.s_at(x), at(&s, x));
        }

        // the window edges are untouched, so the particle count is conserved
        let count = |lo: i64, hi: i64, st: &ExclusionState| (st.s_at(lo) - st.s_at(hi) + (hi - lo)) / 2;
        let (lo, hi) = (fin.lo, fin.hi());
        prop_assert_eq!(fin.s_at(lo), lo.abs());
        prop_assert_eq!(fin.s_at(hi), hi.abs());
        let particles = fin.particles();
        prop_assert_eq!(particles.len() as i64, count(lo, hi, &fin));
        prop_assert_eq!(count(lo, hi, &fin), count(lo, hi, &ExclusionState::step(kind, hi.unsigned_abs() as usize).unwrap()));

        // state → particles → state, and h(x) counts the particles to the right of x
        let rebuilt = ExclusionState::from_particles(kind, lo, hi, &particles, fin.t);
        prop_assert_eq!(&rebuilt.s, &fin.s);
        for x in lo..=hi {
            let right = particles.iter().filter(|&&p| p >= x).count() as i64;
            prop_assert_eq!(fin.height(x), right);
        }
    }
}

#[test]
fn exact_irf_average_ignores_lambda() {
    let params = preset_dyn6v_positive();
    let spec = ObservableSpec::new(vec![4, 2], Horizon::Rows(3)).unwrap();
    let reference = exact_e(&Model::Irf(params.clone()), &spec).unwrap().value;
    for lam in [c(0.1, 0.2), c(-0.3, -0.7), c(0.45, 1.3)] {
        let v = exact_e(&Model::Irf(params.with_lambda0(lam)), &spec).unwrap().value;
        assert!((v - reference).norm() <= 1e-12 * reference.norm(), "{v} vs {reference}");
    }
}

#[test]
fn monte_carlo_is_independent_of_the_thread_count() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let spec = ObservableSpec::new(vec![1, 0], Horizon::Time(1.5)).unwrap();
            let ssep = mc_e(&Model::DynamicSsep { lambda_bar: 2.0 }, &spec, 3000, 11).unwrap();
            let spec = ObservableSpec::new(vec![3], Horizon::Rows(3)).unwrap();
            let quad = mc_e(&Model::Irf(preset_dyn6v_positive()), &spec, 3000, 11).unwrap();
            (ssep.mean, ssep.stderr, quad.mean, quad.stderr)
        })
    };
    let one = run(1);
    for threads in [2, 5] {
        let other = run(threads);
        assert_eq!(format!("{one:?}"), format!("{other:?}"));
    }
}
