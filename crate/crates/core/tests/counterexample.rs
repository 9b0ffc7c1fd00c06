use std::sync::OnceLock;

use proptest::prelude::*;
use separatrix_lab::counterexample::*;
use separatrix_lab::curves::{omega_menu, SolverOptions};
use separatrix_lab::model::{build_model, build_model_spec, Chi, GlueSpec, ModelFamily, ModelSpec, DEFAULT_R0};
use separatrix_lab::return_renorm::{AnnulusPoint, Renormalizer};

fn model() -> &'static ModelFamily {
    static M: OnceLock<ModelFamily> = OnceLock::new();
    M.get_or_init(|| build_model(1.0, DEFAULT_R0, GlueSpec::default()).unwrap())
}

fn renorm() -> &'static Renormalizer {
    static R: OnceLock<Renormalizer> = OnceLock::new();
    R.get_or_init(|| Renormalizer::standard(model()).unwrap())
}

fn chosen() -> &'static (CounterexampleParams, LemmaGrids) {
    static P: OnceLock<(CounterexampleParams, LemmaGrids)> = OnceLock::new();
    P.get_or_init(|| choose_m(renorm(), 1.0 / 12.0, Chi::default(), 5.0, 0.1).unwrap())
}

fn params() -> &'static CounterexampleParams {
    &chosen().0
}

fn descent() -> &'static DescentReport {
    static D: OnceLock<DescentReport> = OnceLock::new();
    D.get_or_init(|| {
        let p = params();
        descent_run(p, p.y_pert.ln() - 0.5, 10).unwrap()
    })
}

fn circ(d: f64) -> f64 {
    (d - d.round()).abs()
}

#[test]
fn chosen_m_meets_lemma_bounds() {
    let (p, g) = chosen();
    assert!(g.b_m >= 5.0 && g.b_m > 2f64.ln());
    assert!(g.pass(0.1));
    let (i0, i1) = p.bump.interval;
    // Lemma 9.4: |dt/dphi| <= |I| / M <= 1/4
    assert!(g.dt_dphi <= (i1 - i0) / p.bump.m * (1.0 + 1e-6));
    assert!((i1 - i0) / p.bump.m <= 0.25);
    assert!(g.jbar_len > 2.0);
    assert!(p.j_m.0 >= -1.0 && p.j_m.1 < 0.0 && p.j_m.0 < p.j_m.1);
    // M is the smallest admissible value on the 0.1 grid
    let smaller = build_counterexample(
        renorm(),
        separatrix_lab::model::build_bump(1.0 / 12.0, p.bump.m - 0.1, Chi::default()).unwrap(),
        p.kappa,
    )
    .unwrap();
    let gs = lemma_grids(&smaller, 2000);
    assert!(!(gs.b_m >= 5.0 && gs.pass(0.1)));
}

#[test]
fn trivial_bump_is_the_unperturbed_return() {
    let c = control_params(params()).unwrap();
    let r = renorm();
    for i in 0..8 {
        let x = -1.0 + (i as f64 + 0.25) / 8.0;
        for &logy in &[-10.0, -12.0, -16.0] {
            let (xb, lb) = bar_fpert(&c, x, logy).unwrap();
            assert_eq!(lb, logy);
            // simulated return map of the model in annulus coordinates
            let b = r.bar_f(AnnulusPoint::new(x + 1.0, logy)).unwrap();
            assert!(circ(xb - b.x) < 1e-8, "x = {x}, logy = {logy}");
            assert!((lb - b.logy).abs() < 1e-12);
        }
    }
}

#[test]
fn bump_interval_loses_bm() {
    let p = params();
    let (i0, i1) = p.bump.interval;
    for k in 0..=50 {
        let t = i0 + (i1 - i0) * k as f64 / 50.0;
        let x = p.bump.s(t) - 1.0;
        if !(-1.0..0.0).contains(&x) {
            continue;
        }
        let (_, lb) = bar_fpert(p, x, -12.0).unwrap();
        assert!(lb - (-12.0) <= -p.b_m() + 1e-9, "t = {t}: {}", lb + 12.0);
    }
}

#[test]
fn domain_errors() {
    let p = params();
    assert!(matches!(bar_fpert(p, 0.5, -12.0), Err(CounterexampleError::Domain(_))));
    assert!(matches!(bar_fpert(p, -0.5, -1.0), Err(CounterexampleError::Fiber(_))));
}

#[test]
fn nonlinear_q_is_rejected() {
    let m = build_model_spec(&ModelSpec { q_higher: vec![0.05], ..ModelSpec::default() }).unwrap();
    let r = Renormalizer::standard(&m).unwrap();
    let bump = params().bump.clone();
    assert!(matches!(build_counterexample(&r, bump, 1.0 / 32.0), Err(CounterexampleError::NonlinearQ)));
}

#[test]
fn formula_matches_plane_simulation() {
    let p = params();
    let fp = plane_map(p).unwrap();
    let mut checked = 0;
    for i in 0..16 {
        let x = -1.0 + (i as f64 + 0.5) / 16.0;
        let t = p.bump.s_inv(x + 1.0);
        if return_condition(p, t) >= 1e-10 {
            continue;
        }
        let f = bar_fpert(p, x, -11.0).unwrap();
        let (xs, ls, _) = simulate_return(&fp, p, x, -11.0).unwrap();
        assert!(circ(xs - f.0) < 1e-6 && (ls - f.1).abs() < 1e-6, "x = {x}");
        checked += 1;
    }
    assert!(checked >= 4);
}

#[test]
fn seed_push_descends() {
    let p = params();
    let seed = LogGraph::seed(p.y_pert.ln() - 0.5, 2048);
    // the seed has unit slope in this orientation
    let (lo, hi) = seed.slope_range();
    assert!((lo - 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);
    let pr = push_graph(p, &seed, 2048).unwrap();
    let (lo, hi) = pr.graph.slope_range();
    assert!(lo >= 0.5 && hi <= 1.5, "output slopes [{lo}, {hi}]");
    assert!(pr.sup_out - pr.sup_in <= -p.b_m());
    assert!(pr.j1.0 >= p.j_m.0 - 1e-12 && pr.j1.1 <= p.j_m.1 + 1e-12);
    let g = &pr.graph;
    assert!(g.x[0] < -1.0 + 1e-2 && *g.x.last().unwrap() > -1e-2);
}

#[test]
fn trivial_bump_cannot_push() {
    let c = control_params(params()).unwrap();
    let seed = LogGraph::seed(c.y_pert.ln() - 0.5, 256);
    assert!(matches!(push_graph(&c, &seed, 256), Err(CounterexampleError::NoDescent(_))));
}

#[test]
fn descent_run_ten_steps() {
    let p = params();
    let d = descent();
    assert!(d.violations.is_empty(), "{:?}", d.violations);
    assert_eq!(d.sup_logy.len(), 11);
    for s in d.descents() {
        assert!(s <= -p.b_m() && p.b_m() >= 5.0);
    }
    for w in d.intervals.windows(2) {
        assert!(w[1].log_len < w[0].log_len);
    }
    for (k, &(_, ly)) in d.witness.iter().enumerate() {
        assert!(ly <= d.log_y0 - k as f64 * d.b_m + 1e-9);
        if k > 0 {
            assert!(ly <= d.sup_logy[k] + 1e-9);
        }
    }
}

#[test]
fn witness_is_an_orbit() {
    // the inverse is explicit and well conditioned
    let p = params();
    let w = &descent().witness;
    for k in 0..w.len() - 1 {
        let (x, ly) = bar_fpert_inv(p, w[k + 1].0, w[k + 1].1);
        assert!(circ(x - w[k].0) < 1e-9 && (ly - w[k].1).abs() < 1e-9, "step {k}");
    }
}

#[test]
fn certificate_is_produced() {
    let p = params();
    let d = descent();
    let out = certify_no_invariant_circle(p, d, d.log_y0 - 1.0, 1e-6).unwrap();
    let cert = out.certificate.unwrap_or_else(|| panic!("refused: {:?}", out.reason));
    assert!(cert.levels.len() >= 5);
    assert!(cert.base_logy > cert.w_log_threshold);
    for l in &cert.levels {
        assert!(l.logy < l.log_bound && l.logy < cert.w_log_threshold);
    }
    assert!(cert.levels.windows(2).all(|w| w[1].p_n > w[0].p_n));
}

#[test]
fn control_is_not_certified() {
    let c = control_params(params()).unwrap();
    let out = match descent_run(&c, c.y_pert.ln() - 0.5, 10) {
        Err(_) => None,
        Ok(rep) => certify_no_invariant_circle(&c, &rep, rep.log_y0 - 1.0, 1e-6).unwrap().certificate,
    };
    assert!(out.is_none());
}

#[test]
fn sweeps_separate_perturbed_and_control() {
    let p = params();
    let thr = descent().log_y0 - 1.0;
    let opts = SolverOptions::default();
    let menu = omega_menu();
    let perturbed = solver_sweep(p, thr, &menu[..6], &opts);
    assert!(perturbed.iter().all(|e| e.excludes_circle(1e-9)));
    let control = solver_sweep(&control_params(p).unwrap(), thr, &menu[..6], &opts);
    assert!(control.iter().all(|e| e.converged && e.t.unwrap().abs() < 1e-9), "{control:?}");
}

#[test]
fn witness_csv_rows() {
    let s = witness_csv(descent());
    assert!(s.starts_with("step,x,logy\n"));
    assert_eq!(s.lines().count(), 12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverse_round_trip(xb in -1.0f64..0.0, lb in -40.0f64..-15.0) {
        let p = params();
        let (x, ly) = bar_fpert_inv(p, xb, lb);
        let x = x - x.floor() - 1.0;
        prop_assume!(return_condition(p, p.bump.s_inv(x + 1.0)) < 1e-10);
        prop_assume!(ly <= p.log_fiber_cap());
        let (x2, l2) = bar_fpert(p, x, ly).unwrap();
        prop_assert!(circ(x2 - xb) < 1e-9 && (l2 - lb).abs() < 1e-9);
    }
}
