//! Pipelines shared by the subcommands and the report, with their artifact
//! writers.

use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{versioned, write_atomic, Lab, Result, ScenarioConfig};
use crate::charts_flows::PlanePoint;
use crate::counterexample::{
    bar_fpert, certify_no_invariant_circle, choose_m, control_params, descent_run, menu_sweep,
    plane_map, push_graph, return_condition, simulate_return, solver_sweep, witness_csv, CertifyOutcome,
    CounterexampleParams, DescentReport, LemmaGrids, LogGraph, PushResult, SweepEntry,
};
use crate::curves::{
    circle_rotation_number, lift_circle, polyline_csv, rotation_relation_check, sigma_distance, solve_level,
    CurveRecord, SolverOptions, LOBE_CENTER,
};
use crate::model::{polygon_area, polyline_to_csv, trace_separatrix};
use crate::return_renorm::{annulus_orbit_csv, twist_profile_csv, AnnulusPoint};

/// Resolution of the traced separatrix used for distances.
const SIGMA_RESOLUTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftSummary {
    pub omega: f64,
    pub closure_gap: f64,
    /// Hausdorff distance between the returned arc and the seed arc.
    pub overlap: f64,
    pub sigma_distance: f64,
    pub return_steps: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub epsilon: f64,
    pub n: i64,
    pub attempted: usize,
    /// Converged with `|t| <= t_factor * residual` and residual below
    /// tolerance.
    pub found: usize,
    pub max_residual: f64,
    pub failures: Vec<String>,
    pub lift: Option<LiftSummary>,
    pub lift_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSample {
    pub epsilon: f64,
    pub n: i64,
    pub omega: f64,
    pub alpha_hat: f64,
    pub alpha_hat_error: f64,
    pub alpha_bar: f64,
    pub deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveCatalog {
    pub records: Vec<CurveRecord>,
    pub levels: Vec<LevelSummary>,
    pub rotations: Vec<RotationSample>,
    pub rotation_errors: Vec<String>,
    /// Lifted circles `(epsilon, n, polyline)` for plotting.
    #[serde(skip)]
    pub circles: Vec<(f64, i64, Vec<PlanePoint>)>,
    #[serde(skip)]
    pub separatrix: Vec<PlanePoint>,
}

impl CurveCatalog {
    /// `(n, dist(Gamma_n, Sigma))` for one `epsilon`, in level order.
    pub fn accumulation(&self, epsilon: f64) -> Vec<(i64, f64)> {
        self.levels
            .iter()
            .filter(|l| l.epsilon == epsilon)
            .filter_map(|l| l.lift.as_ref().map(|x| (l.n, x.sigma_distance)))
            .collect()
    }
}

/// Invariant curves for every `(epsilon, n, omega)`, one lifted circle per
/// level and the rotation relation on a few of them.
pub fn curve_catalog(cfg: &ScenarioConfig, lab: &Lab) -> Result<CurveCatalog> {
    let tol = &cfg.tolerances;
    let opts = SolverOptions {
        grid: cfg.curves.grid,
        modes: cfg.curves.modes,
        tol: tol.curve_residual,
        max_iter: cfg.curves.max_iter,
    };
    let separatrix = trace_separatrix(&lab.model, SIGMA_RESOLUTION).context("tracing the separatrix")?;
    let mut records = Vec::new();
    let mut levels = Vec::new();
    let mut circles = Vec::new();
    let mut lifted = Vec::new();
    for &eps in &cfg.epsilons {
        let r = lab.renorm.with_epsilon(eps);
        for &n in &cfg.levels {
            let results: Vec<_> = cfg.omegas.par_iter().map(|&w| (w, solve_level(&r, n, w, &opts))).collect();
            let mut summary = LevelSummary {
                epsilon: eps,
                n,
                attempted: results.len(),
                found: 0,
                max_residual: 0.0,
                failures: Vec::new(),
                lift: None,
                lift_error: None,
            };
            let mut first = None;
            for (w, res) in results {
                match res {
                    Ok(res) => {
                        let ok = res.residual < tol.curve_residual && res.t.abs() <= tol.t_factor * res.residual;
                        if ok {
                            summary.found += 1;
                            summary.max_residual = summary.max_residual.max(res.residual);
                            if first.is_none() {
                                first = Some(res.clone());
                            }
                        } else {
                            summary.failures.push(format!("omega {w}: t = {:e}, residual {:e}", res.t, res.residual));
                        }
                        records.push(CurveRecord {
                            omega: w,
                            n,
                            epsilon: eps,
                            t: res.t,
                            residual: res.residual,
                            newton_iters: res.newton_iters,
                            hausdorff_to_sigma: None,
                            alpha_hat: None,
                        });
                    }
                    Err(e) => summary.failures.push(format!("omega {w}: {e}")),
                }
            }
            if let Some(res) = first {
                match lift_circle(&r, &res.curve, cfg.curves.lift_samples) {
                    Ok(circle) => {
                        let d = sigma_distance(&r.model, &separatrix, &circle);
                        if let Some(rec) = records
                            .iter_mut()
                            .rev()
                            .find(|c| c.epsilon == eps && c.n == n && c.omega == res.omega)
                        {
                            rec.hausdorff_to_sigma = Some(d);
                        }
                        summary.lift = Some(LiftSummary {
                            omega: res.omega,
                            closure_gap: circle.closure_gap,
                            overlap: circle.overlap,
                            sigma_distance: d,
                            return_steps: circle.return_steps,
                        });
                        lifted.push((eps, n, res.omega, circle.seed[0]));
                        circles.push((eps, n, circle.returned.clone()));
                    }
                    Err(e) => summary.lift_error = Some(e.to_string()),
                }
            }
            levels.push(summary);
        }
    }

    // rotation relation on evenly spread lifted circles
    let k = cfg.curves.rotation_curves.min(lifted.len());
    let picks: Vec<_> = (0..k).map(|i| lifted[i * lifted.len() / k.max(1)]).collect();
    let rot: Vec<_> = picks
        .par_iter()
        .map(|&(eps, n, w, start)| {
            let m = lab.model.with_epsilon(eps);
            circle_rotation_number(&m, start, cfg.curves.rotation_steps, LOBE_CENTER).map(|est| (eps, n, w, est))
        })
        .collect();
    let mut rotations = Vec::new();
    let mut rotation_errors = Vec::new();
    for res in rot {
        match res {
            Ok((eps, n, w, est)) => {
                // the chart runs against the plane orientation
                let alpha_bar = 1.0 - w;
                match rotation_relation_check(est.rho, alpha_bar, tol.rotation) {
                    Ok(chk) => {
                        if let Some(rec) =
                            records.iter_mut().find(|c| c.epsilon == eps && c.n == n && c.omega == w)
                        {
                            rec.alpha_hat = Some(est.rho);
                        }
                        rotations.push(RotationSample {
                            epsilon: eps,
                            n,
                            omega: w,
                            alpha_hat: est.rho,
                            alpha_hat_error: est.error,
                            alpha_bar,
                            deviation: chk.deviation,
                            pass: chk.pass,
                        });
                    }
                    Err(e) => rotation_errors.push(e.to_string()),
                }
            }
            Err(e) => rotation_errors.push(e.to_string()),
        }
    }
    Ok(CurveCatalog {
        records,
        levels,
        rotations,
        rotation_errors,
        circles,
        separatrix,
    })
}

pub fn write_catalog(cat: &CurveCatalog, out: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = vec![write_atomic(out, "curves.json", &versioned(cat))?];
    let mut acc = String::from("epsilon,n,omega,sigma_distance,closure_gap,overlap\n");
    for l in &cat.levels {
        if let Some(x) = &l.lift {
            acc.push_str(&format!(
                "{:e},{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                l.epsilon, l.n, x.omega, x.sigma_distance, x.closure_gap, x.overlap
            ));
        }
    }
    paths.push(write_atomic(out, "accumulation.csv", &acc)?);
    for (eps, n, poly) in &cat.circles {
        paths.push(write_atomic(out, &format!("circle_eps{eps:e}_n{n}.csv"), &polyline_csv(poly))?);
    }
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSummary {
    pub m: f64,
    pub b: f64,
    pub b_m: f64,
    pub c_m: f64,
    pub a_norm: f64,
    pub interval: (f64, f64),
    /// `|s_M(1) - 1|`.
    pub mass_error: f64,
    /// `max phi_M` on `I`.
    pub phi_max_on_i: f64,
    /// Range of `-phi_M'` on `I`.
    pub dphi_range: (f64, f64),
    /// `M / |I|` and `M / (b |I|)`.
    pub dphi_bounds: (f64, f64),
    pub min_ds: f64,
    pub identity_outside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub x: f64,
    pub logy: f64,
    pub formula: (f64, f64),
    pub simulated: (f64, f64),
    pub steps: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CounterexampleRun {
    #[serde(skip)]
    pub params: Option<CounterexampleParams>,
    pub bump: BumpSummary,
    pub grids: LemmaGrids,
    pub j_m: (f64, f64),
    pub y_pert: f64,
    pub descent: DescentReport,
    pub certificate: CertifyOutcome,
    pub cross_validation: Vec<CrossValidation>,
    pub sweep_logy: f64,
    pub sweep: Vec<SweepEntry>,
    pub control_sweep: Vec<SweepEntry>,
    /// Why the `M = 0` control produced no certificate.
    pub control_refusal: Option<String>,
    #[serde(skip)]
    pub first_push: Option<(LogGraph, PushResult)>,
}

fn bump_summary(p: &CounterexampleParams) -> BumpSummary {
    let bp = &p.bump;
    let (i0, i1) = bp.interval;
    let grid = 2000;
    let mut phi_max = f64::NEG_INFINITY;
    let (mut dlo, mut dhi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=grid {
        let t = i0 + (i1 - i0) * i as f64 / grid as f64;
        phi_max = phi_max.max(bp.phi(t));
        let d = -bp.dphi(t);
        dlo = dlo.min(d);
        dhi = dhi.max(d);
    }
    let len = bp.interval_len();
    let identity_outside = [-1.5, -0.25, 0.0, 1.0, 1.25, 2.5].iter().all(|&t| bp.s(t) == t);
    BumpSummary {
        m: bp.m,
        b: bp.b,
        b_m: p.b_m(),
        c_m: bp.c_m,
        a_norm: bp.a_norm,
        interval: bp.interval,
        mass_error: (bp.total_mass() - 1.0).abs(),
        phi_max_on_i: phi_max,
        dphi_range: (dlo, dhi),
        dphi_bounds: (bp.m / len, bp.m / (bp.b * len)),
        min_ds: bp.min_ds(),
        identity_outside,
    }
}

/// Formula against plane simulation at well-conditioned points.
fn cross_validate(p: &CounterexampleParams) -> Result<Vec<CrossValidation>> {
    let fp = plane_map(p).context("building f_pert")?;
    let mut pts = Vec::new();
    for &logy in &[-10.0, -11.0, -12.0] {
        for i in 0..16 {
            let x = -1.0 + (i as f64 + 0.5) / 16.0;
            let t = p.bump.s_inv(x + 1.0);
            if return_condition(p, t) < 1e-10 {
                pts.push((x, logy));
            }
        }
    }
    pts.par_iter()
        .map(|&(x, logy)| {
            let formula = bar_fpert(p, x, logy).context("formula")?;
            let (xs, ls, steps) = simulate_return(&fp, p, x, logy).context("simulation")?;
            let dx = xs - formula.0;
            let deviation = (dx - dx.round()).abs().max((ls - formula.1).abs());
            Ok(CrossValidation {
                x,
                logy,
                formula,
                simulated: (xs, ls),
                steps,
                deviation,
            })
        })
        .collect()
}

/// Chooses `M`, runs the descent and certification and both solver sweeps.
pub fn counterexample_run(cfg: &ScenarioConfig, lab: &Lab) -> Result<CounterexampleRun> {
    let ce = &cfg.counterexample;
    let tol = &cfg.tolerances;
    let (p, grids) = choose_m(&lab.renorm, ce.rho, ce.chi(), ce.bm_min, ce.dm).context("choosing M")?;
    let bump = bump_summary(&p);
    let log_y0 = p.y_pert.ln() - ce.fiber_offset;
    let descent = descent_run(&p, log_y0, ce.steps).context("descent")?;
    let w_threshold = descent.log_y0 - ce.w_offset;
    let certificate = certify_no_invariant_circle(&p, &descent, w_threshold, tol.defect).context("certification")?;
    let cross_validation = cross_validate(&p)?;
    let opts = SolverOptions {
        grid: cfg.curves.grid,
        modes: cfg.curves.modes,
        tol: tol.curve_residual,
        max_iter: cfg.curves.max_iter,
    };
    let sweep = solver_sweep(&p, w_threshold, &cfg.omegas, &opts);
    let control = control_params(&p).context("control bump")?;
    let control_sweep = menu_sweep(&control, w_threshold, &opts);
    let control_refusal = match descent_run(&control, log_y0, ce.steps) {
        Err(e) => Some(e.to_string()),
        Ok(rep) => {
            let out = certify_no_invariant_circle(&control, &rep, w_threshold, tol.defect).context("control")?;
            out.reason
        }
    };
    let seed = LogGraph::seed(log_y0, 2048);
    let first_push = push_graph(&p, &seed, 2048).ok().map(|r| (seed, r));
    Ok(CounterexampleRun {
        bump,
        grids,
        j_m: p.j_m,
        y_pert: p.y_pert,
        descent,
        certificate,
        cross_validation,
        sweep_logy: w_threshold,
        sweep,
        control_sweep,
        control_refusal,
        first_push,
        params: Some(p),
    })
}

fn graph_csv(g: &LogGraph) -> String {
    let mut out = String::from("x,logy\n");
    for (x, l) in g.x.iter().zip(&g.logy) {
        out.push_str(&format!("{x:.17e},{l:.17e}\n"));
    }
    out
}

pub fn write_counterexample(run: &CounterexampleRun, out: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = vec![
        write_atomic(out, "descent.json", &versioned(&run.descent))?,
        write_atomic(out, "certificate.json", &versioned(&run.certificate))?,
        write_atomic(out, "counterexample.json", &versioned(run))?,
        write_atomic(out, "witness.csv", &witness_csv(&run.descent))?,
    ];
    if let Some((seed, push)) = &run.first_push {
        paths.push(write_atomic(out, "push_input.csv", &graph_csv(seed))?);
        paths.push(write_atomic(out, "push_output.csv", &graph_csv(&push.graph))?);
    }
    Ok(paths)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelSummary {
    lambda: f64,
    r0: f64,
    r_exact: f64,
    r_outer: f64,
    lobe_area: f64,
    separatrix_points: usize,
    x_star: f64,
    y_star: f64,
    c_star: f64,
    c: f64,
    delta: f64,
    outer_passage: usize,
    sigma_at_zero: f64,
}

/// Model summary, separatrix and fundamental-domain boundary.
pub fn write_model(cfg: &ScenarioConfig, lab: &Lab, out: &Path) -> Result<Vec<PathBuf>> {
    let sigma = trace_separatrix(&lab.model, SIGMA_RESOLUTION).context("tracing the separatrix")?;
    let fd = lab.renorm.fd;
    let summary = ModelSummary {
        lambda: lab.model.lambda(),
        r0: lab.model.r0,
        r_exact: lab.model.glue.r_exact,
        r_outer: lab.model.glue.r_outer,
        lobe_area: polygon_area(&sigma).abs(),
        separatrix_points: sigma.len(),
        x_star: cfg.fd.x_star,
        y_star: cfg.fd.y_star,
        c_star: cfg.fd.c_star,
        c: fd.c,
        delta: fd.delta(),
        outer_passage: fd.n,
        sigma_at_zero: lab.renorm.sigma(0.0),
    };
    // the fundamental domain in the plane: X in [0, 1], v in (0, c)
    let mut domain = Vec::new();
    for i in 0..=64 {
        domain.push(lab.renorm.h_inv(i as f64 / 64.0, fd.c));
    }
    for i in (0..=64).rev() {
        domain.push(lab.renorm.h_inv(i as f64 / 64.0, fd.c * 1e-6));
    }
    Ok(vec![
        write_atomic(out, "model.json", &versioned(&summary))?,
        write_atomic(out, "separatrix.csv", &polyline_to_csv(&sigma))?,
        write_atomic(out, "fundamental_domain.csv", &polyline_to_csv(&domain))?,
    ])
}

/// Plane orbit of `f_eps`.
pub fn write_orbit(lab: &Lab, epsilon: f64, start: PlanePoint, steps: usize, out: &Path) -> Result<PathBuf> {
    let m = lab.model.with_epsilon(epsilon);
    let orbit = m.orbit(start, steps).context("orbit")?;
    let mut csv = String::from("step,x,y\n");
    for (k, p) in orbit.iter().enumerate() {
        csv.push_str(&format!("{k},{:.17e},{:.17e}\n", p.x, p.y));
    }
    write_atomic(out, "orbit.csv", &csv)
}

/// Orbit of the renormalized map.
pub fn write_return_map(lab: &Lab, epsilon: f64, start: AnnulusPoint, steps: usize, out: &Path) -> Result<PathBuf> {
    let r = lab.renorm.with_epsilon(epsilon);
    let csv = annulus_orbit_csv(&r, start, steps).context("return map")?;
    write_atomic(out, "return_map.csv", &csv)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RenormSummary {
    outer_passage: usize,
    delta: f64,
    sigma_nodes: Vec<(f64, f64)>,
    levels: Vec<(i64, f64)>,
}

/// Sigma table, twist profiles per level and the strip image of a fiber
/// band under the renormalized map.
pub fn write_renorm(cfg: &ScenarioConfig, lab: &Lab, out: &Path) -> Result<Vec<PathBuf>> {
    let r = &lab.renorm;
    let c = r.fd.c;
    let sigma_nodes = (0..=32).map(|i| {
        let v = c * i as f64 / 32.0;
        (v, r.sigma(v))
    });
    let mut paths = Vec::new();
    let mut levels = Vec::new();
    for &n in &cfg.levels {
        let prof = r.twist_profile(n, 256);
        let min_twist = prof.iter().map(|p| p.2.abs()).fold(f64::INFINITY, f64::min);
        levels.push((n, min_twist));
        paths.push(write_atomic(out, &format!("twist_n{n}.csv"), &twist_profile_csv(&prof))?);
    }
    let summary = RenormSummary {
        outer_passage: r.fd.n,
        delta: r.fd.delta(),
        sigma_nodes: sigma_nodes.collect(),
        levels,
    };
    paths.push(write_atomic(out, "renorm.json", &versioned(&summary))?);
    // fiber band [e^{-n-1}, e^{-n}) at the first level and its image
    let n = cfg.levels[0];
    let eps = cfg.epsilons.iter().cloned().fold(0.0, f64::max);
    let rs = r.with_epsilon(eps);
    let pts: Vec<(f64, f64)> = (0..48)
        .flat_map(|i| (0..8).map(move |j| ((i as f64 + 0.5) / 48.0, -1.0 + (j as f64 + 0.5) / 8.0)))
        .collect();
    let images: Vec<_> = pts
        .par_iter()
        .map(|&(x, u)| rs.ring_f(n, AnnulusPoint { x, logy: u }).map(|a| (x, u, a)))
        .collect::<std::result::Result<_, _>>()
        .context("strip image")?;
    let mut csv = String::from("x,u,image_x,image_u\n");
    for (x, u, a) in images {
        csv.push_str(&format!("{x:.17e},{u:.17e},{:.17e},{:.17e}\n", a.x, a.logy));
    }
    paths.push(write_atomic(out, "strip_image.csv", &csv)?);
    Ok(paths)
}
