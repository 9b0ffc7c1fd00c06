//! Acceptance checks, one per criterion. Each returns its measured values
//! next to the thresholds they were held to.

use std::collections::BTreeMap;

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipelines::{CounterexampleRun, CurveCatalog};
use super::{Lab, Result, ScenarioConfig};
use crate::charts_flows::{jacobian_det, local_flow, PlanePoint, SymplecticExtension};
use crate::model::{build_bump, build_fpert, GMap};
use crate::nf_algebra::{apply_generator_chain, bnf_normalize, PolyQ, TrigTaylorSeries};
use crate::return_renorm::AnnulusPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub criterion: u8,
    pub name: String,
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl CheckResult {
    fn new(criterion: u8, name: &str) -> Self {
        Self {
            criterion,
            name: name.into(),
            pass: true,
            metrics: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    /// Records `value` and fails the check unless `ok`.
    fn require(&mut self, key: &str, value: f64, ok: bool, what: impl Into<String>) {
        self.metric(key, value);
        if !ok {
            self.pass = false;
            self.notes.push(format!("FAILED {}: {value:e}", what.into()));
        }
    }

    fn fail(&mut self, note: impl Into<String>) {
        self.pass = false;
        self.notes.push(note.into());
    }
}

fn rng(cfg: &ScenarioConfig, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

/// Largest `|det Df - 1|` over `points`.
fn det_deviation<E: Send>(
    f: impl Fn(PlanePoint) -> std::result::Result<PlanePoint, E> + Sync,
    points: &[PlanePoint],
) -> std::result::Result<f64, E> {
    let devs: std::result::Result<Vec<f64>, E> =
        points.par_iter().map(|&p| jacobian_det(&f, p).map(|d| (d - 1.0).abs())).collect();
    Ok(devs?.into_iter().fold(0.0, f64::max))
}

/// Criterion 1: Jacobian determinants of `f_eps`, `g_M`, `f_pert` and a
/// symplectic extension.
pub fn check_symplecticity(cfg: &ScenarioConfig, lab: &Lab) -> Result<CheckResult> {
    let mut res = CheckResult::new(1, "symplecticity");
    let tol = cfg.tolerances.symplectic_det;
    let count = cfg.tolerances.symplectic_points;
    let mut r = rng(cfg, 1);
    let box_pts: Vec<PlanePoint> = (0..count)
        .map(|_| PlanePoint::new(r.gen_range(-0.7..0.7), r.gen_range(-0.7..0.7)))
        .collect();

    let eps = cfg.epsilons.iter().cloned().fold(0.0, f64::max).max(1e-3);
    let m = lab.model.with_epsilon(eps);
    let d = det_deviation(|p| m.f_eps(p), &box_pts).context("f_eps")?;
    res.require("f_eps", d, d < tol, "det D f_eps");

    let ce = &cfg.counterexample;
    let probe = build_bump(ce.rho, 0.0, ce.chi()).context("bump")?;
    let m_val = (ce.bm_min / probe.b / ce.dm).ceil() * ce.dm;
    let bump = build_bump(ce.rho, m_val, ce.chi()).context("bump")?;
    let c = lab.renorm.fd.c;
    let gmap = GMap::new(bump, c, GMap::DEFAULT_KAPPA).context("g_M")?;
    let strip: Vec<PlanePoint> = (0..count)
        .map(|_| PlanePoint::new(r.gen_range(-0.2..1.2), r.gen_range(-0.95..0.95) * c))
        .collect();
    let d = det_deviation(|p| gmap.apply(p), &strip).context("g_M")?;
    res.require("g_M", d, d < tol, "det D g_M");

    if lab.model.q.higher.is_empty() {
        let fp = build_fpert(&lab.model, gmap, lab.renorm.fd.x_star).context("f_pert")?;
        let mut pts: Vec<PlanePoint> = box_pts[..count / 2].to_vec();
        while pts.len() < count {
            let bx: f64 = r.gen_range(-1.0..0.0);
            let v = r.gen_range(-0.95..0.95) * c;
            let x = lab.renorm.fd.x_star * (-lab.model.lambda() * bx).exp();
            pts.push(PlanePoint::new(x, v / x));
        }
        let d = det_deviation(|p| fp.apply(p), &pts).context("f_pert")?;
        res.require("f_pert", d, d < tol, "det D f_pert");
    } else {
        res.notes.push("f_pert skipped: q is not linear".into());
    }

    let theta = |p: PlanePoint| {
        let y = p.y + 0.2 * p.x + 0.3 * p.x * p.x;
        PlanePoint::new(p.x + 0.1 * y * y, y)
    };
    let ext = SymplecticExtension::new(theta, 0.5);
    let disk: Vec<PlanePoint> = (0..count)
        .map(|_| PlanePoint::new(r.gen_range(-0.6..0.6), r.gen_range(-0.6..0.6)))
        .collect();
    let d = det_deviation(|p| ext.apply(p), &disk).context("extension")?;
    res.require("extension", d, d < tol, "det D extension");
    res.metric("points_per_map", count as f64);
    Ok(res)
}

/// Criterion 2: `xy` along closed-form steps of the local flow.
pub fn check_exact_flow(cfg: &ScenarioConfig, lab: &Lab) -> Result<CheckResult> {
    let mut res = CheckResult::new(2, "exact flow conservation");
    let steps = cfg.tolerances.flow_steps;
    let mut worst: f64 = 0.0;
    for (q, start) in [
        (lab.model.q.clone(), PlanePoint::new(0.2, 0.15)),
        (PolyQ::new(1.0, vec![1.0]), PlanePoint::new(0.3, 0.1)),
        (PolyQ::linear(0.7), PlanePoint::new(-0.25, 0.05)),
    ] {
        let s0 = start.x * start.y;
        let mut p = start;
        // forward and back so the orbit stays representable
        for k in 0..steps {
            let t = if k < steps / 2 { 1e-3 } else { -1e-3 };
            p = local_flow(&q, t, p).context("local flow")?;
            worst = worst.max((p.x * p.y - s0).abs());
        }
    }
    let tol = cfg.tolerances.flow_drift;
    res.require("xy_drift", worst, worst < tol, "xy drift");
    Ok(res)
}

fn random_perturbation(r: &mut ChaCha8Rng, order: u32) -> TrigTaylorSeries {
    let mut h = TrigTaylorSeries::monomial(1, 1, 1.0, order, 0);
    for deg in 3..=4u32 {
        for i1 in 0..=deg {
            let c: f64 = r.gen_range(-1.0..1.0);
            h = h.add(&TrigTaylorSeries::monomial(i1, deg - i1, c, order, 0));
        }
    }
    h
}

/// Least-squares slope of `ln y` against `ln x`.
fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in pts {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Remainder `|H(phi(z)) - q(z1 z2)|` on the ray `rho (1, 1)`.
pub fn bnf_remainder_profile(h: &TrigTaylorSeries, order: u32, rhos: &[f64]) -> anyhow::Result<Vec<(f64, f64)>> {
    let bnf = bnf_normalize(h, order)?;
    let chain = bnf.chain();
    rhos.iter()
        .map(|&rho| {
            let w = apply_generator_chain(&chain, 0.0, [rho, rho])?;
            Ok((rho, (h.eval(0.0, w[0], w[1]) - bnf.q.q(rho * rho)).abs()))
        })
        .collect()
}

/// Criterion 3: order of the normal-form remainder.
pub fn check_bnf_remainder(cfg: &ScenarioConfig) -> Result<CheckResult> {
    let mut res = CheckResult::new(3, "normal form remainder order");
    let order = cfg.tolerances.bnf_order;
    let target = order as f64 + cfg.tolerances.bnf_slope_margin;
    let mut r = rng(cfg, 3);
    let rhos: Vec<f64> = (0..9).map(|i| 10f64.powf(-3.0 + 2.0 * i as f64 / 8.0)).collect();
    let mut min_slope = f64::INFINITY;
    for k in 0..cfg.tolerances.bnf_perturbations {
        let h = random_perturbation(&mut r, order + 1);
        let prof = bnf_remainder_profile(&h, order, &rhos).context("normal form")?;
        let slope = loglog_slope(&prof);
        res.metric(&format!("slope_{k}"), slope);
        min_slope = min_slope.min(slope);
    }
    res.require("min_slope", min_slope, min_slope >= target, format!("slope below {target}"));
    Ok(res)
}

/// Criterion 4: return time against `|ln v| / lambda` at `epsilon = 0`.
pub fn check_return_time(cfg: &ScenarioConfig, lab: &Lab) -> Result<CheckResult> {
    let mut res = CheckResult::new(4, "return time law");
    let r = lab.renorm.with_epsilon(0.0);
    let lambda = lab.model.lambda();
    let vs: Vec<f64> = (0..=12).map(|i| 10f64.powf(-10.0 + 0.5 * i as f64)).collect();
    let out: std::result::Result<Vec<(f64, usize)>, _> = vs
        .par_iter()
        .map(|&v| r.bar_f_counted(AnnulusPoint { x: 0.5, logy: v.ln() }).map(|(_, n)| (v, n)))
        .collect();
    let mut worst: f64 = 0.0;
    for (v, n) in out.context("return map")? {
        worst = worst.max((n as f64 * lambda / v.ln().abs() - 1.0).abs());
    }
    let tol = cfg.tolerances.return_time;
    res.require("max_ratio_deviation", worst, worst <= tol, "|n lambda / |ln v| - 1|");
    Ok(res)
}

fn circ(d: f64) -> f64 {
    (d - d.round()).abs()
}

/// Criterion 5: simulated `bar_f` against `T_{l0}` and the spread of the
/// passage phase.
pub fn check_renorm_oracle(cfg: &ScenarioConfig, lab: &Lab) -> Result<CheckResult> {
    let mut res = CheckResult::new(5, "renormalization oracle");
    let r = lab.renorm.with_epsilon(0.0);
    let g = cfg.tolerances.renorm_grid;
    let (lv0, lv1) = ((1e-9f64).ln(), (0.9 * r.fd.delta()).ln());
    let pts: Vec<AnnulusPoint> = (0..g)
        .flat_map(|i| {
            (0..g).map(move |j| AnnulusPoint {
                x: (i as f64 + 0.5) / g as f64,
                logy: lv0 + (lv1 - lv0) * j as f64 / (g - 1) as f64,
            })
        })
        .collect();
    let devs: std::result::Result<Vec<f64>, _> = pts
        .par_iter()
        .map(|&a| {
            r.bar_f(a).map(|b| {
                let e = r.t_l0(a);
                circ(b.x - e.x).max((b.logy - e.logy).abs())
            })
        })
        .collect();
    let sup = devs.context("bar_f")?.into_iter().fold(0.0, f64::max);
    let tol = cfg.tolerances.renorm_oracle;
    res.require("sup_deviation", sup, sup < tol, "bar_f vs T_l0");
    let mut spread: f64 = 0.0;
    for &v in &[1e-8, 1e-6, 1e-4, 0.5 * r.fd.c] {
        let (lo, hi) = crate::return_renorm::sigma_spread(&r, v, 16).context("sigma spread")?;
        spread = spread.max(hi - lo);
    }
    res.require("sigma_spread", spread, spread < cfg.tolerances.sigma_spread, "sigma spread");
    res.metric("grid_points", (g * g) as f64);
    Ok(res)
}

/// Criterion 6: twist lower bound and convergence of the rescaled maps to
/// the twist map as `epsilon -> 0`.
pub fn check_twist(cfg: &ScenarioConfig, lab: &Lab) -> Result<CheckResult> {
    let mut res = CheckResult::new(6, "twist bound");
    let r0 = &lab.renorm;
    let lambda = lab.model.lambda();
    // Smallest level whose whole ring, fibers up to e^{-n}, lies below delta.
    let delta = r0.fd.delta();
    let n0 = (1..60)
        .find(|&n| r0.check_level(n).is_ok() && (-(n as f64)).exp() < delta)
        .unwrap_or(1);
    let levels: Vec<i64> = (n0..n0 + cfg.tolerances.twist_levels as i64).collect();
    let mut min_twist = f64::INFINITY;
    for &n in &levels {
        for (_, _, d) in r0.twist_profile(n, 256) {
            min_twist = min_twist.min(d.abs());
        }
    }
    res.metric("n0", n0 as f64);
    res.require("min_twist", min_twist, min_twist >= 0.5 / lambda, "min |dl/dy| below 1/(2 lambda)");

    let g = cfg.tolerances.twist_grid;
    let pts: Vec<(f64, f64)> = (0..g)
        .flat_map(|i| (0..g).map(move |j| ((i as f64 + 0.5) / g as f64, -1.0 + (j as f64 + 0.5) / g as f64)))
        .collect();
    let epsilons = [1e-2, 1e-3, 1e-4];
    for &n in &levels {
        let mut norms = Vec::new();
        for &eps in &epsilons {
            let r = r0.with_epsilon(eps);
            let devs: std::result::Result<Vec<f64>, _> = pts
                .par_iter()
                .map(|&(x, u)| {
                    r.ring_f(n, AnnulusPoint { x, logy: u }).map(|b| {
                        let ex = x + r.ring_l_lift(n, u);
                        circ(b.x - ex).max((b.logy - u).abs())
                    })
                })
                .collect();
            let norm = devs.context("ring map")?.into_iter().fold(0.0, f64::max);
            res.metric(&format!("norm_n{n}_eps{eps:e}"), norm);
            norms.push(norm);
        }
        if !(norms[0] > norms[1] && norms[1] > norms[2]) {
            res.fail(format!("level {n}: norms {norms:?} not decreasing in epsilon"));
        }
    }
    Ok(res)
}

/// Criterion 7 from a computed curve catalog.
pub fn check_theorem_a(cfg: &ScenarioConfig, cat: &CurveCatalog) -> CheckResult {
    let mut res = CheckResult::new(7, "invariant circles accumulate on the separatrix");
    let tol = &cfg.tolerances;
    let mut min_found = usize::MAX;
    let (mut worst_closure, mut worst_overlap): (f64, f64) = (0.0, 0.0);
    for l in &cat.levels {
        min_found = min_found.min(l.found);
        if l.found < tol.min_curves {
            res.fail(format!("epsilon {:e}, n {}: {} curves", l.epsilon, l.n, l.found));
        }
        match &l.lift {
            Some(x) => {
                worst_closure = worst_closure.max(x.closure_gap);
                worst_overlap = worst_overlap.max(x.overlap);
            }
            None => res.fail(format!(
                "epsilon {:e}, n {}: no lifted circle ({})",
                l.epsilon,
                l.n,
                l.lift_error.as_deref().unwrap_or("no curve")
            )),
        }
    }
    res.require("min_curves_per_level", min_found as f64, min_found >= tol.min_curves, "curves per level");
    res.require("closure", worst_closure, worst_closure < tol.closure, "closure gap");
    res.require("invariance", worst_overlap, worst_overlap < tol.invariance, "invariance");
    for &eps in &cfg.epsilons {
        let acc = cat.accumulation(eps);
        for (n, d) in &acc {
            res.metric(&format!("dist_eps{eps:e}_n{n}"), *d);
        }
        if acc.windows(2).any(|w| !(w[1].1 < w[0].1)) {
            res.fail(format!("epsilon {eps:e}: distances to the separatrix not strictly decreasing"));
        }
        if let Some(&(n, d)) = acc.last() {
            if !(d < tol.accumulation) {
                res.fail(format!("epsilon {eps:e}: distance {d:e} at n = {n} not below {:e}", tol.accumulation));
            }
        }
    }
    let worst_rot = cat.rotations.iter().map(|s| s.deviation).fold(0.0, f64::max);
    res.require(
        "rotation_deviation",
        worst_rot,
        worst_rot < tol.rotation && cat.rotations.len() >= cfg.curves.rotation_curves,
        "rotation relation",
    );
    for e in &cat.rotation_errors {
        res.fail(format!("rotation number: {e}"));
    }
    res
}

/// Criterion 8 from a computed counterexample run.
pub fn check_theorem_b(cfg: &ScenarioConfig, run: &CounterexampleRun) -> CheckResult {
    let mut res = CheckResult::new(8, "counterexample without invariant circles");
    let tol = &cfg.tolerances;
    let b = &run.bump;
    res.require("mass_error", b.mass_error, b.mass_error < tol.bump_mass, "int exp(phi_M) - 1");
    res.require("phi_max_on_I_plus_bM", b.phi_max_on_i + b.b_m, b.phi_max_on_i <= -b.b_m, "phi_M <= -bM on I");
    let (dlo, dhi) = b.dphi_range;
    let (blo, bhi) = b.dphi_bounds;
    res.require("dphi_lower_margin", dlo - blo, dlo >= blo, "-phi_M' >= M/|I|");
    res.require("dphi_upper_margin", bhi - dhi, dhi <= bhi, "-phi_M' <= M/(b|I|)");
    res.require("min_ds", b.min_ds, b.min_ds > 0.0 && b.identity_outside, "s_M diffeomorphism");
    let g = &run.grids;
    let lim = 0.25 * (1.0 - tol.lemma_margin);
    res.require("dt_dphi", g.dt_dphi, g.dt_dphi <= lim, "|dt/dphi|");
    res.require("dxbar_dphi_dev", g.dxbar_dphi_dev, g.dxbar_dphi_dev <= lim, "|dx/dphi - 1|");
    res.require("dlogy_dphi_dev", g.dlogy_dphi_dev, g.dlogy_dphi_dev <= lim, "|d ln y/dphi - 1|");
    res.require("jbar_len", g.jbar_len, g.jbar_len > 2.0, "|J_M bar| > 2");
    res.require("b_m", b.b_m, b.b_m >= cfg.counterexample.bm_min, "bM");
    let d = &run.descent;
    let drops = d.descents();
    let worst_drop = drops.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    res.require(
        "worst_descent",
        worst_drop,
        drops.len() >= cfg.counterexample.steps && worst_drop <= -d.b_m && d.violations.is_empty(),
        "sup ln y descent",
    );
    for v in &d.violations {
        res.fail(format!("descent: {v}"));
    }
    let cv = run.cross_validation.iter().map(|c| c.deviation).fold(0.0, f64::max);
    res.require(
        "cross_validation",
        cv,
        cv < tol.cross_validation && !run.cross_validation.is_empty(),
        "formula vs simulation",
    );
    match &run.certificate.certificate {
        Some(c) => res.require(
            "certificate_levels",
            c.levels.len() as f64,
            c.levels.len() >= tol.certificate_levels,
            "certificate levels",
        ),
        None => res.fail(format!(
            "no certificate: {}",
            run.certificate.reason.as_deref().unwrap_or("unknown")
        )),
    }
    let floor = tol.t_factor * tol.curve_residual;
    let spurious = run.sweep.iter().filter(|e| !e.excludes_circle(floor)).count();
    res.require("sweep_invariant_curves", spurious as f64, spurious == 0, "curves of the perturbed map");
    let control = run
        .control_sweep
        .iter()
        .filter(|e| e.t.is_some_and(|t| e.residual < tol.curve_residual && t.abs() <= tol.t_factor * e.residual))
        .count();
    res.require("control_curves", control as f64, control >= tol.min_curves, "control curves");
    if run.control_refusal.is_none() {
        res.fail("control case was certified");
    }
    res
}
