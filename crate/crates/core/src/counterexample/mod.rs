//! The counterexample map in logarithmic fiber coordinates: one return of
//! `f_pert` to the strip `X in [-1, 0)` is
//! `(x, ln y) -> (t - 1 + l(y~), ln y~)` with `t = s_M^{-1}(x + 1)`,
//! `ln y~ = phi_M(t) + ln y` and `l(v) = (ln v - sigma(v)) / lambda`.
//! Graphs of slope near `+1` over `J_M = s_M(I) - 1` are pushed to graphs
//! over a full period whose fibers drop by at least `bM`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts_flows::PlanePoint;
use crate::curves::{find_translated_curve, omega_menu, CurveDomain, CurveError, GraphCurve, SolverOptions};
use crate::model::{build_bump, BumpParams, Chi, FPert, GMap, ModelError};
use crate::numerics::bisect;
use crate::return_renorm::{RenormError, Renormalizer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CounterexampleError {
    #[error("fiber ln y = {0} outside the explicit region of g_M")]
    Fiber(f64),
    #[error("x = {0} outside [-1, 0)")]
    Domain(f64),
    #[error("bump has no descent interval (M = {0})")]
    NoDescent(f64),
    #[error("image of the graph does not cover a full period (length {0})")]
    Covering(f64),
    #[error("no admissible M up to {0}")]
    NoAdmissibleM(f64),
    #[error("witness chain did not converge: residual {0:e}")]
    Shooting(f64),
    #[error("simulation did not return within {0} steps")]
    NoReturn(usize),
    #[error("q must be linear for the counterexample")]
    NonlinearQ,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Renorm(#[from] RenormError),
}

type Result<T> = std::result::Result<T, CounterexampleError>;

/// Data of the renormalized counterexample.
#[derive(Debug, Clone)]
pub struct CounterexampleParams {
    pub bump: BumpParams,
    pub renorm: Renormalizer,
    pub lambda: f64,
    /// Annulus height.
    pub c: f64,
    /// Explicit-region fraction of `g_M`.
    pub kappa: f64,
    /// Bound on initial fibers.
    pub y_pert: f64,
    /// `s_M(I) - 1`.
    pub j_m: (f64, f64),
}

pub fn build_counterexample(r: &Renormalizer, bump: BumpParams, kappa: f64) -> Result<CounterexampleParams> {
    if !r.model.q.higher.is_empty() {
        return Err(CounterexampleError::NonlinearQ);
    }
    let (i0, i1) = bump.interval;
    let j_m = (bump.s(i0) - 1.0, bump.s(i1) - 1.0);
    let c = r.fd.c;
    Ok(CounterexampleParams {
        lambda: r.model.lambda(),
        c,
        kappa,
        y_pert: 0.5 * kappa * c,
        j_m,
        bump,
        renorm: r.with_epsilon(0.0),
    })
}

impl CounterexampleParams {
    pub fn b_m(&self) -> f64 {
        self.bump.b * self.bump.m
    }

    /// `l(v)` lifted, for `ln v` given.
    pub fn l(&self, logv: f64) -> f64 {
        (logv - self.renorm.sigma(logv.exp())) / self.lambda
    }

    fn dl(&self, logv: f64) -> f64 {
        let v = logv.exp();
        (1.0 - v * self.renorm.sigma_prime(v)) / self.lambda
    }

    /// Largest admissible input fiber.
    pub fn log_fiber_cap(&self) -> f64 {
        (self.kappa * self.c).ln()
    }

    /// The map in terms of `t = s_M^{-1}(x + 1)`; returns `x` unreduced.
    pub fn step_from_t(&self, t: f64, logy: f64) -> (f64, f64) {
        let ly = self.bump.phi(t) + logy;
        (t - 1.0 + self.l(ly), ly)
    }

    /// `t` with `x_bar(t) = x_bar` on the fiber `ln y_bar`.
    pub fn inverse_t(&self, x_bar: f64, logy_bar: f64) -> f64 {
        (x_bar + 1.0 - self.l(logy_bar)).rem_euclid(1.0)
    }
}

fn reduce(x: f64) -> f64 {
    x - x.floor() - 1.0
}

/// One return of the counterexample map, `x` reduced to `[-1, 0)`.
pub fn bar_fpert(p: &CounterexampleParams, x: f64, logy: f64) -> Result<(f64, f64)> {
    if !(-1.0..0.0).contains(&x) {
        return Err(CounterexampleError::Domain(x));
    }
    if !(logy <= p.log_fiber_cap()) {
        return Err(CounterexampleError::Fiber(logy));
    }
    let t = p.bump.s_inv(x + 1.0);
    let (xb, ly) = p.step_from_t(t, logy);
    Ok((reduce(xb), ly))
}

/// Inverse of [`bar_fpert`].
pub fn bar_fpert_inv(p: &CounterexampleParams, x_bar: f64, logy_bar: f64) -> (f64, f64) {
    let t = p.inverse_t(x_bar, logy_bar);
    (p.bump.s(t) - 1.0, logy_bar - p.bump.phi(t))
}

/// Full-plane `f_pert` for these parameters.
pub fn plane_map(p: &CounterexampleParams) -> Result<FPert> {
    let gmap = GMap::new(p.bump.clone(), p.c, p.kappa)?;
    Ok(crate::model::build_fpert(&p.renorm.model, gmap, p.renorm.fd.x_star)?)
}

/// Chart point `h^{-1}(x, e^{logy})` of the strip.
pub fn strip_point(p: &CounterexampleParams, x: f64, logy: f64) -> PlanePoint {
    let xp = p.renorm.fd.x_star * (-p.lambda * x).exp();
    PlanePoint::new(xp, logy.exp() / xp)
}

/// First return of the plane orbit of `f_pert` to the strip, in chart
/// coordinates, with the number of steps.
pub fn simulate_return(fp: &FPert, p: &CounterexampleParams, x: f64, logy: f64) -> Result<(f64, f64, usize)> {
    let cap = 1_000_000;
    let mut st = fp.model.state(strip_point(p, x, logy));
    let mut left = false;
    for n in 1..=cap {
        st = fp.step_state(st)?;
        let z = st.p;
        left |= z.norm() >= fp.model.glue.r_exact;
        if left && fp.in_support(z) {
            let xb = (p.renorm.fd.x_star.ln() - z.x.ln()) / p.lambda;
            return Ok((xb, (z.x * z.y).ln(), n));
        }
    }
    Err(CounterexampleError::NoReturn(cap))
}

/// Bounds of Lemmas 9.4 and 9.5 on a grid over `I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaGrids {
    /// `max |dt/dphi|`.
    pub dt_dphi: f64,
    /// `max |dx_bar/dphi - 1|` over admissible input slopes.
    pub dxbar_dphi_dev: f64,
    /// `max |d ln y_bar/dphi - 1|`.
    pub dlogy_dphi_dev: f64,
    /// Length of `phi_M(I)`, which bounds the covering of the image.
    pub jbar_len: f64,
    pub b_m: f64,
}

impl LemmaGrids {
    /// All bounds hold with a relative margin.
    pub fn pass(&self, margin: f64) -> bool {
        let lim = 0.25 * (1.0 - margin);
        self.dt_dphi <= lim
            && self.dxbar_dphi_dev <= lim
            && self.dlogy_dphi_dev <= lim
            && self.jbar_len >= 2.0 * (1.0 + margin)
    }
}

/// Finite-difference derivatives in `phi` along graphs of slope `S` in
/// `{1/2, 1, 3/2}` through fiber `ln y_pert`.
pub fn lemma_grids(p: &CounterexampleParams, samples: usize) -> LemmaGrids {
    let bp = &p.bump;
    let (i0, i1) = bp.interval;
    let ly0 = p.y_pert.ln();
    let mut dt_dphi: f64 = 0.0;
    let mut dx_dev: f64 = 0.0;
    let mut dl_dev: f64 = 0.0;
    for slope in [0.5, 1.0, 1.5] {
        // input graph ln y = ly0 + slope (x - x0), x = s(t) - 1
        let x0 = bp.s(i0);
        let eval = |t: f64| {
            let dx = bp.s_increment(i0, t);
            let ly = ly0 + slope * (bp.s(i0) - x0 + dx);
            let (xb, lb) = p.step_from_t(t, ly);
            (bp.phi(t), xb, lb)
        };
        let mut prev = eval(i0);
        for k in 1..=samples {
            let t = i0 + (i1 - i0) * k as f64 / samples as f64;
            let cur = eval(t);
            let dphi = cur.0 - prev.0;
            let dt = (i1 - i0) / samples as f64;
            dt_dphi = dt_dphi.max((dt / dphi).abs());
            dx_dev = dx_dev.max(((cur.1 - prev.1) / dphi - 1.0).abs());
            dl_dev = dl_dev.max(((cur.2 - prev.2) / dphi - 1.0).abs());
            prev = cur;
        }
    }
    LemmaGrids {
        dt_dphi,
        dxbar_dphi_dev: dx_dev,
        dlogy_dphi_dev: dl_dev,
        jbar_len: (bp.phi(i0) - bp.phi(i1)).abs(),
        b_m: p.b_m(),
    }
}

/// Smallest `M` on a grid of step `dm` whose Lemma 9.4/9.5 bounds hold
/// with a 10% margin and with `bM >= bm_min`.
pub fn choose_m(r: &Renormalizer, rho: f64, chi: Chi, bm_min: f64, dm: f64) -> Result<(CounterexampleParams, LemmaGrids)> {
    let probe = build_bump(rho, 0.0, chi)?;
    let start = (bm_min / probe.b / dm).ceil().max(1.0) as usize;
    for k in start..start + 400 {
        let m = k as f64 * dm;
        let bump = build_bump(rho, m, chi)?;
        let Ok(gm) = GMap::new(bump.clone(), r.fd.c, GMap::DEFAULT_KAPPA) else {
            continue;
        };
        let params = build_counterexample(r, gm.bump, GMap::DEFAULT_KAPPA)?;
        let grids = lemma_grids(&params, 2000);
        if grids.b_m >= bm_min && grids.pass(0.1) {
            return Ok((params, grids));
        }
    }
    Err(CounterexampleError::NoAdmissibleM((start + 400) as f64 * dm))
}

/// Sampled graph `ln y = g(x)`, `x` increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogGraph {
    pub x: Vec<f64>,
    pub logy: Vec<f64>,
}

impl LogGraph {
    /// `ln y = ln y0 + x` on `[-1, 0)`.
    pub fn seed(log_y0: f64, samples: usize) -> Self {
        let x: Vec<f64> = (0..samples).map(|i| -1.0 + i as f64 / samples as f64).collect();
        let logy = x.iter().map(|&x| log_y0 + x).collect();
        Self { x, logy }
    }

    /// Linear interpolation, extrapolating from the end segments.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(k) => return self.logy[k],
            Err(k) => k.clamp(1, n - 1),
        };
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        let s = (x - x0) / (x1 - x0);
        self.logy[k - 1] + s * (self.logy[k] - self.logy[k - 1])
    }

    pub fn sup(&self) -> f64 {
        self.logy.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.logy.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Range of secant slopes.
    pub fn slope_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 1..self.x.len() {
            let s = (self.logy[i] - self.logy[i - 1]) / (self.x[i] - self.x[i - 1]);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    }

    /// Secant slope over `[a, b]`.
    pub fn slope_on(&self, a: f64, b: f64) -> f64 {
        (self.eval(b) - self.eval(a)) / (b - a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushResult {
    pub graph: LogGraph,
    /// Sub-interval of `I` whose image is one period.
    pub t_range: (f64, f64),
    /// The same interval in `x`, inside `J_M`.
    pub j1: (f64, f64),
    pub input_slope: f64,
    pub sup_in: f64,
    pub sup_out: f64,
}

/// Pushes the part of `g` over `J_M` forward and keeps one full period of
/// the image.
pub fn push_graph(p: &CounterexampleParams, g: &LogGraph, samples: usize) -> Result<PushResult> {
    let bp = &p.bump;
    let (i0, i1) = bp.interval;
    if bp.m == 0.0 || !(bp.phi(0.5 * (i0 + i1)) < 0.0) {
        return Err(CounterexampleError::NoDescent(bp.m));
    }
    let xs0 = bp.s(i0) - 1.0;
    let input = |t: f64| g.eval(xs0 + bp.s_increment(i0, t));
    let out = |t: f64| p.step_from_t(t, input(t));
    let (xa, xb) = (out(i0).0, out(i1).0);
    let (lo, hi) = (xa.min(xb), xa.max(xb));
    if hi - lo < 2.0 {
        return Err(CounterexampleError::Covering(hi - lo));
    }
    let sup_in_cap = g.sup().max(input(i0)).max(input(i1));
    if !(sup_in_cap <= p.log_fiber_cap()) {
        return Err(CounterexampleError::Fiber(sup_in_cap));
    }
    // central period [k - 1, k) of the image
    let k = (0.5 * (lo + hi)).round();
    let root = |target: f64| {
        bisect(|t| out(t).0 - target, i0, i1, 0.0).map_err(|_| CounterexampleError::Covering(hi - lo))
    };
    let ta = root(k - 1.0)?;
    let tb = root(k)?;
    let (t_lo, t_hi) = (ta.min(tb), ta.max(tb));
    let mut pts: Vec<(f64, f64)> = (0..=samples)
        .map(|i| {
            let t = t_lo + (t_hi - t_lo) * i as f64 / samples as f64;
            let (x, l) = out(t);
            (x - k, l)
        })
        .filter(|(x, _)| (-1.0..0.0).contains(x))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|a, b| a.0 == b.0);
    let graph = LogGraph {
        x: pts.iter().map(|q| q.0).collect(),
        logy: pts.iter().map(|q| q.1).collect(),
    };
    let j1 = (xs0 + bp.s_increment(i0, t_lo), xs0 + bp.s_increment(i0, t_hi));
    let input_slope = g.slope_on(p.j_m.0, p.j_m.1);
    let sup_in = (0..=64)
        .map(|i| input(i0 + (i1 - i0) * i as f64 / 64.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let sup_out = graph.sup();
    Ok(PushResult {
        graph,
        t_range: (t_lo, t_hi),
        j1,
        input_slope,
        sup_in,
        sup_out,
    })
}

/// Nested interval `K_n` of seed abscissae, stored by center and the
/// natural log of its length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KInterval {
    pub center: f64,
    pub log_len: f64,
}

/// Orbit of the counterexample map that stays over `J_M` for `n` steps,
/// starting on the seed graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessChain {
    /// `t_k = s_M^{-1}(x_k + 1)`.
    pub t: Vec<f64>,
    pub logy: Vec<f64>,
    /// Integer shifts of the reduction to `[-1, 0)`.
    pub shifts: Vec<f64>,
    pub residual: f64,
    /// `ln |dx_0 / dx_n|` along the chain.
    pub log_sensitivity: f64,
}

impl WitnessChain {
    pub fn x(&self, p: &CounterexampleParams, k: usize) -> f64 {
        p.bump.s(self.t[k]) - 1.0
    }
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Multiple shooting for the chain `P_0, ..., P_n` with `P_0` on the seed
/// graph, every `x_k` in `J_M` and `x_n` at `x_target`. Forward iteration
/// expands `x` by about `1 / s_M'` per step and backward iteration expands
/// the fiber, so neither single shooting direction is usable.
pub fn witness_chain(p: &CounterexampleParams, log_y0: f64, n: usize, x_target: f64) -> Result<WitnessChain> {
    let bp = &p.bump;
    let (i0, i1) = bp.interval;
    let tc = bp.s_inv(x_target + 1.0);
    let jc = x_target;
    // greedy start: each t_k picked so that the next point lands at x_target
    let mut t = vec![0.0; n + 1];
    let mut ly = vec![0.0; n + 1];
    let mut shifts = vec![0.0; n];
    t[0] = tc;
    ly[0] = log_y0 + bp.s(tc) - 1.0;
    for k in 0..n {
        let lk = ly[k];
        let f = |tt: f64| p.step_from_t(tt, lk).0;
        let (fa, fb) = (f(i0), f(i1));
        let kk = (0.5 * (fa + fb) - jc).round();
        let target = jc + kk;
        let tk = bisect(|tt| f(tt) - target, i0, i1, 0.0).map_err(|_| CounterexampleError::Covering((fa - fb).abs()))?;
        if k > 0 {
            t[k] = tk;
        } else {
            t[0] = tk;
            ly[0] = log_y0 + bp.s(tk) - 1.0;
        }
        let (xb, l1) = p.step_from_t(t[k], ly[k]);
        shifts[k] = (xb - jc).round();
        t[k + 1] = tc;
        ly[k + 1] = l1;
    }
    t[n] = tc;

    // unknowns (t_0, L_0, ..., t_{n-1}, L_{n-1}, L_n); t_n is fixed
    let dim = 2 * n + 1;
    let idx_t = |k: usize| 2 * k;
    let idx_l = |k: usize| if k == n { 2 * n } else { 2 * k + 1 };
    let residuals = |t: &[f64], ly: &[f64]| {
        let mut r = Vec::with_capacity(dim);
        r.push(ly[0] - log_y0 - (bp.s(t[0]) - 1.0));
        for k in 0..n {
            r.push(ly[k + 1] - ly[k] - bp.phi(t[k]));
            r.push(bp.s(t[k + 1]) - 1.0 - (t[k] - 1.0 + p.l(ly[k + 1]) - shifts[k]));
        }
        r
    };
    let jacobian = |t: &[f64], ly: &[f64]| {
        let mut a = vec![vec![0.0; dim]; dim];
        a[0][idx_t(0)] = -bp.ds(t[0]);
        a[0][idx_l(0)] = 1.0;
        for k in 0..n {
            let ra = 1 + 2 * k;
            a[ra][idx_l(k + 1)] += 1.0;
            a[ra][idx_l(k)] -= 1.0;
            a[ra][idx_t(k)] -= bp.dphi(t[k]);
            let rb = ra + 1;
            if k + 1 < n {
                a[rb][idx_t(k + 1)] += bp.ds(t[k + 1]);
            }
            a[rb][idx_t(k)] -= 1.0;
            a[rb][idx_l(k + 1)] -= p.dl(ly[k + 1]);
        }
        a
    };
    let mut res = f64::INFINITY;
    for _ in 0..40 {
        let r = residuals(&t, &ly);
        res = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if res < 1e-14 {
            break;
        }
        let a = jacobian(&t, &ly);
        let dz = solve_dense(a, r.iter().map(|v| -v).collect()).ok_or(CounterexampleError::Shooting(res))?;
        for k in 0..n {
            t[k] += dz[idx_t(k)];
            ly[k] += dz[idx_l(k)];
        }
        ly[n] += dz[idx_l(n)];
    }
    if !(res < 1e-12) || t[..n].iter().any(|&tk| !(i0..=i1).contains(&tk)) {
        return Err(CounterexampleError::Shooting(res));
    }
    // sensitivity of x_0 to the terminal abscissa
    let a = jacobian(&t, &ly);
    let mut rhs = vec![0.0; dim];
    // d(residual of the last B equation)/d x_n = 1
    rhs[dim - 1] = -1.0;
    let dz = solve_dense(a, rhs).ok_or(CounterexampleError::Shooting(res))?;
    let dx0 = bp.ds(t[0]) * dz[idx_t(0)];
    Ok(WitnessChain {
        t,
        logy: ly,
        shifts,
        residual: res,
        log_sensitivity: dx0.abs().ln(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub m: f64,
    pub b_m: f64,
    pub log_y0: f64,
    /// `sup ln y_n` over `[-1, 0)`, starting with the seed.
    pub sup_logy: Vec<f64>,
    pub input_slopes: Vec<f64>,
    pub output_slope_ranges: Vec<(f64, f64)>,
    pub intervals: Vec<KInterval>,
    pub x_inf: f64,
    /// Witness orbit `(x, ln y)`.
    pub witness: Vec<(f64, f64)>,
    pub violations: Vec<String>,
}

impl DescentReport {
    pub fn descents(&self) -> Vec<f64> {
        self.sup_logy.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Iterates [`push_graph`] from the seed `ln y = ln y0 + x` and extracts the
/// nested intervals and the witness orbit.
pub fn descent_run(p: &CounterexampleParams, log_y0: f64, steps: usize) -> Result<DescentReport> {
    let steps = steps.min(50);
    let mut violations = Vec::new();
    if !(log_y0 < p.y_pert.ln()) {
        violations.push(format!("ln y0 = {log_y0} not below ln y_pert = {}", p.y_pert.ln()));
    }
    let mut g = LogGraph::seed(log_y0, 8192);
    let mut sup = vec![g.sup()];
    let mut slopes = Vec::new();
    let mut ranges = Vec::new();
    let bm = p.b_m();
    for n in 1..=steps {
        let pr = push_graph(p, &g, 4096)?;
        if (pr.input_slope - 1.0).abs() > 0.5 {
            violations.push(format!("step {n}: input slope {} on J_M", pr.input_slope));
        }
        let (lo, hi) = pr.graph.slope_range();
        if lo < 0.5 || hi > 1.5 {
            violations.push(format!("step {n}: output slopes in [{lo}, {hi}]"));
        }
        if pr.sup_out - pr.sup_in > -bm {
            violations.push(format!("step {n}: descent {} exceeds -bM", pr.sup_out - pr.sup_in));
        }
        slopes.push(pr.input_slope);
        ranges.push((lo, hi));
        sup.push(pr.sup_out);
        g = pr.graph;
    }
    let xc = 0.5 * (p.j_m.0 + p.j_m.1);
    let jlen = (p.j_m.1 - p.j_m.0).ln();
    let mut intervals = Vec::with_capacity(steps);
    let mut last = None;
    for n in 1..=steps {
        let ch = witness_chain(p, log_y0, n, xc)?;
        intervals.push(KInterval {
            center: ch.x(p, 0),
            log_len: jlen + ch.log_sensitivity,
        });
        last = Some(ch);
    }
    for w in intervals.windows(2) {
        if !(w[1].log_len < w[0].log_len) {
            violations.push(format!("K intervals not shrinking: {} -> {}", w[0].log_len, w[1].log_len));
        }
    }
    let chain = last.ok_or(CounterexampleError::NoDescent(p.bump.m))?;
    let witness: Vec<(f64, f64)> = (0..=steps).map(|k| (chain.x(p, k), chain.logy[k])).collect();
    for (k, &(x, ly)) in witness.iter().enumerate() {
        if k >= 1 && !(ly <= sup[k] + 1e-9) {
            violations.push(format!("witness fiber {ly} above graph sup {} at step {k}", sup[k]));
        }
        if k < steps && !(p.j_m.0 - 1e-15..=p.j_m.1 + 1e-15).contains(&x) {
            violations.push(format!("witness abscissa {x} outside J_M at step {k}"));
        }
    }
    Ok(DescentReport {
        m: p.bump.m,
        b_m: bm,
        log_y0,
        sup_logy: sup,
        input_slopes: slopes,
        output_slope_ranges: ranges,
        intervals,
        x_inf: witness[0].0,
        witness,
        violations,
    })
}

/// One verified membership of the witness orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripLevel {
    pub n: usize,
    /// Plane orbit time of the `n`-th return.
    pub p_n: usize,
    pub logy: f64,
    /// `ln (C e^{-n bM} y0)`.
    pub log_bound: f64,
    /// Chart discrepancy between the simulated return and the chain.
    pub defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub m: f64,
    pub b_m: f64,
    pub base_point: PlanePoint,
    pub base_logy: f64,
    /// `W` contains the strip points with `ln v` below this threshold.
    pub w_log_threshold: f64,
    /// Measured constant with `f_pert(h^{-1}([-1,0) x (0, nu)))` of fiber
    /// below `C nu`.
    pub c_const: f64,
    pub levels: Vec<StripLevel>,
    pub max_defect: f64,
}

/// Outcome of certification; `reason` says why no certificate was issued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyOutcome {
    pub certificate: Option<Certificate>,
    pub reason: Option<String>,
}

impl CertifyOutcome {
    fn refused(reason: String) -> Self {
        Self {
            certificate: None,
            reason: Some(reason),
        }
    }
}

/// Rounding amplification of one return at `t`: a chart error of a few ulp
/// in `x` moves `t` by that over `s_M'(t)` and the fiber by `phi_M'` times
/// more.
pub fn return_condition(p: &CounterexampleParams, t: f64) -> f64 {
    8.0 * f64::EPSILON * (1.0 + p.bump.dphi(t).abs()) / p.bump.ds(t)
}

/// Builds the certificate from a clean descent report: the base point lies
/// outside `W`, while simulated plane returns of the witness enter strips of
/// fiber `C e^{-n bM} y0` inside `W`. Each simulated return must match the
/// chain within `tol` plus its rounding amplification.
pub fn certify_no_invariant_circle(
    p: &CounterexampleParams,
    report: &DescentReport,
    w_log_threshold: f64,
    tol: f64,
) -> Result<CertifyOutcome> {
    if !report.violations.is_empty() {
        return Ok(CertifyOutcome::refused(format!("descent violations: {}", report.violations.join("; "))));
    }
    if report.witness.len() < 2 {
        return Ok(CertifyOutcome::refused("witness orbit too short".into()));
    }
    let fp = plane_map(p)?;
    let c_const = p.bump.max_ds();
    let (x0, ly0) = report.witness[0];
    if !(ly0 > w_log_threshold) {
        return Ok(CertifyOutcome::refused(format!("base point fiber {ly0} inside W")));
    }
    let base_point = strip_point(p, x0, ly0);
    let mut levels = Vec::new();
    let mut p_n = 0;
    let mut max_defect: f64 = 0.0;
    let log_c = c_const.ln();
    for k in 0..report.witness.len() - 1 {
        let (x, ly) = report.witness[k];
        let (xn, lyn) = report.witness[k + 1];
        if lyn < f64::MIN_POSITIVE.ln() + 40.0 {
            break;
        }
        let (xs, lys, steps) = simulate_return(&fp, p, x, ly)?;
        let dx = xs - xn;
        let defect = (dx - dx.round()).abs().max((lys - lyn).abs());
        max_defect = max_defect.max(defect);
        p_n += steps;
        let n = k + 1;
        let log_bound = log_c + report.log_y0 - n as f64 * report.b_m;
        let allowed = tol + return_condition(p, p.bump.s_inv(x + 1.0));
        if !(defect < allowed) {
            return Ok(CertifyOutcome::refused(format!(
                "return {n}: simulation differs from the chain by {defect:e} (allowed {allowed:e})"
            )));
        }
        if !(lyn < log_bound) || !(lyn < w_log_threshold) {
            return Ok(CertifyOutcome::refused(format!(
                "return {n}: fiber {lyn} not below {log_bound} and {w_log_threshold}"
            )));
        }
        levels.push(StripLevel {
            n,
            p_n,
            logy: lyn,
            log_bound,
            defect,
        });
    }
    if levels.is_empty() {
        return Ok(CertifyOutcome::refused("no representable strip level".into()));
    }
    Ok(CertifyOutcome {
        certificate: Some(Certificate {
            m: p.bump.m,
            b_m: report.b_m,
            base_point,
            base_logy: ly0,
            w_log_threshold,
            c_const,
            levels,
            max_defect,
        }),
        reason: None,
    })
}

/// Outcome of the invariant-curve solver on the counterexample map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub omega: f64,
    /// Fiber of the constant initial graph.
    pub logy_guess: f64,
    pub converged: bool,
    /// Vertical translation of the converged curve.
    pub t: Option<f64>,
    pub residual: f64,
    pub iters: usize,
    pub failure: Option<String>,
}

impl SweepEntry {
    /// True unless an invariant curve (|t| below `t_floor`) was found.
    pub fn excludes_circle(&self, t_floor: f64) -> bool {
        self.t.map_or(true, |t| t.abs() > t_floor)
    }
}

/// The counterexample map as a solver input on the annulus `R/Z x R`.
pub fn fpert_psi(p: &CounterexampleParams) -> impl Fn(f64, f64) -> std::result::Result<(f64, f64), CurveError> + Sync + '_ {
    move |x, u| bar_fpert(p, reduce(x), u).map_err(|e| CurveError::Map(e.to_string()))
}

/// Fiber in `[hi - 1, hi]` (in units of `lambda`) whose twist `l` equals
/// `omega` mod 1.
fn twist_fiber(p: &CounterexampleParams, omega: f64, hi: f64) -> Option<f64> {
    let lo = hi - 1.1 * p.lambda;
    let base = p.l(lo);
    let k = (omega - base).rem_euclid(1.0);
    bisect(|u| p.l(u) - base - k, lo, hi, 1e-14).ok()
}

/// Runs the translated-curve solver from constant graphs with fibers at most
/// `logy_max`, one per `omega`.
pub fn solver_sweep(p: &CounterexampleParams, logy_max: f64, omegas: &[f64], opts: &SolverOptions) -> Vec<SweepEntry> {
    let psi = fpert_psi(p);
    omegas
        .iter()
        .map(|&omega| {
            let Some(u0) = twist_fiber(p, omega, logy_max) else {
                return SweepEntry {
                    omega,
                    logy_guess: f64::NAN,
                    converged: false,
                    t: None,
                    residual: f64::INFINITY,
                    iters: 0,
                    failure: Some("no fiber with this twist".into()),
                };
            };
            let init = GraphCurve::constant(CurveDomain::Annulus, opts.modes, u0);
            match find_translated_curve(&psi, omega, &init, None, opts) {
                Ok(res) => SweepEntry {
                    omega,
                    logy_guess: u0,
                    converged: true,
                    t: Some(res.t),
                    residual: res.residual,
                    iters: res.newton_iters,
                    failure: None,
                },
                Err(e) => {
                    let (residual, iters) = match e {
                        CurveError::Divergence { best_residual, iters } => (best_residual, iters),
                        _ => (f64::INFINITY, 0),
                    };
                    SweepEntry {
                        omega,
                        logy_guess: u0,
                        converged: false,
                        t: None,
                        residual,
                        iters,
                        failure: Some(e.to_string()),
                    }
                }
            }
        })
        .collect()
}

/// Sweep over the full rotation-number menu.
pub fn menu_sweep(p: &CounterexampleParams, logy_max: f64, opts: &SolverOptions) -> Vec<SweepEntry> {
    solver_sweep(p, logy_max, &omega_menu(), opts)
}

/// Same data with the trivial bump `M = 0`, where `s_M` is the identity.
pub fn control_params(p: &CounterexampleParams) -> Result<CounterexampleParams> {
    let bump = build_bump(p.bump.rho, 0.0, p.bump.chi)?;
    build_counterexample(&p.renorm, bump, p.kappa)
}

/// Witness orbit as CSV with columns `step,x,logy`.
pub fn witness_csv(report: &DescentReport) -> String {
    let mut out = String::from("step,x,logy\n");
    for (k, (x, ly)) in report.witness.iter().enumerate() {
        out.push_str(&format!("{k},{x:.17e},{ly:.17e}\n"));
    }
    out
}
