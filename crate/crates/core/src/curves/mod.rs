//! Rotation numbers, the translated-curve solver on annulus maps, lifts of
//! annulus curves to planar invariant circles, and accumulation checks.

mod fourier;
mod geometry;

pub use fourier::{Grid, Spectrum};
pub use geometry::{directed_hausdorff, hausdorff, self_intersections, SegmentIndex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts_flows::{FlowError, PlanePoint};
use crate::model::{ModelFamily, State};
use crate::numerics::bisect;
use crate::return_renorm::{AnnulusPoint, RenormError, Renormalizer};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("lift is not an increasing degree-one map near x = {0}")]
    NonMonotone(f64),
    #[error("Newton did not converge: best residual {best_residual:e} after {iters} steps")]
    Divergence { best_residual: f64, iters: usize },
    #[error("twist condition violated: {0}")]
    Twist(String),
    #[error("no integrable circle with rotation number {0} in the ring")]
    NoGuess(f64),
    #[error("lifted circle does not close: gap {0:e}")]
    Closure(f64),
    #[error("rotation number must be positive")]
    ZeroRotation,
    #[error("orbit angles are not monotone about the center")]
    NotStarShaped,
    #[error("map evaluation failed: {0}")]
    Map(String),
    #[error(transparent)]
    Renorm(#[from] RenormError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationScheme {
    WeightedBirkhoff,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    pub rho: f64,
    /// Difference to the estimate over the first half of the window.
    pub error: f64,
}

fn bump_weight(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        (-1.0 / (s * (1.0 - s))).exp()
    }
}

fn weighted_average(d: &[f64], scheme: RotationScheme) -> f64 {
    let n = d.len();
    match scheme {
        RotationScheme::Plain => d.iter().sum::<f64>() / n as f64,
        RotationScheme::WeightedBirkhoff => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (k, &dk) in d.iter().enumerate() {
                let w = bump_weight((k as f64 + 0.5) / n as f64);
                num += w * dk;
                den += w;
            }
            num / den
        }
    }
}

fn averaged(d: &[f64], scheme: RotationScheme) -> RotationEstimate {
    let rho = weighted_average(d, scheme);
    let half = weighted_average(&d[..d.len() / 2], scheme);
    RotationEstimate { rho, error: (rho - half).abs() }
}

/// Rotation number of a lift `F` with `F(x + 1) = F(x) + 1`.
pub fn rotation_number(
    lift: impl Fn(f64) -> f64,
    x0: f64,
    n_iters: usize,
    scheme: RotationScheme,
) -> Result<RotationEstimate, CurveError> {
    let probes = 256;
    let mut prev = lift(x0);
    for i in 1..=probes {
        let x = x0 + i as f64 / probes as f64;
        let fx = lift(x);
        if !(fx > prev) {
            return Err(CurveError::NonMonotone(x));
        }
        prev = fx;
    }
    if (prev - lift(x0) - 1.0).abs() > 1e-9 {
        return Err(CurveError::NonMonotone(x0));
    }
    let n = n_iters.max(2);
    let mut d = Vec::with_capacity(n);
    let mut x = x0.rem_euclid(1.0);
    for _ in 0..n {
        let fx = lift(x);
        d.push(fx - x);
        x = fx.rem_euclid(1.0);
    }
    Ok(averaged(&d, scheme))
}

/// Rotation number, in turns per step, of a planar orbit about `center`.
pub fn plane_rotation_number(orbit: &[PlanePoint], center: PlanePoint) -> Result<RotationEstimate, CurveError> {
    if orbit.len() < 3 {
        return Err(CurveError::ZeroRotation);
    }
    let mut d = Vec::with_capacity(orbit.len() - 1);
    for w in orbit.windows(2) {
        let a0 = (w[0].y - center.y).atan2(w[0].x - center.x);
        let a1 = (w[1].y - center.y).atan2(w[1].x - center.x);
        let mut da = a1 - a0;
        da -= std::f64::consts::TAU * (da / std::f64::consts::TAU).round();
        d.push(da);
    }
    let sign = d.iter().sum::<f64>().signum();
    if sign == 0.0 || d.iter().any(|&x| x * sign <= 0.0) {
        return Err(CurveError::NotStarShaped);
    }
    let turns: Vec<f64> = d.iter().map(|x| x.abs() / std::f64::consts::TAU).collect();
    Ok(averaged(&turns, RotationScheme::WeightedBirkhoff))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationCheck {
    pub deviation: f64,
    pub pass: bool,
}

/// Compares `frac(1 / alpha_hat)` with `alpha_bar` on the circle.
pub fn rotation_relation_check(alpha_hat: f64, alpha_bar: f64, tol: f64) -> Result<RelationCheck, CurveError> {
    if !(alpha_hat > 0.0) {
        return Err(CurveError::ZeroRotation);
    }
    let d = ((1.0 / alpha_hat) - alpha_bar).rem_euclid(1.0);
    let deviation = d.min(1.0 - d);
    Ok(RelationCheck { deviation, pass: deviation < tol })
}

pub const GOLDEN_OFFSET: f64 = 0.618_033_988_749_894_8;

/// Noble rotation numbers: the golden offset and its images under
/// `x -> 1 / (m + x)`, `m = 1..=30`, with duplicates removed.
pub fn omega_menu() -> Vec<f64> {
    let mut out = vec![GOLDEN_OFFSET];
    for m in 1..=30 {
        let w = 1.0 / (m as f64 + GOLDEN_OFFSET);
        if out.iter().all(|&o| (o - w).abs() > 1e-12) {
            out.push(w);
        }
    }
    out
}

/// Leading continued-fraction entries of `x` in `(0, 1)`.
pub fn continued_fraction(x: f64, depth: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(depth);
    let mut r = x;
    for _ in 0..depth {
        if r.abs() < 1e-12 {
            break;
        }
        let inv = 1.0 / r;
        let a = inv.floor();
        out.push(a as u64);
        r = inv - a;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CurveDomain {
    /// Rescaled ring at level `n`; the graph is `ln y` with `y in (1/e, 1)`.
    Ring { n: i64 },
    /// Annulus; the graph is `ln v`.
    Annulus,
}

/// Graph `logy = u(x)` over the circle.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphCurve {
    pub spectrum: Spectrum,
    pub domain: CurveDomain,
    pub residual: f64,
}

impl GraphCurve {
    pub fn constant(domain: CurveDomain, modes: usize, u: f64) -> Self {
        Self {
            spectrum: Spectrum::constant(modes, u),
            domain,
            residual: f64::NAN,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.spectrum.eval(x)
    }

    /// Annulus log-fiber at `x`.
    pub fn annulus_logy(&self, x: f64) -> f64 {
        match self.domain {
            CurveDomain::Ring { n } => self.eval(x) - n as f64,
            CurveDomain::Annulus => self.eval(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub grid: usize,
    pub modes: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            grid: 512,
            modes: 128,
            tol: 1e-10,
            max_iter: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslatedCurveResult {
    pub curve: GraphCurve,
    pub t: f64,
    pub omega: f64,
    pub residual: f64,
    pub newton_iters: usize,
    pub residual_history: Vec<f64>,
    /// Parameterization `theta -> (theta + p(theta), u(theta))` conjugating
    /// the map on the curve to rotation by `omega`.
    pub param_p: Spectrum,
    pub param_u: Spectrum,
}

fn lift_near(x: f64, target: f64) -> f64 {
    x + (target - x).round()
}

/// Solves `psi(K(theta)) = K(theta + omega) + (0, t)` for
/// `K(theta) = (theta + p(theta), u(theta))` by quasi-Newton steps in Fourier
/// space, the Jacobian of `psi` being replaced by the shear
/// `[[1, a(u)], [0, 1]]` with `a` the twist. `psi` returns `x` mod 1 or any
/// lift of it. Without a twist function, `a` is taken from central
/// differences of `psi` at the initial curve.
pub fn find_translated_curve<P>(
    psi: &P,
    omega: f64,
    init: &GraphCurve,
    twist: Option<&(dyn Fn(f64) -> f64 + Sync)>,
    opts: &SolverOptions,
) -> Result<TranslatedCurveResult, CurveError>
where
    P: Fn(f64, f64) -> Result<(f64, f64), CurveError> + Sync,
{
    let grid = Grid::new(opts.grid, opts.modes);
    let m = grid.m;
    let thetas: Vec<f64> = (0..m).map(|j| grid.point(j)).collect();
    let mut p = Spectrum::zeros(opts.modes);
    let mut u = init.spectrum.clone();
    u.re.resize(opts.modes + 1, 0.0);
    u.im.resize(opts.modes + 1, 0.0);
    let mut t = 0.0;

    let fd_twist: Option<Vec<f64>> = if twist.is_none() {
        let uv = grid.synthesize(&u);
        let h = 1e-6;
        let vals: Result<Vec<f64>, CurveError> = (0..m)
            .into_par_iter()
            .map(|j| {
                let (xp, _) = psi(thetas[j], uv[j] + h)?;
                let (xm, _) = psi(thetas[j], uv[j] - h)?;
                Ok((lift_near(xp, xm) - xm) / (2.0 * h))
            })
            .collect();
        Some(vals?)
    } else {
        None
    };

    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    for iter in 0..=opts.max_iter {
        let pv = grid.synthesize(&p);
        let uv = grid.synthesize(&u);
        let pw = grid.synthesize(&p.shifted(omega));
        let uw = grid.synthesize(&u.shifted(omega));
        let images: Result<Vec<(f64, f64)>, CurveError> = (0..m)
            .into_par_iter()
            .map(|j| psi(thetas[j] + pv[j], uv[j]))
            .collect();
        let images = images?;
        let mut e1 = vec![0.0; m];
        let mut e2 = vec![0.0; m];
        let mut res: f64 = 0.0;
        for j in 0..m {
            let target = thetas[j] + omega + pw[j];
            e1[j] = lift_near(images[j].0, target) - target;
            e2[j] = images[j].1 - uw[j] - t;
            res = res.max(e1[j].abs()).max(e2[j].abs());
        }
        if !res.is_finite() {
            return Err(CurveError::Divergence { best_residual: best, iters: iter });
        }
        history.push(res);
        best = best.min(res);
        if res < opts.tol {
            let curve = graph_from_param(&grid, &p, &u, init.domain, res);
            return Ok(TranslatedCurveResult {
                curve,
                t,
                omega,
                residual: res,
                newton_iters: iter,
                residual_history: history,
                param_p: p,
                param_u: u,
            });
        }
        if iter == opts.max_iter || (iter > 3 && res > 1e3 * history[0]) {
            return Err(CurveError::Divergence { best_residual: best, iters: iter });
        }

        let a: Vec<f64> = match (&fd_twist, twist) {
            (Some(v), _) => v.clone(),
            (None, Some(f)) => uv.iter().map(|&x| f(x)).collect(),
            (None, None) => unreachable!(),
        };
        let amin = a.iter().cloned().fold(f64::INFINITY, f64::min);
        let amax = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(amin * amax > 0.0) || amin.abs().min(amax.abs()) < 1e-8 {
            return Err(CurveError::Twist(format!("twist range [{amin:e}, {amax:e}] on the curve")));
        }

        // fiber equation: du - du(. + omega) - dt = -e2
        let s2 = grid.analyze(&e2);
        let dt = s2.re[0];
        let mut du = Spectrum::zeros(opts.modes);
        for k in 1..=opts.modes {
            let (sn, cs) = (std::f64::consts::TAU * k as f64 * omega).sin_cos();
            let (dr, di) = (1.0 - cs, -sn);
            let den = dr * dr + di * di;
            // du_k = -e2_k / (1 - e^{2 pi i k omega})
            du.re[k] = -(s2.re[k] * dr + s2.im[k] * di) / den;
            du.im[k] = -(s2.im[k] * dr - s2.re[k] * di) / den;
        }
        let duv = grid.synthesize(&du);
        let mean_a = a.iter().sum::<f64>() / m as f64;
        let mean_e1 = e1.iter().sum::<f64>() / m as f64;
        let mean_adu = a.iter().zip(&duv).map(|(x, y)| x * y).sum::<f64>() / m as f64;
        let c0 = -(mean_e1 + mean_adu) / mean_a;
        du.re[0] = c0;
        // angle equation: dp - dp(. + omega) = -(e1 + a du)
        let rhs: Vec<f64> = (0..m).map(|j| e1[j] + a[j] * (duv[j] + c0)).collect();
        let sr = grid.analyze(&rhs);
        let mut dp = Spectrum::zeros(opts.modes);
        for k in 1..=opts.modes {
            let (sn, cs) = (std::f64::consts::TAU * k as f64 * omega).sin_cos();
            let (dr, di) = (1.0 - cs, -sn);
            let den = dr * dr + di * di;
            dp.re[k] = -(sr.re[k] * dr + sr.im[k] * di) / den;
            dp.im[k] = -(sr.im[k] * dr - sr.re[k] * di) / den;
        }
        p.add_assign(&dp);
        u.add_assign(&du);
        t += dt;
    }
    Err(CurveError::Divergence { best_residual: best, iters: opts.max_iter })
}

/// Resamples the parameterized curve as a graph over `x`.
fn graph_from_param(grid: &Grid, p: &Spectrum, u: &Spectrum, domain: CurveDomain, residual: f64) -> GraphCurve {
    let vals: Vec<f64> = (0..grid.m)
        .map(|j| {
            let x = grid.point(j);
            let mut th = x - p.eval(x);
            for _ in 0..50 {
                let g = th + p.eval(th) - x;
                th -= g / (1.0 + p.eval_deriv(th));
                if g.abs() < 1e-15 {
                    break;
                }
            }
            u.eval(th)
        })
        .collect();
    GraphCurve {
        spectrum: grid.analyze(&vals),
        domain,
        residual,
    }
}

/// The level-`n` ring map in `(x, ln y)` coordinates.
pub fn ring_psi(r: &Renormalizer, n: i64) -> impl Fn(f64, f64) -> Result<(f64, f64), CurveError> + Sync + '_ {
    move |x, u| {
        let out = r.ring_f(n, AnnulusPoint { x, logy: u })?;
        Ok((out.x, out.logy))
    }
}

/// Constant graph `u` with `l_{0,n}(e^u) = omega mod 1` inside the ring.
pub fn integrable_guess(r: &Renormalizer, n: i64, omega: f64, modes: usize) -> Result<GraphCurve, CurveError> {
    let l = |u: f64| r.ring_l_lift(n, u);
    let (lo, hi) = (l(-1.0), l(0.0));
    let (a, b) = (lo.min(hi), lo.max(hi));
    let mut best: Option<f64> = None;
    let mut k = (a - omega).floor() as i64;
    while (omega + k as f64) <= b + 1.0 {
        let target = omega + k as f64;
        if let Ok(u) = bisect(|u| l(u) - target, -1.0, 0.0, 1e-15) {
            if best.map_or(true, |bu: f64| (u + 0.5).abs() < (bu + 0.5).abs()) {
                best = Some(u);
            }
        }
        k += 1;
    }
    best.map(|u| GraphCurve::constant(CurveDomain::Ring { n }, modes, u))
        .ok_or(CurveError::NoGuess(omega))
}

/// Curve of rotation number `omega` for the level-`n` ring map, with
/// continuation in `epsilon` over four steps if the direct solve fails.
pub fn solve_level(
    r: &Renormalizer,
    n: i64,
    omega: f64,
    opts: &SolverOptions,
) -> Result<TranslatedCurveResult, CurveError> {
    r.check_level(n)?;
    let guess = integrable_guess(r, n, omega, opts.modes)?;
    let twist = move |u: f64| r.l0_log_derivative(u - n as f64);
    let direct = {
        let psi = ring_psi(r, n);
        find_translated_curve(&psi, omega, &guess, Some(&twist), opts)
    };
    match direct {
        Ok(res) => Ok(res),
        Err(e) if r.model.epsilon == 0.0 => Err(e),
        Err(_) => {
            let mut curve = guess;
            let mut last = None;
            for step in 1..=4 {
                let rs = r.with_epsilon(r.model.epsilon * step as f64 / 4.0);
                let psi = ring_psi(&rs, n);
                let res = find_translated_curve(&psi, omega, &curve, Some(&twist), opts)?;
                curve = res.curve.clone();
                last = Some(res);
            }
            Ok(last.expect("four continuation steps"))
        }
    }
}

/// Planar invariant circle swept out by a curve of the fundamental domain.
#[derive(Debug, Clone)]
pub struct LiftedCircle {
    /// Concatenated images `f^k(gamma_hat)`, `k = 0..=max return`.
    pub polyline: Vec<PlanePoint>,
    /// `gamma_hat = h^{-1}(graph)` sampled on `[0, 1]`.
    pub seed: Vec<PlanePoint>,
    /// First returns of the seed samples, ordered by chart coordinate.
    pub returned: Vec<PlanePoint>,
    pub return_steps: (usize, usize),
    /// `|Z(tau) - z(0)|`.
    pub closure_gap: f64,
    /// Hausdorff distance between the returned arc and the seed arc.
    pub overlap: f64,
}

/// Lifts `curve` to the plane by iterating `h^{-1}` of its samples until
/// they return to the fundamental domain.
pub fn lift_circle(r: &Renormalizer, curve: &GraphCurve, samples: usize) -> Result<LiftedCircle, CurveError> {
    let m = &r.model;
    let seed: Vec<PlanePoint> = (0..=samples)
        .map(|i| {
            let s = i as f64 / samples as f64;
            r.h_inv(s, curve.annulus_logy(s).exp())
        })
        .collect();
    let trajectories: Result<Vec<(Vec<State>, usize)>, CurveError> = seed[..samples]
        .par_iter()
        .map(|&z| {
            let mut st = m.state(z);
            let mut traj = vec![st];
            let mut left = false;
            loop {
                st = m.step_state(st)?;
                traj.push(st);
                left |= st.p.norm() >= m.r0;
                if left && r.in_domain(st.p) {
                    let n = traj.len() - 1;
                    return Ok((traj, n));
                }
                if traj.len() > crate::return_renorm::RETURN_CAP {
                    return Err(RenormError::ReturnCap {
                        cap: crate::return_renorm::RETURN_CAP,
                        x: z.x,
                        y: z.y,
                    }
                    .into());
                }
            }
        })
        .collect();
    let mut trajectories = trajectories?;
    let kmin = trajectories.iter().map(|t| t.1).min().unwrap_or(0);
    let kmax = trajectories.iter().map(|t| t.1).max().unwrap_or(0);
    for (traj, _) in trajectories.iter_mut() {
        while traj.len() <= kmax + 1 {
            let next = m.step_state(*traj.last().expect("nonempty"))?;
            traj.push(next);
        }
    }
    let mut polyline = Vec::with_capacity((kmax + 1) * samples);
    for k in 0..=kmax {
        polyline.extend(trajectories.iter().map(|(t, _)| t[k].p));
    }

    let mut returned: Vec<(f64, PlanePoint)> = Vec::with_capacity(samples);
    for (traj, n) in &trajectories {
        let p = traj[*n].p;
        returned.push((r.h(p)?.0, p));
    }
    // Z(tau): the returned arc crosses X = 0 between consecutive samples
    let mut closure_gap = f64::INFINITY;
    let mut z_tau = None;
    for i in 0..samples {
        let j = (i + 1) % samples;
        let nj = trajectories[j].1;
        let a = trajectories[i].0[nj].p;
        let b = trajectories[j].0[nj].p;
        let (xa, xb) = (r.h(a)?.0, r.h(b)?.0);
        if xa < 0.0 && xb >= 0.0 {
            let s = -xa / (xb - xa);
            let z = PlanePoint::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y));
            let gap = z.dist(&seed[0]);
            if gap < closure_gap {
                closure_gap = gap;
                z_tau = Some(z);
            }
        }
    }
    let z_tau = z_tau.ok_or(CurveError::Closure(f64::INFINITY))?;
    returned.sort_by(|a, b| a.0.total_cmp(&b.0));
    // the arc Z([tau, tau + 1]) runs from Z(tau) to f(Z(tau))
    let mut arc = vec![z_tau];
    arc.extend(returned.into_iter().map(|x| x.1));
    arc.push(m.f_eps(z_tau)?);
    let returned = arc;
    let overlap = hausdorff(&returned, &seed);
    Ok(LiftedCircle {
        polyline,
        seed,
        returned,
        return_steps: (kmin, kmax),
        closure_gap,
        overlap,
    })
}

impl LiftedCircle {
    /// The images `f^k(gamma_hat)` as separate arcs.
    pub fn arcs(&self) -> impl Iterator<Item = &[PlanePoint]> {
        self.polyline.chunks(self.seed.len() - 1)
    }
}

/// Hausdorff distance between a lifted circle and the separatrix, with
/// `sigma` a traced polyline of the separatrix. Circle points are projected
/// onto the exact separatrix; separatrix points are measured against each
/// arc of the circle.
pub fn sigma_distance(m: &ModelFamily, sigma: &[PlanePoint], circle: &LiftedCircle) -> f64 {
    let to_sigma = circle
        .polyline
        .par_iter()
        .map(|&p| m.distance_to_sigma(p))
        .reduce(|| 0.0, f64::max);
    let arcs: Vec<SegmentIndex> = circle.arcs().map(SegmentIndex::new).collect();
    let from_sigma = sigma
        .par_iter()
        .map(|&p| arcs.iter().map(|a| a.distance(p)).fold(f64::INFINITY, f64::min))
        .reduce(|| 0.0, f64::max);
    to_sigma.max(from_sigma)
}

/// Default center for angles about the quadrant-I lobe.
pub const LOBE_CENTER: PlanePoint = PlanePoint { x: 0.3, y: 0.3 };

/// Plane rotation number of `f` on the circle through `start`.
pub fn circle_rotation_number(
    m: &ModelFamily,
    start: PlanePoint,
    steps: usize,
    center: PlanePoint,
) -> Result<RotationEstimate, CurveError> {
    let orbit = m.orbit(start, steps)?;
    plane_rotation_number(&orbit, center)
}

/// Catalog record of a found curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub omega: f64,
    pub n: i64,
    pub epsilon: f64,
    pub t: f64,
    pub residual: f64,
    pub newton_iters: usize,
    pub hausdorff_to_sigma: Option<f64>,
    pub alpha_hat: Option<f64>,
}

pub fn polyline_csv(poly: &[PlanePoint]) -> String {
    let mut out = String::from("x,y\n");
    for p in poly {
        out.push_str(&format!("{:.17e},{:.17e}\n", p.x, p.y));
    }
    out
}
