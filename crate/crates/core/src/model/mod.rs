//! Concrete map families with a non-split separatrix.
//!
//! `H0 = (1 - b(r)) q(xy) + b(r) (xy - a x^4 - c y^4)` with `b` a quintic
//! smoothstep from `r_exact` to `r_outer`. On `D(o, r_exact)` the map is the
//! closed-form flow of `q(xy)`; the separatrix lobe lies in the first
//! quadrant. The perturbation `F = beta(t) psi(H0) kappa(r)` has
//! `psi(s) = s^2` and a cutoff `kappa` vanishing on `D(o, r_exact)`, so it is
//! tangent to the separatrix and leaves the normal-form region untouched.

mod bump;
mod fpert;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts_flows::ode::Gbs;
use crate::charts_flows::{local_flow, smoothstep, smoothstep_deriv, FlowError, Hamiltonian, PlanePoint};
use crate::nf_algebra::PolyQ;
use crate::numerics;

pub use bump::{build_bump, BumpParams, Chi, GMap};
pub use fpert::{build_fpert, FPert};

pub type Polyline = Vec<PlanePoint>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameter: {0}")]
    Invalid(String),
    #[error("glue changes the level-set topology: {0}")]
    GlueTopology(String),
    #[error("separatrix is not compact: {0}")]
    NonCompactSeparatrix(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("bump construction failed: {0}")]
    Bump(String),
    #[error("g_M solve failed: {0}")]
    GSolve(String),
    #[error("point ({x}, {y}) outside the normalizing chart")]
    Chart { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlueSpec {
    /// `H0 = q(xy)` exactly for `|z| <= r_exact`.
    pub r_exact: f64,
    /// `H0 = xy - a x^4 - c y^4` for `|z| >= r_outer`.
    pub r_outer: f64,
    /// `(a, c)` of the confining quartic.
    pub quartic: [f64; 2],
}

impl Default for GlueSpec {
    fn default() -> Self {
        Self {
            r_exact: 0.3,
            r_outer: 0.6,
            quartic: [1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    /// `kappa` rises from 0 at `cutoff_inner` to 1 at `cutoff_outer`.
    pub cutoff_inner: f64,
    pub cutoff_outer: f64,
}

/// Serializable description of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub lambda: f64,
    #[serde(default)]
    pub q_higher: Vec<f64>,
    pub r0: f64,
    #[serde(default)]
    pub glue: GlueSpec,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

pub const DEFAULT_R0: f64 = 0.11;

fn default_tol() -> f64 {
    1e-13
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            q_higher: Vec::new(),
            r0: DEFAULT_R0,
            glue: GlueSpec::default(),
            epsilon: 0.0,
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelFamily {
    pub q: PolyQ,
    /// Normal-form radius used by fundamental domains.
    pub r0: f64,
    pub glue: GlueSpec,
    pub perturbation: PerturbationSpec,
    pub epsilon: f64,
    /// Integrator tolerance.
    pub tol: f64,
    /// Escape bound on coordinates.
    pub bound: f64,
}

/// Integrated state: position and the tracked value of `H0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub p: PlanePoint,
    pub energy: f64,
}

pub fn build_model(lambda: f64, r0: f64, glue: GlueSpec) -> Result<ModelFamily, ModelError> {
    build_model_spec(&ModelSpec {
        lambda,
        r0,
        glue,
        ..ModelSpec::default()
    })
}

pub fn build_model_spec(spec: &ModelSpec) -> Result<ModelFamily, ModelError> {
    if !(spec.lambda > 0.0) {
        return Err(ModelError::Invalid(format!("lambda = {} must be positive", spec.lambda)));
    }
    let g = spec.glue;
    if !(spec.r0 > 0.0 && g.r_exact > 0.0 && g.r_outer > g.r_exact) {
        return Err(ModelError::Invalid(format!(
            "need 0 < r0, 0 < r_exact < r_outer (got {}, {}, {})",
            spec.r0, g.r_exact, g.r_outer
        )));
    }
    if !(g.quartic[0] > 0.0 && g.quartic[1] > 0.0) {
        return Err(ModelError::Invalid("quartic coefficients must be positive".into()));
    }
    let q = PolyQ::new(spec.lambda, spec.q_higher.clone());
    let smax = 0.5 * g.r_exact * g.r_exact;
    if smax >= q.validity_radius {
        return Err(ModelError::Invalid(format!(
            "q is valid only for |s| < {:e}, the exact region needs {:e}",
            q.validity_radius, smax
        )));
    }
    let s0 = 0.5 * spec.r0 * spec.r0;
    let max_rate = (0..=200)
        .map(|i| q.dq(-s0 + 2.0 * s0 * i as f64 / 200.0))
        .fold(f64::MIN, f64::max);
    if spec.r0 * max_rate.exp() >= g.r_exact {
        return Err(ModelError::Invalid(format!(
            "one step from D(o, r0) reaches radius {:.4} >= r_exact = {}",
            spec.r0 * max_rate.exp(),
            g.r_exact
        )));
    }
    let m = ModelFamily {
        q,
        r0: spec.r0,
        glue: g,
        perturbation: PerturbationSpec {
            cutoff_inner: g.r_exact,
            cutoff_outer: 2.0 * g.r_exact,
        },
        epsilon: spec.epsilon,
        tol: spec.tol,
        bound: 10.0,
    };
    trace_separatrix(&m, 0.05)?;
    Ok(m)
}

impl ModelFamily {
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn lambda(&self) -> f64 {
        self.q.lambda
    }

    fn glue_weight(&self, r: f64) -> (f64, f64) {
        let w = self.glue.r_outer - self.glue.r_exact;
        let s = (r - self.glue.r_exact) / w;
        (smoothstep(s), smoothstep_deriv(s) / w)
    }

    fn cutoff(&self, r: f64) -> (f64, f64) {
        let p = self.perturbation;
        let w = p.cutoff_outer - p.cutoff_inner;
        let s = (r - p.cutoff_inner) / w;
        (smoothstep(s), smoothstep_deriv(s) / w)
    }

    /// `H0` and its gradient.
    pub fn h0_full(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let s = x * y;
        let r2 = x * x + y * y;
        if r2 <= self.glue.r_exact * self.glue.r_exact {
            let d = self.q.dq(s);
            return (self.q.q(s), d * y, d * x);
        }
        let r = r2.sqrt();
        let (b, db) = self.glue_weight(r);
        let qv = self.q.q(s);
        let dq = self.q.dq(s);
        let [a, c] = self.glue.quartic;
        let (x2, y2) = (x * x, y * y);
        let pv = s - a * x2 * x2 - c * y2 * y2;
        let px = y - 4.0 * a * x2 * x;
        let py = x - 4.0 * c * y2 * y;
        let diff = pv - qv;
        let h = qv + b * diff;
        let hx = (1.0 - b) * dq * y + b * px + db * (x / r) * diff;
        let hy = (1.0 - b) * dq * x + b * py + db * (y / r) * diff;
        (h, hx, hy)
    }

    pub fn h0(&self, p: PlanePoint) -> f64 {
        self.h0_full(p.x, p.y).0
    }

    /// `(x', y', E')` of the perturbed field with tracked energy `E`.
    fn field(&self, t: f64, z: &[f64; 3]) -> [f64; 3] {
        let (x, y, e) = (z[0], z[1], z[2]);
        let (_, hx, hy) = self.h0_full(x, y);
        if self.epsilon == 0.0 {
            return [-hy, hx, 0.0];
        }
        let r = x.hypot(y);
        let (k, dk) = self.cutoff(r);
        if k == 0.0 && dk == 0.0 {
            return [-hy, hx, 0.0];
        }
        let beta = (2.0 * std::f64::consts::PI * t).sin();
        let (kx, ky) = if r > 0.0 { (dk * x / r, dk * y / r) } else { (0.0, 0.0) };
        let psi = e * e;
        let dpsi = 2.0 * e;
        let fx = beta * (dpsi * hx * k + psi * kx);
        let fy = beta * (dpsi * hy * k + psi * ky);
        let de = self.epsilon * beta * psi * (-hx * ky + hy * kx);
        [-(hy + self.epsilon * fy), hx + self.epsilon * fx, de]
    }

    fn in_exact(&self, p: PlanePoint) -> bool {
        p.x * p.x + p.y * p.y < self.glue.r_exact * self.glue.r_exact
    }

    /// Closed-form step when the whole arc stays in the exact region. Along
    /// a hyperbola arc the radius is convex in time, so checking both
    /// endpoints suffices.
    fn exact_step(&self, p: PlanePoint, t: f64) -> Option<PlanePoint> {
        if !self.in_exact(p) {
            return None;
        }
        let out = local_flow(&self.q, t, p).ok()?;
        self.in_exact(out).then_some(out)
    }

    pub fn state(&self, p: PlanePoint) -> State {
        State { p, energy: self.h0(p) }
    }

    fn restore_fiber(&self, mut p: PlanePoint, energy: f64) -> PlanePoint {
        if self.in_exact(p) {
            let s = self.q.inverse(energy);
            if p.x.abs() >= p.y.abs() && p.x != 0.0 {
                p.y = s / p.x;
            } else if p.y != 0.0 {
                p.x = s / p.y;
            }
        }
        p
    }

    fn integrate_state(&self, st: State, t0: f64, t1: f64) -> Result<State, FlowError> {
        let f = |t: f64, z: &[f64; 3]| self.field(t, z);
        let gbs = Gbs::new(self.tol).with_initial_steps(4);
        let out = gbs
            .integrate(f, t0, [st.p.x, st.p.y, st.energy], t1, self.bound)
            .map_err(FlowError::Ode)?;
        let p = self.restore_fiber(PlanePoint::new(out[0], out[1]), out[2]);
        Ok(State { p, energy: out[2] })
    }

    /// One forward step carrying the tracked energy.
    pub fn step_state(&self, st: State) -> Result<State, FlowError> {
        if let Some(p) = self.exact_step(st.p, 1.0) {
            return Ok(State { p, energy: st.energy });
        }
        self.integrate_state(st, 0.0, 1.0)
    }

    /// One backward step carrying the tracked energy.
    pub fn step_state_inv(&self, st: State) -> Result<State, FlowError> {
        if let Some(p) = self.exact_step(st.p, -1.0) {
            return Ok(State { p, energy: st.energy });
        }
        self.integrate_state(st, 1.0, 0.0)
    }

    /// The time-one map `f_eps`.
    pub fn f_eps(&self, z: PlanePoint) -> Result<PlanePoint, FlowError> {
        Ok(self.step_state(self.state(z))?.p)
    }

    pub fn f_inv(&self, z: PlanePoint) -> Result<PlanePoint, FlowError> {
        Ok(self.step_state_inv(self.state(z))?.p)
    }

    /// `f^n(z)` for `n` of either sign, carrying energy across steps.
    pub fn iterate(&self, z: PlanePoint, n: i64) -> Result<PlanePoint, FlowError> {
        let mut st = self.state(z);
        for _ in 0..n.unsigned_abs() {
            st = if n > 0 { self.step_state(st)? } else { self.step_state_inv(st)? };
        }
        Ok(st.p)
    }

    pub fn orbit(&self, z: PlanePoint, n: usize) -> Result<Vec<PlanePoint>, FlowError> {
        let mut st = self.state(z);
        let mut out = vec![z];
        for _ in 0..n {
            st = self.step_state(st)?;
            out.push(st.p);
        }
        Ok(out)
    }

    /// Distance from `p` to the separatrix: axis segments inside the exact
    /// region, Newton projection onto `{H0 = 0}` outside.
    pub fn distance_to_sigma(&self, p: PlanePoint) -> f64 {
        let re = self.glue.r_exact;
        let seg = |a: PlanePoint, b: PlanePoint| point_segment_distance(p, a, b);
        let axes = seg(PlanePoint::ORIGIN, PlanePoint::new(re, 0.0))
            .min(seg(PlanePoint::ORIGIN, PlanePoint::new(0.0, re)));
        if p.norm() < 0.9 * re {
            return axes;
        }
        let mut z = p;
        for _ in 0..50 {
            let (h, hx, hy) = self.h0_full(z.x, z.y);
            let g2 = hx * hx + hy * hy;
            if g2 == 0.0 {
                break;
            }
            let step = h / g2;
            z = PlanePoint::new(z.x - step * hx, z.y - step * hy);
            if (step * g2.sqrt()).abs() < 1e-17 {
                break;
            }
        }
        let curve = if z.x >= -1e-12 && z.y >= -1e-12 { p.dist(&z) } else { f64::INFINITY };
        axes.min(curve)
    }
}

impl Hamiltonian for ModelFamily {
    fn value(&self, t: f64, x: f64, y: f64) -> f64 {
        let h = self.h0(PlanePoint::new(x, y));
        if self.epsilon == 0.0 {
            return h;
        }
        let (k, _) = self.cutoff(x.hypot(y));
        h + self.epsilon * (2.0 * std::f64::consts::PI * t).sin() * h * h * k
    }

    fn gradient(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        let e = self.h0(PlanePoint::new(x, y));
        let v = self.field(t, &[x, y, e]);
        (v[1], -v[0])
    }
}

pub fn point_segment_distance(p: PlanePoint, a: PlanePoint, b: PlanePoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let s = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    (p.x - a.x - s * dx).hypot(p.y - a.y - s * dy)
}

/// Radius of `{H0 = 0}` on the ray at angle `theta` in the first quadrant.
fn lobe_radius(m: &ModelFamily, theta: f64, r_far: f64) -> Result<f64, ModelError> {
    let (c, s) = (theta.cos(), theta.sin());
    let h = |r: f64| m.h0_full(r * c, r * s).0;
    let r_in = m.glue.r_exact;
    let samples = 400;
    let mut changes = 0;
    let mut prev = h(r_in);
    if !(prev > 0.0) {
        return Err(ModelError::GlueTopology(format!(
            "H0 not positive at the exact-region boundary on the ray theta = {theta:.6}"
        )));
    }
    for i in 1..=samples {
        let r = r_in + (r_far - r_in) * i as f64 / samples as f64;
        let v = h(r);
        if v.signum() != prev.signum() {
            changes += 1;
        }
        prev = v;
    }
    if prev >= 0.0 {
        return Err(ModelError::NonCompactSeparatrix(format!(
            "H0 >= 0 at radius {r_far} on the ray theta = {theta:.6}"
        )));
    }
    if changes != 1 {
        return Err(ModelError::GlueTopology(format!(
            "{changes} sign changes of H0 on the ray theta = {theta:.6}; the lobe is not star-shaped"
        )));
    }
    numerics::bisect(h, r_in, r_far, 0.0).map_err(|e| ModelError::NonCompactSeparatrix(e.to_string()))
}

/// Closed polyline along the separatrix: out along the unstable (`y`) axis,
/// around the lobe, back along the stable (`x`) axis to the origin.
/// Consecutive points are at most `resolution` apart.
pub fn trace_separatrix(m: &ModelFamily, resolution: f64) -> Result<Polyline, ModelError> {
    let r_far = 4.0;
    let re = m.glue.r_exact;
    let point = |theta: f64| -> Result<PlanePoint, ModelError> {
        let r = lobe_radius(m, theta, r_far)?;
        Ok(PlanePoint::new(r * theta.cos(), r * theta.sin()))
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta_min = 1e-12;
    let mut out = Vec::new();
    let axis_steps = (re / resolution).ceil() as usize;
    for i in 0..axis_steps {
        out.push(PlanePoint::new(0.0, re * i as f64 / axis_steps as f64));
    }
    out.push(PlanePoint::new(0.0, re));
    let coarse = 64;
    let mut thetas = vec![half_pi - theta_min];
    thetas.extend((1..coarse).rev().map(|i| half_pi * i as f64 / coarse as f64));
    thetas.push(theta_min);
    let mut prev = (thetas[0], point(thetas[0])?);
    out.push(prev.1);
    for &th in &thetas[1..] {
        let next = (th, point(th)?);
        refine(&mut out, prev, next, resolution, &point, 0)?;
        prev = next;
    }
    for i in 0..=axis_steps {
        out.push(PlanePoint::new(re * (axis_steps - i) as f64 / axis_steps as f64, 0.0));
    }
    Ok(out)
}

fn refine(
    out: &mut Polyline,
    a: (f64, PlanePoint),
    b: (f64, PlanePoint),
    resolution: f64,
    point: &impl Fn(f64) -> Result<PlanePoint, ModelError>,
    depth: usize,
) -> Result<(), ModelError> {
    if a.1.dist(&b.1) <= resolution || depth > 60 {
        out.push(b.1);
        return Ok(());
    }
    let tm = 0.5 * (a.0 + b.0);
    let mid = (tm, point(tm)?);
    refine(out, a, mid, resolution, point, depth + 1)?;
    refine(out, mid, b, resolution, point, depth + 1)
}

/// Area enclosed by a closed polyline (shoelace).
pub fn polygon_area(poly: &[PlanePoint]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        acc += a.x * b.y - b.x * a.y;
    }
    0.5 * acc
}

pub fn polyline_to_csv(poly: &[PlanePoint]) -> String {
    let mut s = String::from("x,y\n");
    for p in poly {
        s.push_str(&format!("{:.17e},{:.17e}\n", p.x, p.y));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let m = build_model(1.0, 0.1, GlueSpec::default()).unwrap();
        for &(x, y) in &[(0.4, 0.3), (0.2, 0.5), (0.7, 0.1), (0.05, 0.05)] {
            let (_, hx, hy) = m.h0_full(x, y);
            let d = 1e-6;
            let fx = (m.h0_full(x + d, y).0 - m.h0_full(x - d, y).0) / (2.0 * d);
            let fy = (m.h0_full(x, y + d).0 - m.h0_full(x, y - d).0) / (2.0 * d);
            assert!((hx - fx).abs() < 1e-8 && (hy - fy).abs() < 1e-8);
        }
    }
}
