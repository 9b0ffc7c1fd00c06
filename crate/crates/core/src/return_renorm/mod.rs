//! Fundamental domain near the stable axis, the first-return map, the
//! uniformizing chart `h` and the renormalized annulus maps.
//!
//! In the exact region `h(x, y) = ((ln x* - ln x) / q'(xy), xy)`, so that
//! `h o f o h^{-1} = T_1`. A return after `n` steps moves the first
//! coordinate by `n - N + l0(v)` with `l0(v) = (ln v - sigma(v)) / q'(v)`,
//! where `sigma(v) = ln x_out + ln y_in` is the shift accumulated by the
//! `N`-step passage outside the normal-form disk.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts_flows::{FlowError, PlanePoint};
use crate::model::{ModelFamily, State};
use crate::numerics::ChebTable;

pub const RETURN_CAP: usize = 1_000_000;
pub const DEFAULT_X_STAR: f64 = 0.09;
pub const DEFAULT_C: f64 = 0.003;
pub const DEFAULT_C_STAR: f64 = 0.9;
const SIGMA_NODES: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenormError {
    #[error("invalid fundamental domain: {0}")]
    InvalidDomain(String),
    #[error("backward iterates of the fundamental domain do not enter the normal-form disk within {0} steps")]
    NoPassageCount(usize),
    #[error("no return within {cap} iterations from ({x}, {y})")]
    ReturnCap { cap: usize, x: f64, y: f64 },
    #[error("point ({x}, {y}) outside the normalizing chart")]
    ChartDomain { x: f64, y: f64 },
    #[error("fiber {0:e} outside the tabulated passage range")]
    FiberRange(f64),
    #[error("rescaling level {n} too small: need exp(-(n+1)) < {delta:e}")]
    Level { n: i64, delta: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDomainSpec {
    pub x_star: f64,
    pub y_star: f64,
    pub c_star: f64,
    /// Length of the outer passage.
    pub n: usize,
    /// Annulus height `x* y*`.
    pub c: f64,
}

impl FundamentalDomainSpec {
    /// Entry height `c* c` of the return map.
    pub fn delta(&self) -> f64 {
        self.c_star * self.c
    }
}

/// Point of the annulus `(R/Z) x (0, c)` with logarithmic fiber.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusPoint {
    pub x: f64,
    pub logy: f64,
}

impl AnnulusPoint {
    pub fn new(x: f64, logy: f64) -> Self {
        Self { x: x.rem_euclid(1.0), logy }
    }
}

/// Fundamental domain with its normalizing chart and the tabulated outer
/// passage.
#[derive(Debug, Clone)]
pub struct Renormalizer {
    pub model: ModelFamily,
    pub fd: FundamentalDomainSpec,
    /// `sigma(v)` on `[0, c]`.
    pub sigma: ChebTable,
    sigma_prime: ChebTable,
}

/// `h` on the exact region.
pub fn normalizer_h(m: &ModelFamily, fd: &FundamentalDomainSpec, z: PlanePoint) -> Result<(f64, f64), RenormError> {
    if !(z.x > 0.0) || z.norm() >= m.glue.r_exact {
        return Err(RenormError::ChartDomain { x: z.x, y: z.y });
    }
    let v = z.x * z.y;
    Ok(((fd.x_star.ln() - z.x.ln()) / m.q.dq(v), v))
}

pub fn normalizer_h_inv(m: &ModelFamily, fd: &FundamentalDomainSpec, big_x: f64, v: f64) -> PlanePoint {
    let x = fd.x_star * (-m.q.dq(v) * big_x).exp();
    PlanePoint::new(x, v / x)
}

/// Annulus version of `h`, fiber stored as a logarithm.
pub fn normalizer_h_annulus(
    m: &ModelFamily,
    fd: &FundamentalDomainSpec,
    z: PlanePoint,
) -> Result<AnnulusPoint, RenormError> {
    let (bx, v) = normalizer_h(m, fd, z)?;
    if !(v > 0.0) {
        return Err(RenormError::ChartDomain { x: z.x, y: z.y });
    }
    Ok(AnnulusPoint { x: bx, logy: v.ln() })
}

/// Membership in the fundamental domain, tested in the chart.
pub fn in_domain(m: &ModelFamily, fd: &FundamentalDomainSpec, z: PlanePoint, height: f64) -> bool {
    if !(z.x > 0.0 && z.y > 0.0) || z.norm() >= m.r0 {
        return false;
    }
    let v = z.x * z.y;
    if !(v < height) {
        return false;
    }
    let bx = (fd.x_star.ln() - z.x.ln()) / m.q.dq(v);
    (0.0..1.0).contains(&bx)
}

/// Boundary samples of the fundamental domain of height `c`.
fn boundary_samples(m: &ModelFamily, x_star: f64, c: f64, per_edge: usize) -> Vec<PlanePoint> {
    let fd = FundamentalDomainSpec { x_star, y_star: c / x_star, c_star: 1.0, n: 0, c };
    let mut pts = Vec::new();
    for i in 0..=per_edge {
        let s = i as f64 / per_edge as f64;
        let v = c * s;
        pts.push(normalizer_h_inv(m, &fd, 0.0, v));
        pts.push(normalizer_h_inv(m, &fd, 1.0, v));
        pts.push(normalizer_h_inv(m, &fd, s, 0.0));
        pts.push(normalizer_h_inv(m, &fd, s, c));
    }
    pts
}

/// Smallest `n` with every backward `n`-th iterate of the domain boundary in
/// `D(o, r0)`.
pub fn compute_n(m: &ModelFamily, x_star: f64, c: f64) -> Result<usize, RenormError> {
    let cap = 200;
    let mut states: Vec<State> = boundary_samples(m, x_star, c, 64)
        .into_iter()
        .map(|p| m.state(p))
        .collect();
    for n in 1..=cap {
        for st in states.iter_mut() {
            *st = m.step_state_inv(*st)?;
        }
        if states.iter().all(|st| st.p.norm() < m.r0) {
            return Ok(n);
        }
    }
    Err(RenormError::NoPassageCount(cap))
}

impl Renormalizer {
    pub fn new(model: &ModelFamily, x_star: f64, y_star: f64, c_star: f64) -> Result<Self, RenormError> {
        let m = model.clone();
        let c = x_star * y_star;
        if !(x_star > 0.0 && y_star > 0.0 && c_star > 0.0 && c_star < 1.0) {
            return Err(RenormError::InvalidDomain("need x*, y* > 0 and c* in (0, 1)".into()));
        }
        if x_star >= m.r0 {
            return Err(RenormError::InvalidDomain(format!("(x*, 0) = ({x_star}, 0) outside D(o, r0)")));
        }
        if x_star * m.q.dq(0.0).exp() < m.r0 {
            return Err(RenormError::InvalidDomain(format!(
                "f^-1(x*, 0) still inside D(o, r0) for x* = {x_star}"
            )));
        }
        let fd0 = FundamentalDomainSpec { x_star, y_star, c_star, n: 0, c };
        for p in boundary_samples(&m, x_star, c, 64) {
            if p.norm() >= m.r0 {
                return Err(RenormError::InvalidDomain(format!(
                    "fundamental domain leaves D(o, r0) at ({:.4}, {:.4}); lower y*",
                    p.x, p.y
                )));
            }
        }
        let n = compute_n(&m, x_star, c)?;
        let fd = FundamentalDomainSpec { n, ..fd0 };
        let unperturbed = m.with_epsilon(0.0);
        let nodes = ChebTable::nodes(0.0, c, SIGMA_NODES);
        let mut values = Vec::with_capacity(nodes.len());
        for &v in &nodes {
            values.push(sigma_at(&unperturbed, &fd, v, 0.5)?);
        }
        let sigma = ChebTable::from_values(0.0, c, &values);
        let sigma_prime = sigma.derivative();
        Ok(Self {
            model: m,
            fd,
            sigma,
            sigma_prime,
        })
    }

    /// Domain with the default `x*`, `c` and `c*`.
    pub fn standard(model: &ModelFamily) -> Result<Self, RenormError> {
        Self::new(model, DEFAULT_X_STAR, DEFAULT_C / DEFAULT_X_STAR, DEFAULT_C_STAR)
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            model: self.model.with_epsilon(epsilon),
            ..self.clone()
        }
    }

    pub fn h(&self, z: PlanePoint) -> Result<(f64, f64), RenormError> {
        normalizer_h(&self.model, &self.fd, z)
    }

    pub fn h_inv(&self, big_x: f64, v: f64) -> PlanePoint {
        normalizer_h_inv(&self.model, &self.fd, big_x, v)
    }

    pub fn in_domain(&self, z: PlanePoint) -> bool {
        in_domain(&self.model, &self.fd, z, self.fd.c)
    }

    /// Tabulated `sigma(v)`.
    pub fn sigma(&self, v: f64) -> f64 {
        self.sigma.eval(v)
    }

    pub fn sigma_prime(&self, v: f64) -> f64 {
        self.sigma_prime.eval(v)
    }

    /// Direct simulation of `sigma(v)`, bypassing the table.
    pub fn sigma_estimate(&self, v: f64) -> Result<f64, RenormError> {
        if !(0.0..=self.fd.c).contains(&v) {
            return Err(RenormError::FiberRange(v));
        }
        sigma_at(&self.model.with_epsilon(0.0), &self.fd, v, 0.5)
    }

    /// `sigma(0+)` by Richardson extrapolation of simulated values at
    /// `v0, v0/2, v0/4`.
    pub fn sigma_limit(&self, v0: f64) -> Result<f64, RenormError> {
        let s1 = self.sigma_estimate(v0)?;
        let s2 = self.sigma_estimate(v0 / 2.0)?;
        let s4 = self.sigma_estimate(v0 / 4.0)?;
        let r1 = 2.0 * s2 - s1;
        let r2 = 2.0 * s4 - s2;
        Ok((4.0 * r2 - r1) / 3.0)
    }

    /// `(ln v - sigma(v)) / q'(v)`, not reduced mod 1.
    pub fn l0_lift(&self, logv: f64) -> f64 {
        let v = logv.exp();
        (logv - self.sigma(v)) / self.model.q.dq(v)
    }

    pub fn l0(&self, logv: f64) -> f64 {
        self.l0_lift(logv).rem_euclid(1.0)
    }

    /// `d l0 / d(ln v)`.
    pub fn l0_log_derivative(&self, logv: f64) -> f64 {
        let v = logv.exp();
        let q = &self.model.q;
        let d = q.dq(v);
        (1.0 - v * self.sigma_prime(v)) / d - (logv - self.sigma(v)) * q.d2q(v) * v / (d * d)
    }

    /// The unperturbed renormalized map `T_{l0}`.
    pub fn t_l0(&self, a: AnnulusPoint) -> AnnulusPoint {
        AnnulusPoint::new(a.x + self.l0_lift(a.logy), a.logy)
    }

    /// First return into the fundamental domain; `n` is the step count.
    ///
    /// A return only counts after the orbit has left `D(o, r0)`, so that a
    /// start on the left edge `X = 0` cannot re-enter through rounding.
    pub fn first_return(&self, z: PlanePoint) -> Result<(PlanePoint, usize), RenormError> {
        let m = &self.model;
        let mut st = m.state(z);
        let mut left = false;
        for n in 1..=RETURN_CAP {
            st = m.step_state(st)?;
            left |= st.p.norm() >= m.r0;
            if left && self.in_domain(st.p) {
                return Ok((st.p, n));
            }
        }
        Err(RenormError::ReturnCap { cap: RETURN_CAP, x: z.x, y: z.y })
    }

    /// `h o (first return) o h^{-1}` on the annulus.
    pub fn bar_f(&self, a: AnnulusPoint) -> Result<AnnulusPoint, RenormError> {
        let (p, _) = self.bar_f_counted(a)?;
        Ok(p)
    }

    pub fn bar_f_counted(&self, a: AnnulusPoint) -> Result<(AnnulusPoint, usize), RenormError> {
        let v = a.logy.exp();
        if !(v < self.fd.delta()) {
            return Err(RenormError::FiberRange(v));
        }
        let z = self.h_inv(a.x.rem_euclid(1.0), v);
        let (z1, n) = self.first_return(z)?;
        let (bx, v1) = self.h(z1)?;
        Ok((AnnulusPoint { x: bx, logy: v1.ln() }, n))
    }

    /// Entry height condition for level `n`.
    pub fn check_level(&self, n: i64) -> Result<(), RenormError> {
        if (-(n as f64 + 1.0)).exp() < self.fd.delta() {
            Ok(())
        } else {
            Err(RenormError::Level { n, delta: self.fd.delta() })
        }
    }

    /// The map rescaled by `exp(n)` in the fiber: `logy` is the log of the
    /// ring fiber in `(-1, 0)`.
    pub fn ring_f(&self, n: i64, a: AnnulusPoint) -> Result<AnnulusPoint, RenormError> {
        self.check_level(n)?;
        let out = self.bar_f(AnnulusPoint { x: a.x, logy: a.logy - n as f64 })?;
        Ok(AnnulusPoint { x: out.x, logy: out.logy + n as f64 })
    }

    /// `l_{0,n}(y) = l0(exp(-n) y)` as a lift in the log fiber `u = ln y`.
    pub fn ring_l_lift(&self, n: i64, u: f64) -> f64 {
        self.l0_lift(u - n as f64)
    }

    /// `d l_{0,n} / dy` at ring fiber `y`.
    pub fn ring_l_dy(&self, n: i64, y: f64) -> f64 {
        self.l0_log_derivative(y.ln() - n as f64) / y
    }

    /// Density of `h_*(area)` in `(X, v)` coordinates.
    pub fn measure_density(&self, a: AnnulusPoint) -> f64 {
        self.model.q.dq(a.logy.exp())
    }

    /// Twist profile `(y, l, dl/dy)` of level `n` on a ring grid.
    pub fn twist_profile(&self, n: i64, samples: usize) -> Vec<(f64, f64, f64)> {
        (0..samples)
            .map(|i| {
                let y = (-1.0 + (i as f64 + 0.5) / samples as f64).exp();
                let u = y.ln();
                (y, self.ring_l_lift(n, u).rem_euclid(1.0), self.ring_l_dy(n, y))
            })
            .collect()
    }
}

/// Annulus orbit of `bar_f` as CSV with columns `step,x,logy`.
pub fn annulus_orbit_csv(r: &Renormalizer, a: AnnulusPoint, steps: usize) -> Result<String, RenormError> {
    let mut out = String::from("step,x,logy\n");
    let mut p = a;
    for k in 0..=steps {
        out.push_str(&format!("{k},{:.17e},{:.17e}\n", p.x, p.logy));
        if k < steps {
            p = r.bar_f(p)?;
        }
    }
    Ok(out)
}

/// Twist profile as CSV with columns `y,l,dl_dy`.
pub fn twist_profile_csv(profile: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("y,l,dl_dy\n");
    for (y, l, d) in profile {
        out.push_str(&format!("{y:.17e},{l:.17e},{d:.17e}\n"));
    }
    out
}

/// `sigma(v)` from one simulated passage: the end point `h^{-1}(X, v)` is
/// pulled back `N` steps, then the passage is run forward.
pub fn sigma_at(m: &ModelFamily, fd: &FundamentalDomainSpec, v: f64, big_x: f64) -> Result<f64, RenormError> {
    let (start, _) = passage_start(m, fd, v, big_x)?;
    sigma_from_start(m, fd, start)
}

/// Start of the outer passage ending at `h^{-1}(X, v)`.
pub fn passage_start(
    m: &ModelFamily,
    fd: &FundamentalDomainSpec,
    v: f64,
    big_x: f64,
) -> Result<(PlanePoint, f64), RenormError> {
    let end = normalizer_h_inv(m, fd, big_x, v);
    let mut st = State { p: end, energy: m.q.q(v) };
    for _ in 0..fd.n {
        st = m.step_state_inv(st)?;
    }
    Ok((st.p, st.energy))
}

/// `ln x_N + ln y_0` for the passage started at `start`.
pub fn sigma_from_start(m: &ModelFamily, fd: &FundamentalDomainSpec, start: PlanePoint) -> Result<f64, RenormError> {
    let v = start.x * start.y;
    let mut st = State { p: start, energy: m.q.q(v) };
    for _ in 0..fd.n {
        st = m.step_state(st)?;
    }
    if !(st.p.x > 0.0 && start.y > 0.0) {
        return Err(RenormError::ChartDomain { x: st.p.x, y: st.p.y });
    }
    Ok(st.p.x.ln() + start.y.ln())
}

/// Start points on the entry fiber `v` for a spread test: the passage from
/// `xi2^{-1}(u, v)` for several `u`.
pub fn sigma_spread(r: &Renormalizer, v: f64, count: usize) -> Result<(f64, f64), RenormError> {
    let m = r.model.with_epsilon(0.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..count {
        let bx = (i as f64 + 0.5) / count as f64;
        let (start, _) = passage_start(&m, &r.fd, v, bx)?;
        // re-seat the start exactly on the fiber v
        let start = PlanePoint::new(v / start.y, start.y);
        let s = sigma_from_start(&m, &r.fd, start)?;
        lo = lo.min(s);
        hi = hi.max(s);
    }
    Ok((lo, hi))
}
