//! Exact local dynamics near the saddle, the logarithmic charts, a generic
//! time-one integrator and the generating-function extension of symplectic
//! germs.
//!
//! Orientation: the Hamiltonian vector field of `H` is
//! `(x', y') = (-dH/dy, dH/dx)`, so for `H = q(xy)` the first coordinate
//! contracts and `W^s` is the `x` axis.

pub mod ode;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nf_algebra::PolyQ;
use ode::{Gbs, OdeError};

/// Step of every central-difference Jacobian in the crate.
pub const FD_STEP: f64 = 1e-5;
/// Allowed deviation of a finite-difference Jacobian determinant from 1.
pub const DET_TOL: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("chart {chart} undefined at ({x}, {y})")]
    ChartDomain { chart: &'static str, x: f64, y: f64 },
    #[error("|xy| = {s:e} outside the validity radius {radius:e} of q")]
    OutsideValidity { s: f64, radius: f64 },
    #[error("transit time needs v > 0, got {0:e}")]
    NonPositiveFiber(f64),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("generating-function solve did not converge (residual {0:e})")]
    ImplicitSolve(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const ORIGIN: PlanePoint = PlanePoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(&self, other: &PlanePoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// `(u, v)` with `u` logarithmic and `v = xy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub u: f64,
    pub v: f64,
}

pub fn xi1(p: PlanePoint) -> Result<ChartPoint, FlowError> {
    if !(p.x > 0.0) {
        return Err(FlowError::ChartDomain { chart: "xi1", x: p.x, y: p.y });
    }
    Ok(ChartPoint { u: p.x.ln(), v: p.x * p.y })
}

pub fn xi1_inv(c: ChartPoint) -> PlanePoint {
    let x = c.u.exp();
    PlanePoint::new(x, c.v / x)
}

pub fn xi2(p: PlanePoint) -> Result<ChartPoint, FlowError> {
    if !(p.y > 0.0) {
        return Err(FlowError::ChartDomain { chart: "xi2", x: p.x, y: p.y });
    }
    Ok(ChartPoint { u: -p.y.ln(), v: p.x * p.y })
}

pub fn xi2_inv(c: ChartPoint) -> PlanePoint {
    let y = (-c.u).exp();
    PlanePoint::new(c.v / y, y)
}

/// Time-`t` map of `H = q(xy)`: `(x e^{-t q'(xy)}, y e^{t q'(xy)})`.
pub fn local_flow(q: &PolyQ, t: f64, p: PlanePoint) -> Result<PlanePoint, FlowError> {
    let s = p.x * p.y;
    if s.abs() >= q.validity_radius {
        return Err(FlowError::OutsideValidity { s, radius: q.validity_radius });
    }
    let rate = t * q.dq(s);
    Ok(PlanePoint::new(p.x * (-rate).exp(), p.y * rate.exp()))
}

/// `t q'(v) - ln v`. With the orientation above, `xi2 o flow_t o xi1^{-1}`
/// translates `u` by `transit_time(q, -t, v)`.
pub fn transit_time(q: &PolyQ, t: f64, v: f64) -> Result<f64, FlowError> {
    if !(v > 0.0) {
        return Err(FlowError::NonPositiveFiber(v));
    }
    if v >= q.validity_radius {
        return Err(FlowError::OutsideValidity { s: v, radius: q.validity_radius });
    }
    Ok(t * q.dq(v) - v.ln())
}

/// Smooth, possibly time-periodic, planar Hamiltonian.
pub trait Hamiltonian: Sync {
    fn value(&self, t: f64, x: f64, y: f64) -> f64;
    /// `(dH/dx, dH/dy)`.
    fn gradient(&self, t: f64, x: f64, y: f64) -> (f64, f64);
}

impl<F: Fn(f64, f64, f64) -> (f64, (f64, f64)) + Sync> Hamiltonian for F {
    fn value(&self, t: f64, x: f64, y: f64) -> f64 {
        self(t, x, y).0
    }
    fn gradient(&self, t: f64, x: f64, y: f64) -> (f64, f64) {
        self(t, x, y).1
    }
}

/// Time-one map of the Hamiltonian vector field, started at time 0.
pub fn integrate_time1<H: Hamiltonian + ?Sized>(
    h: &H,
    p: PlanePoint,
    tol: f64,
    bound: f64,
) -> Result<PlanePoint, FlowError> {
    integrate_span(h, p, 0.0, 1.0, tol, bound)
}

pub fn integrate_span<H: Hamiltonian + ?Sized>(
    h: &H,
    p: PlanePoint,
    t0: f64,
    t1: f64,
    tol: f64,
    bound: f64,
) -> Result<PlanePoint, FlowError> {
    let field = |t: f64, z: &[f64; 2]| {
        let (hx, hy) = h.gradient(t, z[0], z[1]);
        [-hy, hx]
    };
    let out = Gbs::new(tol).integrate(field, t0, [p.x, p.y], t1, bound)?;
    Ok(PlanePoint::new(out[0], out[1]))
}

/// Central-difference Jacobian `[[dX/dx, dX/dy], [dY/dx, dY/dy]]`.
pub fn jacobian_fd<E>(
    map: impl Fn(PlanePoint) -> Result<PlanePoint, E>,
    p: PlanePoint,
    step: f64,
) -> Result<[[f64; 2]; 2], E> {
    // Fourth-order stencil: the bump maps have third derivatives large
    // enough that the three-point rule misses 1e-4 at this step.
    let d = |dx: f64, dy: f64| -> Result<[f64; 2], E> {
        let a = map(PlanePoint::new(p.x + dx, p.y + dy))?;
        let b = map(PlanePoint::new(p.x - dx, p.y - dy))?;
        let a2 = map(PlanePoint::new(p.x + 2.0 * dx, p.y + 2.0 * dy))?;
        let b2 = map(PlanePoint::new(p.x - 2.0 * dx, p.y - 2.0 * dy))?;
        let w = 12.0 * step;
        Ok([
            (8.0 * (a.x - b.x) - (a2.x - b2.x)) / w,
            (8.0 * (a.y - b.y) - (a2.y - b2.y)) / w,
        ])
    };
    let dx = d(step, 0.0)?;
    let dy = d(0.0, step)?;
    Ok([[dx[0], dy[0]], [dx[1], dy[1]]])
}

pub fn jacobian_det<E>(
    map: impl Fn(PlanePoint) -> Result<PlanePoint, E>,
    p: PlanePoint,
) -> Result<f64, E> {
    let j = jacobian_fd(map, p, FD_STEP)?;
    Ok(j[0][0] * j[1][1] - j[0][1] * j[1][0])
}

/// Quintic smoothstep: 0 below 0, 1 above 1, `C^2` joins.
pub fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
    }
}

pub fn smoothstep_deriv(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        30.0 * s * s * (1.0 - s) * (1.0 - s)
    }
}

/// Iteration bound and threshold of the implicit generating-function solves.
const IMPLICIT_MAX_ITERS: usize = 100;
const IMPLICIT_TOL: f64 = 1e-13;

// 16-point Gauss-Legendre on [0, 1]
const GL_NODES: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_8,
    0.062_253_523_938_647_9,
    0.027_152_459_411_754_1,
];

/// Symplectic extension of a germ `theta` fixing the origin: equal to
/// `theta` on `D(o, r_cut / 2)`, the identity outside `D(o, r_cut)`.
///
/// With mixed variables `(x, Y)`, `theta` is generated by `F` through
/// `(y - Y) dx + (X - x) dY = dF`. The extension is generated by `chi F`
/// with `chi` a radial cutoff in `(x, Y)`.
pub struct SymplecticExtension<T> {
    theta: T,
    r_cut: f64,
}

impl<T: Fn(PlanePoint) -> PlanePoint> SymplecticExtension<T> {
    pub fn new(theta: T, r_cut: f64) -> Self {
        Self { theta, r_cut }
    }

    /// `y` with `theta(x, y).y = big_y`, by Newton with a difference slope.
    fn mixed_y(&self, x: f64, big_y: f64) -> Result<f64, FlowError> {
        let mut y = big_y;
        let mut resid = f64::INFINITY;
        for _ in 0..IMPLICIT_MAX_ITERS {
            let g = (self.theta)(PlanePoint::new(x, y)).y - big_y;
            resid = g.abs();
            if resid <= IMPLICIT_TOL * (1.0 + big_y.abs()) {
                return Ok(y);
            }
            let h = 1e-7 * (1.0 + y.abs());
            let slope = ((self.theta)(PlanePoint::new(x, y + h)).y
                - (self.theta)(PlanePoint::new(x, y - h)).y)
                / (2.0 * h);
            if !(slope.abs() > 1e-3) {
                return Err(FlowError::ImplicitSolve(resid));
            }
            y -= g / slope;
        }
        Err(FlowError::ImplicitSolve(resid))
    }

    /// `(F_x, F_Y)` of the germ at mixed point `(x, Y)`.
    fn germ_partials(&self, x: f64, big_y: f64) -> Result<(f64, f64), FlowError> {
        let y = self.mixed_y(x, big_y)?;
        let img = (self.theta)(PlanePoint::new(x, y));
        Ok((y - big_y, img.x - x))
    }

    /// `F(x, Y)` by integrating `dF` along the ray from the origin.
    pub fn generating_function(&self, x: f64, big_y: f64) -> Result<f64, FlowError> {
        let mut acc = 0.0;
        for (node, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            for s in [0.5 - 0.5 * node, 0.5 + 0.5 * node] {
                let (fx, fy) = self.germ_partials(s * x, s * big_y)?;
                acc += 0.5 * w * (fx * x + fy * big_y);
            }
        }
        Ok(acc)
    }

    fn cutoff(&self, x: f64, big_y: f64) -> (f64, f64, f64) {
        let r = x.hypot(big_y);
        let half = 0.5 * self.r_cut;
        let s = (r - half) / half;
        let chi = 1.0 - smoothstep(s);
        if r == 0.0 || s <= 0.0 || s >= 1.0 {
            return (chi, 0.0, 0.0);
        }
        let d = -smoothstep_deriv(s) / half;
        (chi, d * x / r, d * big_y / r)
    }

    /// Partials of the cut-off generating function.
    fn cut_partials(&self, x: f64, big_y: f64) -> Result<(f64, f64), FlowError> {
        let (chi, chi_x, chi_y) = self.cutoff(x, big_y);
        if chi == 0.0 {
            return Ok((0.0, 0.0));
        }
        let (fx, fy) = self.germ_partials(x, big_y)?;
        if chi_x == 0.0 && chi_y == 0.0 {
            return Ok((chi * fx, chi * fy));
        }
        let f = self.generating_function(x, big_y)?;
        Ok((chi_x * f + chi * fx, chi_y * f + chi * fy))
    }

    pub fn apply(&self, p: PlanePoint) -> Result<PlanePoint, FlowError> {
        if p.norm() >= 2.0 * self.r_cut {
            return Ok(p);
        }
        // y = Y + Ftilde_x(x, Y), solved by damped fixed point
        let mut big_y = p.y;
        let mut damping = 1.0;
        let mut last = f64::INFINITY;
        for _ in 0..IMPLICIT_MAX_ITERS {
            let (fx, _) = self.cut_partials(p.x, big_y)?;
            let target = p.y - fx;
            let delta = target - big_y;
            if delta.abs() <= IMPLICIT_TOL * (1.0 + p.y.abs()) {
                let (_, fy) = self.cut_partials(p.x, target)?;
                return Ok(PlanePoint::new(p.x + fy, target));
            }
            if delta.abs() > last {
                damping *= 0.5;
            }
            last = delta.abs();
            big_y += damping * delta;
        }
        Err(FlowError::ImplicitSolve(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_endpoints() {
        assert_eq!(smoothstep(0.0), 0.0);
        assert_eq!(smoothstep(1.0), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_degree_15() {
        let mut acc = 0.0;
        for (n, w) in GL_NODES.iter().zip(GL_WEIGHTS.iter()) {
            for s in [0.5 - 0.5 * n, 0.5 + 0.5 * n] {
                acc += 0.5 * w * s.powi(15);
            }
        }
        assert!((acc - 1.0 / 16.0).abs() < 1e-15);
    }
}
