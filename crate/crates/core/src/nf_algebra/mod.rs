//! Fourier-Taylor algebra and Birkhoff normal form for 1-periodically forced
//! planar Hamiltonians `H(t, z) = lambda(t) z1 z2 + O(|z|^3)`.
//!
//! Conventions: `poisson(A, B) = dA/dz1 dB/dz2 - dA/dz2 dB/dz1`. A generator
//! `G` acts on functions through `L_G A = poisson(A, G)`, so the conjugated
//! Hamiltonian is `sum_m L_G^m H / m! + sum_{m>=1} L_G^{m-1} dG/dt / m!`. At
//! first order this reads `H + dG/dt + poisson(H, G)`, and for a monomial
//! `g(t) z1^i1 z2^i2` one has `poisson(lambda z1 z2, G) = -lambda (i1 - i2) G`,
//! which turns the elimination into `h + g' - mu g = 0` with
//! `mu = lambda (i1 - i2)`.

mod series;
mod trig;

use thiserror::Error;

use crate::charts_flows::ode::{Gbs, OdeError};

pub use series::{poisson, Phase, TrigTaylorSeries, MAX_DEGREE, MAX_FOURIER};
pub use trig::TrigPoly;

/// Below this `|e^mu - 1|` the off-diagonal solve is refused.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NfError {
    #[error("time average of the quadratic coefficient is {0}, must be positive")]
    NonPositiveMean(f64),
    #[error("|exp(mu) - 1| = {0:e} below tolerance; diagonal monomial routed to the off-diagonal solver")]
    Degenerate(f64),
    #[error("requested order {order} exceeds the series degree bound {deg_max}")]
    Truncation { order: u32, deg_max: u32 },
    #[error("quadratic part is not of the form lambda(t) z1 z2: {0}")]
    NotNormalQuadratic(String),
    #[error("coefficient table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("generator flow failed: {0}")]
    Flow(#[from] OdeError),
}

/// `q(s) = lambda s + sum_{i>=2} a_i s^i`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PolyQ {
    pub lambda: f64,
    /// `higher[0]` multiplies `s^2`, `higher[1]` multiplies `s^3`, ...
    pub higher: Vec<f64>,
    /// `q'(s) > lambda / 2` holds for `|s|` below this radius.
    pub validity_radius: f64,
}

impl PolyQ {
    pub fn new(lambda: f64, higher: Vec<f64>) -> Self {
        assert!(lambda > 0.0, "q'(0) must be positive");
        let mut q = Self {
            lambda,
            higher,
            validity_radius: f64::INFINITY,
        };
        while q.higher.last() == Some(&0.0) {
            q.higher.pop();
        }
        q.validity_radius = q.compute_validity_radius();
        q
    }

    pub fn linear(lambda: f64) -> Self {
        Self::new(lambda, Vec::new())
    }

    fn compute_validity_radius(&self) -> f64 {
        if self.higher.is_empty() {
            return f64::INFINITY;
        }
        let ok = |r: f64| {
            (0..=400).all(|i| {
                let s = -r + 2.0 * r * i as f64 / 400.0;
                self.dq(s) > 0.5 * self.lambda
            })
        };
        let mut lo = 0.0;
        let mut hi = 1e-8;
        while ok(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > 1e8 {
                return f64::INFINITY;
            }
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    pub fn q(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for &a in self.higher.iter().rev() {
            acc = (acc + a) * s;
        }
        (acc + self.lambda) * s
    }

    pub fn dq(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &a) in self.higher.iter().enumerate().rev() {
            acc = acc * s + (i as f64 + 2.0) * a;
        }
        acc * s + self.lambda
    }

    pub fn d2q(&self, s: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &a) in self.higher.iter().enumerate().rev() {
            let p = i as f64 + 2.0;
            acc = acc * s + p * (p - 1.0) * a;
        }
        acc
    }

    /// Solves `q(s) = e` near zero by Newton iteration.
    pub fn inverse(&self, e: f64) -> f64 {
        if self.higher.is_empty() {
            return e / self.lambda;
        }
        let mut s = e / self.lambda;
        for _ in 0..60 {
            let step = (self.q(s) - e) / self.dq(s);
            s -= step;
            if step.abs() <= 1e-17 * s.abs().max(1e-300) {
                break;
            }
        }
        s
    }
}

/// Mean of `lambda(t)` and the phase `a0` with `a0' = -(lambda - mean)`,
/// `a0(0) = 0`; the generator `a0(t) z1 z2` makes the quadratic part autonomous.
pub fn average_quadratic(lambda_of_t: &TrigPoly) -> Result<(f64, TrigPoly), NfError> {
    let mean = lambda_of_t.mean();
    if mean <= 0.0 {
        return Err(NfError::NonPositiveMean(mean));
    }
    let (_, a0) = solve_homological_diag(lambda_of_t);
    Ok((mean, a0))
}

/// Periodic solution of `h + g' - mu g = 0`, solved mode by mode.
pub fn solve_homological_offdiag(h: &TrigPoly, mu: f64) -> Result<TrigPoly, NfError> {
    let gap = (mu.exp() - 1.0).abs();
    if gap < DEGENERACY_TOL {
        return Err(NfError::Degenerate(gap));
    }
    let kmax = h.max_mode();
    let mut g = TrigPoly::zero(kmax);
    g.set_cos(0, h.cos_coeff(0) / mu);
    for k in 1..=kmax {
        let (a, b) = (h.cos_coeff(k), h.sin_coeff(k));
        if a == 0.0 && b == 0.0 {
            continue;
        }
        // cos: mu c - w s = a ; sin: w c + mu s = b
        let w = 2.0 * std::f64::consts::PI * k as f64;
        let det = mu * mu + w * w;
        g.set_cos(k, (mu * a + w * b) / det);
        g.set_sin(k, (mu * b - w * a) / det);
    }
    Ok(g)
}

/// `(a, g)` with `a` the mean of `h` and `g(t) = -int_0^t (h - a)`.
pub fn solve_homological_diag(h: &TrigPoly) -> (f64, TrigPoly) {
    let kmax = h.max_mode();
    let mut g = TrigPoly::zero(kmax);
    let mut constant = 0.0;
    for k in 1..=kmax {
        let w = 2.0 * std::f64::consts::PI * k as f64;
        let (a, b) = (h.cos_coeff(k), h.sin_coeff(k));
        g.set_sin(k, -a / w);
        g.set_cos(k, b / w);
        constant -= b / w;
    }
    g.set_cos(0, constant);
    (h.mean(), g)
}

/// Conjugates `h` by the time-one map of the generator `g`.
pub fn lie_transform(h: &TrigTaylorSeries, g: &TrigTaylorSeries) -> TrigTaylorSeries {
    const MAX_TERMS: usize = 400;
    let mut total = h.clone();
    let mut term = h.clone();
    for m in 1..MAX_TERMS {
        term = poisson(&term, g).scaled(1.0 / m as f64);
        if term.is_zero() || term.max_abs_coeff() < 1e-300 {
            break;
        }
        let before = total.max_abs_coeff();
        total = total.add(&term);
        if term.max_abs_coeff() <= 1e-18 * before.max(1e-300) {
            break;
        }
    }
    let dg = g.d_t();
    if !dg.is_zero() {
        // sum_{m>=1} L^{m-1} dg / m!
        let mut term = dg;
        let mut m = 1usize;
        loop {
            total = total.add(&term);
            m += 1;
            term = poisson(&term, g).scaled(1.0 / m as f64);
            if m >= MAX_TERMS || term.is_zero() || term.max_abs_coeff() < 1e-18 {
                break;
            }
        }
    }
    total
}

#[derive(Debug, Clone)]
pub struct BnfResult {
    pub q: PolyQ,
    /// Removes the time dependence of the quadratic part; absent when
    /// `lambda(t)` is already constant.
    pub averaging: Option<TrigTaylorSeries>,
    /// `generators[j]` is homogeneous of degree `j + 3`.
    pub generators: Vec<TrigTaylorSeries>,
    /// Conjugated Hamiltonian.
    pub normal_form: TrigTaylorSeries,
    /// Largest coefficient of the conjugated Hamiltonian, through the
    /// requested degree, that is not a constant multiple of `(z1 z2)^k`.
    pub residual: f64,
}

impl BnfResult {
    /// All generators in application order (averaging first).
    pub fn chain(&self) -> Vec<&TrigTaylorSeries> {
        self.averaging.iter().chain(self.generators.iter()).collect()
    }
}

pub fn bnf_normalize(h: &TrigTaylorSeries, order: u32) -> Result<BnfResult, NfError> {
    if order > h.deg_max() {
        return Err(NfError::Truncation {
            order,
            deg_max: h.deg_max(),
        });
    }
    for (&(a, b), p) in h.terms() {
        if a + b == 1 {
            return Err(NfError::NotNormalQuadratic(format!(
                "linear term z1^{a} z2^{b} present"
            )));
        }
        if a + b == 2 && a != b && !p.is_zero() {
            return Err(NfError::NotNormalQuadratic(format!(
                "term z1^{a} z2^{b} present"
            )));
        }
    }
    let (lambda, a0) = average_quadratic(&h.coeff(1, 1))?;
    let mut current = h.clone();
    let averaging = if a0.is_zero() {
        None
    } else {
        let mut g0 = TrigTaylorSeries::zero(h.deg_max(), h.fourier_max());
        g0.add_term(1, 1, &a0);
        current = lie_transform(&current, &g0);
        Some(g0)
    };

    let mut generators = Vec::new();
    let mut q_higher = Vec::new();
    for degree in 3..=order {
        let part = current.homogeneous(degree);
        let mut g = TrigTaylorSeries::zero(h.deg_max(), h.fourier_max());
        for i1 in 0..=degree {
            let i2 = degree - i1;
            let coeff = part.coeff(i1, i2);
            if coeff.is_zero() {
                continue;
            }
            if i1 == i2 {
                let (_, gi) = solve_homological_diag(&coeff);
                g.add_term(i1, i2, &gi);
            } else {
                let mu = lambda * (i1 as f64 - i2 as f64);
                g.add_term(i1, i2, &solve_homological_offdiag(&coeff, mu)?);
            }
        }
        if !g.is_zero() {
            current = lie_transform(&current, &g);
        }
        if degree % 2 == 0 {
            let k = degree / 2;
            let c = current.coeff(k, k).mean();
            let idx = (k - 2) as usize;
            q_higher.resize(idx + 1, 0.0);
            q_higher[idx] = c;
        }
        generators.push(g);
    }

    let mut residual: f64 = 0.0;
    for (&(a, b), p) in current.terms() {
        if a + b > order || a + b < 2 {
            continue;
        }
        if a == b {
            residual = residual.max(p.max_abs_coeff_nonconstant());
        } else {
            residual = residual.max(p.max_abs_coeff());
        }
    }
    let q = PolyQ::new(lambda, q_higher);
    Ok(BnfResult {
        q,
        averaging,
        generators,
        normal_form: current,
        residual,
    })
}

impl TrigPoly {
    fn max_abs_coeff_nonconstant(&self) -> f64 {
        (1..=self.max_mode())
            .map(|k| self.cos_coeff(k).abs().max(self.sin_coeff(k).abs()))
            .fold(0.0, f64::max)
    }
}

/// Time-one map of `z' = (dG/dz2, -dG/dz1)` with `t` frozen; along this flow
/// `d/ds A = poisson(A, G)`, so `A o flow = exp(L_G) A`.
pub fn generator_flow(g: &TrigTaylorSeries, t: f64, z: [f64; 2]) -> Result<[f64; 2], NfError> {
    let field = |_s: f64, w: &[f64; 2]| {
        let (g1, g2) = g.gradient(t, w[0], w[1]);
        [g2, -g1]
    };
    let scale = z[0].abs().max(z[1].abs()).max(1e-300);
    let gbs = Gbs::new(1e-15 * scale);
    Ok(gbs.integrate(field, 0.0, z, 1.0, f64::INFINITY)?)
}

/// `z -> flow_{G_1} o ... o flow_{G_n}(z)`, the change of variables under
/// which `H o chain` is the normal form.
pub fn apply_generator_chain(
    chain: &[&TrigTaylorSeries],
    t: f64,
    z: [f64; 2],
) -> Result<[f64; 2], NfError> {
    let mut w = z;
    for g in chain.iter().rev() {
        w = generator_flow(g, t, w)?;
    }
    Ok(w)
}
