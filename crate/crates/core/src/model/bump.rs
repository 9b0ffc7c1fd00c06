//! The bump `phi_M`, the diffeomorphism `s_M(t) = int_0^t exp(phi_M)` and
//! the canonical map `g_M` built from the generating function
//! `S(X, y) = y (w(y) s_M(X) + (1 - w(y)) X)`.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::charts_flows::{smoothstep, smoothstep_deriv, PlanePoint};
use crate::numerics::{gauss16, gauss16_composite, newton_bisect};

/// Even bump `(1 - 4x^2)^power` supported on `[-1/2, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi {
    pub power: i32,
}

impl Default for Chi {
    fn default() -> Self {
        Self { power: 5 }
    }
}

impl Chi {
    pub fn value(&self, x: f64) -> f64 {
        let u = 1.0 - 4.0 * x * x;
        if u <= 0.0 {
            0.0
        } else {
            u.powi(self.power)
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let u = 1.0 - 4.0 * x * x;
        if u <= 0.0 {
            0.0
        } else {
            -8.0 * self.power as f64 * x * u.powi(self.power - 1)
        }
    }

    pub fn integral(&self) -> f64 {
        gauss16_composite(|x| self.value(x), -0.5, 0.5, 64)
    }
}

const PANELS: usize = 4096;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BumpParams {
    pub rho: f64,
    pub m: f64,
    pub c_m: f64,
    pub alpha: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub b: f64,
    /// The interval `I` where `phi_M <= -bM`.
    pub interval: (f64, f64),
    /// Height of the positive hump, fixing `s_M(1) = 1`.
    pub a_norm: f64,
    pub chi: Chi,
    /// `s_M` at the panel boundaries `k / PANELS`.
    #[serde(skip)]
    cumulative: Vec<f64>,
}

/// Builds `phi_M` for bump width `rho` and depth parameter `m`.
pub fn build_bump(rho: f64, m: f64, chi: Chi) -> Result<BumpParams, ModelError> {
    if !(rho > 0.0 && rho <= 1.0 / 12.0) {
        return Err(ModelError::Bump(format!("rho = {rho} outside (0, 1/12]")));
    }
    if !(m >= 0.0) {
        return Err(ModelError::Bump(format!("M = {m} must be non-negative")));
    }
    // chi > 1/2 exactly on (-2 alpha, 2 alpha)
    let x_half = crate::numerics::bisect(|x| chi.value(x) - 0.5, 0.0, 0.5, 0.0)
        .map_err(|e| ModelError::Bump(e.to_string()))?;
    let alpha = 0.5 * x_half;
    let samples = 20_000;
    let (mut beta_min, mut beta_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..=samples {
        let x = -2.0 * alpha + alpha * i as f64 / samples as f64;
        let d = chi.deriv(x);
        beta_min = beta_min.min(d);
        beta_max = beta_max.max(d);
    }
    if !(beta_min > 0.0) {
        return Err(ModelError::Bump("chi is not increasing on [-2 alpha, -alpha]".into()));
    }
    let b = 1.0 / (beta_max / beta_min).max(2.0 * alpha * beta_min);
    let c_m = m / (alpha * beta_min);
    let interval = (2.0 / 3.0 - 2.0 * alpha * rho, 2.0 / 3.0 - alpha * rho);

    let hump_lo = 1.0 / 3.0 - 1.0 / 24.0;
    let dip = |x: f64| (-c_m * chi.value((x - 2.0 / 3.0) / rho)).exp();
    let a2 = gauss16_composite(dip, 2.0 / 3.0 - 0.5 * rho, 2.0 / 3.0 + 0.5 * rho, 512);
    let target = 1.0 / 12.0 + rho - a2;
    let hump = |a: f64| {
        let f = |x: f64| (a * chi.value((x - 1.0 / 3.0) * 12.0)).exp();
        let df = |x: f64| {
            let c = chi.value((x - 1.0 / 3.0) * 12.0);
            c * (a * c).exp()
        };
        (
            gauss16_composite(f, hump_lo, hump_lo + 1.0 / 12.0, 512) - target,
            gauss16_composite(df, hump_lo, hump_lo + 1.0 / 12.0, 512),
        )
    };
    let mut hi = 1.0;
    while hump(hi).0 < 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(ModelError::Bump("normalization root not bracketed".into()));
        }
    }
    let a_norm = if target <= 1.0 / 12.0 {
        0.0
    } else {
        newton_bisect(hump, 0.0, hi, 1e-16).map_err(|e| ModelError::Bump(e.to_string()))?
    };
    let mut bp = BumpParams {
        rho,
        m,
        c_m,
        alpha,
        beta_min,
        beta_max,
        b,
        interval,
        a_norm,
        chi,
        cumulative: Vec::new(),
    };
    bp.tabulate();
    Ok(bp)
}

impl BumpParams {
    fn tabulate(&mut self) {
        let mut cum = Vec::with_capacity(PANELS + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..PANELS {
            let a = k as f64 / PANELS as f64;
            let b = (k + 1) as f64 / PANELS as f64;
            acc += gauss16(|t| self.phi(t).exp(), a, b);
            cum.push(acc);
        }
        self.cumulative = cum;
    }

    fn ensure_table(&self) -> std::borrow::Cow<'_, [f64]> {
        if self.cumulative.len() == PANELS + 1 {
            std::borrow::Cow::Borrowed(&self.cumulative)
        } else {
            let mut c = self.clone();
            c.tabulate();
            std::borrow::Cow::Owned(c.cumulative)
        }
    }

    pub fn interval_len(&self) -> f64 {
        self.interval.1 - self.interval.0
    }

    pub fn phi(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        self.a_norm * self.chi.value((t - 1.0 / 3.0) * 12.0)
            - self.c_m * self.chi.value((t - 2.0 / 3.0) / self.rho)
    }

    pub fn dphi(&self, t: f64) -> f64 {
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        12.0 * self.a_norm * self.chi.deriv((t - 1.0 / 3.0) * 12.0)
            - self.c_m / self.rho * self.chi.deriv((t - 2.0 / 3.0) / self.rho)
    }

    /// `s_M'(t) = exp(phi_M(t))`.
    pub fn ds(&self, t: f64) -> f64 {
        self.phi(t).exp()
    }

    /// `s_M` on `[0, 1]`, the identity elsewhere.
    pub fn s(&self, t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return t;
        }
        let table = self.ensure_table();
        let k = ((t * PANELS as f64) as usize).min(PANELS - 1);
        let a = k as f64 / PANELS as f64;
        table[k] + gauss16(|u| self.phi(u).exp(), a, t)
    }

    /// `s_M(b) - s_M(a)` by direct quadrature, accurate for tiny increments.
    pub fn s_increment(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let pieces = (((b - a).abs() * PANELS as f64).ceil() as usize).clamp(1, PANELS);
        gauss16_composite(|u| self.ds(u), a, b, pieces)
    }

    /// `s_M(1)` as tabulated, which should be 1.
    pub fn total_mass(&self) -> f64 {
        self.ensure_table()[PANELS]
    }

    pub fn s_inv(&self, x: f64) -> f64 {
        if x <= 0.0 || x >= 1.0 {
            return x;
        }
        let table = self.ensure_table();
        let k = match table.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(k) => return k as f64 / PANELS as f64,
            Err(k) => k.clamp(1, PANELS) - 1,
        };
        let lo = k as f64 / PANELS as f64;
        let hi = (k + 1) as f64 / PANELS as f64;
        let f = |t: f64| (table[k] + gauss16(|u| self.phi(u).exp(), lo, t) - x, self.ds(t));
        newton_bisect(f, lo, hi, 1e-16).unwrap_or(0.5 * (lo + hi))
    }

    /// `Z`-periodization: `s(t - k) + k` with `k = floor(t)`.
    pub fn s_periodic(&self, t: f64) -> f64 {
        let k = t.floor();
        self.s(t - k) + k
    }

    pub fn s_inv_periodic(&self, x: f64) -> f64 {
        let k = x.floor();
        self.s_inv(x - k) + k
    }

    pub fn ds_periodic(&self, t: f64) -> f64 {
        self.ds(t - t.floor())
    }

    pub fn max_ds(&self) -> f64 {
        self.a_norm.exp()
    }

    pub fn min_ds(&self) -> f64 {
        (-self.c_m).exp()
    }
}

/// `g_M` on the strip `[0, 1) x [-c, c]`, the identity elsewhere: the explicit map
/// `(X, y) -> (s^{-1}(X), s'(s^{-1}(X)) y)` for `|y| <= kappa c`, the identity
/// for `|y| >= c`, and the canonical map of `S` with a logarithmic ramp `w`
/// in between.
#[derive(Debug, Clone)]
pub struct GMap {
    pub bump: BumpParams,
    pub c: f64,
    pub kappa: f64,
}

impl GMap {
    pub const DEFAULT_KAPPA: f64 = 1.0 / 32.0;

    pub fn new(bump: BumpParams, c: f64, kappa: f64) -> Result<Self, ModelError> {
        if !(c > 0.0 && kappa > 0.0 && kappa < 1.0) {
            return Err(ModelError::Invalid(format!("g_M needs c > 0 and kappa in (0, 1), got {c}, {kappa}")));
        }
        let g = Self { bump, c, kappa };
        g.check_invertible()?;
        Ok(g)
    }

    /// `(w, y w'(y))` of the ramp.
    fn ramp(&self, y: f64) -> (f64, f64) {
        let ay = y.abs();
        if ay <= self.kappa * self.c {
            return (1.0, 0.0);
        }
        if ay >= self.c {
            return (0.0, 0.0);
        }
        let len = (1.0 / self.kappa).ln();
        let u = (ay / (self.kappa * self.c)).ln() / len;
        (1.0 - smoothstep(u), -smoothstep_deriv(u) / len)
    }

    /// `dX/dX~ = 1 + (s' - 1)(w + y w')` must stay positive for every slope
    /// `s'` of `s_M`; it is affine in `s'`, so the extremes suffice.
    fn check_invertible(&self) -> Result<(), ModelError> {
        let n = 2000;
        for i in 0..=n {
            let y = self.kappa * self.c + (1.0 - self.kappa) * self.c * i as f64 / n as f64;
            let (w, yw) = self.ramp(y);
            for sp in [self.bump.max_ds(), self.bump.min_ds()] {
                let d = 1.0 + (sp - 1.0) * (w + yw);
                if !(d > 0.0) {
                    return Err(ModelError::GSolve(format!(
                        "generating function not invertible at y = {y:e} (slope {sp:.3}, dX/dX~ = {d:.3})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn apply(&self, p: PlanePoint) -> Result<PlanePoint, ModelError> {
        let (w, yw) = self.ramp(p.y);
        // phi_M vanishes near 0 and 1, so the identity outside joins smoothly
        if w == 0.0 || !(0.0..1.0).contains(&p.x) {
            return Ok(p);
        }
        let x = p.x;
        let bp = &self.bump;
        if w == 1.0 {
            let xt = bp.s_inv(x);
            return Ok(PlanePoint::new(xt, bp.ds(xt) * p.y));
        }
        let f = |xt: f64| {
            let s = bp.s(xt);
            let sp = bp.ds(xt);
            (w * s + (1.0 - w) * xt + yw * (s - xt) - x, 1.0 + (sp - 1.0) * (w + yw))
        };
        let xt = newton_bisect(f, 0.0, 1.0, 1e-15).map_err(|e| ModelError::GSolve(e.to_string()))?;
        let yt = p.y * (w * bp.ds(xt) + 1.0 - w);
        Ok(PlanePoint::new(xt, yt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_condition() {
        let bp = build_bump(1.0 / 12.0, 6.0, Chi::default()).unwrap();
        assert!(bp.alpha > 0.0 && bp.alpha < 0.25);
        assert!((bp.chi.value(2.0 * bp.alpha) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn s_inverse_round_trip() {
        let bp = build_bump(1.0 / 12.0, 6.0, Chi::default()).unwrap();
        for i in 0..100 {
            let t = i as f64 / 99.0;
            // x carries absolute precision ~1e-16, worth 1e-16 / s'(t) in t
            assert!((bp.s_inv(bp.s(t)) - t).abs() < 1e-10 + 1e-15 / bp.ds(t));
        }
    }
}
