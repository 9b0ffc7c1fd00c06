//! Truncated Taylor series in `(z1, z2)` with trigonometric coefficients in `t`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::trig::TrigPoly;
use super::NfError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Cos,
    Sin,
}

impl Phase {
    fn label(self) -> &'static str {
        match self {
            Phase::Cos => "cos",
            Phase::Sin => "sin",
        }
    }
}

/// Coefficient map from monomial `(i1, i2)` to its Fourier vector.
///
/// Every product is truncated back to total degree `deg_max` and Fourier
/// mode `fourier_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigTaylorSeries {
    terms: BTreeMap<(u32, u32), TrigPoly>,
    deg_max: u32,
    fourier_max: usize,
}

pub const MAX_DEGREE: u32 = 12;
pub const MAX_FOURIER: usize = 32;

impl TrigTaylorSeries {
    pub fn zero(deg_max: u32, fourier_max: usize) -> Self {
        assert!(deg_max <= MAX_DEGREE, "degree bound {deg_max} exceeds {MAX_DEGREE}");
        assert!(fourier_max <= MAX_FOURIER, "Fourier bound {fourier_max} exceeds {MAX_FOURIER}");
        Self {
            terms: BTreeMap::new(),
            deg_max,
            fourier_max,
        }
    }

    pub fn deg_max(&self) -> u32 {
        self.deg_max
    }

    pub fn fourier_max(&self) -> usize {
        self.fourier_max
    }

    /// Adds `coeff(t) * z1^i1 z2^i2`; dropped when above the degree bound.
    pub fn add_term(&mut self, i1: u32, i2: u32, coeff: &TrigPoly) {
        if i1 + i2 > self.deg_max {
            return;
        }
        let kmax = self.fourier_max;
        let entry = self
            .terms
            .entry((i1, i2))
            .or_insert_with(|| TrigPoly::zero(kmax));
        entry.add_assign_scaled(&coeff.with_max_mode(kmax), 1.0);
        if entry.is_zero() {
            self.terms.remove(&(i1, i2));
        }
    }

    /// Adds a single real coefficient `value * phase(2 pi k t) z1^i1 z2^i2`.
    pub fn add_coeff(&mut self, i1: u32, i2: u32, k: usize, phase: Phase, value: f64) {
        if k > self.fourier_max {
            return;
        }
        let mut p = TrigPoly::zero(self.fourier_max);
        match phase {
            Phase::Cos => p.set_cos(k, value),
            Phase::Sin => {
                if k == 0 {
                    return;
                }
                p.set_sin(k, value)
            }
        }
        self.add_term(i1, i2, &p);
    }

    pub fn monomial(i1: u32, i2: u32, value: f64, deg_max: u32, fourier_max: usize) -> Self {
        let mut s = Self::zero(deg_max, fourier_max);
        s.add_coeff(i1, i2, 0, Phase::Cos, value);
        s
    }

    pub fn coeff(&self, i1: u32, i2: u32) -> TrigPoly {
        self.terms
            .get(&(i1, i2))
            .cloned()
            .unwrap_or_else(|| TrigPoly::zero(self.fourier_max))
    }

    pub fn coeff_value(&self, i1: u32, i2: u32, k: usize, phase: Phase) -> f64 {
        self.terms.get(&(i1, i2)).map_or(0.0, |p| match phase {
            Phase::Cos => p.cos_coeff(k),
            Phase::Sin => p.sin_coeff(k),
        })
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u32, u32), &TrigPoly)> {
        self.terms.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_autonomous(&self) -> bool {
        self.terms.values().all(TrigPoly::is_constant)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |m, p| m.max(p.max_abs_coeff()))
    }

    /// Lowest total degree present, if any.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(|(a, b)| a + b).min()
    }

    pub fn homogeneous(&self, degree: u32) -> Self {
        let mut out = Self::zero(self.deg_max, self.fourier_max);
        for (&(a, b), p) in &self.terms {
            if a + b == degree {
                out.terms.insert((a, b), p.clone());
            }
        }
        out
    }

    pub fn with_bounds(&self, deg_max: u32, fourier_max: usize) -> Self {
        let mut out = Self::zero(deg_max, fourier_max);
        for (&(a, b), p) in &self.terms {
            out.add_term(a, b, p);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (&(a, b), p) in &other.terms {
            out.add_term(a, b, p);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scaled(-1.0))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = Self::zero(self.deg_max, self.fourier_max);
        if factor != 0.0 {
            for (&k, p) in &self.terms {
                out.terms.insert(k, p.scaled(factor));
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let deg_max = self.deg_max.min(other.deg_max);
        let mut out = Self::zero(deg_max, self.fourier_max.min(other.fourier_max));
        for (&(a1, a2), p) in &self.terms {
            for (&(b1, b2), q) in &other.terms {
                if a1 + a2 + b1 + b2 > deg_max {
                    continue;
                }
                out.add_term(a1 + b1, a2 + b2, &p.mul(q));
            }
        }
        out
    }

    pub fn d_z1(&self) -> Self {
        let mut out = Self::zero(self.deg_max, self.fourier_max);
        for (&(a, b), p) in &self.terms {
            if a > 0 {
                out.add_term(a - 1, b, &p.scaled(a as f64));
            }
        }
        out
    }

    pub fn d_z2(&self) -> Self {
        let mut out = Self::zero(self.deg_max, self.fourier_max);
        for (&(a, b), p) in &self.terms {
            if b > 0 {
                out.add_term(a, b - 1, &p.scaled(b as f64));
            }
        }
        out
    }

    pub fn d_t(&self) -> Self {
        let mut out = Self::zero(self.deg_max, self.fourier_max);
        for (&(a, b), p) in &self.terms {
            out.add_term(a, b, &p.derivative());
        }
        out
    }

    pub fn eval(&self, t: f64, z1: f64, z2: f64) -> f64 {
        self.terms
            .iter()
            .map(|(&(a, b), p)| p.eval(t) * z1.powi(a as i32) * z2.powi(b as i32))
            .sum()
    }

    /// Gradient `(d/dz1, d/dz2)` at a point.
    pub fn gradient(&self, t: f64, z1: f64, z2: f64) -> (f64, f64) {
        let mut g = (0.0, 0.0);
        for (&(a, b), p) in &self.terms {
            let c = p.eval(t);
            if a > 0 {
                g.0 += c * a as f64 * z1.powi(a as i32 - 1) * z2.powi(b as i32);
            }
            if b > 0 {
                g.1 += c * b as f64 * z1.powi(a as i32) * z2.powi(b as i32 - 1);
            }
        }
        g
    }

    /// Plain-text coefficient table, one line per nonzero coefficient:
    /// `i1 i2 k phase value`.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for (&(a, b), p) in &self.terms {
            for k in 0..=self.fourier_max {
                let c = p.cos_coeff(k);
                if c != 0.0 {
                    let _ = writeln!(s, "{a} {b} {k} {} {c:e}", Phase::Cos.label());
                }
                let sn = p.sin_coeff(k);
                if k > 0 && sn != 0.0 {
                    let _ = writeln!(s, "{a} {b} {k} {} {sn:e}", Phase::Sin.label());
                }
            }
        }
        s
    }

    pub fn from_table(text: &str, deg_max: u32, fourier_max: usize) -> Result<Self, NfError> {
        let mut out = Self::zero(deg_max, fourier_max);
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| NfError::Parse {
                line: lineno + 1,
                message: what.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(bad("expected 5 fields: i1 i2 k phase value"));
            }
            let i1: u32 = fields[0].parse().map_err(|_| bad("bad i1"))?;
            let i2: u32 = fields[1].parse().map_err(|_| bad("bad i2"))?;
            let k: usize = fields[2].parse().map_err(|_| bad("bad k"))?;
            let phase = match fields[3] {
                "cos" => Phase::Cos,
                "sin" => Phase::Sin,
                _ => return Err(bad("phase must be cos or sin")),
            };
            let v: f64 = fields[4].parse().map_err(|_| bad("bad value"))?;
            if i1 + i2 > deg_max || k > fourier_max || (phase == Phase::Sin && k == 0) {
                return Err(bad("coefficient outside the truncation bounds"));
            }
            out.add_coeff(i1, i2, k, phase, v);
        }
        Ok(out)
    }
}

/// `d1 A d2 B - d2 A d1 B`, truncated to the smaller degree bound.
pub fn poisson(a: &TrigTaylorSeries, b: &TrigTaylorSeries) -> TrigTaylorSeries {
    a.d_z1().mul(&b.d_z2()).sub(&a.d_z2().mul(&b.d_z1()))
}
