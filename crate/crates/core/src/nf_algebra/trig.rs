//! Real trigonometric polynomials of period one.

use std::f64::consts::PI;

/// `c_0 + sum_k (c_k cos(2 pi k t) + s_k sin(2 pi k t))` for `k <= max_mode`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPoly {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl TrigPoly {
    pub fn zero(max_mode: usize) -> Self {
        Self {
            cos: vec![0.0; max_mode + 1],
            sin: vec![0.0; max_mode + 1],
        }
    }

    pub fn constant(value: f64, max_mode: usize) -> Self {
        let mut p = Self::zero(max_mode);
        p.cos[0] = value;
        p
    }

    /// Builds from explicit coefficient slices; missing entries are zero,
    /// entries beyond `max_mode` are dropped, and `sin[0]` is ignored.
    pub fn from_coeffs(cos: &[f64], sin: &[f64], max_mode: usize) -> Self {
        let mut p = Self::zero(max_mode);
        for (k, &c) in cos.iter().enumerate().take(max_mode + 1) {
            p.cos[k] = c;
        }
        for (k, &s) in sin.iter().enumerate().take(max_mode + 1).skip(1) {
            p.sin[k] = s;
        }
        p
    }

    pub fn max_mode(&self) -> usize {
        self.cos.len() - 1
    }

    pub fn cos_coeff(&self, k: usize) -> f64 {
        self.cos.get(k).copied().unwrap_or(0.0)
    }

    pub fn sin_coeff(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.sin.get(k).copied().unwrap_or(0.0)
        }
    }

    pub fn set_cos(&mut self, k: usize, v: f64) {
        self.cos[k] = v;
    }

    pub fn set_sin(&mut self, k: usize, v: f64) {
        assert!(k > 0, "sin mode 0 does not exist");
        self.sin[k] = v;
    }

    pub fn mean(&self) -> f64 {
        self.cos[0]
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = self.cos[0];
        for k in 1..self.cos.len() {
            let (s, c) = (2.0 * PI * k as f64 * t).sin_cos();
            acc += self.cos[k] * c + self.sin[k] * s;
        }
        acc
    }

    pub fn derivative(&self) -> Self {
        let mut d = Self::zero(self.max_mode());
        for k in 1..self.cos.len() {
            let w = 2.0 * PI * k as f64;
            d.cos[k] = w * self.sin[k];
            d.sin[k] = -w * self.cos[k];
        }
        d
    }

    pub fn is_zero(&self) -> bool {
        self.cos.iter().chain(self.sin.iter()).all(|&c| c == 0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.cos[1..].iter().chain(self.sin[1..].iter()).all(|&c| c == 0.0)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.cos
            .iter()
            .chain(self.sin.iter())
            .fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    /// Copy with a different mode bound (truncating or zero padding).
    pub fn with_max_mode(&self, max_mode: usize) -> Self {
        Self::from_coeffs(&self.cos, &self.sin, max_mode)
    }

    pub fn add_assign_scaled(&mut self, other: &TrigPoly, factor: f64) {
        let n = self.cos.len().min(other.cos.len());
        for k in 0..n {
            self.cos[k] += factor * other.cos[k];
            self.sin[k] += factor * other.sin[k];
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            cos: self.cos.iter().map(|c| c * factor).collect(),
            sin: self.sin.iter().map(|s| s * factor).collect(),
        }
    }

    /// Product truncated to `self.max_mode()`.
    pub fn mul(&self, other: &TrigPoly) -> Self {
        let kmax = self.max_mode();
        let mut out = Self::zero(kmax);
        let add_cos = |out: &mut Self, m: i64, v: f64| {
            let m = m.unsigned_abs() as usize;
            if m <= kmax {
                out.cos[m] += v;
            }
        };
        let add_sin = |out: &mut Self, m: i64, v: f64| {
            if m == 0 {
                return;
            }
            let (idx, sign) = if m < 0 { ((-m) as usize, -1.0) } else { (m as usize, 1.0) };
            if idx <= kmax {
                out.sin[idx] += sign * v;
            }
        };
        for a in 0..self.cos.len() {
            let (ca, sa) = (self.cos[a], self.sin[a]);
            if ca == 0.0 && sa == 0.0 {
                continue;
            }
            for b in 0..other.cos.len() {
                let (cb, sb) = (other.cos[b], other.sin[b]);
                if cb == 0.0 && sb == 0.0 {
                    continue;
                }
                let (ai, bi) = (a as i64, b as i64);
                if ca != 0.0 && cb != 0.0 {
                    add_cos(&mut out, ai - bi, 0.5 * ca * cb);
                    add_cos(&mut out, ai + bi, 0.5 * ca * cb);
                }
                if sa != 0.0 && sb != 0.0 {
                    add_cos(&mut out, ai - bi, 0.5 * sa * sb);
                    add_cos(&mut out, ai + bi, -0.5 * sa * sb);
                }
                if sa != 0.0 && cb != 0.0 {
                    add_sin(&mut out, ai + bi, 0.5 * sa * cb);
                    add_sin(&mut out, ai - bi, 0.5 * sa * cb);
                }
                if ca != 0.0 && sb != 0.0 {
                    add_sin(&mut out, ai + bi, 0.5 * ca * sb);
                    add_sin(&mut out, bi - ai, 0.5 * ca * sb);
                }
            }
        }
        out
    }

    /// Sup norm estimated on a uniform grid of `n` points.
    pub fn sup_on_grid(&self, n: usize) -> f64 {
        (0..n)
            .map(|i| self.eval(i as f64 / n as f64).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_pointwise() {
        let a = TrigPoly::from_coeffs(&[0.3, 1.0, -0.2], &[0.0, 0.5, 0.7], 8);
        let b = TrigPoly::from_coeffs(&[1.1, 0.0, 0.4], &[0.0, -0.9, 0.1], 8);
        let p = a.mul(&b);
        for i in 0..17 {
            let t = i as f64 / 17.0 + 0.013;
            assert!((p.eval(t) - a.eval(t) * b.eval(t)).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let a = TrigPoly::from_coeffs(&[0.0, 1.0, 0.2], &[0.0, 0.5, -0.3], 4);
        let d = a.derivative();
        let h = 1e-6;
        for i in 0..10 {
            let t = 0.1 * i as f64;
            let fd = (a.eval(t + h) - a.eval(t - h)) / (2.0 * h);
            assert!((d.eval(t) - fd).abs() < 1e-6);
        }
    }
}
