//! Real trigonometric interpolation on a uniform grid.

use std::f64::consts::TAU;

/// Complex coefficients `c_k`, `k = 0..=modes`, of a real 1-periodic
/// function `f(t) = c_0 + 2 Re sum_{k>=1} c_k e^{2 pi i k t}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Spectrum {
    pub fn zeros(modes: usize) -> Self {
        Self {
            re: vec![0.0; modes + 1],
            im: vec![0.0; modes + 1],
        }
    }

    pub fn constant(modes: usize, c: f64) -> Self {
        let mut s = Self::zeros(modes);
        s.re[0] = c;
        s
    }

    pub fn modes(&self) -> usize {
        self.re.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.re[0]
    }

    pub fn eval(&self, t: f64) -> f64 {
        let mut acc = self.re[0];
        for k in 1..self.re.len() {
            let (s, c) = (TAU * k as f64 * t).sin_cos();
            acc += 2.0 * (self.re[k] * c - self.im[k] * s);
        }
        acc
    }

    pub fn eval_deriv(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.re.len() {
            let w = TAU * k as f64;
            let (s, c) = (w * t).sin_cos();
            acc += 2.0 * w * (-self.re[k] * s - self.im[k] * c);
        }
        acc
    }

    /// Spectrum of `t -> f(t + omega)`.
    pub fn shifted(&self, omega: f64) -> Self {
        let mut out = self.clone();
        for k in 1..self.re.len() {
            let (s, c) = (TAU * k as f64 * omega).sin_cos();
            out.re[k] = self.re[k] * c - self.im[k] * s;
            out.im[k] = self.re[k] * s + self.im[k] * c;
        }
        out
    }

    pub fn add_assign(&mut self, other: &Spectrum) {
        for k in 0..self.re.len().min(other.re.len()) {
            self.re[k] += other.re[k];
            self.im[k] += other.im[k];
        }
    }

    /// Largest `|c_k|` over `k >= 1`.
    pub fn max_nonconstant(&self) -> f64 {
        (1..self.re.len())
            .map(|k| self.re[k].hypot(self.im[k]))
            .fold(0.0, f64::max)
    }
}

/// Grid of `m` points with precomputed twiddles for `modes <= m / 2 - 1`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub m: usize,
    pub modes: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Grid {
    pub fn new(m: usize, modes: usize) -> Self {
        assert!(2 * modes < m, "need 2 * modes < grid size");
        let cos = (0..m).map(|j| (TAU * j as f64 / m as f64).cos()).collect();
        let sin = (0..m).map(|j| (TAU * j as f64 / m as f64).sin()).collect();
        Self { m, modes, cos, sin }
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 / self.m as f64
    }

    pub fn analyze(&self, values: &[f64]) -> Spectrum {
        let mut s = Spectrum::zeros(self.modes);
        let inv = 1.0 / self.m as f64;
        for k in 0..=self.modes {
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, &v) in values.iter().enumerate() {
                let idx = (k * j) % self.m;
                re += v * self.cos[idx];
                im -= v * self.sin[idx];
            }
            s.re[k] = re * inv;
            s.im[k] = im * inv;
        }
        s
    }

    pub fn synthesize(&self, s: &Spectrum) -> Vec<f64> {
        (0..self.m)
            .map(|j| {
                let mut acc = s.re[0];
                for k in 1..s.re.len() {
                    let idx = (k * j) % self.m;
                    acc += 2.0 * (s.re[k] * self.cos[idx] - s.im[k] * self.sin[idx]);
                }
                acc
            })
            .collect()
    }
}
