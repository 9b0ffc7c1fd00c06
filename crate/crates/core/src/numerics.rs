//! Quadrature, scalar root finding and Chebyshev tables shared by the
//! dynamical modules.

// 16-point Gauss-Legendre, positive half of the nodes on [-1, 1]
const GL_X: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_7,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL_W: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_8,
    0.062_253_523_938_647_9,
    0.027_152_459_411_754_1,
];

/// 16-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss16(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL_X.iter().zip(GL_W.iter()) {
        acc += w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

/// Composite 16-point rule over `pieces` equal panels.
pub fn gauss16_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize) -> f64 {
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| gauss16(&f, a + i as f64 * h, a + (i + 1) as f64 * h))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("root not bracketed on [{lo}, {hi}] (values {flo:e}, {fhi:e})")]
pub struct BracketError {
    pub lo: f64,
    pub hi: f64,
    pub flo: f64,
    pub fhi: f64,
}

/// Safeguarded Newton on a bracketing interval; falls back to bisection
/// whenever the Newton iterate leaves the bracket.
pub fn newton_bisect(
    f: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64, BracketError> {
    let (flo, _) = f(lo);
    let (fhi, _) = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(BracketError { lo, hi, flo, fhi });
    }
    let rising = fhi > 0.0;
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx > 0.0) == rising {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= tol || hi - lo <= tol {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Plain bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64, BracketError> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(BracketError { lo, hi, flo, fhi });
    }
    let lo_sign = flo.signum();
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Chebyshev interpolant on `[a, b]` built from values at the
/// Chebyshev-Gauss-Lobatto points.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ChebTable {
    pub a: f64,
    pub b: f64,
    pub coeffs: Vec<f64>,
}

impl ChebTable {
    /// Lobatto nodes `x_j = mid + half cos(pi j / n)`, `j = 0..=n`.
    pub fn nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        (0..=n)
            .map(|j| mid + half * (std::f64::consts::PI * j as f64 / n as f64).cos())
            .collect()
    }

    pub fn from_values(a: f64, b: f64, values: &[f64]) -> Self {
        let n = values.len() - 1;
        let mut coeffs = vec![0.0; n + 1];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, v) in values.iter().enumerate() {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                acc += w * v * (std::f64::consts::PI * (j * k) as f64 / n as f64).cos();
            }
            let scale = if k == 0 || k == n { 1.0 } else { 2.0 };
            *c = acc * scale / n as f64;
        }
        Self { a, b, coeffs }
    }

    pub fn build(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let values: Vec<f64> = Self::nodes(a, b, n).into_iter().map(f).collect();
        Self::from_values(a, b, &values)
    }

    fn local(&self, x: f64) -> f64 {
        (2.0 * x - self.a - self.b) / (self.b - self.a)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let s = self.local(x);
        // Clenshaw
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * s * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + s * b1 - b2
    }

    pub fn derivative(&self) -> Self {
        let n = self.coeffs.len() - 1;
        if n == 0 {
            return Self { a: self.a, b: self.b, coeffs: vec![0.0] };
        }
        let mut d = vec![0.0; n + 1];
        for k in (1..=n).rev() {
            let next = if k + 1 <= n { d[k + 1] } else { 0.0 };
            d[k - 1] = next + 2.0 * k as f64 * self.coeffs[k];
        }
        d[0] *= 0.5;
        d.truncate(n);
        let scale = 2.0 / (self.b - self.a);
        for c in &mut d {
            *c *= scale;
        }
        Self { a: self.a, b: self.b, coeffs: d }
    }

    /// Magnitude of the trailing coefficients, a proxy for the table error.
    pub fn tail(&self) -> f64 {
        let n = self.coeffs.len();
        self.coeffs[n.saturating_sub(3)..]
            .iter()
            .fold(0.0, |m, c| m.max(c.abs()))
    }
}
