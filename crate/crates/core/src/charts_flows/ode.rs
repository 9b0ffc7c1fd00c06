//! Gragg-Bulirsch-Stoer extrapolation on a fixed time span.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("trajectory left the bounding box (|state| = {norm:e} at t = {t})")]
    Escape { t: f64, norm: f64 },
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

const SEQUENCE: [usize; 6] = [2, 4, 6, 8, 10, 12];

/// Extrapolated modified-midpoint integrator. A macro step is accepted when
/// two consecutive diagonal entries of the Neville table agree to
/// `atol + rtol |y|` componentwise; otherwise the step is halved.
#[derive(Debug, Clone, Copy)]
pub struct Gbs {
    pub rtol: f64,
    pub atol: f64,
    /// Initial number of macro steps across the span.
    pub initial_steps: usize,
}

impl Gbs {
    pub fn new(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            initial_steps: 1,
        }
    }

    pub fn with_atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }

    pub fn with_initial_steps(mut self, n: usize) -> Self {
        self.initial_steps = n.max(1);
        self
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t1`. Components above `bound`
    /// in absolute value abort with [`OdeError::Escape`].
    pub fn integrate<const N: usize, F>(
        &self,
        f: F,
        t0: f64,
        y0: [f64; N],
        t1: f64,
        bound: f64,
    ) -> Result<[f64; N], OdeError>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let span = t1 - t0;
        if span == 0.0 {
            return Ok(y0);
        }
        let mut t = t0;
        let mut y = y0;
        let mut h = span / self.initial_steps as f64;
        let h_min = span.abs() * 1e-12;
        while (t1 - t).abs() > 1e-15 * span.abs() {
            if (t + h - t1) * span.signum() > 0.0 {
                h = t1 - t;
            }
            match self.step(&f, t, &y, h) {
                Some((y_new, fast)) => {
                    for v in &y_new {
                        if !v.is_finite() {
                            return Err(OdeError::NonFinite { t: t + h });
                        }
                    }
                    let norm = y_new.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    if norm > bound {
                        return Err(OdeError::Escape { t: t + h, norm });
                    }
                    t += h;
                    y = y_new;
                    if fast {
                        h *= 2.0;
                    }
                }
                None => {
                    h *= 0.5;
                    if h.abs() < h_min {
                        return Err(OdeError::StepUnderflow { t, h });
                    }
                }
            }
        }
        Ok(y)
    }

    /// One extrapolated step; returns the state and whether it converged
    /// early enough to try a longer step next.
    fn step<const N: usize, F>(&self, f: &F, t: f64, y: &[f64; N], h: f64) -> Option<([f64; N], bool)>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let mut table: [[f64; N]; SEQUENCE.len()] = [[0.0; N]; SEQUENCE.len()];
        let f0 = f(t, y);
        let mut prev_diag = [0.0; N];
        for (j, &n) in SEQUENCE.iter().enumerate() {
            let mut row = midpoint(f, t, y, &f0, h, n);
            if !row.iter().all(|v| v.is_finite()) {
                return None;
            }
            // Neville extrapolation in h^2, overwriting in place
            for k in 1..=j {
                let ratio = (n as f64 / SEQUENCE[j - k] as f64).powi(2) - 1.0;
                for i in 0..N {
                    let prev = table[k - 1][i];
                    let cur = row[i];
                    table[k - 1][i] = cur;
                    row[i] = cur + (cur - prev) / ratio;
                }
            }
            table[j] = row;
            if j >= 3 {
                // table[j - 1] now holds the subdiagonal entry of this row
                let mut err: f64 = 0.0;
                for i in 0..N {
                    let scale = self.atol + self.rtol * row[i].abs();
                    let d = (row[i] - table[j - 1][i]).abs().max((row[i] - prev_diag[i]).abs());
                    err = err.max(d / scale);
                }
                if err <= 1.0 {
                    return Some((row, j <= 3));
                }
            }
            prev_diag = row;
        }
        None
    }
}

fn midpoint<const N: usize, F>(f: &F, t: f64, y: &[f64; N], f0: &[f64; N], big_h: f64, n: usize) -> [f64; N]
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let h = big_h / n as f64;
    let mut z0 = *y;
    let mut z1 = [0.0; N];
    for i in 0..N {
        z1[i] = y[i] + h * f0[i];
    }
    for m in 1..n {
        let fm = f(t + m as f64 * h, &z1);
        let mut z2 = [0.0; N];
        for i in 0..N {
            z2[i] = z0[i] + 2.0 * h * fm[i];
        }
        z0 = z1;
        z1 = z2;
    }
    let fe = f(t + big_h, &z1);
    let mut out = [0.0; N];
    for i in 0..N {
        out[i] = 0.5 * (z1[i] + z0[i] + h * fe[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let g = Gbs::new(1e-13);
        let y = g.integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 3.0, 10.0).unwrap();
        assert!((y[0] - (-3.0f64).exp()).abs() < 1e-12, "{:e}", y[0] - (-3.0f64).exp());
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let g = Gbs::new(1e-13);
        let f = |_: f64, y: &[f64; 2]| [y[1], -y[0].sin()];
        let a = g.integrate(f, 0.0, [1.0, 0.2], 1.0, 10.0).unwrap();
        let b = g.integrate(f, 1.0, a, 0.0, 10.0).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-11 && (b[1] - 0.2).abs() < 1e-11);
    }

    #[test]
    fn escape_is_reported() {
        let g = Gbs::new(1e-10);
        let r = g.integrate(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0, 1e3);
        assert!(r.is_err());
    }
}
