//! `f_pert = h^{-1} o g_M o T_1 o h` on `f^{-1}` of the fundamental domain,
//! `f` elsewhere.

use super::{GMap, ModelError, ModelFamily, State};
use crate::charts_flows::PlanePoint;

#[derive(Debug, Clone)]
pub struct FPert {
    pub model: ModelFamily,
    pub gmap: GMap,
    pub x_star: f64,
}

/// Requires a linear `q`: the normalizing chart `h` then has constant
/// Jacobian and the conjugated map stays area preserving.
pub fn build_fpert(m: &ModelFamily, gmap: GMap, x_star: f64) -> Result<FPert, ModelError> {
    if !m.q.higher.is_empty() {
        return Err(ModelError::Invalid("f_pert needs q(s) = lambda s".into()));
    }
    let reach = x_star * m.lambda().exp();
    if reach.hypot(gmap.c / reach) >= m.glue.r_exact || x_star <= 0.0 {
        return Err(ModelError::Invalid(format!(
            "f^-1 of the fundamental domain leaves the exact region (x* = {x_star})"
        )));
    }
    Ok(FPert {
        model: m.with_epsilon(0.0),
        gmap,
        x_star,
    })
}

impl FPert {
    fn h(&self, p: PlanePoint) -> Option<(f64, f64)> {
        if !(p.x > 0.0) {
            return None;
        }
        let v = p.x * p.y;
        Some(((self.x_star.ln() - p.x.ln()) / self.model.lambda(), v))
    }

    fn h_inv(&self, big_x: f64, v: f64) -> PlanePoint {
        let x = self.x_star * (-self.model.lambda() * big_x).exp();
        PlanePoint::new(x, v / x)
    }

    /// True when `p` lies where `f_pert` differs from `f`.
    pub fn in_support(&self, p: PlanePoint) -> bool {
        match self.h(p) {
            Some((bx, v)) => (-1.0..0.0).contains(&bx) && v.abs() < self.gmap.c && p.norm() < self.model.glue.r_exact,
            None => false,
        }
    }

    pub fn apply(&self, p: PlanePoint) -> Result<PlanePoint, ModelError> {
        Ok(self.step_state(self.model.state(p))?.p)
    }

    /// One step carrying the tracked energy, which keeps small fibers
    /// accurate away from the exact region.
    pub fn step_state(&self, st: State) -> Result<State, ModelError> {
        if !self.in_support(st.p) {
            return Ok(self.model.step_state(st)?);
        }
        let (bx, v) = self.h(st.p).ok_or(ModelError::Chart { x: st.p.x, y: st.p.y })?;
        let g = self.gmap.apply(PlanePoint::new(bx + 1.0, v))?;
        let p = self.h_inv(g.x, g.y);
        Ok(State {
            p,
            energy: self.model.q.q(g.y),
        })
    }

    pub fn orbit(&self, p: PlanePoint, n: usize) -> Result<Vec<PlanePoint>, ModelError> {
        let mut out = vec![p];
        let mut st = self.model.state(p);
        for _ in 0..n {
            st = self.step_state(st)?;
            out.push(st.p);
        }
        Ok(out)
    }
}
