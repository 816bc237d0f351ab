//! The hyperbolic water field and the pump fields built from it and the racetrack.
//!
//! Points of `R^4` are split as `(u, v)` with `u = (w, x)` carrying the water
//! and `v = (y, z)` carrying the runners.

use std::sync::Arc;

use crate::error::Result;
use crate::interval::{box_cutoff_s, zeta_i_s, SymInterval};
use crate::quad::integrate;
use crate::racetrack::Racetrack;
use crate::scalar::Scalar;

/// `H_0(w, x) = (w, -x)`.
pub fn h0_s<S: Scalar>(u: &[S]) -> Vec<S> {
    vec![u[0].clone(), -u[1].clone()]
}

/// The flat speed factor `exp(-1/r^2) / (1 + r^2)`.
pub fn c0_s<S: Scalar>(u: &[S]) -> S {
    let r2 = u[0].square() + u[1].square();
    r2.flat_exp() / (r2 + 1.0)
}

/// `H = c_0 H_0`.
pub fn h_s<S: Scalar>(u: &[S]) -> Vec<S> {
    let c = c0_s(u);
    vec![c.clone() * u[0].clone(), -(c * u[1].clone())]
}

/// Exact flow of `H_0`.
pub fn h0_flow(u: [f64; 2], t: f64) -> [f64; 2] {
    [u[0] * t.exp(), u[1] * (-t).exp()]
}

/// `alpha(y, z) = 1 - zeta_{3I_0}(y) zeta_{3I_0}(z)`.
pub fn alpha_s<S: Scalar>(v: &[S]) -> S {
    -(zeta_i_s(3.0, &v[0]) * zeta_i_s(3.0, &v[1])) + 1.0
}

/// The 100/200 cutoff.
pub fn beta_s<S: Scalar>(p: &[S]) -> S {
    box_cutoff_s(100.0, 200.0, p)
}

/// The 300/400 cutoff.
pub fn gamma_s<S: Scalar>(p: &[S]) -> S {
    box_cutoff_s(300.0, 400.0, p)
}

/// Which stage of the pump construction to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PumpStage {
    Star,
    Plus,
    Full,
}

/// The three pump fields and their bookkeeping for a given racetrack period.
#[derive(Clone, Debug)]
pub struct PumpBundle {
    pub racetrack: Arc<Racetrack>,
    pub j0: SymInterval,
    pub k0: SymInterval,
    pub m: u32,
    /// H-time the water advances during one lap.
    pub t_times: f64,
}

impl PumpBundle {
    pub fn new(m: u32) -> Result<Self> {
        let racetrack = Arc::new(Racetrack::new(m)?);
        Self::with_racetrack(racetrack)
    }

    pub fn with_racetrack(racetrack: Arc<Racetrack>) -> Result<Self> {
        let m = racetrack.period();
        let idle = integrate(|t| zeta_i_s(3.0, &t), -4.0, 4.0, &[-3.0, 3.0], 1e-14)?;
        Ok(PumpBundle {
            racetrack,
            j0: SymInterval::units(200),
            k0: SymInterval::units(400),
            m,
            t_times: m as f64 - idle,
        })
    }

    fn star_s<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let a = alpha_s(&p[2..4]);
        let h = h_s(&p[0..2]);
        let q = self.racetrack.eval_s(&p[2..4]);
        vec![a.clone() * h[0].clone(), a * h[1].clone(), q[0].clone(), q[1].clone()]
    }

    fn plus_s<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let b = beta_s(p);
        let h = h_s(&p[0..2]);
        let zero = p[0].cst(0.0);
        let one = p[0].cst(1.0);
        if is_const_zero(&b) {
            return vec![h[0].clone(), h[1].clone(), zero, one];
        }
        let star = self.star_s(p);
        if is_const_one(&b) {
            return star;
        }
        let nb = -b.clone() + 1.0;
        let x = [h[0].clone(), h[1].clone(), zero, one];
        star.into_iter().zip(x).map(|(s, x)| b.clone() * s + nb.clone() * x).collect()
    }

    /// Evaluates one of the pump fields.
    pub fn eval_s<S: Scalar>(&self, stage: PumpStage, p: &[S]) -> Vec<S> {
        match stage {
            PumpStage::Star => self.star_s(p),
            PumpStage::Plus => self.plus_s(p),
            PumpStage::Full => {
                let g = gamma_s(p);
                if is_const_zero(&g) {
                    let zero = p[0].cst(0.0);
                    return vec![zero.clone(), zero.clone(), zero, p[0].cst(1.0)];
                }
                let plus = self.plus_s(p);
                if is_const_one(&g) {
                    return plus;
                }
                let ng = -g.clone() + 1.0;
                let v0 = [0.0, 0.0, 0.0, 1.0];
                plus.into_iter().zip(v0).map(|(a, b)| g.clone() * a + ng.clone() * b).collect()
            }
        }
    }

    pub fn eval(&self, stage: PumpStage, p: &[f64]) -> Vec<f64> {
        self.eval_s(stage, p)
    }

    /// Water throttle: the first block of `P_0` equals `omega * H(u)`.
    pub fn omega_s<S: Scalar>(&self, p: &[S]) -> S {
        let g = gamma_s(p);
        let b = beta_s(p);
        let a = alpha_s(&p[2..4]);
        g * (a * b.clone() - b + 1.0)
    }

    pub fn omega(&self, p: &[f64]) -> f64 {
        self.omega_s(p)
    }

    /// Step-size hint for the pump at `p`.
    pub fn step_scale(&self, p: &[f64]) -> f64 {
        let v_inf = p[2].abs().max(p[3].abs());
        let r = p[0].hypot(p[1]);
        if v_inf < 52.0 {
            return 1.0;
        }
        // Away from the racetrack the field is a product of slowly varying cutoffs
        // and the water field, whose own scale grows with the radius.
        (0.5 * r).clamp(1.0, 25.0)
    }
}

// Cutoffs return exact constants (0 or 1, with no higher coefficients) in their flat regions.
fn is_const_one<S: Scalar>(s: &S) -> bool {
    s.value() == 1.0 && s.is_constant()
}

fn is_const_zero<S: Scalar>(s: &S) -> bool {
    s.value() == 0.0 && s.is_constant()
}
