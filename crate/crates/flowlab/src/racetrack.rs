//! A planar field whose orbits on an open annulus all have the same period.
//!
//! The annulus is foliated by nested rounded rectangles, the level sets of
//!
//! ```text
//! F(x, z) = smin(smin(x, 14 - x), smin(60 - 4z, 60 + 4z))
//! ```
//!
//! where `smin` is a smooth minimum with blending width 1. The level `F = y`
//! has its left side on the vertical line `x = y`, its right side on
//! `x = 14 - y`, and its top and bottom on `z = +-(60 - y)/4`. The field moves
//! clockwise along each level set at unit speed while `|z| <= 12.5` and is
//! slowed down elsewhere by a per-loop constant chosen so that every lap takes
//! exactly `m`. Outside a thin band around the annulus it is the constant
//! field `(0, 1)`.
//!
//! The smooth minimum is built from an even polynomial `M` on `[-1, 1]` with
//! `M'' = c (1 - u^2)^6`, matched to `|u|/2` outside, so `Q` is `C^6`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interval::zeta_s;
use crate::quad::integrate;
use crate::scalar::Scalar;

/// Blending width of the smooth minimum.
const DELTA: f64 = 1.0;
/// Loops with `|F| < ANNULUS` form the invariant region.
pub const ANNULUS: f64 = 4.0;
/// Outer edge of the band where the loop field is blended into `(0, 1)`.
const BLEND_EDGE: f64 = 4.5;
/// Unit speed holds for `|z| <= FAST_Z`; the slowdown is fully on beyond `FAST_Z + 1`.
const FAST_Z: f64 = 12.5;
/// Period of the unslowed part of every loop: twice `2 * FAST_Z + 1`.
const FAST_LEN: f64 = 52.0;

/// Coefficients of the smooth-minimum kernel.
#[derive(Clone, Debug)]
struct Kernel {
    // M(u) = m0 + sum_k a_k u^(2k+2),  M'(u) = sum_k b_k u^(2k+1)
    m0: f64,
    a: [f64; 7],
    b: [f64; 7],
}

impl Kernel {
    fn new() -> Self {
        let binom = [1.0, 6.0, 15.0, 20.0, 15.0, 6.0, 1.0];
        // c * int_{-1}^{1} (1-u^2)^6 du = 1 so that M'(1) - M'(-1) = 1.
        let mut int = 0.0;
        for k in 0..7 {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            int += s * binom[k] * 2.0 / (2 * k + 1) as f64;
        }
        let c = 1.0 / int;
        let mut a = [0.0; 7];
        let mut b = [0.0; 7];
        for k in 0..7 {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            b[k] = c * s * binom[k] / (2 * k + 1) as f64;
            a[k] = b[k] / (2 * k + 2) as f64;
        }
        let m1: f64 = a.iter().sum();
        Kernel { m0: 0.5 - m1, a, b }
    }

    /// `(M(u), M'(u))`.
    fn eval<S: Scalar>(&self, u: &S) -> (S, S) {
        let v = u.value();
        if v >= 1.0 {
            return (u.clone() * 0.5, u.cst(0.5));
        }
        if v <= -1.0 {
            return (-u.clone() * 0.5, u.cst(-0.5));
        }
        let u2 = u.square();
        let mut m = u.cst(self.a[6]);
        let mut dm = u.cst(self.b[6]);
        for k in (0..6).rev() {
            m = m * u2.clone() + self.a[k];
            dm = dm * u2.clone() + self.b[k];
        }
        (m * u2 + self.m0, dm * u.clone())
    }

    fn eval_f64(&self, u: f64) -> (f64, f64) {
        self.eval(&u)
    }
}

/// Value and gradient of a function on the plane.
#[derive(Clone, Debug)]
struct Vg<S> {
    v: S,
    g: [S; 2],
}

fn smin<S: Scalar>(k: &Kernel, a: Vg<S>, b: Vg<S>) -> Vg<S> {
    let d = a.v.value() - b.v.value();
    // Outside the blending layer the smooth minimum is the minimum itself.
    if d >= DELTA {
        return b;
    }
    if d <= -DELTA {
        return a;
    }
    let u = (a.v.clone() - b.v.clone()) * (1.0 / DELTA);
    let (m, dm) = k.eval(&u);
    let v = (a.v + b.v) * 0.5 - m * DELTA;
    let wa = -dm.clone() + 0.5;
    let wb = dm + 0.5;
    let g = [
        wa.clone() * a.g[0].clone() + wb.clone() * b.g[0].clone(),
        wa * a.g[1].clone() + wb * b.g[1].clone(),
    ];
    Vg { v, g }
}

/// The racetrack: loop family, lap period and the planar field.
#[derive(Clone, Debug)]
pub struct Racetrack {
    m: u32,
    kernel: Arc<Kernel>,
    corner: f64,
}

impl Racetrack {
    /// Builds the racetrack with integer period `m`.
    pub fn new(m: u32) -> Result<Self> {
        let kernel = Kernel::new();
        let corner = integrate(
            |u| {
                let (_, dm) = kernel.eval_f64(u);
                let p = DELTA * (dm + 0.5);
                let q = DELTA * (dm - 0.5);
                (p * p + q * q / 16.0).sqrt()
            },
            -1.0,
            1.0,
            &[0.0],
            1e-14,
        )?;
        let rt = Racetrack { m, kernel: Arc::new(kernel), corner };
        let need = rt.perimeter(-BLEND_EDGE);
        if (m as f64) < need || m <= 24 {
            return Err(Error::Invalid(format!(
                "racetrack period {m} infeasible: the longest loop needs at least {need:.6} at unit speed"
            )));
        }
        Ok(rt)
    }

    pub fn period(&self) -> u32 {
        self.m
    }

    /// Smallest integer period this geometry accepts.
    pub fn min_period() -> u32 {
        let probe = Racetrack { m: 0, kernel: Arc::new(Kernel::new()), corner: 0.0 };
        let corner = integrate(
            |u| {
                let (_, dm) = probe.kernel.eval_f64(u);
                let p = DELTA * (dm + 0.5);
                let q = DELTA * (dm - 0.5);
                (p * p + q * q / 16.0).sqrt()
            },
            -1.0,
            1.0,
            &[0.0],
            1e-14,
        )
        .expect("corner quadrature");
        let probe = Racetrack { corner, ..probe };
        (probe.perimeter(-BLEND_EDGE).ceil() as u32).max(25)
    }

    /// Length of the loop `F = y`.
    pub fn perimeter(&self, y: f64) -> f64 {
        88.0 - 5.0 * y - 5.0 * DELTA + 4.0 * self.corner
    }

    /// Slowdown coefficient of loop `y` (generic so it can be differentiated).
    fn slowdown<S: Scalar>(&self, y: &S) -> S {
        let c = 88.0 - 5.0 * DELTA + 4.0 * self.corner;
        let len = -(y.clone() * 5.0) + c;
        (-len.clone() + self.m as f64) / (len - FAST_LEN)
    }

    fn level<S: Scalar>(&self, p: &[S]) -> Vg<S> {
        let one = p[0].cst(1.0);
        let zero = p[0].cst(0.0);
        let left = Vg { v: p[0].clone(), g: [one.clone(), zero.clone()] };
        let right = Vg { v: -p[0].clone() + 14.0, g: [-one.clone(), zero.clone()] };
        let top = Vg { v: -(p[1].clone() * 4.0) + 60.0, g: [zero.clone(), one.cst(-4.0)] };
        let bottom = Vg { v: p[1].clone() * 4.0 + 60.0, g: [zero, one.cst(4.0)] };
        let lr = smin(&self.kernel, left, right);
        let tb = smin(&self.kernel, top, bottom);
        smin(&self.kernel, lr, tb)
    }

    /// The loop label `F(p)`.
    pub fn loop_label(&self, p: &[f64]) -> f64 {
        self.level(p).v
    }

    /// Membership in the invariant annulus.
    pub fn in_region(&self, p: &[f64]) -> bool {
        self.loop_label(p).abs() < ANNULUS
    }

    /// Membership in the straightaway `(-4, 4) x (-12, 12)`.
    pub fn in_straight(p: &[f64]) -> bool {
        p[0].abs() < 4.0 && p[1].abs() < 12.0
    }

    /// The planar field.
    pub fn eval_s<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let zero = p[0].cst(0.0);
        let one = p[0].cst(1.0);
        if p[0].value().abs() >= 50.0 || p[1].value().abs() >= 50.0 {
            return vec![zero, one];
        }
        let f = self.level(p);
        let fv = f.v.value().abs();
        if fv >= BLEND_EDGE {
            return vec![zero, one];
        }
        let chi = zeta_s(&((f.v.abs() - ANNULUS) * (1.0 / (BLEND_EDGE - ANNULUS))));
        let norm = (f.g[0].square() + f.g[1].square()).sqrt();
        let slow = -zeta_s(&(p[1].abs() - FAST_Z)) + 1.0;
        let speed = (self.slowdown(&f.v) * slow + 1.0).recip();
        let scale = speed / norm;
        let t0 = -f.g[1].clone() * scale.clone();
        let t1 = f.g[0].clone() * scale;
        let keep = -chi.clone() + 1.0;
        vec![chi.clone() * t0, chi * t1 + keep]
    }

    pub fn eval(&self, p: &[f64]) -> [f64; 2] {
        let v = self.eval_s(p);
        [v[0], v[1]]
    }

    /// Point of loop `y` on its left side at height `z` (valid for `|z| <= 13.5`).
    pub fn left_point(y: f64, z: f64) -> [f64; 2] {
        [y, z]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_matches_abs_at_edges() {
        let k = Kernel::new();
        let (m, dm) = k.eval_f64(1.0 - 1e-12);
        assert!((m - 0.5).abs() < 1e-10 && (dm - 0.5).abs() < 1e-10);
        let (m0, dm0) = k.eval_f64(0.0);
        assert!(m0 > 0.0 && dm0 == 0.0);
    }

    #[test]
    fn straight_is_constant() {
        let r = Racetrack::new(150).unwrap();
        assert_eq!(r.eval(&[0.0, 0.0]), [0.0, 1.0]);
        assert_eq!(r.eval(&[-3.9, 11.9]), [0.0, 1.0]);
        assert_eq!(r.eval(&[60.0, 0.0]), [0.0, 1.0]);
    }

    #[test]
    fn label_on_left_side() {
        let r = Racetrack::new(150).unwrap();
        assert_eq!(r.loop_label(&[1.25, -7.0]), 1.25);
    }

    #[test]
    fn infeasible_period() {
        assert!(Racetrack::new(60).is_err());
        assert!(Racetrack::new(Racetrack::min_period()).is_ok());
    }
}
