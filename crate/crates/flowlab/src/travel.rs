//! One-dimensional vertical speed profiles and their travel times.
//!
//! All profiles live on the line and equal 1 away from a slow band around the
//! origin. The slow band has half-width 95 and transition layers `95 < |y| < 96`.
//! Travel times from `-100` to `100` are computed by quadrature of `1 / speed`
//! because the one-dimensional flow is separable.

use crate::error::{Error, Result};
use crate::interval::{zeta, zeta_complement, zeta_derivs, zeta_i_s, zeta_s};
use crate::jet::{layout, Jet};
use crate::quad::{integrate, integrate_vec, invert_increasing};
use crate::scalar::Scalar;

/// Half-width of the slow band.
pub const BAND: f64 = 95.0;
/// Travel endpoints.
pub const START: f64 = -100.0;
pub const END: f64 = 100.0;
/// Admissible prescribed travel times.
pub const S_MIN: f64 = 200.0;
pub const S_MAX: f64 = 380.0;

const BREAKS: [f64; 4] = [-96.0, -95.0, 95.0, 96.0];
const QUAD_TOL: f64 = 1e-12;

/// The half-speed band profile `W(y) = 1 - zeta_I(y)/2`.
pub fn w_s<S: Scalar>(y: &S) -> S {
    -(zeta_i_s(BAND, y) * 0.5) + 1.0
}

pub fn w(y: f64) -> f64 {
    w_s(&y)
}

/// Speed profile with slowdown depth `q` in `[0, 1]`: `1 - q zeta_I(y)/2`.
pub fn slowed_s<S: Scalar>(q: &S, y: &S) -> S {
    -(zeta_i_s(BAND, y) * q.clone() * 0.5) + 1.0
}

/// The interpolating family `V_*^x(y) = 1 - zeta_I(y) (1 - zeta(x)) / 2`.
pub fn vstar_s<S: Scalar>(x: &S, y: &S) -> S {
    let q = -zeta_s(x) + 1.0;
    slowed_s(&q, y)
}

pub fn vstar(x: f64, y: f64) -> f64 {
    vstar_s(&x, &y)
}

/// Travel time of the half-speed profile from `-100` to `100`.
pub fn compute_c() -> Result<f64> {
    integrate(|y| 1.0 / w(y), START, END, &BREAKS, QUAD_TOL)
}

/// Travel time as a function of slowdown depth: `G(q) = int dy / (1 - q zeta_I(y)/2)`.
pub fn travel_of_depth(q: f64) -> Result<f64> {
    integrate(|y| 1.0 / slowed_s(&q, &y), START, END, &BREAKS, QUAD_TOL)
}

/// Taylor coefficients of `G` at `q`, up to degree `k`.
///
/// The n-th coefficient is `int (zeta_I/2)^n / (1 - q zeta_I/2)^(n+1) dy`.
pub fn travel_of_depth_taylor(q: f64, k: usize) -> Result<Vec<f64>> {
    integrate_vec(
        |y| {
            let z = 0.5 * zeta_i_s(BAND, &y);
            let d = 1.0 / (1.0 - q * z);
            let mut out = Vec::with_capacity(k + 1);
            let mut p = d;
            for _ in 0..=k {
                out.push(p);
                p *= z * d;
            }
            out
        },
        START,
        END,
        &BREAKS,
        QUAD_TOL,
    )
}

/// Travel time of `V_*^x` from `-100` to `100`.
pub fn travel_time_gamma(x: f64) -> Result<f64> {
    travel_of_depth(1.0 - zeta(x))
}

/// `gamma(x) - 200`, keeping full relative precision where `gamma` is flat near 0.
pub fn gamma_excess(x: f64) -> Result<f64> {
    let q = zeta_complement(x);
    if q == 0.0 {
        return Ok(0.0);
    }
    let rest = integrate(
        |y| {
            let z = 0.5 * zeta_i_s(BAND, &y);
            z / (1.0 - q * z)
        },
        START,
        END,
        &BREAKS,
        QUAD_TOL,
    )?;
    Ok(q * rest)
}

/// `C - gamma(x)`, keeping full relative precision where `gamma` is flat near 1.
pub fn gamma_deficit(x: f64) -> Result<f64> {
    let p = zeta(x);
    if p == 0.0 {
        return Ok(0.0);
    }
    let q = zeta_complement(x);
    let rest = integrate(
        |y| {
            let z = 0.5 * zeta_i_s(BAND, &y);
            z / ((1.0 - z) * (1.0 - q * z))
        },
        START,
        END,
        &BREAKS,
        QUAD_TOL,
    )?;
    Ok(p * rest)
}

/// Slowdown depth `q_s` whose travel time is exactly `s`.
pub fn depth_of_time(s: f64) -> Result<f64> {
    check_time(s)?;
    if s == S_MIN {
        return Ok(0.0);
    }
    invert_increasing(
        travel_of_depth,
        |q| travel_of_depth_taylor(q, 1).ok().map(|t| t[1]),
        s,
        0.0,
        1.0,
        1e-15,
    )
}

fn check_time(s: f64) -> Result<()> {
    if !(S_MIN..=S_MAX).contains(&s) || s.is_nan() {
        return Err(Error::Invalid(format!("travel time {s} outside [{S_MIN}, {S_MAX}]")));
    }
    Ok(())
}

/// The unique `x_s` in `[0, 1]` with `gamma(x_s) = s`.
pub fn inverse_x_of_s(s: f64) -> Result<f64> {
    let q = depth_of_time(s)?;
    if q == 0.0 {
        return Ok(0.0);
    }
    // zeta is decreasing; solve 1 - zeta(x) = q.
    invert_increasing(
        |x| Ok(1.0 - zeta(x)),
        |x| Some(-zeta_derivs(x, 1)[1]),
        q,
        0.0,
        1.0,
        1e-15,
    )
}

/// Derivatives `d^n q_s / ds^n` at `s`, `n = 0..=k`, by series reversion of `G`.
pub fn depth_of_time_derivs(s: f64, k: usize) -> Result<Vec<f64>> {
    let q0 = depth_of_time(s)?;
    if k == 0 {
        return Ok(vec![q0]);
    }
    let g = travel_of_depth_taylor(q0, k)?;
    let lay = layout(1, k);
    let e = Jet::variable(&lay, 0, 0.0);
    // Newton iteration in truncated arithmetic: each pass fixes one more order.
    let mut x = Jet::constant(&lay, 0.0);
    for _ in 0..=k {
        let mut gx = Jet::constant(&lay, g[k]);
        for n in (0..k).rev() {
            gx = gx * x.clone();
            gx = gx + g[n];
        }
        let resid = e.clone() + s - gx;
        x = x + resid * (1.0 / g[1]);
    }
    let mut fact = 1.0;
    let mut out = vec![q0];
    for (n, c) in x.coeffs().iter().enumerate().skip(1) {
        fact *= n as f64;
        out.push(c * fact);
    }
    Ok(out)
}

/// A speed profile realizing travel time `s`.
#[derive(Clone, Debug)]
pub struct Vsharp {
    pub s: f64,
    pub x_s: f64,
    pub depth: f64,
}

impl Vsharp {
    pub fn new(s: f64) -> Result<Self> {
        let depth = depth_of_time(s)?;
        let x_s = inverse_x_of_s(s)?;
        Ok(Vsharp { s, x_s, depth })
    }

    pub fn eval_s<S: Scalar>(&self, y: &S) -> S {
        slowed_s(&y.cst(self.depth), y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        assert_eq!(w(0.0), 0.5);
        assert_eq!(w(100.0), 1.0);
        assert!((w(95.5) - 0.75).abs() < 1e-15);
        assert_eq!(vstar(-1.0, 0.0), 1.0);
        assert_eq!(vstar(2.0, 0.0), 0.5);
        assert!((vstar(0.5, 0.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gamma_limits() {
        assert!((travel_time_gamma(-3.0).unwrap() - 200.0).abs() < 1e-10);
        let c = compute_c().unwrap();
        assert!((travel_time_gamma(5.0).unwrap() - c).abs() < 1e-10);
        assert!(c > 390.0 && c < 392.0);
    }

    #[test]
    fn inverse_round_trip() {
        assert_eq!(inverse_x_of_s(200.0).unwrap(), 0.0);
        let x = inverse_x_of_s(290.0).unwrap();
        assert!((travel_time_gamma(x).unwrap() - 290.0).abs() < 1e-9);
        assert!(inverse_x_of_s(381.0).is_err());
        assert!(inverse_x_of_s(199.0).is_err());
    }

    #[test]
    fn depth_derivative_matches_difference() {
        let d = depth_of_time_derivs(300.0, 2).unwrap();
        let h = 1e-3;
        let fd = (depth_of_time(300.0 + h).unwrap() - depth_of_time(300.0 - h).unwrap()) / (2.0 * h);
        assert!((d[1] - fd).abs() < 1e-8 * fd.abs().max(1.0), "{} vs {}", d[1], fd);
    }
}
