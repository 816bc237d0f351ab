//! Symmetric integer intervals and the smooth step profile built on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{layout, Jet};
use crate::scalar::Scalar;

/// The open interval `(-a, a)` with integer `a >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SymInterval {
    half_width: u64,
}

impl SymInterval {
    /// The unit interval `(-1, 1)`.
    pub const UNIT: SymInterval = SymInterval { half_width: 1 };

    pub fn new(half_width: u64) -> Result<Self> {
        if half_width == 0 {
            return Err(Error::Invalid("interval half-width must be at least 1".into()));
        }
        Ok(SymInterval { half_width })
    }

    /// `n` copies of the unit interval, i.e. `(-n, n)`.
    pub fn units(n: u64) -> Self {
        SymInterval::new(n).expect("positive half-width")
    }

    pub fn half_width(&self) -> u64 {
        self.half_width
    }

    pub fn a(&self) -> f64 {
        self.half_width as f64
    }

    pub fn scale(&self, n: u64) -> Self {
        SymInterval::units(self.half_width * n)
    }

    pub fn sum(&self, other: &SymInterval) -> Self {
        SymInterval::units(self.half_width + other.half_width)
    }

    pub fn contains(&self, x: f64) -> bool {
        x.abs() < self.a()
    }

    pub fn contains_closure(&self, x: f64) -> bool {
        x.abs() <= self.a()
    }

    /// Membership of a point in the open cube `I^d`.
    pub fn cube_contains(&self, p: &[f64]) -> bool {
        p.iter().all(|x| self.contains(*x))
    }

    pub fn cube_closure_contains(&self, p: &[f64]) -> bool {
        p.iter().all(|x| self.contains_closure(*x))
    }

    /// Center of the bottom face of the 4-cube, `(0, 0, 0, -a)`.
    pub fn bottom_center(&self) -> [f64; 4] {
        [0.0, 0.0, 0.0, -self.a()]
    }

    /// The straight-up map from the bottom face to the top face.
    pub fn straight_up(&self, p: &[f64]) -> [f64; 4] {
        [p[0], p[1], p[2], self.a()]
    }
}

/// `exp(-1/t)` on `t > 0`, zero elsewhere.
fn flat(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// The smooth step: 1 on `(-inf, 0]`, 0 on `[1, inf)`, and `zeta(x) + zeta(1-x) = 1`.
pub fn zeta(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let a = flat(1.0 - x);
    a / (a + flat(x))
}

/// `1 - zeta(x)` without cancellation near `x = 0`.
pub fn zeta_complement(x: f64) -> f64 {
    zeta(1.0 - x)
}

/// Generic version of [`zeta`] used inside field expressions.
pub fn zeta_s<S: Scalar>(x: &S) -> S {
    let v = x.value();
    if v <= 0.0 {
        return x.cst(1.0);
    }
    if v >= 1.0 {
        return x.cst(0.0);
    }
    let one_minus = -x.clone() + 1.0;
    let a = one_minus.flat_exp();
    let b = x.flat_exp();
    a.clone() / (a + b)
}

/// Derivatives `zeta^(n)(x)` for `n = 0..=k`, computed from the exact Taylor expansion.
pub fn zeta_derivs(x: f64, k: usize) -> Vec<f64> {
    let lay = layout(1, k);
    let j = zeta_s(&Jet::variable(&lay, 0, x));
    let mut fact = 1.0;
    j.coeffs()
        .iter()
        .enumerate()
        .map(|(n, c)| {
            if n > 0 {
                fact *= n as f64;
            }
            c * fact
        })
        .collect()
}

/// `zeta(|x| - a_I)`: 1 on the closed interval, 0 outside `I + I_0`.
pub fn zeta_i(i: &SymInterval, x: f64) -> f64 {
    zeta(x.abs() - i.a())
}

pub fn zeta_i_s<S: Scalar>(a: f64, x: &S) -> S {
    zeta_s(&(x.abs() - a))
}

/// Product cutoff: 1 on the closed inner cube, 0 off the open outer cube.
pub fn box_cutoff(inner: &SymInterval, outer: &SymInterval, p: &[f64]) -> Result<f64> {
    if inner.half_width() >= outer.half_width() {
        return Err(Error::Invalid(format!(
            "box cutoff needs inner < outer, got {} >= {}",
            inner.half_width(),
            outer.half_width()
        )));
    }
    Ok(box_cutoff_s(inner.a(), outer.a(), p))
}

/// One-dimensional profile of the box cutoff.
pub fn cutoff_profile_s<S: Scalar>(inner: f64, outer: f64, x: &S) -> S {
    zeta_s(&((x.abs() - inner) * (1.0 / (outer - inner))))
}

pub fn box_cutoff_s<S: Scalar>(inner: f64, outer: f64, p: &[S]) -> S {
    let mut acc = p[0].cst(1.0);
    for x in p {
        if x.value().abs() <= inner {
            continue;
        }
        if x.value().abs() >= outer {
            return x.cst(0.0);
        }
        acc = acc * cutoff_profile_s(inner, outer, x);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_algebra() {
        let i = SymInterval::units(3);
        assert_eq!(i.scale(4).half_width(), 12);
        assert_eq!(i.sum(&SymInterval::UNIT).half_width(), 4);
        assert!(i.contains(2.999) && !i.contains(3.0));
        assert!(i.contains_closure(3.0) && !i.contains_closure(3.0001));
        assert!(SymInterval::new(0).is_err());
    }

    #[test]
    fn zeta_anchors() {
        assert_eq!(zeta(-1.0), 1.0);
        assert_eq!(zeta(2.0), 0.0);
        assert_eq!(zeta(0.5), 0.5);
        assert_eq!(zeta_i(&SymInterval::UNIT, 0.0), 1.0);
        assert_eq!(zeta_i(&SymInterval::UNIT, 2.5), 0.0);
        assert!((zeta_i(&SymInterval::units(3), 3.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn cutoff_rejects_bad_order() {
        assert!(box_cutoff(&SymInterval::units(5), &SymInterval::units(5), &[0.0]).is_err());
    }

    #[test]
    fn jet_value_matches_scalar() {
        for &x in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            assert_eq!(zeta_derivs(x, 3)[0], zeta(x));
        }
    }
}
