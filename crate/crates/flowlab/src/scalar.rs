//! The number type every field is generic over.
//!
//! Fields are written once against [`Scalar`] and evaluated either on plain
//! `f64` values or on [`Jet`](crate::jet::Jet)s, which yields exact Taylor
//! coefficients of the field without numerical differentiation.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// Order-zero part.
    fn value(&self) -> f64;
    /// A constant of the same shape as `self`.
    fn cst(&self, c: f64) -> Self;
    fn exp(&self) -> Self;
    fn recip(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn ln(&self) -> Self;

    /// Applies a univariate function given as `f(a, k) -> [f(a), f'(a), ..., f^(k)(a)]`.
    fn lift(&self, f: &dyn Fn(f64, usize) -> Vec<f64>) -> Self;

    /// Applies a multivariate function given by its Taylor coefficients at the base
    /// values of `args`, in the graded layout of `(args.len(), order)`.
    fn lift_multi(args: &[Self], f: &dyn Fn(&[f64], usize) -> Vec<f64>) -> Self;

    /// True when every coefficient above order zero vanishes.
    fn is_constant(&self) -> bool;

    fn abs(&self) -> Self {
        if self.value() < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    /// `exp(-1/t)` for `t > 0` and `0` otherwise; flat at the origin.
    fn flat_exp(&self) -> Self {
        if self.value() <= 0.0 {
            self.cst(0.0)
        } else {
            (-self.recip()).exp()
        }
    }

    /// Branch selection by base value; both branches must agree to all orders at the seam.
    fn max_branch(&self, other: &Self) -> Self {
        if self.value() >= other.value() {
            self.clone()
        } else {
            other.clone()
        }
    }
}

impl Scalar for f64 {
    fn value(&self) -> f64 {
        *self
    }
    fn cst(&self, c: f64) -> Self {
        c
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn is_constant(&self) -> bool {
        true
    }
    fn lift(&self, f: &dyn Fn(f64, usize) -> Vec<f64>) -> Self {
        f(*self, 0)[0]
    }
    fn lift_multi(args: &[Self], f: &dyn Fn(&[f64], usize) -> Vec<f64>) -> Self {
        f(args, 0)[0]
    }
}
