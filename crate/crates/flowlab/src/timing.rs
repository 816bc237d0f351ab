//! The vertical slow-down block that makes a box transit time constant near the bottom center.
//!
//! Let `(V_1, I_1)` be a deterrence system and `Psi(w, x, y)` the time its orbit
//! needs from `(w, x, y, -a)` to the top face. Above the box, on
//! `A = I_1^3 x (a + 1, a + 201)`, the field is replaced by a vertical profile
//! whose travel time across `A` is `h = f g + 200 (1 - g)`, with
//! `f = level - Psi + 250` and `g` a cutoff equal to 1 on the lateral box of
//! half-width `radius`. Near the center the total transit through the enlarged
//! box is then `level + 454` regardless of the starting point.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::interval::{cutoff_profile_s, SymInterval};
use crate::scalar::Scalar;
use crate::travel::{depth_of_time_derivs, slowed_s, S_MAX, S_MIN};

type Key = ([u64; 3], usize);

#[derive(Debug)]
pub struct TimingBlock {
    base: Field,
    a: f64,
    level: i64,
    radius: f64,
    psi_cache: Mutex<HashMap<Key, Arc<Vec<f64>>>>,
    depth_cache: Mutex<HashMap<(u64, usize), Arc<Vec<f64>>>>,
}

impl TimingBlock {
    pub fn new(base: Field, interval: SymInterval, level: i64, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && 2.0 * radius < interval.a()) {
            return Err(Error::Invalid(format!(
                "timing radius {radius} must be positive and below half the box half-width {}",
                interval.a()
            )));
        }
        Ok(TimingBlock {
            base,
            a: interval.a(),
            level,
            radius,
            psi_cache: Mutex::new(HashMap::new()),
            depth_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn base(&self) -> &Field {
        &self.base
    }

    pub fn level(&self) -> i64 {
        self.level
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Half-width of the enlarged box.
    pub fn outer_half_width(&self) -> f64 {
        self.a + 202.0
    }

    fn in_block(&self, p: &[f64]) -> bool {
        p[..3].iter().all(|t| t.abs() < self.a) && p[3] > self.a + 1.0 && p[3] < self.a + 201.0
    }

    /// Taylor coefficients of the base box transit time in the three lateral variables.
    pub fn psi_taylor(&self, lateral: &[f64], order: usize) -> Result<Arc<Vec<f64>>> {
        let key = ([lateral[0].to_bits(), lateral[1].to_bits(), lateral[2].to_bits()], order);
        if let Some(v) = self.psi_cache.lock().expect("cache").get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(crate::jetlab::timeflow_taylor(&self.base, self.a, lateral, order)?);
        self.psi_cache.lock().expect("cache").insert(key, v.clone());
        Ok(v)
    }

    fn depth(&self, s: f64, order: usize) -> Result<Arc<Vec<f64>>> {
        let key = (s.to_bits(), order);
        if let Some(v) = self.depth_cache.lock().expect("cache").get(&key) {
            return Ok(v.clone());
        }
        if !(S_MIN..=S_MAX).contains(&s) {
            return Err(Error::Invalid(format!("slow-down travel time {s} out of range")));
        }
        let v = Arc::new(depth_of_time_derivs(s, order)?);
        self.depth_cache.lock().expect("cache").insert(key, v.clone());
        Ok(v)
    }

    pub fn eval_s<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let vals: Vec<f64> = p.iter().map(|x| x.value()).collect();
        if !self.in_block(&vals) {
            return self.base.eval_s(p);
        }
        let zero = p[0].cst(0.0);
        let mut g = p[0].cst(1.0);
        for t in &p[..3] {
            let v = t.value().abs();
            if v >= 2.0 * self.radius {
                return vec![zero.clone(), zero.clone(), zero, p[0].cst(1.0)];
            }
            if v > self.radius {
                g = g * cutoff_profile_s(self.radius, 2.0 * self.radius, t);
            }
        }
        let nan = || vec![p[0].cst(f64::NAN); 4];
        let psi = S::lift_multi(&p[..3], &|b, k| match self.psi_taylor(b, k) {
            Ok(v) => (*v).clone(),
            Err(_) => vec![f64::NAN; crate::jet::layout(3, k).len()],
        });
        if !psi.value().is_finite() {
            return nan();
        }
        let f = -psi + (self.level as f64 + 250.0);
        let h = f * g.clone() + (-g + 1.0) * 200.0;
        let hv = h.value();
        if !(S_MIN..=S_MAX).contains(&hv) {
            return nan();
        }
        let q = h.lift(&|s, k| match self.depth(s, k) {
            Ok(v) => (*v).clone(),
            Err(_) => vec![f64::NAN; k + 1],
        });
        let y = p[3].clone() - (self.a + 101.0);
        vec![zero.clone(), zero.clone(), zero, slowed_s(&q, &y)]
    }

    pub fn step_scale(&self, p: &[f64]) -> f64 {
        if self.in_block(p) {
            return 1.0;
        }
        let lat = p[..3].iter().fold(0.0f64, |m, t| m.max(t.abs() - self.a));
        let below = (self.a + 1.0 - p[3]).max(p[3] - self.a - 201.0);
        let dist = lat.max(below).max(1.0);
        self.base.step_scale(p).min(dist)
    }
}
