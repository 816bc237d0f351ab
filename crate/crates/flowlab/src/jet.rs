//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the coefficients of a polynomial in `nvars` variables of
//! total degree at most `order`, expanded around some base point. Coefficients
//! are laid out in graded order: all degree-0 terms, then degree 1, and so on;
//! inside a degree, multi-indices are sorted in descending lexicographic order.

use std::collections::HashMap;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::scalar::Scalar;

/// Hard ceiling on the jet order accepted anywhere in the crate.
pub const MAX_ORDER: usize = 6;

/// Multi-index bookkeeping and the multiplication schedule for one `(nvars, order)` pair.
#[derive(Debug)]
pub struct JetLayout {
    pub nvars: usize,
    pub order: usize,
    pub indices: Vec<Vec<u32>>,
    pub degrees: Vec<usize>,
    lookup: HashMap<Vec<u32>, usize>,
    // (i, j, k): coefficient i times coefficient j lands in slot k.
    products: Vec<(u32, u32, u32)>,
}

impl JetLayout {
    fn build(nvars: usize, order: usize) -> Self {
        let mut indices = Vec::new();
        let mut degrees = Vec::new();
        for deg in 0..=order {
            let mut cur = vec![0u32; nvars];
            push_compositions(deg as u32, 0, &mut cur, &mut indices);
            while degrees.len() < indices.len() {
                degrees.push(deg);
            }
        }
        let lookup: HashMap<Vec<u32>, usize> =
            indices.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
        let mut products = Vec::new();
        for (i, a) in indices.iter().enumerate() {
            for (j, b) in indices.iter().enumerate() {
                if degrees[i] + degrees[j] > order {
                    continue;
                }
                let sum: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                products.push((i as u32, j as u32, lookup[&sum] as u32));
            }
        }
        JetLayout { nvars, order, indices, degrees, lookup, products }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index_of(&self, alpha: &[u32]) -> Option<usize> {
        self.lookup.get(alpha).copied()
    }

    /// Slot of the first-degree monomial in variable `var`.
    pub fn linear_slot(&self, var: usize) -> usize {
        let mut a = vec![0u32; self.nvars];
        a[var] = 1;
        self.lookup[&a]
    }
}

fn push_compositions(rest: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let n = cur.len();
    if n == 0 {
        if rest == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = rest;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=rest).rev() {
        cur[pos] = k;
        push_compositions(rest - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// Shared layout for `(nvars, order)`, built once per process.
pub fn layout(nvars: usize, order: usize) -> Arc<JetLayout> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<JetLayout>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("jet layout cache poisoned");
    guard
        .entry((nvars, order))
        .or_insert_with(|| Arc::new(JetLayout::build(nvars, order)))
        .clone()
}

/// A truncated Taylor polynomial with scalar coefficients.
#[derive(Clone, Debug)]
pub struct Jet {
    layout: Arc<JetLayout>,
    coeffs: Vec<f64>,
}

impl Jet {
    pub fn constant(layout: &Arc<JetLayout>, c: f64) -> Self {
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = c;
        Jet { layout: layout.clone(), coeffs }
    }

    /// The coordinate function `base + delta_var`.
    pub fn variable(layout: &Arc<JetLayout>, var: usize, base: f64) -> Self {
        let mut j = Self::constant(layout, base);
        if layout.order >= 1 {
            j.coeffs[layout.linear_slot(var)] = 1.0;
        }
        j
    }

    pub fn from_coeffs(layout: &Arc<JetLayout>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), layout.len(), "coefficient count does not match layout");
        Jet { layout: layout.clone(), coeffs }
    }

    pub fn layout(&self) -> &Arc<JetLayout> {
        &self.layout
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn is_const(&self) -> bool {
        self.coeffs[1..].iter().all(|c| *c == 0.0)
    }

    /// Evaluates `sum_n d[n]/n! * (self - a0)^n` where `d[n]` is the n-th derivative at `a0`.
    pub fn compose_univariate(&self, derivs: &[f64]) -> Jet {
        let k = self.layout.order;
        if self.is_const() {
            return Jet::constant(&self.layout, derivs[0]);
        }
        let mut eps = self.clone();
        eps.coeffs[0] = 0.0;
        let mut fact = vec![1.0; k + 1];
        for n in 1..=k {
            fact[n] = fact[n - 1] * n as f64;
        }
        let top = k.min(derivs.len() - 1);
        let mut acc = Jet::constant(&self.layout, derivs[top] / fact[top]);
        for n in (0..top).rev() {
            acc = acc.mul_ref(&eps);
            acc.coeffs[0] += derivs[n] / fact[n];
        }
        acc
    }

    fn mul_ref(&self, other: &Jet) -> Jet {
        debug_assert!(Arc::ptr_eq(&self.layout, &other.layout) || self.layout.len() == other.layout.len());
        if other.is_const() {
            let c = other.coeffs[0];
            return Jet { layout: self.layout.clone(), coeffs: self.coeffs.iter().map(|x| x * c).collect() };
        }
        if self.is_const() {
            let c = self.coeffs[0];
            return Jet { layout: self.layout.clone(), coeffs: other.coeffs.iter().map(|x| x * c).collect() };
        }
        let mut out = vec![0.0; self.coeffs.len()];
        for &(i, j, k) in &self.layout.products {
            out[k as usize] += self.coeffs[i as usize] * other.coeffs[j as usize];
        }
        Jet { layout: self.layout.clone(), coeffs: out }
    }

    /// Evaluates the polynomial at displacement `delta` from the base point.
    pub fn eval_at(&self, delta: &[f64]) -> f64 {
        self.layout
            .indices
            .iter()
            .zip(&self.coeffs)
            .map(|(alpha, c)| {
                c * alpha.iter().zip(delta).map(|(&p, d)| d.powi(p as i32)).product::<f64>()
            })
            .sum()
    }
}

fn recip_derivs(a: f64, k: usize) -> Vec<f64> {
    // d^n/da^n (1/a) = (-1)^n n! / a^(n+1)
    let mut out = Vec::with_capacity(k + 1);
    let mut v = 1.0 / a;
    for n in 0..=k {
        out.push(v);
        v *= -((n + 1) as f64) / a;
    }
    out
}

fn pow_derivs(a: f64, p: f64, k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut coef = 1.0;
    for n in 0..=k {
        out.push(coef * a.powf(p - n as f64));
        coef *= p - n as f64;
    }
    out
}

impl Add for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a += b;
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: Jet) -> Jet {
        for (a, b) in self.coeffs.iter_mut().zip(&rhs.coeffs) {
            *a -= b;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        self.mul_ref(&rhs)
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        self.mul_ref(&rhs.recip())
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for a in self.coeffs.iter_mut() {
            *a = -*a;
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.coeffs[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for a in self.coeffs.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl Scalar for Jet {
    fn value(&self) -> f64 {
        self.coeffs[0]
    }

    fn cst(&self, c: f64) -> Self {
        Jet::constant(&self.layout, c)
    }

    fn exp(&self) -> Self {
        let e = self.coeffs[0].exp();
        self.compose_univariate(&vec![e; self.layout.order + 1])
    }

    fn is_constant(&self) -> bool {
        self.is_const()
    }

    fn recip(&self) -> Self {
        self.compose_univariate(&recip_derivs(self.coeffs[0], self.layout.order))
    }

    fn sqrt(&self) -> Self {
        self.compose_univariate(&pow_derivs(self.coeffs[0], 0.5, self.layout.order))
    }

    fn ln(&self) -> Self {
        let a = self.coeffs[0];
        let mut d = vec![a.ln()];
        d.extend(recip_derivs(a, self.layout.order.saturating_sub(1)));
        d.truncate(self.layout.order + 1);
        self.compose_univariate(&d)
    }

    fn lift(&self, f: &dyn Fn(f64, usize) -> Vec<f64>) -> Self {
        let d = f(self.coeffs[0], self.layout.order);
        self.compose_univariate(&d)
    }

    fn lift_multi(args: &[Self], f: &dyn Fn(&[f64], usize) -> Vec<f64>) -> Self {
        let outer = &args[0].layout;
        let order = outer.order;
        let base: Vec<f64> = args.iter().map(|a| a.coeffs[0]).collect();
        let inner_layout = layout(args.len(), order);
        let taylor = f(&base, order);
        assert_eq!(taylor.len(), inner_layout.len(), "lift_multi: wrong Taylor length");
        // Substitute each displacement jet into the Taylor polynomial of f.
        let eps: Vec<Jet> = args
            .iter()
            .map(|a| {
                let mut e = a.clone();
                e.coeffs[0] = 0.0;
                e
            })
            .collect();
        let mut powers: Vec<Vec<Jet>> = eps
            .iter()
            .map(|e| {
                let mut p = vec![Jet::constant(outer, 1.0)];
                for n in 1..=order {
                    let next = p[n - 1].mul_ref(e);
                    p.push(next);
                }
                p
            })
            .collect();
        let mut acc = Jet::constant(outer, 0.0);
        for (alpha, c) in inner_layout.indices.iter().zip(&taylor) {
            if *c == 0.0 {
                continue;
            }
            let mut term = Jet::constant(outer, *c);
            for (v, &p) in alpha.iter().enumerate() {
                if p > 0 {
                    term = term.mul_ref(&powers[v][p as usize]);
                }
            }
            acc = acc + term;
        }
        powers.clear();
        acc
    }
}
