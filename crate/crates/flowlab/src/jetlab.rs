//! Jets of fields and of their flow maps.
//!
//! A flow map is transported to order `k` by integrating the prolonged system:
//! every state component is a truncated Taylor polynomial in the displacement
//! of the starting point, and the field is evaluated on those polynomials with
//! exact jet arithmetic at every stage of the integrator.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::jet::{layout, Jet, JetLayout, MAX_ORDER};
use crate::ode::{integrate, Control, OdeOptions, System};
use crate::scalar::Scalar;
use std::sync::Arc;

/// Truncated Taylor polynomial of a map `R^n -> R^d` at a base point.
#[derive(Clone, Debug, PartialEq)]
pub struct JetPoly {
    pub nvars: usize,
    pub order: usize,
    pub base: Vec<f64>,
    /// One coefficient vector per output component, in the graded layout of `(nvars, order)`.
    pub comps: Vec<Vec<f64>>,
}

fn check_order(k: usize) -> Result<()> {
    if k > MAX_ORDER {
        return Err(Error::Order { got: k, max: MAX_ORDER });
    }
    Ok(())
}

impl JetPoly {
    pub fn layout(&self) -> Arc<JetLayout> {
        layout(self.nvars, self.order)
    }

    /// Jet of the identity map at `base`.
    pub fn identity(base: &[f64], order: usize) -> Self {
        let lay = layout(base.len(), order);
        let comps = (0..base.len()).map(|i| Jet::variable(&lay, i, base[i]).into_coeffs()).collect();
        JetPoly { nvars: base.len(), order, base: base.to_vec(), comps }
    }

    pub fn from_jets(base: &[f64], jets: &[Jet]) -> Self {
        let lay = jets[0].layout();
        JetPoly {
            nvars: lay.nvars,
            order: lay.order,
            base: base.to_vec(),
            comps: jets.iter().map(|j| j.coeffs().to_vec()).collect(),
        }
    }

    pub fn jets(&self) -> Vec<Jet> {
        let lay = self.layout();
        self.comps.iter().map(|c| Jet::from_coeffs(&lay, c.clone())).collect()
    }

    /// Order-zero part: the value of the map at the base point.
    pub fn value(&self) -> Vec<f64> {
        self.comps.iter().map(|c| c[0]).collect()
    }

    /// Jacobian matrix, row per output component.
    pub fn jacobian(&self) -> Vec<Vec<f64>> {
        let lay = self.layout();
        self.comps
            .iter()
            .map(|c| (0..self.nvars).map(|v| if self.order == 0 { 0.0 } else { c[lay.linear_slot(v)] }).collect())
            .collect()
    }

    /// Taylor coefficient of component `comp` at multi-index `alpha`.
    pub fn coeff(&self, comp: usize, alpha: &[u32]) -> Option<f64> {
        self.layout().index_of(alpha).map(|i| self.comps[comp][i])
    }

    /// Largest coefficient difference in each degree `0..=k`.
    pub fn deviation_by_degree(&self, other: &JetPoly, k: usize) -> Result<Vec<f64>> {
        if self.nvars != other.nvars || self.comps.len() != other.comps.len() {
            return Err(Error::Dimension { expected: self.nvars, got: other.nvars });
        }
        if self.base.iter().zip(&other.base).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
            return Err(Error::Invalid(format!("base points differ: {:?} vs {:?}", self.base, other.base)));
        }
        if k > self.order || k > other.order {
            return Err(Error::Order { got: k, max: self.order.min(other.order) });
        }
        let la = self.layout();
        let lb = other.layout();
        let mut out = vec![0.0f64; k + 1];
        for (i, alpha) in la.indices.iter().enumerate() {
            let deg = la.degrees[i];
            if deg > k {
                continue;
            }
            let j = lb.index_of(alpha).expect("same variables");
            for (a, b) in self.comps.iter().zip(&other.comps) {
                out[deg] = out[deg].max((a[i] - b[j]).abs());
            }
        }
        Ok(out)
    }

    /// Drops all terms above degree `k`.
    pub fn truncate(&self, k: usize) -> JetPoly {
        let k = k.min(self.order);
        let la = self.layout();
        let lb = layout(self.nvars, k);
        let comps = self
            .comps
            .iter()
            .map(|c| lb.indices.iter().map(|alpha| c[la.index_of(alpha).expect("subset")]).collect())
            .collect();
        JetPoly { nvars: self.nvars, order: k, base: self.base.clone(), comps }
    }

    /// `outer o self`, where `outer` is based at the value of `self`.
    pub fn compose(&self, outer: &JetPoly) -> Result<JetPoly> {
        if outer.nvars != self.comps.len() {
            return Err(Error::Dimension { expected: self.comps.len(), got: outer.nvars });
        }
        let v = self.value();
        if outer.base.iter().zip(&v).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0)) {
            return Err(Error::Invalid("outer jet is not based at the inner value".into()));
        }
        let k = self.order.min(outer.order);
        let inner = self.truncate(k).jets();
        let o = outer.truncate(k);
        let comps = o
            .comps
            .iter()
            .map(|c| Jet::lift_multi(&inner, &|_, _| c.clone()).into_coeffs())
            .collect();
        Ok(JetPoly { nvars: self.nvars, order: k, base: self.base.clone(), comps })
    }

    /// JSON dump: coefficients listed by multi-index in lexicographic order.
    pub fn to_json(&self) -> serde_json::Value {
        let lay = self.layout();
        let mut entries: Vec<(Vec<u32>, Vec<f64>)> = lay
            .indices
            .iter()
            .enumerate()
            .map(|(i, alpha)| (alpha.clone(), self.comps.iter().map(|c| c[i]).collect()))
            .collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        #[derive(Serialize)]
        struct Entry {
            index: Vec<u32>,
            value: Vec<f64>,
        }
        #[derive(Serialize)]
        struct Dump {
            base: Vec<f64>,
            order: usize,
            coefficients: Vec<Entry>,
        }
        serde_json::to_value(Dump {
            base: self.base.clone(),
            order: self.order,
            coefficients: entries.into_iter().map(|(index, value)| Entry { index, value }).collect(),
        })
        .expect("jet dump serializes")
    }
}

/// Taylor polynomial of the field at `sigma` to order `k`.
pub fn jet_field(field: &Field, sigma: &[f64], k: usize) -> Result<JetPoly> {
    check_order(k)?;
    if sigma.len() != field.dim() {
        return Err(Error::Dimension { expected: field.dim(), got: sigma.len() });
    }
    let id = JetPoly::identity(sigma, k);
    let v = field.eval_s(&id.jets());
    Ok(JetPoly::from_jets(sigma, &v))
}

/// The prolonged system on flattened jet states.
struct JetSystem<'a> {
    field: &'a Field,
    lay: Arc<JetLayout>,
}

impl JetSystem<'_> {
    fn unflatten(&self, y: &[f64]) -> Vec<Jet> {
        y.chunks(self.lay.len()).map(|c| Jet::from_coeffs(&self.lay, c.to_vec())).collect()
    }
}

impl System for JetSystem<'_> {
    fn dim(&self) -> usize {
        self.field.dim() * self.lay.len()
    }

    fn rhs(&self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let jets = self.unflatten(y);
        let v = self.field.eval_s(&jets);
        for (chunk, j) in dy.chunks_mut(self.lay.len()).zip(v) {
            chunk.copy_from_slice(j.coeffs());
        }
        Ok(())
    }

    fn max_step(&self, y: &[f64]) -> f64 {
        let base: Vec<f64> = y.chunks(self.lay.len()).map(|c| c[0]).collect();
        0.25 * self.field.step_scale(&base)
    }
}

fn flatten(jets: &[Jet]) -> Vec<f64> {
    jets.iter().flat_map(|j| j.coeffs().iter().copied()).collect()
}

/// Transports arbitrary initial jets (all in one layout) along the flow for time `t`.
pub fn transport_jets(field: &Field, init: &[Jet], t: f64, opts: &OdeOptions) -> Result<Vec<Jet>> {
    if init.len() != field.dim() {
        return Err(Error::Dimension { expected: field.dim(), got: init.len() });
    }
    let sys = JetSystem { field, lay: init[0].layout().clone() };
    let out = integrate(&sys, 0.0, &flatten(init), t, opts, |_| Ok(Control::Continue))?;
    Ok(sys.unflatten(&out.y))
}

/// Order-`k` jet of the time-`t` flow map at `sigma`.
pub fn jet_transport(field: &Field, sigma: &[f64], t: f64, k: usize, opts: &OdeOptions) -> Result<JetPoly> {
    check_order(k)?;
    if sigma.len() != field.dim() {
        return Err(Error::Dimension { expected: field.dim(), got: sigma.len() });
    }
    let id = JetPoly::identity(sigma, k);
    let out = transport_jets(field, &id.jets(), t, opts)?;
    Ok(JetPoly::from_jets(sigma, &out))
}

/// Largest coefficient difference over all degrees up to `k`.
pub fn jet_compare(a: &JetPoly, b: &JetPoly, k: usize) -> Result<f64> {
    Ok(a.deviation_by_degree(b, k)?.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicityReport {
    pub base: Vec<f64>,
    pub period: f64,
    /// Deviation from the identity jet in each degree.
    pub deviations: Vec<f64>,
    /// Highest order through which every degree is within tolerance.
    pub periodic_to: Option<usize>,
    pub tol: f64,
}

/// Compares the time-`n` flow jet at `sigma` with the identity, degree by degree.
pub fn periodicity_order(
    field: &Field,
    sigma: &[f64],
    n: i64,
    k: usize,
    tol: f64,
    opts: &OdeOptions,
) -> Result<PeriodicityReport> {
    if n == 0 {
        return Err(Error::Invalid("period must be a nonzero integer".into()));
    }
    let j = jet_transport(field, sigma, n as f64, k, opts)?;
    let deviations = j.deviation_by_degree(&JetPoly::identity(sigma, k), k)?;
    let mut periodic_to = None;
    for (d, dev) in deviations.iter().enumerate() {
        if *dev <= tol {
            periodic_to = Some(d);
        } else {
            break;
        }
    }
    Ok(PeriodicityReport { base: sigma.to_vec(), period: n as f64, deviations, periodic_to, tol })
}

/// Taylor coefficients, in the lateral variables, of the time the orbit of `(w, x, y, -a)`
/// needs to reach the top face of a deterrence box of half-width `a`.
///
/// The orbit is followed until the base point is half a unit above the box, where the
/// field is the unit upward one; the crossing time of every nearby orbit then follows
/// exactly from its height at that moment.
pub fn timeflow_taylor(field: &Field, a: f64, lateral: &[f64], order: usize) -> Result<Vec<f64>> {
    check_order(order)?;
    let lay = layout(3, order);
    let mut init: Vec<Jet> = (0..3).map(|i| Jet::variable(&lay, i, lateral[i])).collect();
    init.push(Jet::constant(&lay, -a));
    let sys = JetSystem { field, lay: lay.clone() };
    let n = lay.len();
    let level = a + 0.5;
    let mut hit: Option<(f64, Vec<f64>)> = None;
    let opts = OdeOptions::default();
    let horizon = 1e6 + 20.0 * a;
    integrate(&sys, 0.0, &flatten(&init), horizon, &opts, |step| {
        let z = |t: f64| step.eval_component(t, 3 * n);
        if z(step.t1()) >= level {
            let (mut lo, mut hi) = (step.t0, step.t1());
            while hi - lo > 1e-12 * hi.abs().max(1.0) {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                if z(mid) < level {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            hit = Some((t, step.eval(t)));
            return Ok(Control::Stop);
        }
        Ok(Control::Continue)
    })?;
    let (t1, state) = hit.ok_or(Error::PossiblyDeterred { horizon })?;
    let mut out: Vec<f64> = state[3 * n..4 * n].iter().map(|c| -c).collect();
    out[0] += t1 + a;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_compose() {
        let id = JetPoly::identity(&[1.0, 2.0], 2);
        let c = id.compose(&id).unwrap();
        assert_eq!(jet_compare(&c, &id, 2).unwrap(), 0.0);
    }

    #[test]
    fn v0_translation_jet() {
        let j = jet_transport(&Field::v0(), &[1.0, 2.0, 3.0, 4.0], 7.0, 2, &OdeOptions::default()).unwrap();
        assert!((j.value()[3] - 11.0).abs() < 1e-12);
        let dev = j.deviation_by_degree(&JetPoly::identity(&j.base, 2), 2).unwrap();
        assert!((dev[0] - 7.0).abs() < 1e-12 && dev[1] == 0.0 && dev[2] == 0.0);
    }

    #[test]
    fn base_mismatch_rejected() {
        let a = JetPoly::identity(&[0.0], 1);
        let b = JetPoly::identity(&[1.0], 1);
        assert!(jet_compare(&a, &b, 1).is_err());
    }
}
