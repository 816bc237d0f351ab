//! Serializable field expressions and their compiled, evaluable form.
//!
//! A [`FieldExpr`] is plain data: a tree of tagged nodes that round-trips through
//! JSON. [`Field::new`] validates the tree and precomputes whatever the nodes need
//! (racetrack geometry, travel-time depths, timing caches). Compiled fields are
//! cheap to clone and can be evaluated on `f64` points or on jets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{box_cutoff_s, SymInterval};
use crate::pump::{h0_s, h_s, PumpBundle, PumpStage};
use crate::racetrack::Racetrack;
use crate::scalar::Scalar;
use crate::timing::TimingBlock;
use crate::travel::{vstar_s, w_s, Vsharp};

/// Scalar weights used by blend nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum ScalarExpr {
    Const { value: f64 },
    /// Product cutoff around `center`: 1 on the closed inner cube, 0 off the open outer cube.
    BoxCutoff { center: Vec<f64>, inner: f64, outer: f64 },
    /// `slope * (p[axis] - offset)`.
    Axis { axis: usize, offset: f64, slope: f64 },
    Product { factors: Vec<ScalarExpr> },
}

impl ScalarExpr {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ScalarExpr::Const { value } if !value.is_finite() => {
                Err(Error::Invalid("blend weight must be finite".into()))
            }
            ScalarExpr::Const { .. } => Ok(()),
            ScalarExpr::BoxCutoff { center, inner, outer } => {
                if center.len() != dim {
                    return Err(Error::Dimension { expected: dim, got: center.len() });
                }
                if !(*inner >= 0.0 && inner < outer) {
                    return Err(Error::Invalid(format!(
                        "box cutoff needs 0 <= inner < outer, got inner {inner}, outer {outer}"
                    )));
                }
                Ok(())
            }
            ScalarExpr::Axis { axis, .. } if *axis >= dim => {
                Err(Error::Invalid(format!("axis {axis} out of range for dimension {dim}")))
            }
            ScalarExpr::Axis { .. } => Ok(()),
            ScalarExpr::Product { factors } => factors.iter().try_for_each(|f| f.validate(dim)),
        }
    }

    pub fn eval_s<S: Scalar>(&self, p: &[S]) -> S {
        match self {
            ScalarExpr::Const { value } => p[0].cst(*value),
            ScalarExpr::BoxCutoff { center, inner, outer } => {
                let shifted: Vec<S> = p.iter().zip(center).map(|(x, c)| x.clone() - *c).collect();
                box_cutoff_s(*inner, *outer, &shifted)
            }
            ScalarExpr::Axis { axis, offset, slope } => (p[*axis].clone() - *offset) * *slope,
            ScalarExpr::Product { factors } => {
                factors.iter().fold(p[0].cst(1.0), |acc, f| acc * f.eval_s(p))
            }
        }
    }

    pub fn eval(&self, p: &[f64]) -> f64 {
        self.eval_s(p)
    }

    fn step_scale(&self, p: &[f64]) -> f64 {
        match self {
            ScalarExpr::Const { .. } | ScalarExpr::Axis { .. } => f64::INFINITY,
            ScalarExpr::BoxCutoff { center, inner, outer } => {
                let layer = 0.1 * (outer - inner);
                p.iter()
                    .zip(center)
                    .map(|(x, c)| {
                        let d = (x - c).abs();
                        if d <= *inner {
                            (inner - d).max(layer)
                        } else if d < *outer {
                            layer
                        } else {
                            (d - outer).max(layer)
                        }
                    })
                    .fold(f64::INFINITY, f64::min)
            }
            ScalarExpr::Product { factors } => factors.iter().map(|f| f.step_scale(p)).fold(f64::INFINITY, f64::min),
        }
    }
}

/// A vector field on `R^d`, as data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum FieldExpr {
    Constant { value: Vec<f64> },
    /// The unit upward field on `R^4`.
    V0,
    /// Half-speed band profile on `R`.
    W,
    /// Interpolating profile on `R` with parameter `x`.
    Vstar { x: f64 },
    /// Profile on `R` whose travel time from -100 to 100 is `s`.
    Vsharp { s: f64 },
    H0,
    H,
    Q0,
    Q { m: u32 },
    Pstar { m: u32 },
    Pplus { m: u32 },
    P0 { m: u32 },
    /// `weight * a + (1 - weight) * b`.
    Blend { weight: ScalarExpr, a: Box<FieldExpr>, b: Box<FieldExpr> },
    /// Product field `(first(p[..k]), second(p[k..]))`.
    Block { first: Box<FieldExpr>, second: Box<FieldExpr> },
    /// `p -> inner(p - offset)`.
    Translate { offset: Vec<f64>, inner: Box<FieldExpr> },
    /// `p -> inner(p / factor)`.
    Scale { factor: f64, inner: Box<FieldExpr> },
    /// `inner` on the open cube of half-width `2 * half_width`, `outer` elsewhere.
    Exchange { half_width: u64, inner: Box<FieldExpr>, outer: Box<FieldExpr> },
    /// `inner` below the mirror height `center`, its reflected conjugate above.
    ReflectDouble { center: f64, inner: Box<FieldExpr> },
    /// Vertical slow-down block above a box that makes the box transit time constant.
    TimingBlock { base: Box<FieldExpr>, half_width: u64, level: i64, radius: f64 },
}

impl FieldExpr {
    pub fn blend(weight: ScalarExpr, a: FieldExpr, b: FieldExpr) -> Self {
        FieldExpr::Blend { weight, a: Box::new(a), b: Box::new(b) }
    }

    pub fn block(first: FieldExpr, second: FieldExpr) -> Self {
        FieldExpr::Block { first: Box::new(first), second: Box::new(second) }
    }

    pub fn translate(offset: Vec<f64>, inner: FieldExpr) -> Self {
        FieldExpr::Translate { offset, inner: Box::new(inner) }
    }

    pub fn scale(factor: f64, inner: FieldExpr) -> Self {
        FieldExpr::Scale { factor, inner: Box::new(inner) }
    }

    pub fn exchange(interval: SymInterval, inner: FieldExpr, outer: FieldExpr) -> Self {
        FieldExpr::Exchange { half_width: interval.half_width(), inner: Box::new(inner), outer: Box::new(outer) }
    }

    pub fn reflect_double(center: f64, inner: FieldExpr) -> Self {
        FieldExpr::ReflectDouble { center, inner: Box::new(inner) }
    }

    /// `factor * inner`, written as a blend against the zero field.
    pub fn times(factor: f64, inner: FieldExpr, dim: usize) -> Self {
        FieldExpr::blend(ScalarExpr::Const { value: factor }, inner, FieldExpr::Constant { value: vec![0.0; dim] })
    }
}

const DOC_FORMAT: &str = "flowlab-field";
const DOC_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    field: FieldExpr,
}

/// Serializes a field expression as a versioned JSON document.
pub fn to_document(expr: &FieldExpr) -> Result<String> {
    let doc = Document { format: DOC_FORMAT.into(), version: DOC_VERSION, field: expr.clone() };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses a field document; errors carry line and column from the JSON parser.
pub fn from_document(text: &str) -> Result<FieldExpr> {
    let doc: Document = serde_json::from_str(text)?;
    if doc.format != DOC_FORMAT {
        return Err(Error::Document(format!("unexpected format tag {:?}", doc.format)));
    }
    if doc.version != DOC_VERSION {
        return Err(Error::Document(format!("unsupported version {}", doc.version)));
    }
    Ok(doc.field)
}

#[derive(Debug)]
enum Node {
    Constant(Vec<f64>),
    V0,
    W,
    Vstar(f64),
    Vsharp(Vsharp),
    H0,
    H,
    Q0,
    Q(Arc<Racetrack>),
    Pump(Arc<PumpBundle>, PumpStage),
    Blend(ScalarExpr, Field, Field),
    Block(Field, Field),
    Translate(Vec<f64>, Field),
    Scale(f64, Field),
    Exchange(f64, Field, Field),
    ReflectDouble(f64, Field),
    Timing(TimingBlock),
}

/// A validated, evaluable vector field.
#[derive(Clone, Debug)]
pub struct Field {
    expr: Arc<FieldExpr>,
    node: Arc<Node>,
    dim: usize,
}

impl Field {
    pub fn new(expr: FieldExpr) -> Result<Self> {
        let (node, dim) = compile(&expr)?;
        Ok(Field { expr: Arc::new(expr), node: Arc::new(node), dim })
    }

    pub fn v0() -> Self {
        Field::new(FieldExpr::V0).expect("V0 compiles")
    }

    pub fn w() -> Self {
        Field::new(FieldExpr::W).expect("W compiles")
    }

    pub fn h0() -> Self {
        Field::new(FieldExpr::H0).expect("H0 compiles")
    }

    pub fn h() -> Self {
        Field::new(FieldExpr::H).expect("H compiles")
    }

    pub fn expr(&self) -> &FieldExpr {
        &self.expr
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The pump bundle behind a pump leaf, if this field is one.
    pub fn pump(&self) -> Option<&Arc<PumpBundle>> {
        match &*self.node {
            Node::Pump(p, _) => Some(p),
            _ => None,
        }
    }

    pub fn racetrack(&self) -> Option<&Arc<Racetrack>> {
        match &*self.node {
            Node::Q(r) => Some(r),
            Node::Pump(p, _) => Some(&p.racetrack),
            _ => None,
        }
    }

    pub fn timing_block(&self) -> Option<&TimingBlock> {
        match &*self.node {
            Node::Timing(t) => Some(t),
            _ => None,
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim {
            return Err(Error::Dimension { expected: self.dim, got });
        }
        Ok(())
    }

    /// Field value at `p`.
    pub fn eval(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(p.len())?;
        Ok(self.eval_s(p))
    }

    /// Field value at a point given in any scalar type; the caller guarantees the dimension.
    pub fn eval_s<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        match &*self.node {
            Node::Constant(v) => v.iter().map(|c| p[0].cst(*c)).collect(),
            Node::V0 => {
                let z = p[0].cst(0.0);
                vec![z.clone(), z.clone(), z, p[0].cst(1.0)]
            }
            Node::W => vec![w_s(&p[0])],
            Node::Vstar(x) => vec![vstar_s(&p[0].cst(*x), &p[0])],
            Node::Vsharp(v) => vec![v.eval_s(&p[0])],
            Node::H0 => h0_s(p),
            Node::H => h_s(p),
            Node::Q0 => vec![p[0].cst(0.0), p[0].cst(1.0)],
            Node::Q(r) => r.eval_s(p),
            Node::Pump(b, stage) => b.eval_s(*stage, p),
            Node::Blend(w, a, b) => {
                let wt = w.eval_s(p);
                if wt.is_constant() && wt.value() == 1.0 {
                    return a.eval_s(p);
                }
                if wt.is_constant() && wt.value() == 0.0 {
                    return b.eval_s(p);
                }
                let nw = -wt.clone() + 1.0;
                a.eval_s(p).into_iter().zip(b.eval_s(p)).map(|(x, y)| wt.clone() * x + nw.clone() * y).collect()
            }
            Node::Block(a, b) => {
                let mut out = a.eval_s(&p[..a.dim]);
                out.extend(b.eval_s(&p[a.dim..]));
                out
            }
            Node::Translate(rho, inner) => {
                let q: Vec<S> = p.iter().zip(rho).map(|(x, r)| x.clone() - *r).collect();
                inner.eval_s(&q)
            }
            Node::Scale(a, inner) => {
                let q: Vec<S> = p.iter().map(|x| x.clone() * (1.0 / a)).collect();
                inner.eval_s(&q)
            }
            Node::Exchange(a, inner, outer) => {
                if p.iter().all(|x| x.value().abs() < 2.0 * a) {
                    inner.eval_s(p)
                } else {
                    outer.eval_s(p)
                }
            }
            Node::ReflectDouble(c, inner) => {
                let d = p.len();
                if p[d - 1].value() < *c {
                    inner.eval_s(p)
                } else {
                    let mut q = p.to_vec();
                    q[d - 1] = -p[d - 1].clone() + 2.0 * c;
                    let mut v = inner.eval_s(&q);
                    for x in v.iter_mut().take(d - 1) {
                        *x = -x.clone();
                    }
                    v
                }
            }
            Node::Timing(t) => t.eval_s(p),
        }
    }

    /// Feature length scale of the field near `p`; integrators cap their steps by a fraction of it.
    pub fn step_scale(&self, p: &[f64]) -> f64 {
        match &*self.node {
            Node::Constant(_) | Node::V0 | Node::H0 | Node::Q0 => f64::INFINITY,
            Node::W | Node::Vstar(_) | Node::Vsharp(_) => {
                let y = p[0].abs();
                ((y - 95.0).abs().min((y - 96.0).abs())).max(1.0)
            }
            Node::H => (0.5 * p[0].hypot(p[1])).max(1.0),
            Node::Q(_) => {
                let d = p[0].abs().max(p[1].abs());
                if d < 50.0 {
                    1.0
                } else {
                    (d - 49.0).max(1.0)
                }
            }
            Node::Pump(b, _) => b.step_scale(p),
            Node::Blend(w, a, b) => w.step_scale(p).min(a.step_scale(p)).min(b.step_scale(p)),
            Node::Block(a, b) => a.step_scale(&p[..a.dim]).min(b.step_scale(&p[a.dim..])),
            Node::Translate(rho, inner) => {
                let q: Vec<f64> = p.iter().zip(rho).map(|(x, r)| x - r).collect();
                inner.step_scale(&q)
            }
            Node::Scale(a, inner) => {
                let q: Vec<f64> = p.iter().map(|x| x / a).collect();
                a * inner.step_scale(&q)
            }
            Node::Exchange(a, inner, outer) => {
                let n = p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if n < 2.0 * a {
                    inner.step_scale(p).min((3.0 * a - n).max(1.0))
                } else {
                    outer.step_scale(p).min((n - a).max(1.0))
                }
            }
            Node::ReflectDouble(c, inner) => {
                let mut q = p.to_vec();
                let d = q.len();
                q[d - 1] = 2.0 * c - p[d - 1];
                inner.step_scale(p).min(inner.step_scale(&q))
            }
            Node::Timing(t) => t.step_scale(p),
        }
    }
}

fn compile(expr: &FieldExpr) -> Result<(Node, usize)> {
    Ok(match expr {
        FieldExpr::Constant { value } => {
            if value.is_empty() || value.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid("constant field needs a nonempty finite vector".into()));
            }
            (Node::Constant(value.clone()), value.len())
        }
        FieldExpr::V0 => (Node::V0, 4),
        FieldExpr::W => (Node::W, 1),
        FieldExpr::Vstar { x } => {
            if !x.is_finite() {
                return Err(Error::Invalid("Vstar parameter must be finite".into()));
            }
            (Node::Vstar(*x), 1)
        }
        FieldExpr::Vsharp { s } => (Node::Vsharp(Vsharp::new(*s)?), 1),
        FieldExpr::H0 => (Node::H0, 2),
        FieldExpr::H => (Node::H, 2),
        FieldExpr::Q0 => (Node::Q0, 2),
        FieldExpr::Q { m } => (Node::Q(Arc::new(Racetrack::new(*m)?)), 2),
        FieldExpr::Pstar { m } => (Node::Pump(Arc::new(PumpBundle::new(*m)?), PumpStage::Star), 4),
        FieldExpr::Pplus { m } => (Node::Pump(Arc::new(PumpBundle::new(*m)?), PumpStage::Plus), 4),
        FieldExpr::P0 { m } => (Node::Pump(Arc::new(PumpBundle::new(*m)?), PumpStage::Full), 4),
        FieldExpr::Blend { weight, a, b } => {
            let a = Field::new((**a).clone())?;
            let b = Field::new((**b).clone())?;
            if a.dim != b.dim {
                return Err(Error::Dimension { expected: a.dim, got: b.dim });
            }
            weight.validate(a.dim)?;
            let d = a.dim;
            (Node::Blend(weight.clone(), a, b), d)
        }
        FieldExpr::Block { first, second } => {
            let a = Field::new((**first).clone())?;
            let b = Field::new((**second).clone())?;
            let d = a.dim + b.dim;
            (Node::Block(a, b), d)
        }
        FieldExpr::Translate { offset, inner } => {
            let f = Field::new((**inner).clone())?;
            if offset.len() != f.dim {
                return Err(Error::Dimension { expected: f.dim, got: offset.len() });
            }
            if offset.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid("translation offset must be finite".into()));
            }
            let d = f.dim;
            (Node::Translate(offset.clone(), f), d)
        }
        FieldExpr::Scale { factor, inner } => {
            if !(factor.is_finite() && *factor > 0.0) {
                return Err(Error::Invalid(format!("scale factor must be positive, got {factor}")));
            }
            let f = Field::new((**inner).clone())?;
            let d = f.dim;
            (Node::Scale(*factor, f), d)
        }
        FieldExpr::Exchange { half_width, inner, outer } => {
            let i = SymInterval::new(*half_width)?;
            let a = Field::new((**inner).clone())?;
            let b = Field::new((**outer).clone())?;
            if a.dim != b.dim {
                return Err(Error::Dimension { expected: a.dim, got: b.dim });
            }
            let d = a.dim;
            (Node::Exchange(i.a(), a, b), d)
        }
        FieldExpr::ReflectDouble { center, inner } => {
            if !center.is_finite() {
                return Err(Error::Invalid("mirror height must be finite".into()));
            }
            let f = Field::new((**inner).clone())?;
            let d = f.dim;
            (Node::ReflectDouble(*center, f), d)
        }
        FieldExpr::TimingBlock { base, half_width, level, radius } => {
            let f = Field::new((**base).clone())?;
            if f.dim != 4 {
                return Err(Error::Dimension { expected: 4, got: f.dim });
            }
            let i = SymInterval::new(*half_width)?;
            (Node::Timing(TimingBlock::new(f, i, *level, *radius)?), 4)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_values() {
        assert_eq!(Field::v0().eval(&[5.0, 5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(Field::h0().eval(&[2.0, 3.0]).unwrap(), vec![2.0, -3.0]);
        assert_eq!(Field::h().eval(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert!(Field::v0().eval(&[1.0]).is_err());
    }

    #[test]
    fn reflect_negates_lateral() {
        let f = Field::new(FieldExpr::reflect_double(
            0.0,
            FieldExpr::Constant { value: vec![0.5, 0.25, 0.0, 1.0] },
        ))
        .unwrap();
        assert_eq!(f.eval(&[0.0, 0.0, 0.0, -1.0]).unwrap(), vec![0.5, 0.25, 0.0, 1.0]);
        assert_eq!(f.eval(&[0.0, 0.0, 0.0, 1.0]).unwrap(), vec![-0.5, -0.25, -0.0, 1.0]);
    }

    #[test]
    fn document_round_trip() {
        let e = FieldExpr::translate(vec![0.1, 1.0 / 3.0, 0.0, -2.0], FieldExpr::P0 { m: 150 });
        let text = to_document(&e).unwrap();
        assert_eq!(from_document(&text).unwrap(), e);
    }

    #[test]
    fn bad_cutoff_rejected() {
        let e = FieldExpr::blend(
            ScalarExpr::BoxCutoff { center: vec![0.0; 4], inner: 5.0, outer: 5.0 },
            FieldExpr::V0,
            FieldExpr::V0,
        );
        assert!(Field::new(e).is_err());
    }
}
