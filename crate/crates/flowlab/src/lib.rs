//! Smooth vector fields on `R^4`, their flows and jets, and the surgeries that
//! turn a deterrence system into one with a periodic orbit.

pub mod error;
pub mod field;
pub mod flow;
pub mod interval;
pub mod jet;
pub mod jetlab;
pub mod ode;
pub mod pump;
pub mod quad;
pub mod pipeline;
pub mod racetrack;
pub mod report;
pub mod scalar;
pub mod timing;
pub mod travel;
pub mod verify;

pub use error::{Error, Result};
pub use field::{Field, FieldExpr, ScalarExpr};
pub use interval::SymInterval;
pub use jet::Jet;
pub use ode::OdeOptions;
pub use scalar::Scalar;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/kernel.md")]
    mod kernel {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/jets.md")]
    mod jets {}
    #[doc = include_str!("../../../book/src/constructions.md")]
    mod constructions {}
    #[doc = include_str!("../../../book/src/checks.md")]
    mod checks {}
}
