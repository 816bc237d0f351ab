use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("jet order {got} exceeds the supported maximum {max}")]
    Order { got: usize, max: usize },
    #[error("integrator failure at t = {t}: {reason} (state {state:?})")]
    Integrator { t: f64, reason: String, state: Vec<f64> },
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("root finding failed: {0}")]
    Root(String),
    #[error("no crossing within horizon {horizon}: orbit possibly deterred")]
    PossiblyDeterred { horizon: f64 },
    #[error("precondition failed in {stage}: {detail}")]
    Precondition { stage: String, detail: String, witness: Option<Vec<f64>> },
    #[error("document error: {0}")]
    Document(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn precondition(stage: &str, detail: impl Into<String>, witness: Option<Vec<f64>>) -> Self {
        Error::Precondition { stage: stage.to_string(), detail: detail.into(), witness }
    }

    pub fn is_integrator(&self) -> bool {
        matches!(self, Error::Integrator { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
