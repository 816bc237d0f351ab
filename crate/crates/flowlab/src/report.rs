//! Run configuration, number formatting and verification reports.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Scientific notation with 17 significant digits, stable across platforms.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Everything a run depends on. A run is reproducible from this document alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Integrator tolerance, used for both relative and absolute error.
    pub tol: f64,
    /// Highest jet order checked.
    pub order: usize,
    pub seed: u64,
    /// Overrides every per-lemma sample count when set.
    pub samples: Option<usize>,
    /// Overrides derived certification horizons when set.
    pub horizon: Option<f64>,
    /// Racetrack period.
    pub m: u32,
    /// Lemma keys to verify; empty means all.
    pub lemmas: Vec<String>,
    /// Adds wall-clock runtimes to reports, which makes them run-dependent.
    pub record_runtime: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tol: 1e-10,
            order: 2,
            seed: 0,
            samples: None,
            horizon: None,
            m: 150,
            lemmas: Vec::new(),
            record_runtime: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1e-3) {
            return Err(Error::Invalid(format!("tolerance {} must lie in (0, 1e-3)", self.tol)));
        }
        if self.order > crate::jet::MAX_ORDER {
            return Err(Error::Order { got: self.order, max: crate::jet::MAX_ORDER });
        }
        if self.samples == Some(0) {
            return Err(Error::Invalid("sample count must be at least 1".into()));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return Err(Error::Invalid(format!("horizon must be positive, got {h}")));
            }
        }
        Ok(())
    }

    /// Sample count for a check whose default is `default`.
    pub fn samples_or(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// How a measured value is compared with its bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    AtLeast,
}

/// One measured quantity of a lemma check.
#[derive(Clone, Debug, Serialize)]
pub struct Measure {
    pub name: String,
    #[serde(serialize_with = "ser17")]
    pub value: f64,
    #[serde(serialize_with = "ser17")]
    pub bound: f64,
    pub relation: Relation,
    pub pass: bool,
}

fn ser17<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&fmt17(*x))
}

impl Measure {
    pub fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Measure { name: name.into(), value, bound, relation: Relation::AtMost, pass: value <= bound }
    }

    pub fn at_least(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Measure { name: name.into(), value, bound, relation: Relation::AtLeast, pass: value >= bound }
    }
}

/// Outcome of verifying one lemma.
#[derive(Clone, Debug, Serialize)]
pub struct LemmaReport {
    pub key: String,
    pub title: String,
    pub pass: bool,
    pub measures: Vec<Measure>,
    pub config_hash: String,
    /// Set when the check could not run to completion.
    pub error: Option<String>,
    /// Set when the failure came from the integrator.
    pub integrator_failure: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_s: Option<String>,
}

impl LemmaReport {
    /// One-line human summary.
    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        let worst = self
            .measures
            .iter()
            .map(|m| format!("{}={}", m.name, fmt17(m.value)))
            .collect::<Vec<_>>()
            .join(" ");
        match &self.error {
            Some(e) => format!("{status} {} ({}) error: {e}", self.key, self.title),
            None => format!("{status} {} ({}) {worst}", self.key, self.title),
        }
    }
}

/// Reports ordered by key, with the config that produced them.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub config: RunConfig,
    pub config_hash: String,
    pub pass: bool,
    pub lemmas: Vec<LemmaReport>,
}

impl SuiteReport {
    pub fn new(config: RunConfig, mut lemmas: Vec<LemmaReport>) -> Self {
        lemmas.sort_by(|a, b| a.key.cmp(&b.key));
        let pass = lemmas.iter().all(|l| l.pass);
        SuiteReport { config_hash: config.hash(), config, pass, lemmas }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_has_seventeen_digits() {
        let s = fmt17(1.0 / 3.0);
        let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(mantissa.len(), 17);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..RunConfig::default() };
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_config_fields_rejected() {
        assert!(RunConfig::from_json(r#"{"tol": 1e-10, "bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"seed": 7}"#).is_ok());
    }
}
