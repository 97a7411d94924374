//! Seeded experiments comparing belief memory with its baselines.

mod adversarial;
mod convergence;
mod scenario;

pub use adversarial::{
    correction_of, gen_adversarial_samples, run_adversarial, AdversarialSample, AdversarialSpec,
    CorrectionMetrics, SampleTrace, StepKind, CORRECT, FLAWED,
};
pub use convergence::{
    belief_top1, candidate_name, gen_convergence_stream, run_convergence, ConvergenceOutcome,
    ConvergenceSpec, ConvergenceStream,
};
pub use scenario::{
    scenario_api_timeout, Action, ApiBehavior, Outcome, Policy, ScenarioStep, ScenarioTrace,
    FORCED_CALLS, OPERATIONAL, RETRY_THRESHOLD, SCENARIO_STEPS,
};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::BankError;
use crate::canonical::to_canonical_string;
use crate::extraction::ExtractError;
use crate::retrieval::RetrievalError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Belief(#[from] crate::belief::BeliefError),
    #[error("writing metrics: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing metrics: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryKind {
    Belief,
    Frequency,
    Deterministic,
}

impl MemoryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MemoryKind::Belief => "belief",
            MemoryKind::Frequency => "frequency",
            MemoryKind::Deterministic => "deterministic",
        }
    }
}

/// One run's metrics document. Fields that do not apply to the experiment
/// are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetrics {
    pub experiment: String,
    pub memory: Option<MemoryKind>,
    pub spec: serde_json::Value,
    pub seed: Option<u64>,
    pub curve: Vec<f64>,
    pub final_rate: Option<f64>,
    pub correction_rate: Option<f64>,
    pub mean_steps: Option<f64>,
}

impl ExperimentMetrics {
    pub fn convergence(spec: &ConvergenceSpec, outcome: &ConvergenceOutcome) -> Self {
        Self {
            experiment: "convergence".into(),
            memory: Some(outcome.memory),
            spec: serde_json::to_value(spec).expect("spec serializes"),
            seed: Some(spec.seed),
            curve: outcome.curve.clone(),
            final_rate: Some(outcome.final_rate),
            correction_rate: None,
            mean_steps: None,
        }
    }

    pub fn adversarial(spec: &AdversarialSpec, metrics: &CorrectionMetrics) -> Self {
        Self {
            experiment: "adversarial".into(),
            memory: Some(metrics.memory),
            spec: serde_json::to_value(spec).expect("spec serializes"),
            seed: Some(spec.seed),
            curve: Vec::new(),
            final_rate: None,
            correction_rate: Some(metrics.correction_rate),
            mean_steps: metrics.mean_correction_steps,
        }
    }

    /// Canonical JSON, byte-identical for identical runs.
    pub fn to_canonical_string(&self) -> String {
        to_canonical_string(self).expect("metrics serialize")
    }
}

/// Writes curves side by side: `step,<name>,<name>...`, one row per round.
pub fn write_curves_csv<W: Write>(out: W, curves: &[(&str, &[f64])]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_owned()];
    header.extend(curves.iter().map(|(name, _)| (*name).to_owned()));
    w.write_record(&header)?;
    let rows = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..rows {
        let mut record = vec![(i + 1).to_string()];
        record.extend(
            curves
                .iter()
                .map(|(_, c)| c.get(i).map_or_else(String::new, |v| format!("{v:.6}"))),
        );
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
