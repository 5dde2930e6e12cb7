use serde::{Deserialize, Serialize};

use crate::engine::Diagnostics;
use crate::error::{Error, ErrorKind};
use crate::tasks::ConstraintSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordError {
    pub kind: ErrorKind,
    pub message: String,
}

impl From<&Error> for RecordError {
    fn from(err: &Error) -> Self {
        Self {
            kind: err.kind(),
            message: err.to_string(),
        }
    }
}

/// Compact view of the ESS trace of the final attempt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EssSummary {
    pub steps: usize,
    pub min: Option<f64>,
    pub mean: Option<f64>,
    pub last: Option<f64>,
    pub resamples: usize,
}

impl EssSummary {
    pub fn from_diagnostics(d: &Diagnostics) -> Self {
        let t = &d.ess_trace;
        Self {
            steps: d.steps_executed,
            min: t.iter().copied().reduce(f64::min),
            mean: (!t.is_empty()).then(|| t.iter().sum::<f64>() / t.len() as f64),
            last: t.last().copied(),
            resamples: d.resample_events.len(),
        }
    }
}

/// One line of a record file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub run_id: String,
    pub task_index: usize,
    pub task_id: Option<String>,
    pub task_type: String,
    pub constraints: Vec<ConstraintSpec>,
    pub method: String,
    pub n_particles: usize,
    /// Run-level seed; the task's own seed is derived from it and the index.
    pub seed: u64,
    pub task_seed: u64,
    pub selected_text: Option<String>,
    /// External verification of the selected text.
    pub passed: bool,
    pub weighted_pass_at_1: f64,
    pub coherency_proxy: Option<f64>,
    pub retries_used: usize,
    pub attempts: usize,
    pub error: Option<RecordError>,
    /// Seconds; only filled when timing is requested, so records stay
    /// byte-stable by default.
    pub wall_time: Option<f64>,
    pub ess: EssSummary,
}

impl RunRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}
