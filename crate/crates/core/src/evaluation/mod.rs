//! Scoring of predicted answers and aggregation into study objectives.

pub mod bootstrap;
pub mod grading;
pub mod metrics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use bootstrap::bootstrap_ci;
pub use grading::llm_correctness;
pub use metrics::{exact_match, normalize_answer, token_f1};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("cannot aggregate an empty score list")]
    EmptyScoreList,
    #[error("score list mixes metrics {0} and {1}")]
    MixedMetrics(Metric, Metric),
    #[error("bootstrap needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("bootstrap needs at least one resample")]
    NoResamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Em,
    F1,
    Correctness,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Em, Metric::F1, Metric::Correctness];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Em => "em",
            Metric::F1 => "f1",
            Metric::Correctness => "correctness",
        }
    }

    /// Column label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Metric::Em => "EM",
            Metric::F1 => "F1",
            Metric::Correctness => "Correctness",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric `{s}` (expected em, f1 or correctness)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub instance_id: String,
    pub metric: Metric,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_note: Option<String>,
}

impl QuestionScore {
    pub fn new(instance_id: &str, metric: Metric, value: f64) -> Self {
        QuestionScore { instance_id: instance_id.to_string(), metric, value: value.clamp(0.0, 1.0), error_note: None }
    }

    /// A zero score carrying the reason the question could not be scored.
    pub fn failed(instance_id: &str, metric: Metric, note: impl Into<String>) -> Self {
        QuestionScore { error_note: Some(note.into()), ..QuestionScore::new(instance_id, metric, 0.0) }
    }
}

/// Arithmetic mean of single-metric scores.
pub fn aggregate(per_question: &[QuestionScore]) -> Result<f64, EvalError> {
    let first = per_question.first().ok_or(EvalError::EmptyScoreList)?;
    if let Some(other) = per_question.iter().find(|s| s.metric != first.metric) {
        return Err(EvalError::MixedMetrics(first.metric, other.metric));
    }
    Ok(per_question.iter().map(|s| s.value).sum::<f64>() / per_question.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: Metric,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub resamples: usize,
    pub per_question: Vec<QuestionScore>,
}

impl ScoreReport {
    /// Mean plus percentile bootstrap interval. With a single question the
    /// interval collapses to the mean.
    pub fn build(per_question: Vec<QuestionScore>, resamples: usize, level: f64, seed: u64) -> Result<Self, EvalError> {
        let mean = aggregate(&per_question)?;
        let (ci_low, ci_high) = if per_question.len() < 2 {
            (mean, mean)
        } else {
            let values: Vec<f64> = per_question.iter().map(|s| s.value).collect();
            let (lo, hi) = bootstrap_ci(&values, resamples, level, seed)?;
            // The percentile interval can miss the mean on tiny skewed samples.
            (lo.min(mean), hi.max(mean))
        };
        Ok(ScoreReport { metric: per_question[0].metric, mean, ci_low, ci_high, resamples, per_question })
    }
}
