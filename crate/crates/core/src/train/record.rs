use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::metrics::LengthMetrics;
use crate::model::{ArchitectureNotes, ModelConfig};
use crate::tasks::TaskKind;

pub const RUN_RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged,
}

/// The four per-length metrics stored in a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Em,
    ContinuousError,
    MinProb,
    MeanNll,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [Self::Em, Self::ContinuousError, Self::MinProb, Self::MeanNll];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Em => "em",
            Self::ContinuousError => "continuous_error",
            Self::MinProb => "min_prob",
            Self::MeanNll => "mean_nll",
        }
    }

    /// Whether larger values are better.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Self::Em | Self::MinProb)
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric {s:?}; expected one of em, continuous_error, min_prob, mean_nll"))
    }
}

/// Final metrics keyed by evaluation length.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub em_by_length: BTreeMap<usize, f64>,
    pub continuous_error_by_length: BTreeMap<usize, f64>,
    pub minprob_by_length: BTreeMap<usize, f64>,
    pub mean_nll_by_length: BTreeMap<usize, f64>,
}

impl FinalMetrics {
    pub fn insert(&mut self, length: usize, m: LengthMetrics) {
        self.em_by_length.insert(length, m.em);
        self.continuous_error_by_length.insert(length, m.continuous_error);
        self.minprob_by_length.insert(length, m.min_prob);
        self.mean_nll_by_length.insert(length, m.mean_nll);
    }

    pub fn by_length(&self, metric: MetricName) -> &BTreeMap<usize, f64> {
        match metric {
            MetricName::Em => &self.em_by_length,
            MetricName::ContinuousError => &self.continuous_error_by_length,
            MetricName::MinProb => &self.minprob_by_length,
            MetricName::MeanNll => &self.mean_nll_by_length,
        }
    }

    pub fn get(&self, metric: MetricName, length: usize) -> Option<f64> {
        self.by_length(metric).get(&length).copied()
    }

    pub fn is_empty(&self) -> bool {
        MetricName::ALL.iter().all(|&m| self.by_length(m).is_empty())
    }
}

/// Metrics measured at an intermediate step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub length: usize,
    pub metrics: LengthMetrics,
}

/// Outcome of one (task, scale, seed) training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub task_kind: TaskKind,
    pub scale_label: String,
    pub param_count: usize,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub seed: u64,
    pub architecture: ArchitectureNotes,
    pub warmup_steps: usize,
    pub metrics: FinalMetrics,
    pub initial_loss: Option<f64>,
    pub steps_completed: usize,
    /// Sampled `(step, loss)` pairs.
    pub train_loss_trace: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eval_trace: Vec<EvalPoint>,
    pub wall_time_secs: f64,
}

impl RunRecord {
    /// Checks value ranges of a completed record.
    pub fn validate(&self) -> Result<(), String> {
        if self.format_version != RUN_RECORD_VERSION {
            return Err(format!(
                "format_version {} is not supported (expected {RUN_RECORD_VERSION})",
                self.format_version
            ));
        }
        let check = |metric: MetricName, ok: fn(f64) -> bool| {
            for (len, &v) in self.metrics.by_length(metric) {
                if !ok(v) {
                    return Err(format!("{metric} at length {len} is out of range: {v}"));
                }
            }
            Ok(())
        };
        check(MetricName::Em, |v| (0.0..=1.0).contains(&v))?;
        check(MetricName::MinProb, |v| (0.0..=1.0).contains(&v))?;
        check(MetricName::ContinuousError, |v| v >= 0.0 && v.is_finite())?;
        check(MetricName::MeanNll, |v| v >= 0.0 && v.is_finite())?;
        if self.status == RunStatus::Completed && self.metrics.is_empty() {
            return Err("completed record has no metrics".into());
        }
        Ok(())
    }

    /// One JSON object without a trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }

    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let rec: RunRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        rec.validate()?;
        Ok(rec)
    }

    /// Every field except wall-clock time, for reproducibility comparisons.
    pub fn without_timing(&self) -> RunRecord {
        RunRecord {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}
