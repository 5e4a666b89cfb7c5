use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_finite, AnalysisError};
use crate::tasks::TaskKind;
use crate::train::{MetricName, RunRecord, RunStatus};

/// One metric's per-seed values at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationDistribution {
    pub task_kind: TaskKind,
    pub scale_label: String,
    pub param_count: usize,
    pub metric_name: MetricName,
    pub eval_length: usize,
    pub values: Vec<f64>,
    pub seed_ids: Vec<u64>,
}

impl PopulationDistribution {
    pub fn new(
        task_kind: TaskKind,
        scale_label: impl Into<String>,
        param_count: usize,
        metric_name: MetricName,
        eval_length: usize,
        values: Vec<f64>,
        seed_ids: Vec<u64>,
    ) -> Result<Self, AnalysisError> {
        let scale_label = scale_label.into();
        check_finite(&values, "population")?;
        if values.len() != seed_ids.len() {
            return Err(AnalysisError::Mismatch(format!(
                "{} values but {} seed ids",
                values.len(),
                seed_ids.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(&seed) = seed_ids.iter().find(|s| !seen.insert(**s)) {
            return Err(AnalysisError::DuplicateSeed {
                scale: scale_label,
                seed,
            });
        }
        Ok(Self {
            task_kind,
            scale_label,
            param_count,
            metric_name,
            eval_length,
            values,
            seed_ids,
        })
    }

    /// A population with seed ids `0..n`, for synthetic inputs.
    pub fn from_values(scale_label: impl Into<String>, param_count: usize, values: Vec<f64>) -> Result<Self, AnalysisError> {
        let seeds = (0..values.len() as u64).collect();
        Self::new(TaskKind::Count, scale_label, param_count, MetricName::Em, 0, values, seeds)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_for_seed(&self, seed: u64) -> Option<f64> {
        self.seed_ids.iter().position(|&s| s == seed).map(|i| self.values[i])
    }
}

/// Values at ascending scales.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingCurve {
    pub scale_labels: Vec<String>,
    pub param_counts: Vec<usize>,
    pub y: Vec<f64>,
}

impl ScalingCurve {
    pub fn new(scale_labels: Vec<String>, param_counts: Vec<usize>, y: Vec<f64>) -> Result<Self, AnalysisError> {
        if y.len() < 2 {
            return Err(AnalysisError::InvalidArgument("a scaling curve needs at least two points".into()));
        }
        if scale_labels.len() != y.len() || param_counts.len() != y.len() {
            return Err(AnalysisError::Mismatch("curve field lengths".into()));
        }
        if param_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AnalysisError::InvalidArgument("scales must be strictly ascending by parameter count".into()));
        }
        Ok(Self {
            scale_labels,
            param_counts,
            y,
        })
    }

    /// Scales labelled `0, 1, ...` with parameter counts `1, 2, ...`.
    pub fn from_values(y: Vec<f64>) -> Result<Self, AnalysisError> {
        let n = y.len();
        Self::new((0..n).map(|i| i.to_string()).collect(), (1..=n).collect(), y)
    }
}

type GroupKey = (TaskKind, MetricName, usize, usize, String);

/// Groups completed records into populations per (task, scale, metric,
/// evaluation length), ordered by task, metric, length, then parameter
/// count. Diverged records are skipped.
pub fn populations_from_records(records: &[RunRecord]) -> Result<Vec<PopulationDistribution>, AnalysisError> {
    let mut seen: HashSet<(TaskKind, String, u64)> = HashSet::new();
    let mut groups: BTreeMap<GroupKey, (Vec<f64>, Vec<u64>)> = BTreeMap::new();
    for r in records {
        if !seen.insert((r.task_kind, r.scale_label.clone(), r.seed)) {
            return Err(AnalysisError::DuplicateSeed {
                scale: r.scale_label.clone(),
                seed: r.seed,
            });
        }
        if r.status != RunStatus::Completed {
            continue;
        }
        for metric in MetricName::ALL {
            for (&len, &v) in r.metrics.by_length(metric) {
                let g = groups
                    .entry((r.task_kind, metric, len, r.param_count, r.scale_label.clone()))
                    .or_default();
                g.0.push(v);
                g.1.push(r.seed);
            }
        }
    }
    groups
        .into_iter()
        .map(|((task, metric, len, params, label), (values, seeds))| {
            PopulationDistribution::new(task, label, params, metric, len, values, seeds)
        })
        .collect()
}

/// Reads RunRecord JSONL and groups it with [`populations_from_records`].
/// Blank lines are ignored.
pub fn ingest_run_records_from<R: BufRead>(reader: R) -> Result<Vec<PopulationDistribution>, AnalysisError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| AnalysisError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = RunRecord::from_json_line(&line).map_err(|message| AnalysisError::Parse { line: i + 1, message })?;
        records.push(rec);
    }
    populations_from_records(&records)
}

pub fn ingest_run_records(path: &Path) -> Result<Vec<PopulationDistribution>, AnalysisError> {
    let f = std::fs::File::open(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
    ingest_run_records_from(std::io::BufReader::new(f))
}
