//! Seed-by-scale sweeps: configuration files, the resumable orchestrator,
//! and the CSV tables produced from the resulting run records.
//!
//! A sweep's output directory holds `manifest.json` (per-cell status, never
//! partially written), `records.jsonl` (one run record per line, appended
//! whole) and, optionally, `checkpoints/`.
//!
//! Configuration files are TOML. Unknown keys are rejected at every level:
//!
//! ```toml
//! name = "count-desk-width"
//! task = "count"                 # or "addition"
//! preset = "desk"                # "full" (default) or "desk"
//! output_dir = "runs/count-desk-width"
//! max_parallel = 4               # default: logical cores
//! checkpoints = false
//!
//! [seeds]
//! start = 0                      # or: list = [0, 1, 2]
//! count = 20
//!
//! [scale]
//! axis = "fixed_depth_scale_width"
//! depth = 1
//! widths = [64, 128, 256]        # fixed_width_scale_depth takes width + depths
//! head_dim = 16                  # default: 64, or 16 under the desk preset
//!
//! [train]                        # any training field; overrides the preset
//! steps = 2000
//! eval_lengths = [10, 20]
//! ```

mod config;
mod manifest;
mod report;
mod sweep;

use std::io::BufRead;

use thiserror::Error;

pub use config::{default_parallelism, parse_seed_range, PresetName, SweepAxis, SweepConfig};
pub use manifest::{
    append_record, load_records_repairing, parse_records, CellEntry, CellStatus, SweepManifest, CHECKPOINT_DIR,
    MANIFEST_FILE, MANIFEST_VERSION, RECORDS_FILE,
};
pub use report::{
    analyze, top_seeds, write_analysis, AnalysisReport, AnalysisSpec, CurveGroup, CurveRow, MixtureRow, SeedScore,
    BIMODALITY_CSV, CURVES_CSV, HISTOGRAM_CSV, KDE_CSV, SEED_RANKINGS_CSV, SEED_SCORES_CSV, TOP_SEEDS,
};
pub use sweep::{manifest_path, records_path, run_sweep, SweepEvent, SweepOptions, SweepSummary};

use crate::analysis::AnalysisError;
use crate::seeding::{self, Stream};
use crate::tasks::{Task, TaskError, TaskKind};
use crate::train::RunRecord;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("configuration changed since the sweep started (stored hash {stored}, current {current})")]
    ConfigDrift { stored: String, current: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("records: {0}")]
    Records(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Task(#[from] TaskError),
}

/// `n` examples of one logical length rendered as surface text, one per line.
/// `max_eval_length` sizes the addition hint vocabulary and defaults to
/// `length`.
pub fn dump_examples(
    task_kind: TaskKind,
    n: usize,
    length: usize,
    seed: u64,
    max_eval_length: Option<usize>,
) -> Result<Vec<String>, TaskError> {
    let task = Task::new(task_kind, max_eval_length.unwrap_or(length).max(length));
    let mut rng = seeding::stream(seed, Stream::Data);
    (0..n)
        .map(|_| {
            let ex = task.sample(&mut rng, length, length)?;
            task.render(&ex)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LintReport {
    pub records: usize,
    /// `(1-based line, message)`.
    pub problems: Vec<(usize, String)>,
}

impl LintReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Checks every line of a records file against the record schema and flags
/// repeated (task, scale, seed) keys and an unterminated last line.
pub fn lint_records<R: BufRead>(mut reader: R) -> Result<LintReport, ExperimentError> {
    let mut report = LintReport::default();
    let mut seen = std::collections::HashMap::new();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(|e| ExperimentError::Io(e.to_string()))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !buf.ends_with('\n') {
            report.problems.push((line_no, "last line is not newline-terminated".into()));
        }
        let line = buf.trim();
        if line.is_empty() {
            continue;
        }
        match RunRecord::from_json_line(line) {
            Ok(r) => {
                report.records += 1;
                let key = (r.task_kind, r.scale_label.clone(), r.seed);
                if let Some(first) = seen.insert(key, line_no) {
                    report.problems.push((
                        line_no,
                        format!("{} seed {} already recorded on line {first}", r.scale_label, r.seed),
                    ));
                }
            }
            Err(m) => report.problems.push((line_no, m)),
        }
    }
    Ok(report)
}
