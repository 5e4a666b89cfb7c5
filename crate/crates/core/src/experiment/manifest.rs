use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentError, SweepConfig};
use crate::train::{RunRecord, RunStatus};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl CellStatus {
    fn may_become(self, next: CellStatus) -> bool {
        matches!(
            (self, next),
            (CellStatus::Pending, CellStatus::Running)
                | (CellStatus::Running, CellStatus::Done)
                | (CellStatus::Running, CellStatus::Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub scale_index: usize,
    pub scale_label: String,
    pub param_count: usize,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

impl CellEntry {
    pub fn key(&self) -> (String, u64) {
        (self.scale_label.clone(), self.seed)
    }
}

/// Per-cell status of a sweep, owned by the orchestrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub format_version: u32,
    pub name: String,
    pub config_hash: String,
    /// Relative to the sweep's output directory.
    pub records_path: String,
    pub cells: Vec<CellEntry>,
}

impl SweepManifest {
    /// All cells pending, ordered by scale then seed.
    pub fn new(config: &SweepConfig) -> Self {
        let cells = config
            .scale_points
            .iter()
            .enumerate()
            .flat_map(|(i, m)| {
                config.seeds.iter().map(move |&seed| CellEntry {
                    scale_index: i,
                    scale_label: m.scale_label(),
                    param_count: m.param_count(),
                    seed,
                    status: CellStatus::Pending,
                    error: None,
                    checkpoint: None,
                })
            })
            .collect();
        Self {
            format_version: MANIFEST_VERSION,
            name: config.name.clone(),
            config_hash: config.config_hash(),
            records_path: RECORDS_FILE.to_string(),
            cells,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Manifest(format!("{}: {e}", path.display())))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(ExperimentError::Manifest(format!(
                "format version {} is not {MANIFEST_VERSION}",
                m.format_version
            )));
        }
        Ok(m)
    }

    /// Writes a temporary sibling and renames it over `path`.
    pub fn save(&self, path: &Path) -> Result<(), ExperimentError> {
        let tmp = path.with_extension("json.tmp");
        let json = serde_json::to_vec_pretty(self).map_err(|e| ExperimentError::Manifest(e.to_string()))?;
        {
            let mut f = File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
            f.write_all(&json).map_err(|e| io_err(&tmp, e))?;
            f.sync_all().map_err(|e| io_err(&tmp, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))
    }

    pub fn set_status(&mut self, index: usize, next: CellStatus) -> Result<(), ExperimentError> {
        let cell = &mut self.cells[index];
        if !cell.status.may_become(next) {
            return Err(ExperimentError::Manifest(format!(
                "cell {} seed {} cannot go from {:?} to {next:?}",
                cell.scale_label, cell.seed, cell.status
            )));
        }
        cell.status = next;
        Ok(())
    }

    pub fn count(&self, status: CellStatus) -> usize {
        self.cells.iter().filter(|c| c.status == status).count()
    }

    pub fn pending(&self) -> Vec<usize> {
        (0..self.cells.len()).filter(|&i| self.cells[i].status == CellStatus::Pending).collect()
    }

    /// Brings the manifest in line with the records on disk after an
    /// interruption. A cell with a record is finished whatever the manifest
    /// says; a cell left running without one is a lost run and starts over.
    pub fn reconcile(&mut self, records: &[RunRecord]) -> Result<(), ExperimentError> {
        let by_key: HashMap<(String, u64), &RunRecord> =
            records.iter().map(|r| ((r.scale_label.clone(), r.seed), r)).collect();
        for cell in &mut self.cells {
            match (by_key.get(&cell.key()), cell.status) {
                (Some(r), _) => {
                    cell.status = match r.status {
                        RunStatus::Completed => CellStatus::Done,
                        RunStatus::Diverged => CellStatus::Failed,
                    };
                    if r.status == RunStatus::Diverged && cell.error.is_none() {
                        cell.error = r.failure.clone();
                    }
                }
                (None, CellStatus::Running) => cell.status = CellStatus::Pending,
                (None, CellStatus::Done) => {
                    return Err(ExperimentError::Manifest(format!(
                        "cell {} seed {} is marked done but has no record",
                        cell.scale_label, cell.seed
                    )))
                }
                (None, _) => {}
            }
        }
        Ok(())
    }
}

/// Appends one record as a single newline-terminated write.
pub fn append_record(path: &Path, record: &RunRecord) -> Result<(), ExperimentError> {
    let mut line = record.to_json_line();
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_err(path, e))?;
    f.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
    f.sync_data().map_err(|e| io_err(path, e))
}

/// Reads a records file, first cutting off an unterminated final line left
/// by an interrupted write. A missing file reads as empty.
pub fn load_records_repairing(path: &Path) -> Result<Vec<RunRecord>, ExperimentError> {
    let mut bytes = Vec::new();
    match File::open(path) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path, e)),
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if keep < bytes.len() {
        let f = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
        f.set_len(keep as u64).map_err(|e| io_err(path, e))?;
        f.sync_all().map_err(|e| io_err(path, e))?;
        bytes.truncate(keep);
    }
    let text = String::from_utf8(bytes).map_err(|e| ExperimentError::Records(format!("{}: {e}", path.display())))?;
    parse_records(&text)
}

/// Parses JSONL records; blank lines are skipped.
pub fn parse_records(text: &str) -> Result<Vec<RunRecord>, ExperimentError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| RunRecord::from_json_line(l).map_err(|m| ExperimentError::Records(format!("line {}: {m}", i + 1))))
        .collect()
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> ExperimentError {
    ExperimentError::Io(format!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_are_monotone() {
        use CellStatus::*;
        assert!(Pending.may_become(Running));
        assert!(Running.may_become(Done));
        assert!(Running.may_become(Failed));
        for (a, b) in [(Pending, Done), (Done, Running), (Failed, Pending), (Done, Failed), (Running, Pending)] {
            assert!(!a.may_become(b), "{a:?} -> {b:?}");
        }
    }

    #[test]
    fn truncated_tail_is_cut() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(RECORDS_FILE);
        fs::write(&path, "{\"format_version\":").unwrap();
        assert!(load_records_repairing(&path).unwrap().is_empty());
        assert_eq!(fs::read(&path).unwrap().len(), 0);
        assert!(load_records_repairing(&dir.path().join("missing")).unwrap().is_empty());
    }
}
