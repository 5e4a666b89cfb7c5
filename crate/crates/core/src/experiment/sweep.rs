use std::collections::VecDeque;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Mutex};

use super::manifest::{
    append_record, io_err, load_records_repairing, CellStatus, SweepManifest, CHECKPOINT_DIR, MANIFEST_FILE,
    RECORDS_FILE,
};
use super::{ExperimentError, SweepConfig};
use crate::model::ModelConfig;
use crate::train::{train_run, train_run_full, RunRecord, RunStatus, TrainConfig};

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Continue a sweep already present in the output directory.
    pub resume: bool,
    /// Stop handing out work after this many runs finish.
    pub stop_after: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepEvent {
    Started { scale_label: String, seed: u64 },
    Finished { scale_label: String, seed: u64, status: CellStatus, detail: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub executed: usize,
    pub skipped: usize,
    pub done: usize,
    pub failed: usize,
    pub pending: usize,
}

/// Immutable description of one cell, handed to a worker.
struct RunSpec {
    cell: usize,
    model: ModelConfig,
    train: TrainConfig,
    checkpoint: Option<PathBuf>,
}

enum WorkerMessage {
    Started(usize),
    Finished(usize, Result<RunRecord, String>),
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.join(MANIFEST_FILE)
}

pub fn records_path(out: &Path) -> PathBuf {
    out.join(RECORDS_FILE)
}

/// Runs every pending cell of `config` with at most `max_parallel` workers.
///
/// Records are appended to `records.jsonl` before the manifest marks their
/// cell done, so a crash between the two is repaired on resume. A run that
/// errors or diverges marks its cell failed; only I/O and manifest problems
/// abort the sweep.
pub fn run_sweep(
    config: &SweepConfig,
    options: &SweepOptions,
    on_event: &mut dyn FnMut(&SweepEvent),
) -> Result<SweepSummary, ExperimentError> {
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mpath = manifest_path(out);
    let rpath = records_path(out);

    let mut manifest = if mpath.exists() {
        if !options.resume {
            return Err(ExperimentError::Config(format!(
                "{} already holds a sweep; pass resume to continue it",
                out.display()
            )));
        }
        let mut m = SweepManifest::load(&mpath)?;
        if m.config_hash != config.config_hash() {
            return Err(ExperimentError::ConfigDrift {
                stored: m.config_hash,
                current: config.config_hash(),
            });
        }
        m.reconcile(&load_records_repairing(&rpath)?)?;
        m
    } else {
        if rpath.exists() && !load_records_repairing(&rpath)?.is_empty() {
            return Err(ExperimentError::Manifest(format!("{} exists without a manifest", rpath.display())));
        }
        SweepManifest::new(config)
    };
    manifest.save(&mpath)?;

    let pending = manifest.pending();
    let skipped = manifest.cells.len() - pending.len();
    if config.checkpoints {
        let dir = out.join(CHECKPOINT_DIR);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    }
    let mut queue: VecDeque<RunSpec> = pending
        .iter()
        .map(|&i| {
            let c = &manifest.cells[i];
            RunSpec {
                cell: i,
                model: config.scale_points[c.scale_index],
                train: config.train_for_seed(c.seed),
                checkpoint: config
                    .checkpoints
                    .then(|| out.join(CHECKPOINT_DIR).join(format!("{}-seed{}.ssck", c.scale_label, c.seed))),
            }
        })
        .collect();
    let workers = config.max_parallel.min(pending.len()).max(1);
    let mut executed = 0;

    let (job_tx, job_rx) = mpsc::channel::<RunSpec>();
    let job_rx = Mutex::new(job_rx);
    std::thread::scope(|scope| -> Result<(), ExperimentError> {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let job_rx = &job_rx;
            scope.spawn(move || loop {
                let next = job_rx.lock().expect("job lock").recv();
                let Ok(spec) = next else {
                    break;
                };
                if tx.send(WorkerMessage::Started(spec.cell)).is_err() {
                    break;
                }
                let result = execute(&spec);
                if tx.send(WorkerMessage::Finished(spec.cell, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Keep exactly one job per idle worker in flight, so that stopping
        // takes effect before any further run starts.
        let mut job_tx = Some(job_tx);
        let mut in_flight = 0;
        let mut dispatch = |job_tx: &mut Option<mpsc::Sender<RunSpec>>, in_flight: &mut usize| {
            if let Some(j) = queue.pop_front() {
                if let Some(tx) = job_tx {
                    tx.send(j).expect("workers outlive the dispatcher");
                    *in_flight += 1;
                }
            }
            if queue.is_empty() {
                *job_tx = None;
            }
        };
        for _ in 0..workers {
            dispatch(&mut job_tx, &mut in_flight);
        }

        while in_flight > 0 {
            let msg = rx.recv().expect("a worker holds each in-flight job");
            match msg {
                WorkerMessage::Started(i) => {
                    manifest.set_status(i, CellStatus::Running)?;
                    manifest.save(&mpath)?;
                    let c = &manifest.cells[i];
                    on_event(&SweepEvent::Started {
                        scale_label: c.scale_label.clone(),
                        seed: c.seed,
                    });
                }
                WorkerMessage::Finished(i, result) => {
                    let (status, detail) = match result {
                        Ok(record) => {
                            append_record(&rpath, &record)?;
                            match record.status {
                                RunStatus::Completed => (CellStatus::Done, summarize(&record)),
                                RunStatus::Diverged => {
                                    let why = record.failure.clone().unwrap_or_else(|| "diverged".into());
                                    manifest.cells[i].error = Some(why.clone());
                                    (CellStatus::Failed, why)
                                }
                            }
                        }
                        Err(why) => {
                            manifest.cells[i].error = Some(why.clone());
                            (CellStatus::Failed, why)
                        }
                    };
                    if status == CellStatus::Done && config.checkpoints {
                        let c = &manifest.cells[i];
                        manifest.cells[i].checkpoint =
                            Some(format!("{CHECKPOINT_DIR}/{}-seed{}.ssck", c.scale_label, c.seed));
                    }
                    manifest.set_status(i, status)?;
                    manifest.save(&mpath)?;
                    executed += 1;
                    let c = &manifest.cells[i];
                    on_event(&SweepEvent::Finished {
                        scale_label: c.scale_label.clone(),
                        seed: c.seed,
                        status,
                        detail,
                    });
                    in_flight -= 1;
                    if options.stop_after.is_some_and(|k| executed >= k) {
                        job_tx = None;
                    } else {
                        dispatch(&mut job_tx, &mut in_flight);
                    }
                }
            }
        }
        drop(job_tx);
        Ok(())
    })?;

    Ok(SweepSummary {
        executed,
        skipped,
        done: manifest.count(CellStatus::Done),
        failed: manifest.count(CellStatus::Failed),
        pending: manifest.count(CellStatus::Pending),
    })
}

fn summarize(r: &RunRecord) -> String {
    let em: Vec<String> = r.metrics.em_by_length.iter().map(|(l, v)| format!("em@{l}={v:.3}")).collect();
    format!("{} in {:.1}s", em.join(" "), r.wall_time_secs)
}

fn execute(spec: &RunSpec) -> Result<RunRecord, String> {
    let run = || -> Result<RunRecord, String> {
        match &spec.checkpoint {
            None => train_run(&spec.model, &spec.train).map_err(|e| e.to_string()),
            Some(path) => {
                let outcome = train_run_full(&spec.model, &spec.train).map_err(|e| e.to_string())?;
                if outcome.record.status == RunStatus::Completed {
                    let tmp = path.with_extension("ssck.tmp");
                    let f = fs::File::create(&tmp).map_err(|e| format!("{}: {e}", tmp.display()))?;
                    outcome
                        .params
                        .write_checkpoint(spec.train.seed, std::io::BufWriter::new(f))
                        .map_err(|e| e.to_string())?;
                    fs::rename(&tmp, path).map_err(|e| format!("{}: {e}", path.display()))?;
                }
                Ok(outcome.record)
            }
        }
    };
    catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
        let msg = panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "worker panicked".into());
        Err(format!("panic: {msg}"))
    })
}
