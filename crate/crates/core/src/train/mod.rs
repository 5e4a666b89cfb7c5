//! Seeded training of one model on one task at one scale point.
//!
//! The run seed drives two independent streams, one for initialization and
//! one for batch sampling. Evaluation sets come from `eval_seed`, which is
//! shared by every seed of a population so all members face the same items.

mod optim;
mod record;
mod schedule;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use optim::{optimizer_step, AdamSettings, MomentState};
pub use record::{EvalPoint, FinalMetrics, MetricName, RunRecord, RunStatus, RUN_RECORD_VERSION};
pub use schedule::{lr_at, Schedule, WARMUP_STEPS};

use crate::metrics::{evaluate, LengthMetrics, MetricError, ScoringScope};
use crate::model::{
    forward, init_params, loss_and_grad, write_checkpoint, ArchitectureNotes, LogitScope, ModelConfig, ModelError,
    Params, Scalar, DEFAULT_HEAD_DIM,
};
use crate::seeding::{self, Stream};
use crate::tasks::{CountEvalMode, Example, PackedBatch, Task, TaskError, TaskKind};

/// Consecutive steps of perfect in-distribution accuracy that end a run
/// early when early stopping is enabled.
pub const EARLY_STOP_WINDOW: usize = 200;

/// Head width used by the desk presets.
pub const DESK_HEAD_DIM: usize = 16;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("step {step} is outside the schedule of {steps} steps")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Floating-point type used for parameters and arithmetic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

fn one() -> usize {
    1
}

fn default_trace_every() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task_kind: TaskKind,
    #[serde(default = "one")]
    pub min_train_length: usize,
    pub max_train_length: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub context_length: usize,
    pub peak_lr: f64,
    #[serde(default)]
    pub schedule: Schedule,
    pub weight_decay: f64,
    #[serde(default)]
    pub adam: AdamSettings,
    #[serde(default)]
    pub seed: u64,
    pub eval_lengths: Vec<usize>,
    pub eval_items: usize,
    #[serde(default)]
    pub eval_mode: CountEvalMode,
    #[serde(default)]
    pub eval_seed: u64,
    #[serde(default)]
    pub scoring: ScoringScope,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
    #[serde(default)]
    pub eval_every: Option<usize>,
    #[serde(default)]
    pub early_stop: bool,
    #[serde(default)]
    pub precision: Precision,
}

impl TrainConfig {
    /// Count at full size: lengths up to 30, tested at 60.
    pub fn count_full() -> Self {
        Self {
            task_kind: TaskKind::Count,
            min_train_length: 1,
            max_train_length: 30,
            steps: 10_000,
            batch_size: 128,
            context_length: 256,
            peak_lr: 1e-3,
            schedule: Schedule::Cosine,
            weight_decay: 0.1,
            adam: AdamSettings::default(),
            seed: 0,
            eval_lengths: vec![30, 60],
            eval_items: 100,
            eval_mode: CountEvalMode::AllWindows,
            eval_seed: 0,
            scoring: ScoringScope::AnswerOnly,
            trace_every: 50,
            eval_every: None,
            early_stop: false,
            precision: Precision::F32,
        }
    }

    /// Addition at full size: up to 35 digits, tested at 40.
    pub fn addition_full() -> Self {
        Self {
            task_kind: TaskKind::Addition,
            max_train_length: 35,
            steps: 30_000,
            batch_size: 64,
            context_length: 512,
            peak_lr: 1e-4,
            weight_decay: 0.0,
            eval_lengths: vec![35, 40],
            eval_items: 500 * 128,
            eval_mode: CountEvalMode::Sampled,
            trace_every: 100,
            ..Self::count_full()
        }
    }

    /// Count at desk size: lengths up to 10, tested at 20.
    pub fn count_desk() -> Self {
        Self {
            max_train_length: 10,
            steps: 2000,
            batch_size: 64,
            context_length: 32,
            peak_lr: 1.5e-2,
            adam: AdamSettings {
                beta2: 0.98,
                ..AdamSettings::default()
            },
            eval_lengths: vec![10, 20],
            trace_every: 10,
            ..Self::count_full()
        }
    }

    /// Addition at desk size: up to 6 digits, tested at 8.
    pub fn addition_desk() -> Self {
        Self {
            max_train_length: 6,
            steps: 2000,
            batch_size: 32,
            context_length: 128,
            peak_lr: 1e-3,
            eval_lengths: vec![6, 8],
            eval_items: 100,
            trace_every: 10,
            ..Self::addition_full()
        }
    }

    pub fn preset(task: TaskKind, desk: bool) -> Self {
        match (task, desk) {
            (TaskKind::Count, false) => Self::count_full(),
            (TaskKind::Count, true) => Self::count_desk(),
            (TaskKind::Addition, false) => Self::addition_full(),
            (TaskKind::Addition, true) => Self::addition_desk(),
        }
    }

    /// Longest logical length the task must represent.
    pub fn max_eval_length(&self) -> usize {
        self.eval_lengths.iter().copied().chain([self.max_train_length]).max().unwrap_or(0)
    }

    pub fn task(&self) -> Task {
        Task::new(self.task_kind, self.max_eval_length())
    }

    pub fn vocab_size(&self) -> usize {
        self.task().vocab().size()
    }

    /// Context needed to decode every evaluation example plus its separator.
    pub fn required_model_context(&self) -> usize {
        let task = self.task();
        let eval = self.eval_lengths.iter().map(|&l| task.max_tokens(l) + 1).max().unwrap_or(0);
        eval.max(self.context_length)
    }

    /// A scale point shaped for this task: `hidden / 64` heads of width 64
    /// (or a single head when `hidden < 64`).
    pub fn model_for(&self, depth: usize, hidden: usize) -> ModelConfig {
        self.model_with_heads(depth, hidden, DEFAULT_HEAD_DIM)
    }

    /// Like [`TrainConfig::model_for`] with heads of width `head_dim`.
    pub fn model_with_heads(&self, depth: usize, hidden: usize, head_dim: usize) -> ModelConfig {
        let mut m = ModelConfig::with_hidden(depth, hidden, self.vocab_size(), self.required_model_context());
        m.head_dim = head_dim.min(hidden);
        m.n_heads = hidden / m.head_dim.max(1);
        m
    }

    pub fn validate(&self, model: &ModelConfig) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        model.validate()?;
        if self.min_train_length == 0 || self.min_train_length > self.max_train_length {
            return bad("training lengths must satisfy 1 <= min <= max".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.trace_every == 0 {
            return bad("trace_every must be positive".into());
        }
        if self.eval_every == Some(0) {
            return bad("eval_every must be positive".into());
        }
        if self.early_stop && self.eval_every.is_none() {
            return bad("early_stop needs eval_every".into());
        }
        if self.eval_lengths.is_empty() || self.eval_lengths.contains(&0) {
            return bad("eval_lengths must be nonempty and positive".into());
        }
        if !(self.peak_lr.is_finite() && self.peak_lr >= 0.0) {
            return bad("peak_lr must be finite and nonnegative".into());
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight_decay must be finite and nonnegative".into());
        }
        let task = self.task();
        if self.max_eval_length() > task.max_logical_length() {
            return bad(format!(
                "length {} exceeds what the {} task can represent ({})",
                self.max_eval_length(),
                self.task_kind,
                task.max_logical_length()
            ));
        }
        if task.max_tokens(self.max_train_length) > self.context_length {
            return Err(TaskError::ContextTooShort {
                context: self.context_length,
                needed: task.max_tokens(self.max_train_length),
            }
            .into());
        }
        if model.vocab_size != task.vocab().size() {
            return bad(format!(
                "model vocab_size {} does not match the task vocabulary of {}",
                model.vocab_size,
                task.vocab().size()
            ));
        }
        if model.context_length < self.required_model_context() {
            return bad(format!(
                "model context_length {} is below the {} needed for training and evaluation",
                model.context_length,
                self.required_model_context()
            ));
        }
        Ok(())
    }

    fn eval_sets(&self, task: &Task) -> Result<Vec<(usize, Vec<Example>)>, TrainError> {
        let mut rng = seeding::stream(self.eval_seed, Stream::Eval);
        self.eval_lengths
            .iter()
            .map(|&len| Ok((len, task.eval_set(len, self.eval_items, self.eval_mode, &mut rng)?)))
            .collect()
    }
}

/// Trained parameters in whichever precision the run used.
#[derive(Debug, Clone)]
pub enum TrainedParams {
    F32(Params<f32>),
    F64(Params<f64>),
}

impl TrainedParams {
    pub fn write_checkpoint<W: Write>(&self, seed: u64, out: W) -> Result<(), ModelError> {
        match self {
            Self::F32(p) => write_checkpoint(p, seed, out),
            Self::F64(p) => write_checkpoint(p, seed, out),
        }
    }
}

pub struct RunOutcome {
    pub record: RunRecord,
    pub params: TrainedParams,
}

/// Trains and evaluates one model, returning its record and parameters.
pub fn train_run_full(model: &ModelConfig, train: &TrainConfig) -> Result<RunOutcome, TrainError> {
    match train.precision {
        Precision::F32 => {
            let (record, p) = train_run_typed::<f32>(model, train)?;
            Ok(RunOutcome {
                record,
                params: TrainedParams::F32(p),
            })
        }
        Precision::F64 => {
            let (record, p) = train_run_typed::<f64>(model, train)?;
            Ok(RunOutcome {
                record,
                params: TrainedParams::F64(p),
            })
        }
    }
}

/// Trains one model and returns its record.
pub fn train_run(model: &ModelConfig, train: &TrainConfig) -> Result<RunRecord, TrainError> {
    Ok(train_run_full(model, train)?.record)
}

fn evaluate_all<T: Scalar>(
    params: &Params<T>,
    task: &Task,
    sets: &[(usize, Vec<Example>)],
    scope: ScoringScope,
) -> Result<Vec<(usize, LengthMetrics)>, TrainError> {
    sets.iter().map(|(len, set)| Ok((*len, evaluate(params, task, set, scope)?))).collect()
}

fn batch_loss<T: Scalar>(params: &Params<T>, batch: &PackedBatch) -> Result<f64, TrainError> {
    let out = forward(
        params,
        &batch.tokens,
        batch.batch_size,
        batch.context_length,
        Some(&batch.loss_mask),
        LogitScope::All,
    )?;
    let loss = out.mean_nll.ok_or(ModelError::EmptyMask)?;
    Ok(loss.to_f64().unwrap_or(f64::NAN))
}

/// Generic form of [`train_run`] that also returns the final parameters.
pub fn train_run_typed<T: Scalar>(model: &ModelConfig, train: &TrainConfig) -> Result<(RunRecord, Params<T>), TrainError> {
    train.validate(model)?;
    let started = Instant::now();
    let task = train.task();
    let eval_sets = train.eval_sets(&task)?;
    let mut params = init_params::<T>(model, train.seed)?;
    let mut moments = MomentState::zeros(&params);
    let mut data = seeding::stream(train.seed, Stream::Data);
    let lengths = (train.min_train_length, train.max_train_length);

    let mut record = RunRecord {
        format_version: RUN_RECORD_VERSION,
        status: RunStatus::Completed,
        failure: None,
        task_kind: train.task_kind,
        scale_label: model.scale_label(),
        param_count: model.param_count(),
        model_config: *model,
        train_config: train.clone(),
        seed: train.seed,
        architecture: ArchitectureNotes::default(),
        warmup_steps: WARMUP_STEPS,
        metrics: FinalMetrics::default(),
        initial_loss: None,
        steps_completed: 0,
        train_loss_trace: Vec::new(),
        eval_trace: Vec::new(),
        wall_time_secs: 0.0,
    };

    if train.steps == 0 {
        let batch = PackedBatch::sample(&task, &mut data, lengths, train.batch_size, train.context_length)?;
        record.initial_loss = Some(batch_loss(&params, &batch)?);
    }

    let in_dist = train.max_train_length;
    let mut perfect_since: Option<usize> = None;
    for step in 0..train.steps {
        let batch = PackedBatch::sample(&task, &mut data, lengths, train.batch_size, train.context_length)?;
        let (loss, grads) = match loss_and_grad(&params, &batch) {
            Ok(v) => v,
            Err(ModelError::Divergence(msg)) => {
                record.status = RunStatus::Diverged;
                record.failure = Some(format!("step {step}: non-finite loss ({msg})"));
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let loss = loss.to_f64().unwrap_or(f64::NAN);
        if step == 0 {
            record.initial_loss = Some(loss);
        }
        if step % train.trace_every == 0 || step + 1 == train.steps {
            record.train_loss_trace.push((step, loss));
        }
        let lr = lr_at(step, train)?;
        optimizer_step(&mut params, &grads, &mut moments, step, lr, train.weight_decay, &train.adam)?;
        record.steps_completed = step + 1;
        if !params.all_finite() {
            record.status = RunStatus::Diverged;
            record.failure = Some(format!("step {step}: parameters became non-finite"));
            break;
        }

        if let Some(every) = train.eval_every {
            if (step + 1) % every == 0 && step + 1 < train.steps {
                let results = evaluate_all(&params, &task, &eval_sets, train.scoring)?;
                let perfect = results.iter().any(|(len, m)| *len == in_dist && m.em >= 1.0);
                record.eval_trace.extend(results.into_iter().map(|(length, metrics)| EvalPoint {
                    step: step + 1,
                    length,
                    metrics,
                }));
                if train.early_stop {
                    match (perfect, perfect_since) {
                        (true, None) => perfect_since = Some(step + 1),
                        (true, Some(s)) if step + 1 - s >= EARLY_STOP_WINDOW => break,
                        (false, _) => perfect_since = None,
                        _ => {}
                    }
                }
            }
        }
    }

    if record.status == RunStatus::Completed {
        for (len, m) in evaluate_all(&params, &task, &eval_sets, train.scoring)? {
            record.metrics.insert(len, m);
        }
    }
    record.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((record, params))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_recipes() {
        let c = TrainConfig::count_full();
        assert_eq!((c.peak_lr, c.weight_decay, c.steps), (1e-3, 0.1, 10_000));
        assert_eq!((c.batch_size, c.context_length, c.max_train_length), (128, 256, 30));
        assert_eq!(c.schedule, Schedule::Cosine);
        assert!(c.eval_lengths.contains(&60));
        let a = TrainConfig::addition_full();
        assert_eq!((a.peak_lr, a.weight_decay, a.steps), (1e-4, 0.0, 30_000));
        assert_eq!((a.batch_size, a.context_length, a.max_train_length), (64, 512, 35));
        assert!(a.eval_lengths.contains(&40));
        assert_eq!(c.vocab_size(), 150);
    }

    #[test]
    fn full_presets_fit_their_context() {
        for t in [TrainConfig::count_full(), TrainConfig::addition_full()] {
            let m = t.model_for(2, 128);
            t.validate(&m).unwrap();
            assert_eq!(m.context_length, t.context_length);
        }
    }

    #[test]
    fn validation_rejects_mismatches() {
        let t = TrainConfig::count_desk();
        let mut m = t.model_for(1, 64);
        m.vocab_size = 10;
        assert!(t.validate(&m).is_err());
        let short = TrainConfig {
            context_length: 20,
            ..TrainConfig::count_desk()
        };
        assert!(matches!(
            short.validate(&short.model_for(1, 64)),
            Err(TrainError::Task(TaskError::ContextTooShort { .. }))
        ));
        let early = TrainConfig {
            early_stop: true,
            ..TrainConfig::count_desk()
        };
        assert!(early.validate(&early.model_for(1, 64)).is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let t = TrainConfig::addition_desk();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<TrainConfig>(&s).unwrap(), t);
    }
}
