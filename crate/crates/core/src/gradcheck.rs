//! Central finite-difference verification of the analytic gradients.
//!
//! Only [`forward`] is used to build the numerical estimate, so the check is
//! independent of the backward pass it validates.

use rand::Rng;
use serde::Serialize;

use crate::model::{forward, init_params, loss_and_grad, LogitScope, ModelConfig, ModelError, Params};
use crate::seeding::{self, Stream};
use crate::tasks::{PackedBatch, Token};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckSettings {
    pub step: f64,
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel_tol: 1e-4,
            abs_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorReport {
    pub name: String,
    pub entries: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.failures == 0)
    }

    pub fn entries(&self) -> usize {
        self.tensors.iter().map(|t| t.entries).sum()
    }
}

/// The depth-1, width-8 model used by the default check.
pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        depth: 1,
        n_heads: 2,
        head_dim: 4,
        vocab_size: 11,
        context_length: 8,
        mlp_ratio: 4,
    }
}

/// A random token grid with a random (nonempty) mask.
pub fn random_batch(config: &ModelConfig, batch: usize, seq: usize, seed: u64) -> PackedBatch {
    let mut rng = seeding::stream(seed, Stream::Data);
    let tokens: Vec<Token> = (0..batch * seq)
        .map(|_| rng.random_range(0..config.vocab_size as Token))
        .collect();
    let mut loss_mask: Vec<bool> = (0..batch * seq)
        .map(|i| i % seq != seq - 1 && rng.random_bool(0.8))
        .collect();
    loss_mask[0] = true;
    PackedBatch {
        batch_size: batch,
        context_length: seq,
        tokens,
        loss_mask,
        boundaries: vec![Vec::new(); batch],
    }
}

fn numeric_loss(params: &Params<f64>, batch: &PackedBatch) -> Result<f64, ModelError> {
    let out = forward(
        params,
        &batch.tokens,
        batch.batch_size,
        batch.context_length,
        Some(&batch.loss_mask),
        LogitScope::All,
    )?;
    out.mean_nll.ok_or(ModelError::EmptyMask)
}

/// Compares every analytic gradient entry with a central difference.
pub fn check_gradients(
    params: &Params<f64>,
    batch: &PackedBatch,
    settings: GradCheckSettings,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = loss_and_grad(params, batch)?;
    let mut probe = params.clone();
    let mut tensors = Vec::with_capacity(params.tensors.len());
    for (ti, g) in grads.tensors.iter().enumerate() {
        let mut report = TensorReport {
            name: g.name.clone(),
            entries: g.data.len(),
            failures: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for (i, &analytic) in g.data.iter().enumerate() {
            let orig = probe.tensors[ti].data[i];
            probe.tensors[ti].data[i] = orig + settings.step;
            let up = numeric_loss(&probe, batch)?;
            probe.tensors[ti].data[i] = orig - settings.step;
            let down = numeric_loss(&probe, batch)?;
            probe.tensors[ti].data[i] = orig;
            let numeric = (up - down) / (2.0 * settings.step);

            let abs = (analytic - numeric).abs();
            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale > 0.0 { abs / scale } else { 0.0 };
            report.max_abs_error = report.max_abs_error.max(abs);
            if scale > settings.abs_floor {
                report.max_rel_error = report.max_rel_error.max(rel);
            }
            if abs > settings.abs_floor && rel > settings.rel_tol {
                report.failures += 1;
            }
        }
        tensors.push(report);
    }
    Ok(GradCheckReport { tensors })
}

/// The default suite: the tiny model at a few seeds.
pub fn run_default_suite(seeds: &[u64]) -> Result<Vec<GradCheckReport>, ModelError> {
    let cfg = tiny_config();
    seeds
        .iter()
        .map(|&seed| {
            let params = init_params::<f64>(&cfg, seed)?;
            let batch = random_batch(&cfg, 2, cfg.context_length, seed);
            check_gradients(&params, &batch, GradCheckSettings::default())
        })
        .collect()
}
