use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};

/// Learning-rate schedule descriptor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `peak * (1 + cos(pi * step / steps)) / 2`, no warmup.
    #[default]
    Cosine,
    Constant,
}

/// Warmup steps used by every schedule.
pub const WARMUP_STEPS: usize = 0;

pub fn lr_at(step: usize, config: &TrainConfig) -> Result<f64, TrainError> {
    if step >= config.steps {
        return Err(TrainError::StepOutOfRange {
            step,
            steps: config.steps,
        });
    }
    Ok(match config.schedule {
        Schedule::Cosine => config.peak_lr * 0.5 * (1.0 + (PI * step as f64 / config.steps as f64).cos()),
        Schedule::Constant => config.peak_lr,
    })
}
