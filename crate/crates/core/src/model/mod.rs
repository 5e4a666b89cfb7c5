//! Decoder-only transformer with rotary position embeddings and exact
//! hand-written backpropagation.
//!
//! Architecture: token embedding, `depth` pre-norm residual blocks
//! (gain-only layer norm, causal multi-head attention with RoPE, GELU MLP),
//! a final layer norm and an untied unembedding. No linear layer has a bias.

mod checkpoint;
mod forward;
mod generate;
mod params;
mod rope;
mod scalar;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{forward, log_sum_exp, loss_and_grad, ForwardOutput, ForwardTrace, LogitScope};
pub use generate::{generate_greedy, generate_greedy_batch, Generation};
pub use params::{init_params, Params, Tensor, TensorKind};
pub use rope::{rope_rotate, RopeTable, ROPE_BASE};
pub use scalar::Scalar;

use crate::tasks::Token;

pub const DEFAULT_HEAD_DIM: usize = 64;
pub const DEFAULT_MLP_RATIO: usize = 4;
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("token id {token} is outside the vocabulary of {vocab}")]
    TokenOutOfRange { token: Token, vocab: usize },
    #[error("sequence of {len} tokens exceeds the context length {context}")]
    ContextOverflow { len: usize, context: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("loss mask selects no positions")]
    EmptyMask,
    #[error("loss is not finite ({0})")]
    Divergence(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Architecture shape of one scale point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub depth: usize,
    pub n_heads: usize,
    #[serde(default = "default_head_dim")]
    pub head_dim: usize,
    pub vocab_size: usize,
    pub context_length: usize,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: usize,
}

fn default_head_dim() -> usize {
    DEFAULT_HEAD_DIM
}

fn default_mlp_ratio() -> usize {
    DEFAULT_MLP_RATIO
}

impl ModelConfig {
    /// Default scale point: `hidden_dim / 64` heads of width 64.
    pub fn with_hidden(depth: usize, hidden_dim: usize, vocab_size: usize, context_length: usize) -> Self {
        Self {
            depth,
            n_heads: hidden_dim / DEFAULT_HEAD_DIM,
            head_dim: DEFAULT_HEAD_DIM,
            vocab_size,
            context_length,
            mlp_ratio: DEFAULT_MLP_RATIO,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.n_heads * self.head_dim
    }

    pub fn ffn_dim(&self) -> usize {
        self.mlp_ratio * self.hidden_dim()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.n_heads == 0 {
            return bad("at least one head is required");
        }
        if self.head_dim == 0 || self.head_dim % 2 != 0 {
            return bad("head_dim must be even and positive");
        }
        if self.vocab_size < 2 {
            return bad("vocabulary needs at least two tokens");
        }
        if self.context_length == 0 {
            return bad("context_length must be positive");
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be positive");
        }
        Ok(())
    }

    /// Total number of learnable scalars.
    pub fn param_count(&self) -> usize {
        let d = self.hidden_dim();
        let f = self.ffn_dim();
        let v = self.vocab_size;
        let block = 2 * d + 4 * d * d + 2 * d * f;
        v * d + self.depth * block + d + d * v
    }

    /// Short human-readable scale name, e.g. `d4-w256`.
    pub fn scale_label(&self) -> String {
        format!("d{}-w{}", self.depth, self.hidden_dim())
    }
}

/// Fixed architecture choices, recorded alongside every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureNotes {
    pub norm: String,
    pub activation: String,
    pub bias: bool,
    pub tied_embeddings: bool,
    pub rope_base: f64,
    pub dropout: f64,
}

impl Default for ArchitectureNotes {
    fn default() -> Self {
        Self {
            norm: "pre-norm layernorm (gain only)".into(),
            activation: "gelu-tanh".into(),
            bias: false,
            tied_embeddings: false,
            rope_base: ROPE_BASE,
            dropout: 0.0,
        }
    }
}
