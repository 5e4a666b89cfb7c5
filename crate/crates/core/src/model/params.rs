use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use super::{ModelConfig, ModelError, Scalar};
use crate::seeding::{self, Stream};

/// Role of a tensor, which decides its initialization and whether weight
/// decay applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Embedding,
    Norm,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: TensorKind,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    fn zeros(name: String, shape: Vec<usize>, kind: TensorKind) -> Self {
        let n = shape.iter().product();
        Self {
            name,
            shape,
            kind,
            data: vec![T::zero(); n],
        }
    }
}

/// Every learnable tensor of one model, in a fixed order:
/// `tok_emb`, then per layer `ln1, wq, wk, wv, wo, ln2, w_fc, w_proj`, then
/// `ln_f` and `unembed`. Linear weights are stored `[in, out]` row-major.
///
/// Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub config: ModelConfig,
    pub tensors: Vec<Tensor<T>>,
}

pub(crate) const PER_LAYER: usize = 8;
pub(crate) const LN1: usize = 0;
pub(crate) const WQ: usize = 1;
pub(crate) const WK: usize = 2;
pub(crate) const WV: usize = 3;
pub(crate) const WO: usize = 4;
pub(crate) const LN2: usize = 5;
pub(crate) const WFC: usize = 6;
pub(crate) const WPROJ: usize = 7;

impl<T: Scalar> Params<T> {
    /// All-zero tensors with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.hidden_dim();
        let f = config.ffn_dim();
        let v = config.vocab_size;
        let mut tensors = vec![Tensor::zeros("tok_emb".into(), vec![v, d], TensorKind::Embedding)];
        for l in 0..config.depth {
            let name = |s: &str| format!("layers.{l}.{s}");
            tensors.push(Tensor::zeros(name("ln1"), vec![d], TensorKind::Norm));
            for w in ["wq", "wk", "wv", "wo"] {
                tensors.push(Tensor::zeros(name(w), vec![d, d], TensorKind::Linear));
            }
            tensors.push(Tensor::zeros(name("ln2"), vec![d], TensorKind::Norm));
            tensors.push(Tensor::zeros(name("w_fc"), vec![d, f], TensorKind::Linear));
            tensors.push(Tensor::zeros(name("w_proj"), vec![f, d], TensorKind::Linear));
        }
        tensors.push(Tensor::zeros("ln_f".into(), vec![d], TensorKind::Norm));
        tensors.push(Tensor::zeros("unembed".into(), vec![d, v], TensorKind::Linear));
        Self {
            config: *config,
            tensors,
        }
    }

    pub(crate) fn layer(&self, l: usize, which: usize) -> &[T] {
        &self.tensors[1 + l * PER_LAYER + which].data
    }

    pub(crate) fn layer_mut(&mut self, l: usize, which: usize) -> &mut Vec<T> {
        &mut self.tensors[1 + l * PER_LAYER + which].data
    }

    pub(crate) fn embedding(&self) -> &[T] {
        &self.tensors[0].data
    }

    pub(crate) fn final_norm(&self) -> &[T] {
        &self.tensors[1 + self.config.depth * PER_LAYER].data
    }

    pub(crate) fn unembedding(&self) -> &[T] {
        &self.tensors[2 + self.config.depth * PER_LAYER].data
    }

    pub(crate) fn embedding_mut(&mut self) -> &mut Vec<T> {
        &mut self.tensors[0].data
    }

    pub(crate) fn final_norm_mut(&mut self) -> &mut Vec<T> {
        let i = 1 + self.config.depth * PER_LAYER;
        &mut self.tensors[i].data
    }

    pub(crate) fn unembedding_mut(&mut self) -> &mut Vec<T> {
        let i = 2 + self.config.depth * PER_LAYER;
        &mut self.tensors[i].data
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        let mut buf = Vec::new();
        for t in &self.tensors {
            h.update(t.name.as_bytes());
            for &s in &t.shape {
                h.update((s as u64).to_le_bytes());
            }
            buf.clear();
            for &x in &t.data {
                x.write_le(&mut buf);
            }
            h.update(&buf);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn same_shapes(&self, other: &Params<T>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.shape == b.shape)
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            config: self.config,
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    kind: t.kind,
                    data: t.data.iter().map(|x| U::from(*x).expect("cast")).collect(),
                })
                .collect(),
        }
    }
}

/// Scaled-normal initialization drawn from the seed's init stream.
///
/// Embeddings are standard normal, norm gains are one, projections have
/// variance `1/hidden_dim`, with the attention output and MLP output
/// projections further scaled by `1/sqrt(2 depth)`. The unembedding uses
/// standard deviation `1/hidden_dim` so initial predictions are close to
/// uniform.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<Params<T>, ModelError> {
    config.validate()?;
    let mut rng = seeding::stream(seed, Stream::Init);
    let mut params = Params::<T>::zeros(config);
    let d = config.hidden_dim() as f64;
    let proj_std = d.powf(-0.5);
    let residual_std = proj_std / (2.0 * config.depth as f64).sqrt();
    let depth = config.depth;
    for (i, t) in params.tensors.iter_mut().enumerate() {
        let std = match t.kind {
            TensorKind::Norm => {
                t.data.fill(T::one());
                continue;
            }
            TensorKind::Embedding => 1.0,
            TensorKind::Linear if i == 1 + depth * PER_LAYER + 1 => 1.0 / d,
            TensorKind::Linear => {
                let which = (i - 1) % PER_LAYER;
                if which == WO || which == WPROJ {
                    residual_std
                } else {
                    proj_std
                }
            }
        };
        for x in t.data.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x = T::c(z * std);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            depth: 2,
            n_heads: 2,
            head_dim: 4,
            vocab_size: 11,
            context_length: 16,
            mlp_ratio: 4,
        }
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = init_params::<f32>(&tiny(), 0).unwrap();
        let b = init_params::<f32>(&tiny(), 0).unwrap();
        let c = init_params::<f32>(&tiny(), 1).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_ne!(a.checksum(), c.checksum());
        assert!(a.all_finite());
    }

    #[test]
    fn layout_order() {
        let p = Params::<f64>::zeros(&tiny());
        let names: Vec<&str> = p.tensors.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names[0], "tok_emb");
        assert_eq!(names[1], "layers.0.ln1");
        assert_eq!(names[8], "layers.0.w_proj");
        assert_eq!(names[9], "layers.1.ln1");
        assert_eq!(names[17], "ln_f");
        assert_eq!(names[18], "unembed");
        assert_eq!(p.tensors[18].kind, TensorKind::Linear);
    }
}
