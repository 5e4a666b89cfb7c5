use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::{Params, Scalar, TensorKind};

/// Adam moment hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> MomentState<T> {
    pub fn zeros(params: &Params<T>) -> Self {
        let z: Vec<Vec<T>> = params.tensors.iter().map(|t| vec![T::zero(); t.data.len()]).collect();
        Self { m: z.clone(), v: z }
    }
}

/// One AdamW update at zero-based `step` with learning rate `lr`.
///
/// Decoupled decay `lr * wd * theta` is applied to linear weights only;
/// embeddings and norm gains are not decayed.
pub fn optimizer_step<T: Scalar>(
    params: &mut Params<T>,
    grads: &Params<T>,
    state: &mut MomentState<T>,
    step: usize,
    lr: f64,
    weight_decay: f64,
    adam: &AdamSettings,
) -> Result<(), TrainError> {
    if !params.same_shapes(grads) || state.m.len() != params.tensors.len() {
        return Err(TrainError::Shape("parameters, gradients and moments disagree".into()));
    }
    let t = (step + 1) as i32;
    let b1 = T::c(adam.beta1);
    let b2 = T::c(adam.beta2);
    let one = T::one();
    let c1 = T::c(1.0 - adam.beta1.powi(t));
    let c2 = T::c(1.0 - adam.beta2.powi(t));
    let eps = T::c(adam.eps);
    let lr_t = T::c(lr);
    for (i, (p, g)) in params.tensors.iter_mut().zip(&grads.tensors).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        if m.len() != p.data.len() || v.len() != p.data.len() {
            return Err(TrainError::Shape(format!("moment buffers for {} have the wrong size", p.name)));
        }
        let decay = if p.kind == TensorKind::Linear {
            T::c(lr * weight_decay)
        } else {
            T::zero()
        };
        for j in 0..p.data.len() {
            let gj = g.data[j];
            m[j] = b1 * m[j] + (one - b1) * gj;
            v[j] = b2 * v[j] + (one - b2) * gj * gj;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            let theta = p.data[j];
            p.data[j] = theta - lr_t * m_hat / (v_hat.sqrt() + eps) - decay * theta;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};

    fn setup() -> (Params<f64>, Params<f64>) {
        let cfg = ModelConfig {
            depth: 1,
            n_heads: 1,
            head_dim: 4,
            vocab_size: 6,
            context_length: 8,
            mlp_ratio: 2,
        };
        let p = init_params::<f64>(&cfg, 3).unwrap();
        let g = Params::zeros(&cfg);
        (p, g)
    }

    #[test]
    fn zero_gradient_zero_decay_is_fixed_point() {
        let (mut p, g) = setup();
        let before = p.clone();
        let mut s = MomentState::zeros(&p);
        for step in 0..5 {
            optimizer_step(&mut p, &g, &mut s, step, 1e-2, 0.0, &AdamSettings::default()).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_closed_form() {
        let (mut p, mut g) = setup();
        let before = p.clone();
        for (k, t) in g.tensors.iter_mut().enumerate() {
            for (j, x) in t.data.iter_mut().enumerate() {
                *x = ((k * 31 + j * 7) % 13) as f64 * 0.01 - 0.06;
            }
        }
        let mut s = MomentState::zeros(&p);
        let lr = 1e-3;
        optimizer_step(&mut p, &g, &mut s, 0, lr, 0.0, &AdamSettings::default()).unwrap();
        for ((a, b), gt) in p.tensors.iter().zip(&before.tensors).zip(&g.tensors) {
            for ((&x, &x0), &gj) in a.data.iter().zip(&b.data).zip(&gt.data) {
                let expect = x0 - lr * gj / (gj.abs() + 1e-8);
                assert!((x - expect).abs() < 1e-12, "{x} vs {expect}");
            }
        }
    }

    #[test]
    fn decay_only_shrinks_linear_weights() {
        let (mut p, g) = setup();
        let before = p.clone();
        let mut s = MomentState::zeros(&p);
        let (lr, wd) = (0.01, 0.1);
        optimizer_step(&mut p, &g, &mut s, 0, lr, wd, &AdamSettings::default()).unwrap();
        for (a, b) in p.tensors.iter().zip(&before.tensors) {
            for (&x, &x0) in a.data.iter().zip(&b.data) {
                let expect = if a.kind == TensorKind::Linear { x0 * (1.0 - lr * wd) } else { x0 };
                assert!((x - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (mut p, _) = setup();
        let other = ModelConfig {
            depth: 2,
            n_heads: 1,
            head_dim: 4,
            vocab_size: 6,
            context_length: 8,
            mlp_ratio: 2,
        };
        let g = Params::<f64>::zeros(&other);
        let mut s = MomentState::zeros(&p);
        assert!(optimizer_step(&mut p, &g, &mut s, 0, 1e-3, 0.0, &AdamSettings::default()).is_err());
    }
}
