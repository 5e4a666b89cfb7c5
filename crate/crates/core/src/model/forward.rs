use super::params::{LN1, LN2, PER_LAYER, WFC, WK, WO, WPROJ, WQ, WV};
use super::scalar::{gemm, matmul, matmul_nt, matmul_tn, View};
use super::{ModelError, Params, RopeTable, Scalar, LAYER_NORM_EPS};
use crate::tasks::{PackedBatch, Token};

/// Which positions get unembedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogitScope {
    All,
    /// Only the final position of each row (greedy decoding).
    Last,
}

#[derive(Debug, Clone)]
struct LayerTrace<T> {
    x_in: Vec<T>,
    ln1: NormCache<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    att: Vec<T>,
    x_mid: Vec<T>,
    ln2: NormCache<T>,
    h2: Vec<T>,
    fc_pre: Vec<T>,
    fc_gate: Vec<T>,
    fc_act: Vec<T>,
}

#[derive(Debug, Clone)]
struct NormCache<T> {
    mean: Vec<T>,
    rstd: Vec<T>,
}

/// Activations cached by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub batch: usize,
    pub seq: usize,
    tokens: Vec<Token>,
    layers: Vec<LayerTrace<T>>,
    x_final: Vec<T>,
    lnf: NormCache<T>,
    hf: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `batch x seq x vocab` for [`LogitScope::All`], `batch x vocab` for
    /// [`LogitScope::Last`].
    pub logits: Vec<T>,
    /// Mean next-token cross-entropy over masked positions, `None` when no
    /// mask was given or it selects nothing.
    pub mean_nll: Option<T>,
    pub trace: ForwardTrace<T>,
}

fn layer_norm<T: Scalar>(x: &[T], gain: &[T], d: usize) -> (Vec<T>, NormCache<T>) {
    let rows = x.len() / d;
    let mut y = vec![T::zero(); x.len()];
    let mut mean = Vec::with_capacity(rows);
    let mut rstd = Vec::with_capacity(rows);
    let n = T::c(d as f64);
    let eps = T::c(LAYER_NORM_EPS);
    for (xr, yr) in x.chunks_exact(d).zip(y.chunks_exact_mut(d)) {
        let m = xr.iter().copied().sum::<T>() / n;
        let var = xr.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / n;
        let r = (var + eps).sqrt().recip();
        for ((o, &v), &g) in yr.iter_mut().zip(xr).zip(gain) {
            *o = (v - m) * r * g;
        }
        mean.push(m);
        rstd.push(r);
    }
    (y, NormCache { mean, rstd })
}

/// Returns `dx`, accumulating the gain gradient into `dgain`.
fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    cache: &NormCache<T>,
    gain: &[T],
    dgain: &mut [T],
    d: usize,
) -> Vec<T> {
    let mut dx = vec![T::zero(); x.len()];
    let n = T::c(d as f64);
    let mut xhat = vec![T::zero(); d];
    let mut dxhat = vec![T::zero(); d];
    for (r, ((dyr, xr), dxr)) in dy
        .chunks_exact(d)
        .zip(x.chunks_exact(d))
        .zip(dx.chunks_exact_mut(d))
        .enumerate()
    {
        let (m, rs) = (cache.mean[r], cache.rstd[r]);
        let mut sum_dxhat = T::zero();
        let mut sum_dxhat_xhat = T::zero();
        for i in 0..d {
            xhat[i] = (xr[i] - m) * rs;
            dgain[i] += dyr[i] * xhat[i];
            dxhat[i] = dyr[i] * gain[i];
            sum_dxhat += dxhat[i];
            sum_dxhat_xhat += dxhat[i] * xhat[i];
        }
        let (a, b) = (sum_dxhat / n, sum_dxhat_xhat / n);
        for i in 0..d {
            dxr[i] = rs * (dxhat[i] - a - xhat[i] * b);
        }
    }
    dx
}

const GELU_K: f64 = 0.044715;
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// `sigmoid(2u)` with `u = sqrt(2/pi) (x + k x^3)`, which equals
/// `(1 + tanh(u)) / 2`; GELU is `x` times this gate.
fn gelu_gate<T: Scalar>(x: T) -> T {
    let two_u = T::c(2.0 * SQRT_2_OVER_PI) * (x + T::c(GELU_K) * x * x * x);
    (T::one() + (-two_u).exp()).recip()
}

/// Derivative of `x * gate(x)` given the cached gate `s`.
fn gelu_grad<T: Scalar>(x: T, s: T) -> T {
    let c = T::c(SQRT_2_OVER_PI);
    let k = T::c(GELU_K);
    // d tanh(u) / du = 1 - t^2 = 4 s (1 - s)
    s + x * T::c(2.0) * s * (T::one() - s) * c * (T::one() + T::c(3.0) * k * x * x)
}

fn validate_tokens<T: Scalar>(params: &Params<T>, tokens: &[Token], batch: usize, seq: usize) -> Result<(), ModelError> {
    let cfg = &params.config;
    if tokens.len() != batch * seq || seq == 0 || batch == 0 {
        return Err(ModelError::Shape(format!(
            "{} tokens for a {batch} x {seq} grid",
            tokens.len()
        )));
    }
    if seq > cfg.context_length {
        return Err(ModelError::ContextOverflow {
            len: seq,
            context: cfg.context_length,
        });
    }
    if let Some(&token) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            token,
            vocab: cfg.vocab_size,
        });
    }
    Ok(())
}

/// Causal forward pass over a `batch x seq` token grid.
///
/// `loss_mask[b*seq + t]` selects the prediction of token `t + 1` from
/// position `t`; the last position of a row has no target and must be
/// unmasked.
pub fn forward<T: Scalar>(
    params: &Params<T>,
    tokens: &[Token],
    batch: usize,
    seq: usize,
    loss_mask: Option<&[bool]>,
    scope: LogitScope,
) -> Result<ForwardOutput<T>, ModelError> {
    validate_tokens(params, tokens, batch, seq)?;
    let cfg = params.config;
    let (d, h, hd, f, v) = (
        cfg.hidden_dim(),
        cfg.n_heads,
        cfg.head_dim,
        cfg.ffn_dim(),
        cfg.vocab_size,
    );
    let n = batch * seq;
    let rope = RopeTable::<T>::new(hd, seq)?;
    let scale = T::c(1.0 / (hd as f64).sqrt());

    let emb = params.embedding();
    let mut x = Vec::with_capacity(n * d);
    for &t in tokens {
        x.extend_from_slice(&emb[t as usize * d..(t as usize + 1) * d]);
    }

    let mut layers = Vec::with_capacity(cfg.depth);
    for l in 0..cfg.depth {
        let (h1, ln1) = layer_norm(&x, params.layer(l, LN1), d);
        let mut q = vec![T::zero(); n * d];
        let mut k = vec![T::zero(); n * d];
        let mut vv = vec![T::zero(); n * d];
        matmul(&h1, params.layer(l, WQ), &mut q, n, d, d, false);
        matmul(&h1, params.layer(l, WK), &mut k, n, d, d, false);
        matmul(&h1, params.layer(l, WV), &mut vv, n, d, d, false);
        rope.apply_rows(&mut q, d, seq, false);
        rope.apply_rows(&mut k, d, seq, false);

        let mut probs = vec![T::zero(); batch * h * seq * seq];
        let mut att = vec![T::zero(); n * d];
        for b in 0..batch {
            for head in 0..h {
                let off = b * seq * d + head * hd;
                let poff = (b * h + head) * seq * seq;
                gemm(
                    seq,
                    hd,
                    seq,
                    scale,
                    &q,
                    View::rows(off, d),
                    &k,
                    View::cols(off, d),
                    T::zero(),
                    &mut probs,
                    View::rows(poff, seq),
                );
                let block = &mut probs[poff..poff + seq * seq];
                for (t, row) in block.chunks_exact_mut(seq).enumerate() {
                    let max = row[..=t].iter().copied().fold(T::neg_infinity(), T::max);
                    let mut total = T::zero();
                    for s in row[..=t].iter_mut() {
                        *s = (*s - max).exp();
                        total += *s;
                    }
                    for s in row[..=t].iter_mut() {
                        *s /= total;
                    }
                    row[t + 1..].fill(T::zero());
                }
                gemm(
                    seq,
                    seq,
                    hd,
                    T::one(),
                    &probs,
                    View::rows(poff, seq),
                    &vv,
                    View::rows(off, d),
                    T::zero(),
                    &mut att,
                    View::rows(off, d),
                );
            }
        }
        let mut x_mid = x.clone();
        matmul(&att, params.layer(l, WO), &mut x_mid, n, d, d, true);

        let (h2, ln2) = layer_norm(&x_mid, params.layer(l, LN2), d);
        let mut fc_pre = vec![T::zero(); n * f];
        matmul(&h2, params.layer(l, WFC), &mut fc_pre, n, d, f, false);
        let fc_gate: Vec<T> = fc_pre.iter().map(|&z| gelu_gate(z)).collect();
        let fc_act: Vec<T> = fc_pre.iter().zip(&fc_gate).map(|(&z, &g)| z * g).collect();
        let mut x_out = x_mid.clone();
        matmul(&fc_act, params.layer(l, WPROJ), &mut x_out, n, f, d, true);

        layers.push(LayerTrace {
            x_in: std::mem::replace(&mut x, x_out),
            ln1,
            h1,
            q,
            k,
            v: vv,
            probs,
            att,
            x_mid,
            ln2,
            h2,
            fc_pre,
            fc_gate,
            fc_act,
        });
    }

    let (hf, lnf) = layer_norm(&x, params.final_norm(), d);
    let logits = match scope {
        LogitScope::All => {
            let mut logits = vec![T::zero(); n * v];
            matmul(&hf, params.unembedding(), &mut logits, n, d, v, false);
            logits
        }
        LogitScope::Last => {
            let mut last = Vec::with_capacity(batch * d);
            for b in 0..batch {
                let r = b * seq + seq - 1;
                last.extend_from_slice(&hf[r * d..(r + 1) * d]);
            }
            let mut logits = vec![T::zero(); batch * v];
            matmul(&last, params.unembedding(), &mut logits, batch, d, v, false);
            logits
        }
    };

    let mean_nll = match (loss_mask, scope) {
        (Some(mask), LogitScope::All) => masked_nll(&logits, tokens, mask, batch, seq, v)?,
        (Some(_), LogitScope::Last) => {
            return Err(ModelError::Shape("a loss mask needs logits at every position".into()))
        }
        (None, _) => None,
    };

    Ok(ForwardOutput {
        logits,
        mean_nll,
        trace: ForwardTrace {
            batch,
            seq,
            tokens: tokens.to_vec(),
            layers,
            x_final: x,
            lnf,
            hf,
        },
    })
}

fn check_mask(mask: &[bool], batch: usize, seq: usize) -> Result<usize, ModelError> {
    if mask.len() != batch * seq {
        return Err(ModelError::Shape(format!(
            "mask of {} entries for a {batch} x {seq} grid",
            mask.len()
        )));
    }
    if (0..batch).any(|b| mask[b * seq + seq - 1]) {
        return Err(ModelError::Shape("the last position of a row has no next token".into()));
    }
    Ok(mask.iter().filter(|&&m| m).count())
}

fn masked_nll<T: Scalar>(
    logits: &[T],
    tokens: &[Token],
    mask: &[bool],
    batch: usize,
    seq: usize,
    v: usize,
) -> Result<Option<T>, ModelError> {
    let count = check_mask(mask, batch, seq)?;
    if count == 0 {
        return Ok(None);
    }
    let mut total = T::zero();
    for (r, row) in logits.chunks_exact(v).enumerate() {
        if !mask[r] {
            continue;
        }
        let target = tokens[r + 1] as usize;
        total += log_sum_exp(row) - row[target];
    }
    Ok(Some(total / T::c(count as f64)))
}

/// Numerically stable `ln(sum(exp(row)))`.
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    max + row.iter().map(|&z| (z - max).exp()).sum::<T>().ln()
}

/// Mean masked next-token loss of a packed batch and its exact gradient with
/// respect to every parameter tensor.
pub fn loss_and_grad<T: Scalar>(params: &Params<T>, batch: &PackedBatch) -> Result<(T, Params<T>), ModelError> {
    loss_and_grad_grid(params, &batch.tokens, batch.batch_size, batch.context_length, &batch.loss_mask)
}

pub(crate) fn loss_and_grad_grid<T: Scalar>(
    params: &Params<T>,
    tokens: &[Token],
    batch: usize,
    seq: usize,
    mask: &[bool],
) -> Result<(T, Params<T>), ModelError> {
    let out = forward(params, tokens, batch, seq, Some(mask), LogitScope::All)?;
    let loss = out.mean_nll.ok_or(ModelError::EmptyMask)?;
    if !loss.is_finite() {
        return Err(ModelError::Divergence(format!("{loss:?}")));
    }
    let grads = backward(params, &out, mask);
    Ok((loss, grads))
}

fn backward<T: Scalar>(params: &Params<T>, out: &ForwardOutput<T>, mask: &[bool]) -> Params<T> {
    let cfg = params.config;
    let tr = &out.trace;
    let (batch, seq) = (tr.batch, tr.seq);
    let (d, h, hd, f, v) = (
        cfg.hidden_dim(),
        cfg.n_heads,
        cfg.head_dim,
        cfg.ffn_dim(),
        cfg.vocab_size,
    );
    let n = batch * seq;
    let rope = RopeTable::<T>::new(hd, seq).expect("validated in forward");
    let scale = T::c(1.0 / (hd as f64).sqrt());
    let mut grads = Params::<T>::zeros(&cfg);

    let count = T::c(mask.iter().filter(|&&m| m).count() as f64);
    let mut dlogits = vec![T::zero(); n * v];
    for (r, (row, drow)) in out.logits.chunks_exact(v).zip(dlogits.chunks_exact_mut(v)).enumerate() {
        if !mask[r] {
            continue;
        }
        let lse = log_sum_exp(row);
        for (g, &z) in drow.iter_mut().zip(row) {
            *g = (z - lse).exp() / count;
        }
        drow[tr.tokens[r + 1] as usize] -= T::one() / count;
    }

    matmul_tn(&tr.hf, &dlogits, grads.unembedding_mut(), d, n, v, false);
    let mut dhf = vec![T::zero(); n * d];
    matmul_nt(&dlogits, params.unembedding(), &mut dhf, n, v, d, false);
    drop(dlogits);
    let mut dx = layer_norm_backward(&dhf, &tr.x_final, &tr.lnf, params.final_norm(), grads.final_norm_mut(), d);

    let mut dp = vec![T::zero(); seq * seq];
    for l in (0..cfg.depth).rev() {
        let lt = &tr.layers[l];

        // MLP
        matmul_tn(&lt.fc_act, &dx, grads.layer_mut(l, WPROJ), f, n, d, false);
        let mut dpre = vec![T::zero(); n * f];
        matmul_nt(&dx, params.layer(l, WPROJ), &mut dpre, n, d, f, false);
        for ((g, &z), &sg) in dpre.iter_mut().zip(&lt.fc_pre).zip(&lt.fc_gate) {
            *g *= gelu_grad(z, sg);
        }
        matmul_tn(&lt.h2, &dpre, grads.layer_mut(l, WFC), d, n, f, false);
        let mut dh2 = vec![T::zero(); n * d];
        matmul_nt(&dpre, params.layer(l, WFC), &mut dh2, n, f, d, false);
        drop(dpre);
        let dmid = layer_norm_backward(&dh2, &lt.x_mid, &lt.ln2, params.layer(l, LN2), grads.layer_mut(l, LN2), d);
        let mut dx_mid = dx;
        for (a, b) in dx_mid.iter_mut().zip(&dmid) {
            *a += *b;
        }

        // attention
        matmul_tn(&lt.att, &dx_mid, grads.layer_mut(l, WO), d, n, d, false);
        let mut datt = vec![T::zero(); n * d];
        matmul_nt(&dx_mid, params.layer(l, WO), &mut datt, n, d, d, false);
        let mut dq = vec![T::zero(); n * d];
        let mut dk = vec![T::zero(); n * d];
        let mut dv = vec![T::zero(); n * d];
        for b in 0..batch {
            for head in 0..h {
                let off = b * seq * d + head * hd;
                let poff = (b * h + head) * seq * seq;
                // dP = dAtt V^T
                gemm(
                    seq,
                    hd,
                    seq,
                    T::one(),
                    &datt,
                    View::rows(off, d),
                    &lt.v,
                    View::cols(off, d),
                    T::zero(),
                    &mut dp,
                    View::rows(0, seq),
                );
                // dV = P^T dAtt
                gemm(
                    seq,
                    seq,
                    hd,
                    T::one(),
                    &lt.probs,
                    View::cols(poff, seq),
                    &datt,
                    View::rows(off, d),
                    T::zero(),
                    &mut dv,
                    View::rows(off, d),
                );
                // softmax backward, in place: dS = P (dP - <P, dP>)
                let p = &lt.probs[poff..poff + seq * seq];
                for (t, (prow, drow)) in p.chunks_exact(seq).zip(dp.chunks_exact_mut(seq)).enumerate() {
                    let dot: T = prow[..=t].iter().zip(&drow[..=t]).map(|(&a, &b)| a * b).sum();
                    for (g, &pv) in drow[..=t].iter_mut().zip(&prow[..=t]) {
                        *g = pv * (*g - dot);
                    }
                    drow[t + 1..].fill(T::zero());
                }
                // dQ = scale dS K, dK = scale dS^T Q
                gemm(
                    seq,
                    seq,
                    hd,
                    scale,
                    &dp,
                    View::rows(0, seq),
                    &lt.k,
                    View::rows(off, d),
                    T::zero(),
                    &mut dq,
                    View::rows(off, d),
                );
                gemm(
                    seq,
                    seq,
                    hd,
                    scale,
                    &dp,
                    View::cols(0, seq),
                    &lt.q,
                    View::rows(off, d),
                    T::zero(),
                    &mut dk,
                    View::rows(off, d),
                );
            }
        }
        drop(datt);
        rope.apply_rows(&mut dq, d, seq, true);
        rope.apply_rows(&mut dk, d, seq, true);
        matmul_tn(&lt.h1, &dq, grads.layer_mut(l, WQ), d, n, d, false);
        matmul_tn(&lt.h1, &dk, grads.layer_mut(l, WK), d, n, d, false);
        matmul_tn(&lt.h1, &dv, grads.layer_mut(l, WV), d, n, d, false);
        let mut dh1 = vec![T::zero(); n * d];
        matmul_nt(&dq, params.layer(l, WQ), &mut dh1, n, d, d, false);
        matmul_nt(&dk, params.layer(l, WK), &mut dh1, n, d, d, true);
        matmul_nt(&dv, params.layer(l, WV), &mut dh1, n, d, d, true);
        let din = layer_norm_backward(&dh1, &lt.x_in, &lt.ln1, params.layer(l, LN1), grads.layer_mut(l, LN1), d);
        for (a, b) in dx_mid.iter_mut().zip(&din) {
            *a += *b;
        }
        dx = dx_mid;
    }

    let demb = grads.embedding_mut();
    for (r, &t) in tr.tokens.iter().enumerate() {
        let row = &mut demb[t as usize * d..(t as usize + 1) * d];
        for (g, &x) in row.iter_mut().zip(&dx[r * d..(r + 1) * d]) {
            *g += x;
        }
    }
    debug_assert_eq!(grads.tensors.len(), 3 + cfg.depth * PER_LAYER);
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ModelConfig};

    fn tiny() -> ModelConfig {
        ModelConfig {
            depth: 1,
            n_heads: 2,
            head_dim: 4,
            vocab_size: 13,
            context_length: 12,
            mlp_ratio: 4,
        }
    }

    #[test]
    fn gelu_gate_matches_tanh_form() {
        for i in -400..=400 {
            let x = i as f64 * 0.025;
            let u = SQRT_2_OVER_PI * (x + GELU_K * x * x * x);
            let tanh_form = 0.5 * x * (1.0 + u.tanh());
            assert!((x * gelu_gate(x) - tanh_form).abs() < 1e-14);
            let h = 1e-6;
            let num = ((x + h) * gelu_gate(x + h) - (x - h) * gelu_gate(x - h)) / (2.0 * h);
            assert!((gelu_grad(x, gelu_gate(x)) - num).abs() < 1e-8);
        }
        assert_eq!(gelu_gate(-200.0f32) * -200.0, 0.0);
        assert_eq!(gelu_gate(200.0f32), 1.0);
    }

    #[test]
    fn zero_unembedding_gives_uniform_loss() {
        let mut params = init_params::<f64>(&tiny(), 3).unwrap();
        params.unembedding_mut().fill(0.0);
        let tokens: Vec<Token> = (0..8).map(|i| i % 13).collect();
        let mut mask = vec![true; 8];
        mask[7] = false;
        let out = forward(&params, &tokens, 1, 8, Some(&mask), LogitScope::All).unwrap();
        assert!((out.mean_nll.unwrap() - (13f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn single_position_nll_is_neg_log_prob() {
        let params = init_params::<f64>(&tiny(), 4).unwrap();
        let tokens: Vec<Token> = vec![1, 5, 7, 2];
        let mut mask = vec![false; 4];
        mask[1] = true;
        let out = forward(&params, &tokens, 1, 4, Some(&mask), LogitScope::All).unwrap();
        let row = &out.logits[13..26];
        let p = (row[7] - log_sum_exp(row)).exp();
        assert!((out.mean_nll.unwrap() + p.ln()).abs() < 1e-12);
    }

    #[test]
    fn input_errors() {
        let params = init_params::<f64>(&tiny(), 0).unwrap();
        assert!(matches!(
            forward(&params, &[13, 0], 1, 2, None, LogitScope::All),
            Err(ModelError::TokenOutOfRange { .. })
        ));
        let long = vec![0; 13];
        assert!(matches!(
            forward(&params, &long, 1, 13, None, LogitScope::All),
            Err(ModelError::ContextOverflow { .. })
        ));
        let mask = vec![false; 4];
        assert_eq!(
            loss_and_grad_grid(&params, &[0, 1, 2, 3], 1, 4, &mask).unwrap_err(),
            ModelError::EmptyMask
        );
        let bad_mask = vec![false, false, false, true];
        assert!(loss_and_grad_grid(&params, &[0, 1, 2, 3], 1, 4, &bad_mask).is_err());
    }

    #[test]
    fn last_scope_matches_all() {
        let params = init_params::<f64>(&tiny(), 2).unwrap();
        let tokens: Vec<Token> = vec![1, 2, 3, 4, 5, 6, 7, 8];
        let all = forward(&params, &tokens, 2, 4, None, LogitScope::All).unwrap();
        let last = forward(&params, &tokens, 2, 4, None, LogitScope::Last).unwrap();
        let v = 13;
        assert_eq!(&last.logits[..v], &all.logits[3 * v..4 * v]);
        assert_eq!(&last.logits[v..], &all.logits[7 * v..8 * v]);
    }
}
