use super::{ModelError, Scalar};

pub const ROPE_BASE: f64 = 10000.0;

/// Precomputed rotation angles for positions `0..max_positions`.
///
/// For frequency index `j < head_dim/2` the angle at position `p` is
/// `p * base^(-2j/head_dim)`; the pair `(x[2j], x[2j+1])` is rotated by it.
#[derive(Debug, Clone)]
pub struct RopeTable<T> {
    head_dim: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Scalar> RopeTable<T> {
    pub fn new(head_dim: usize, max_positions: usize) -> Result<Self, ModelError> {
        if head_dim == 0 || head_dim % 2 != 0 {
            return Err(ModelError::InvalidConfig(format!(
                "rotary embedding needs an even head dimension, got {head_dim}"
            )));
        }
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(max_positions * half);
        let mut sin = Vec::with_capacity(max_positions * half);
        for p in 0..max_positions {
            for j in 0..half {
                let freq = ROPE_BASE.powf(-2.0 * j as f64 / head_dim as f64);
                let angle = p as f64 * freq;
                cos.push(T::c(angle.cos()));
                sin.push(T::c(angle.sin()));
            }
        }
        Ok(Self { head_dim, cos, sin })
    }

    pub fn max_positions(&self) -> usize {
        self.cos.len() / (self.head_dim / 2)
    }

    /// Rotates one head vector in place; `inverse` rotates by the negated angle.
    pub(crate) fn apply(&self, x: &mut [T], position: usize, inverse: bool) {
        let half = self.head_dim / 2;
        let cos = &self.cos[position * half..(position + 1) * half];
        let sin = &self.sin[position * half..(position + 1) * half];
        for j in 0..half {
            let (c, s) = (cos[j], if inverse { -sin[j] } else { sin[j] });
            let (a, b) = (x[2 * j], x[2 * j + 1]);
            x[2 * j] = a * c - b * s;
            x[2 * j + 1] = a * s + b * c;
        }
    }

    /// Rotates every head of every row of a `rows x width` buffer, where
    /// `width` is a multiple of the head dimension; row `r` sits at position
    /// `r % seq`.
    pub(crate) fn apply_rows(&self, buf: &mut [T], width: usize, seq: usize, inverse: bool) {
        for (r, row) in buf.chunks_exact_mut(width).enumerate() {
            let pos = r % seq;
            for head in row.chunks_exact_mut(self.head_dim) {
                self.apply(head, pos, inverse);
            }
        }
    }
}

/// Applies the rotary transform to rows of `head_dim` values, row `i` at
/// `positions[i]`.
pub fn rope_rotate<T: Scalar>(x: &[T], head_dim: usize, positions: &[usize]) -> Result<Vec<T>, ModelError> {
    if x.len() != head_dim * positions.len() {
        return Err(ModelError::Shape(format!(
            "{} values for {} positions of width {head_dim}",
            x.len(),
            positions.len()
        )));
    }
    let max_pos = positions.iter().max().map_or(0, |&p| p + 1);
    let table = RopeTable::<T>::new(head_dim, max_pos)?;
    let mut out = x.to_vec();
    for (row, &p) in out.chunks_exact_mut(head_dim).zip(positions) {
        table.apply(row, p, false);
    }
    Ok(out)
}
