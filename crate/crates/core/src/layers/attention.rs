use super::as_row;
use crate::autograd::{Axis, Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamBuilder, ParamId};
use crate::tensor::Scalar;

/// Single-head scaled dot-product self-attention.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub input_dim: usize,
    pub attn_dim: usize,
    pub value_dim: usize,
}

impl SelfAttention {
    pub fn new(b: &mut ParamBuilder<'_>, name: &str, input_dim: usize, attn_dim: usize, value_dim: usize) -> Result<Self> {
        if attn_dim == 0 {
            return Err(Error::Config("attention width must be positive".into()));
        }
        let mut s = b.scoped(name);
        Ok(Self {
            query: s.uniform("query", &[input_dim, attn_dim], input_dim)?,
            key: s.uniform("key", &[input_dim, attn_dim], input_dim)?,
            value: s.uniform("value", &[input_dim, value_dim], input_dim)?,
            input_dim,
            attn_dim,
            value_dim,
        })
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.attn_dim as f64).sqrt()
    }

    /// `Y = softmax(Q·Kᵀ·scale, mask)·V` over the rows of `x` (`L×D`).
    /// `key_visible` flags the positions that may be attended to; hidden
    /// (padding) positions get weight exactly zero. Returns `(Y, weights)`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        p: &Bound,
        x: Var,
        key_visible: Option<&[bool]>,
    ) -> Result<(Var, Var)> {
        let len = match *tape.shape(x) {
            [l, d] if d == self.input_dim => l,
            ref s => {
                return Err(Error::dim("self_attention", format!("input shape {s:?}, expected [L, {}]", self.input_dim)))
            }
        };
        let mask: Option<Vec<bool>> = match key_visible {
            Some(v) if v.len() != len => {
                return Err(Error::dim("self_attention", format!("{} mask flags for {len} positions", v.len())))
            }
            Some(v) => Some((0..len).flat_map(|_| v.iter().copied()).collect()),
            None => None,
        };
        let q = tape.matmul(x, p.var(self.query))?;
        let k = tape.matmul(x, p.var(self.key))?;
        let v = tape.matmul(x, p.var(self.value))?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, self.scale())?;
        let weights = tape.softmax(scores, 1, mask.as_deref())?;
        let y = tape.matmul(weights, v)?;
        Ok((y, weights))
    }
}

/// Text-conditioned attention over image regions.
///
/// `score_i = scale · Σ_a w_a (t·W_q)_a (r_i·W_k)_a`, `weights = softmax(score)`,
/// `attended = Σ_i weight_i · (r_i·W_v)`.
#[derive(Clone, Debug)]
pub struct CrossAttention {
    pub query: ParamId,
    pub key: ParamId,
    pub score: ParamId,
    pub value: ParamId,
    pub text_dim: usize,
    pub region_dim: usize,
    pub attn_dim: usize,
    pub value_dim: usize,
}

impl CrossAttention {
    pub fn new(
        b: &mut ParamBuilder<'_>,
        name: &str,
        text_dim: usize,
        region_dim: usize,
        attn_dim: usize,
        value_dim: usize,
    ) -> Result<Self> {
        if attn_dim == 0 {
            return Err(Error::Config("attention width must be positive".into()));
        }
        let mut s = b.scoped(name);
        Ok(Self {
            query: s.uniform("query", &[text_dim, attn_dim], text_dim)?,
            key: s.uniform("key", &[region_dim, attn_dim], region_dim)?,
            score: s.uniform("score", &[attn_dim], attn_dim)?,
            value: s.uniform("value", &[region_dim, value_dim], region_dim)?,
            text_dim,
            region_dim,
            attn_dim,
            value_dim,
        })
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.attn_dim as f64).sqrt()
    }

    /// Returns `(attended, weights)` with shapes `[value_dim]` and `[N]`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, p: &Bound, text: Var, regions: Var) -> Result<(Var, Var)> {
        let n = match *tape.shape(regions) {
            [0, _] => return Err(Error::EmptyPremise),
            [n, d] if d == self.region_dim => n,
            ref s => {
                return Err(Error::dim(
                    "cross_attention",
                    format!("regions shape {s:?}, expected [N, {}]", self.region_dim),
                ))
            }
        };
        let text = as_row(tape, text)?;
        let q = tape.matmul(text, p.var(self.query))?;
        let k = tape.matmul(regions, p.var(self.key))?;
        let joint = tape.mul(k, q)?;
        let weighted = tape.mul(joint, p.var(self.score))?;
        let scores = tape.sum(weighted, Axis::Dim(1))?;
        let scores = tape.scale(scores, self.scale())?;
        let weights = tape.softmax(scores, 0, None)?;
        let v = tape.matmul(regions, p.var(self.value))?;
        let w_row = tape.reshape(weights, &[1, n])?;
        let attended = tape.matmul(w_row, v)?;
        let attended = tape.reshape(attended, &[self.value_dim])?;
        Ok((attended, weights))
    }
}
