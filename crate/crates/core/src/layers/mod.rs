//! Neural building blocks: embedding lookup, GRU encoder, self- and
//! text-image attention, projected product fusion and the MLP head.
//!
//! Layers hold [`ParamId`]s into a [`ParamStore`](crate::params::ParamStore)
//! and run on whatever scalar type the tape uses. Vectors travel as `1×n`
//! row matrices between layers; public entry points also accept rank-1
//! inputs.

mod attention;
mod embedding;
mod gru;

pub use attention::{CrossAttention, SelfAttention};
pub use embedding::{embed, EmbeddingTable, Vocab, PAD_TOKEN, UNK_TOKEN};
pub use gru::{Gru, GruOutput};

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamBuilder, ParamId};
use crate::tensor::Scalar;

/// Views a rank-1 tensor as a `1×n` row; leaves 2-D tensors alone.
pub(crate) fn as_row<T: Scalar>(tape: &mut Tape<'_, T>, v: Var) -> Result<Var> {
    match *tape.shape(v) {
        [n] => tape.reshape(v, &[1, n]),
        [_, _] => Ok(v),
        ref s => Err(Error::dim("layer input", format!("expected a vector or matrix, got shape {s:?}"))),
    }
}

/// `y = x·W + b` with `W` stored `in×out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(b: &mut ParamBuilder<'_>, name: &str, in_dim: usize, out_dim: usize, bias: bool) -> Result<Self> {
        let mut s = b.scoped(name);
        let weight = s.uniform("weight", &[in_dim, out_dim], in_dim)?;
        let bias = if bias { Some(s.uniform("bias", &[out_dim], in_dim)?) } else { None };
        Ok(Self { weight, bias, in_dim, out_dim })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, p: &Bound, x: Var) -> Result<Var> {
        let x = as_row(tape, x)?;
        let y = tape.matmul(x, p.var(self.weight))?;
        match self.bias {
            Some(bias) => tape.add(y, p.var(bias)),
            None => Ok(y),
        }
    }
}

/// Affine layers with ReLU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `widths` lists input, hidden and output widths in order.
    pub fn new(b: &mut ParamBuilder<'_>, name: &str, widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config(format!("MLP {name:?} needs at least input and output widths")));
        }
        let mut s = b.scoped(name);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(&mut s, &format!("layer{i}"), w[0], w[1], true))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Linear>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Config(format!(
                    "MLP widths do not chain: {} then {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, p, h)?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Classifier head producing the three label logits as a rank-1 tensor
/// ordered (contradiction, neutral, entailment).
pub fn mlp_classify<T: Scalar>(tape: &mut Tape<'_, T>, p: &Bound, head: &Mlp, fused: Var) -> Result<Var> {
    let logits = head.forward(tape, p, fused)?;
    let n = tape.data(logits).len();
    if n != crate::models::Label::COUNT {
        return Err(Error::Config(format!("classifier head emits {n} logits, expected 3")));
    }
    tape.reshape(logits, &[n])
}

/// Projects both inputs to a common width and multiplies them elementwise.
pub fn fuse<T: Scalar>(
    tape: &mut Tape<'_, T>,
    p: &Bound,
    text: Var,
    image: Var,
    proj_text: &Linear,
    proj_image: &Linear,
) -> Result<Var> {
    if proj_text.out_dim != proj_image.out_dim {
        return Err(Error::Config(format!(
            "fusion projections disagree on width: {} vs {}",
            proj_text.out_dim, proj_image.out_dim
        )));
    }
    let t = proj_text.forward(tape, p, text)?;
    let i = proj_image.forward(tape, p, image)?;
    tape.mul(t, i)
}
