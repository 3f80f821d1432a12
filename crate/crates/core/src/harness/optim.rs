use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How weight decay enters the update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayMode {
    /// Parameters are scaled by `1 − lr·wd` before the Adam update.
    #[default]
    Decoupled,
    /// `wd·param` is added to the gradient.
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mode: DecayMode,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4, decay_mode: DecayMode::Decoupled }
    }
}

/// First and second moments per parameter tensor, and the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { m, v, step: 0 }
    }
}

/// One Adam update. `grads[i]` of `None` marks a frozen tensor, which is left
/// untouched (no decay either).
pub fn adam_step(params: &mut [&mut [f32]], grads: &[Option<&[f32]>], state: &mut AdamState, hyper: &AdamHyper) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Contract(format!(
            "adam_step: {} parameter tensors, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let n = p.len();
        if state.m[i].len() != n || state.v[i].len() != n || g.is_some_and(|g| g.len() != n) {
            return Err(Error::Contract(format!("adam_step: size mismatch at tensor {i}")));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (hyper.beta1, hyper.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let decay = 1.0 - hyper.lr * hyper.weight_decay;
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let Some(g) = g else { continue };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..p.len() {
            let mut param = p[j] as f64;
            let mut grad = g[j] as f64;
            match hyper.decay_mode {
                DecayMode::Decoupled => param *= decay,
                DecayMode::L2 => grad += hyper.weight_decay * param,
            }
            let mj = b1 * m[j] as f64 + (1.0 - b1) * grad;
            let vj = b2 * v[j] as f64 + (1.0 - b2) * grad * grad;
            m[j] = mj as f32;
            v[j] = vj as f32;
            let m_hat = mj / correction1;
            let v_hat = vj / correction2;
            p[j] = (param - hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps)) as f32;
        }
    }
    Ok(())
}
