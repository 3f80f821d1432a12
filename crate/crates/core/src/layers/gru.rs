use super::{as_row, Linear};
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamBuilder, ParamId};
use crate::tensor::{Scalar, Tensor};

/// Unidirectional gated recurrent unit.
///
/// ```text
/// z  = σ(x·W_z + b_z + h·U_z)
/// r  = σ(x·W_r + b_r + h·U_r)
/// h̃  = tanh(x·W_h + b_h + (r ⊙ h)·U_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
#[derive(Clone, Debug)]
pub struct Gru {
    pub input_size: usize,
    pub hidden_size: usize,
    pub input_update: Linear,
    pub input_reset: Linear,
    pub input_candidate: Linear,
    pub hidden_update: ParamId,
    pub hidden_reset: ParamId,
    pub hidden_candidate: ParamId,
}

pub struct GruOutput {
    /// `L×hidden`, one row per position.
    pub states: Var,
    /// `hidden`, the state after the last non-padding position.
    pub final_state: Var,
}

impl Gru {
    pub fn new(b: &mut ParamBuilder<'_>, name: &str, input_size: usize, hidden_size: usize) -> Result<Self> {
        if hidden_size == 0 {
            return Err(Error::Config("GRU hidden size must be positive".into()));
        }
        let mut s = b.scoped(name);
        let h = hidden_size;
        Ok(Self {
            input_size,
            hidden_size,
            input_update: Linear::new(&mut s, "input_update", input_size, h, true)?,
            input_reset: Linear::new(&mut s, "input_reset", input_size, h, true)?,
            input_candidate: Linear::new(&mut s, "input_candidate", input_size, h, true)?,
            hidden_update: s.uniform("hidden_update", &[h, h], h)?,
            hidden_reset: s.uniform("hidden_reset", &[h, h], h)?,
            hidden_candidate: s.uniform("hidden_candidate", &[h, h], h)?,
        })
    }

    /// Runs the recurrence over `seq` (`L×input`). Positions whose `valid`
    /// flag is false (padding) leave the state unchanged.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        p: &Bound,
        seq: Var,
        h0: Var,
        valid: Option<&[bool]>,
    ) -> Result<GruOutput> {
        let len = match *tape.shape(seq) {
            [l, d] if d == self.input_size => l,
            ref s => return Err(Error::dim("gru", format!("sequence shape {s:?}, expected [L, {}]", self.input_size))),
        };
        if let Some(v) = valid {
            if v.len() != len {
                return Err(Error::dim("gru", format!("{} validity flags for {len} positions", v.len())));
            }
        }
        let mut h = as_row(tape, h0)?;
        if tape.shape(h) != [1, self.hidden_size] {
            return Err(Error::dim("gru", format!("initial state shape {:?}", tape.shape(h0))));
        }
        if len == 0 {
            let states = tape.constant(Tensor::zeros(&[0, self.hidden_size]));
            let final_state = tape.reshape(h, &[self.hidden_size])?;
            return Ok(GruOutput { states, final_state });
        }

        // Input projections for all positions at once.
        let xz = self.input_update.forward(tape, p, seq)?;
        let xr = self.input_reset.forward(tape, p, seq)?;
        let xh = self.input_candidate.forward(tape, p, seq)?;

        let mut rows = Vec::with_capacity(len);
        for t in 0..len {
            if valid.is_some_and(|v| !v[t]) {
                rows.push(h);
                continue;
            }
            let hz = tape.matmul(h, p.var(self.hidden_update))?;
            let xz_t = tape.narrow(xz, 0, t, 1)?;
            let z = tape.add(xz_t, hz)?;
            let z = tape.sigmoid(z)?;

            let hr = tape.matmul(h, p.var(self.hidden_reset))?;
            let xr_t = tape.narrow(xr, 0, t, 1)?;
            let r = tape.add(xr_t, hr)?;
            let r = tape.sigmoid(r)?;

            let rh = tape.mul(r, h)?;
            let hh = tape.matmul(rh, p.var(self.hidden_candidate))?;
            let xh_t = tape.narrow(xh, 0, t, 1)?;
            let cand = tape.add(xh_t, hh)?;
            let cand = tape.tanh(cand)?;

            // h + z ⊙ (h̃ − h) == (1 − z) ⊙ h + z ⊙ h̃
            let delta = tape.sub(cand, h)?;
            let step = tape.mul(z, delta)?;
            h = tape.add(h, step)?;
            rows.push(h);
        }
        let states = tape.concat(&rows, 0)?;
        let final_state = tape.reshape(h, &[self.hidden_size])?;
        Ok(GruOutput { states, final_state })
    }
}
