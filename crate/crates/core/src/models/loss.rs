use super::Label;
use crate::autograd::{Axis, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// `−log softmax(logits)[label]` as a scalar.
pub fn cross_entropy<T: Scalar>(tape: &mut Tape<'_, T>, logits: Var, label: Label) -> Result<Var> {
    if tape.shape(logits) != [Label::COUNT] {
        return Err(Error::dim("cross_entropy", format!("logits shape {:?}, expected [3]", tape.shape(logits))));
    }
    let log_probs = tape.log_softmax(logits, 0)?;
    let picked = tape.narrow(log_probs, 0, label.index(), 1)?;
    let picked = tape.reshape(picked, &[])?;
    tape.neg(picked)
}

/// Mean of scalar losses.
pub fn mean_loss<T: Scalar>(tape: &mut Tape<'_, T>, losses: &[Var]) -> Result<Var> {
    if losses.is_empty() {
        return Err(Error::Contract("mean of an empty batch".into()));
    }
    let rows = losses.iter().map(|&l| tape.reshape(l, &[1])).collect::<Result<Vec<_>>>()?;
    let all = tape.concat(&rows, 0)?;
    tape.mean(all, Axis::All)
}
