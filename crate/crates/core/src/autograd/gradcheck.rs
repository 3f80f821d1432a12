use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    /// max over coordinates of |a − n| / max(|a|, |n|, 1e-8)
    pub max_rel_error: f64,
    /// (input index, flat coordinate) where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

impl GradCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

fn eval<T, F>(f: &F, inputs: &[Tensor<T>]) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Tape<'_, T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let data = tape.data(out);
    if data.len() != 1 {
        return Err(Error::Contract(format!("grad_check needs a scalar function, got shape {:?}", tape.shape(out))));
    }
    let value = data[0].as_f64();
    if !value.is_finite() {
        return Err(Error::Domain { op: "grad_check", detail: "function is not finite".into() });
    }
    Ok(value)
}

/// Checks the gradient of a scalar function of several tensors against
/// central differences `(f(x + εeᵢ) − f(x − εeᵢ)) / 2ε`, one coordinate at a
/// time.
pub fn grad_check<T, F>(f: F, inputs: &[Tensor<T>], eps: f64) -> Result<GradCheck>
where
    T: Scalar,
    F: Fn(&mut Tape<'_, T>, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Contract(format!("finite-difference step must be positive, got {eps}")));
    }

    let analytic: Vec<Tensor<T>> = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.get(v).expect("inputs are gradient leaves")).collect()
    };

    let mut report = GradCheck { max_rel_error: 0.0, worst: None, coordinates: 0 };
    let mut probe: Vec<Tensor<T>> = inputs.to_vec();
    for (j, grad) in analytic.iter().enumerate() {
        for i in 0..grad.numel() {
            let original = probe[j].data()[i];
            probe[j].data_mut()[i] = T::lit(original.as_f64() + eps);
            let plus = eval(&f, &probe);
            probe[j].data_mut()[i] = T::lit(original.as_f64() - eps);
            let minus = eval(&f, &probe);
            probe[j].data_mut()[i] = original;
            let numeric = (plus? - minus?) / (2.0 * eps);
            let err = rel_error(grad.data()[i].as_f64(), numeric);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((j, i));
            }
        }
    }
    Ok(report)
}
