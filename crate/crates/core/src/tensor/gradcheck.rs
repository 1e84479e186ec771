use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares the tape gradient of a scalar function against central
/// differences and returns the largest relative error over all coordinates:
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
///
/// `f` builds the function on a fresh tape from the input leaf. Inputs are
/// perturbed in 64-bit so the step is not swallowed by rounding.
pub fn grad_check<F>(f: F, input: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    let shape = input.shape().to_vec();
    let base = input.to_f64();

    let mut tape = Tape::new();
    let x = tape.leaf_f64(shape.clone(), base.clone())?;
    let y = f(&mut tape, x)?;
    let grads = tape.backward(y)?;
    let zeros = vec![0.0; base.len()];
    let analytic = grads.of(x).unwrap_or(&zeros).to_vec();

    let eval = |values: Vec<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf_f64(shape.clone(), values)?;
        let y = f(&mut tape, x)?;
        Ok(tape.scalar(y))
    };

    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += step;
        let mut minus = base.clone();
        minus[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
