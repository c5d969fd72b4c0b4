//! Finite-difference checks of tape gradients.

use rand::Rng;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Records `f` on the inputs, reduces its output to `sum(w ⊙ f(x))` with
/// weights `w ~ U(-1, 1)` drawn once from `rng`, and compares the tape's
/// gradient of every input element with a central difference of width
/// `2 * step`. Returns the largest relative error.
pub fn max_rel_err<R, F>(inputs: &[Tensor], rng: &mut R, step: f64, f: F) -> Result<f64>
where
    R: Rng + ?Sized,
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let record = |ins: &[Tensor]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins
            .iter()
            .enumerate()
            .map(|(i, t)| tape.param(&format!("in{i}"), t))
            .collect();
        let out = f(&mut tape, &vars)?;
        Ok((tape, vars, out))
    };
    let (mut tape, vars, out) = record(inputs)?;
    let shape = tape.value(out).shape().to_vec();
    let n: usize = shape.iter().product::<usize>().max(1);
    let w = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let loss_of = |tape: &mut Tape, out: Var| -> Result<Var> {
        let weighted = tape.mul_const(out, w.clone())?;
        tape.sum(weighted)
    };
    let loss = loss_of(&mut tape, out)?;
    let grads = tape.backward(loss)?;
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; input.numel()]);
        for (i, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = input.to_vec();
                data[i] += delta;
                let mut ins = inputs.to_vec();
                ins[k] = Tensor::new(input.shape().to_vec(), data)?;
                let (mut t, _, o) = record(&ins)?;
                let l = loss_of(&mut t, o)?;
                Ok(t.value(l).data()[0])
            };
            let numeric = (eval(step)? - eval(-step)?) / (2.0 * step);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    Ok(worst)
}
