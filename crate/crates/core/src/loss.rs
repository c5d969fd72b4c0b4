//! Multi-task loss: squared error on delivery times plus a learned weight
//! times the route cross entropy.

use crate::error::{contract, Result};
use crate::model::DecodeTrace;
use parcel_tensor::{Tape, Tensor, Var};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean of `(y - ỹ)²` over the steps that chose a delivery. `offsets` holds
/// the target minutes per pending row (`None` for pickups). Returns `None`
/// when no step is supervised.
pub fn loss_main(tape: &mut Tape, trace: &DecodeTrace, offsets: &[Option<f64>]) -> Result<Option<Var>> {
    let mut terms = Vec::new();
    for step in &trace.steps {
        let Some(y) = offsets.get(step.chosen).copied().flatten() else {
            continue;
        };
        let target = tape.constant(Tensor::filled(vec![1, 1], y));
        let diff = tape.sub(step.minutes, target)?;
        terms.push(tape.mul(diff, diff)?);
    }
    if terms.is_empty() {
        return Ok(None);
    }
    let k = terms.len() as f64;
    let total = tape.add_many(&terms)?;
    let mean = tape.scale(total, 1.0 / k)?;
    Ok(Some(tape.select(mean, 0)?))
}

/// `-mean_j ln max(P_j[π_j], floor)` over all steps, where `π_j` is the
/// package the (teacher-forced) trace selected.
pub fn loss_aux(tape: &mut Tape, trace: &DecodeTrace) -> Result<Var> {
    if trace.steps.is_empty() {
        return contract("route loss of an empty trace");
    }
    let mut terms = Vec::with_capacity(trace.steps.len());
    for step in &trace.steps {
        let p = tape.select(step.p, step.chosen)?;
        terms.push(tape.ln_floor(p, PROB_FLOOR)?);
    }
    let n = terms.len() as f64;
    let total = tape.add_many(&terms)?;
    Ok(tape.scale(total, -1.0 / n)?)
}

/// `L = L_main + softplus(a) · L_aux`. Returns `(L, α)`.
pub fn combined_loss(tape: &mut Tape, main: Option<Var>, aux: Var, a: Var) -> Result<(Var, Var)> {
    let alpha = tape.softplus(a)?;
    let alpha = tape.select(alpha, 0)?;
    let weighted = tape.mul(alpha, aux)?;
    let total = match main {
        Some(m) => tape.add(m, weighted)?,
        None => weighted,
    };
    Ok((total, alpha))
}
