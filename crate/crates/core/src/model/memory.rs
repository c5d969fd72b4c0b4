//! Pattern memory: a learned bank of `L_m` vectors read by attention.

use parcel_tensor::{Result, Tape, Var};

/// `Mem = softmax(T_c Mᵀ) M`, one read per pending row. The similarity is
/// an unscaled inner product.
pub fn memory_lookup(tape: &mut Tape, t_c: Var, memory: Var) -> Result<Var> {
    let mt = tape.transpose(memory)?;
    let scores = tape.matmul(t_c, mt)?;
    let weights = tape.softmax_rows(scores)?;
    tape.matmul(weights, memory)
}

/// `A_t = [T_c ‖ Mem]`; without memory the read is replaced by zeros.
pub fn concat_output(tape: &mut Tape, t_c: Var, mem: Option<Var>) -> Result<Var> {
    let mem = match mem {
        Some(m) => m,
        None => {
            let shape = tape.value(t_c).shape().to_vec();
            tape.constant(parcel_tensor::Tensor::zeros(shape))
        }
    };
    tape.concat_cols(&[t_c, mem])
}
