//! Transformer encoders for the history and pending branches, and their
//! fusion.
//!
//! Valid rows of a masked input always form a prefix (the encoder keeps
//! history oldest-first and pending in deadline order, padding at the end),
//! so the branch functions return only the `n` valid rows. Attending only
//! among valid rows is exactly key-side masking; [`pad_rows`] restores the
//! zero-padded `L × width` layout where one is needed.

use crate::error::{contract, Error, Result};
use crate::model::params::{BlockVars, EncoderVars};
use parcel_tensor::{Tape, Tensor, TensorError, Var};

/// Sinusoidal table: `PE(pos, 2i) = sin(pos / 10000^(2i/d))`,
/// `PE(pos, 2i+1) = cos(pos / 10000^(2i/d))`.
pub fn positional_encoding(l: usize, d: usize) -> Result<Tensor> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::Config(format!("positional encoding needs an even width, got {d}")));
    }
    let mut data = vec![0.0; l * d];
    for pos in 0..l {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10_000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = angle.sin();
            data[pos * d + 2 * i + 1] = angle.cos();
        }
    }
    Ok(Tensor::matrix(l, d, data)?)
}

/// Number of valid rows; errors unless they form a prefix of `mask`.
pub fn valid_prefix(mask: &[bool]) -> Result<usize> {
    let n = mask.iter().take_while(|&&m| m).count();
    if mask[n..].iter().any(|&m| m) {
        return contract("valid rows must precede padding");
    }
    Ok(n)
}

/// Zero-pads `n` valid rows back to `l` rows.
pub fn pad_rows(tape: &mut Tape, x: Var, l: usize) -> Result<Var> {
    let n = tape.value(x).rows();
    if n == l {
        return Ok(x);
    }
    let mut sel = vec![0.0; l * n];
    for i in 0..n {
        sel[i * n + i] = 1.0;
    }
    let sel = tape.constant(Tensor::matrix(l, n, sel)?);
    Ok(tape.matmul(sel, x)?)
}

/// Post-norm block over valid rows only: multi-head attention with
/// `1/sqrt(d_k)` scaling, residual, layer norm, feed-forward, residual,
/// layer norm.
pub fn encoder_block_valid(tape: &mut Tape, x: Var, vars: &BlockVars, heads: usize) -> Result<Var> {
    let d = tape.value(x).cols();
    let dk = d / heads;
    let q = tape.matmul(x, vars.wq)?;
    let k = tape.matmul(x, vars.wk)?;
    let v = tape.matmul(x, vars.wv)?;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dk, dk)?;
        let kh = tape.slice_cols(k, h * dk, dk)?;
        let vh = tape.slice_cols(v, h * dk, dk)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt())?;
        let weights = tape.softmax_rows(scores)?;
        outs.push(tape.matmul(weights, vh)?);
    }
    let heads_out = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    let attn = tape.affine(heads_out, vars.wo, vars.bo)?;
    let res = tape.add(x, attn)?;
    let y = tape.layer_norm(res, vars.ln1_g, vars.ln1_b)?;
    let hidden = tape.affine(y, vars.ff1_w, vars.ff1_b)?;
    let hidden = tape.relu(hidden)?;
    let ff = tape.affine(hidden, vars.ff2_w, vars.ff2_b)?;
    let res = tape.add(y, ff)?;
    Ok(tape.layer_norm(res, vars.ln2_g, vars.ln2_b)?)
}

/// Masked block over a full `L × d` input: masked keys get zero attention
/// weight and padded rows come out as zeros.
pub fn encoder_block(tape: &mut Tape, x: Var, mask: &[bool], vars: &BlockVars, heads: usize) -> Result<Var> {
    let n = valid_prefix(mask)?;
    if n == 0 {
        return Err(TensorError::Degenerate {
            op: "encoder_block",
            detail: "every row is masked".into(),
        }
        .into());
    }
    let rows: Vec<usize> = (0..n).collect();
    let valid = tape.gather_rows(x, &rows)?;
    let y = encoder_block_valid(tape, valid, vars, heads)?;
    pad_rows(tape, y, mask.len())
}

fn encode_branch(tape: &mut Tape, x: Var, n: usize, vars: &EncoderVars, heads: usize, positional: bool) -> Result<Var> {
    let rows: Vec<usize> = (0..n).collect();
    let valid = tape.gather_rows(x, &rows)?;
    let mut h = tape.affine(valid, vars.embed_w, vars.embed_b)?;
    if positional {
        let d = tape.value(h).cols();
        let pe = tape.constant(positional_encoding(n, d)?);
        h = tape.add(h, pe)?;
    }
    for block in &vars.blocks {
        h = encoder_block_valid(tape, h, block, heads)?;
    }
    Ok(h)
}

/// History branch, with positional encoding. Returns the `n_h × d` valid
/// rows, or `None` when the courier has no completions yet.
pub fn encode_history(tape: &mut Tape, h: Var, mask: &[bool], vars: &EncoderVars, heads: usize) -> Result<Option<Var>> {
    let n = valid_prefix(mask)?;
    if n == 0 {
        return Ok(None);
    }
    encode_branch(tape, h, n, vars, heads, true).map(Some)
}

/// Pending branch, without positional encoding. Returns the `n_f × d` valid
/// rows.
pub fn encode_pending(tape: &mut Tape, f: Var, mask: &[bool], vars: &EncoderVars, heads: usize) -> Result<Var> {
    let n = valid_prefix(mask)?;
    if n == 0 {
        return contract("a sample needs at least one pending package");
    }
    encode_branch(tape, f, n, vars, heads, false)
}

/// `[h* ‖ f_i]` for every valid pending row, where `h*` is the last history
/// row or the learned start-of-history vector.
pub fn fuse(tape: &mut Tape, t_h: Option<Var>, hist_start: Var, t_f: Var) -> Result<Var> {
    let n = tape.value(t_f).rows();
    let last = match t_h {
        Some(t) => {
            let r = tape.value(t).rows();
            tape.gather_rows(t, &[r - 1])?
        }
        None => hist_start,
    };
    let broadcast = tape.gather_rows(last, &vec![0; n])?;
    Ok(tape.concat_cols(&[broadcast, t_f])?)
}
