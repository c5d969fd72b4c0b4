//! LSTM pointer decoder with mobility fusion and a per-step time head.

use rand::Rng;

use crate::error::{contract, Result};
use crate::model::params::DecoderVars;
use parcel_tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    /// Feeds and masks the ground-truth route.
    TeacherForced,
    /// Feeds and masks the model's own argmax choices.
    Greedy,
}

/// One decoding step.
#[derive(Clone, Debug)]
pub struct Step {
    /// Packages still selectable before this step.
    pub available: Vec<bool>,
    pub scores: Var,
    /// Intermediate pointer probabilities `u_j`.
    pub u: Var,
    /// Final probabilities `P(π_j)`.
    pub p: Var,
    pub chosen: usize,
    /// Predicted minutes from the query time, `1 × 1`.
    pub minutes: Var,
}

#[derive(Clone, Debug, Default)]
pub struct DecodeTrace {
    pub steps: Vec<Step>,
}

impl DecodeTrace {
    pub fn route(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.chosen).collect()
    }
}

/// Decoder inputs that do not change across steps.
pub struct DecoderContext {
    /// `A_t`, `n × 4d`.
    pub a: Var,
    /// `A_t W_2`, `n × d`.
    pub a_w2: Var,
    /// `σ(M_C′ W_C + b_C)` and `σ(M_D′ W_D + b_D)`, each `n × n`.
    pub gates: Option<(Var, Var)>,
}

/// First input (mean of the `A_t` rows) and the learned initial state.
pub fn init_state(tape: &mut Tape, a: Var, vars: &DecoderVars) -> Result<(Var, Var, Var)> {
    let n = tape.value(a).rows();
    if n == 0 {
        return contract("decoding needs at least one pending package");
    }
    let avg = tape.constant(Tensor::filled(vec![1, n], 1.0 / n as f64));
    let input = tape.matmul(avg, a)?;
    let d = tape.value(vars.h0).numel();
    let h = tape.reshape(vars.h0, vec![1, d])?;
    let c = tape.reshape(vars.c0, vec![1, d])?;
    Ok((input, h, c))
}

/// Standard LSTM cell; gate blocks in `[input, forget, candidate, output]`
/// order. Returns the new `(h, c)`; the step output is `h`.
pub fn lstm_step(tape: &mut Tape, x: Var, h: Var, c: Var, vars: &DecoderVars) -> Result<(Var, Var)> {
    let d = tape.value(h).numel();
    let xi = tape.matmul(x, vars.w_ih)?;
    let hh = tape.matmul(h, vars.w_hh)?;
    let z = tape.add(xi, hh)?;
    let z = tape.add_row(z, vars.b)?;
    let i = tape.slice_cols(z, 0, d)?;
    let f = tape.slice_cols(z, d, d)?;
    let g = tape.slice_cols(z, 2 * d, d)?;
    let o = tape.slice_cols(z, 3 * d, d)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;
    let keep = tape.mul(f, c)?;
    let write = tape.mul(i, g)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next)?;
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// `s^i = vᵀ(W_1 e + W_2 A^i)` per pending row, optionally with `tanh`
/// inside. Availability is applied by the softmax that follows.
pub fn pointer_scores(tape: &mut Tape, e: Var, a_w2: Var, vars: &DecoderVars, use_tanh: bool) -> Result<Var> {
    let n = tape.value(a_w2).rows();
    let ew = tape.matmul(e, vars.w1)?;
    let mut z = tape.add_row(a_w2, ew)?;
    if use_tanh {
        z = tape.tanh(z)?;
    }
    let s = tape.matmul(z, vars.v)?;
    Ok(tape.reshape(s, vec![n])?)
}

/// `u_j`: softmax over the available packages.
pub fn intermediate_probs(tape: &mut Tape, scores: Var, available: &[bool]) -> Result<Var> {
    Ok(tape.masked_softmax(scores, available)?)
}

/// Gate matrices for one sample from its sliced mobility matrices (the
/// leading `n × n` block), using the matching block of the `L_f × L_f`
/// weights.
pub fn mobility_gates(tape: &mut Tape, m_c: &Tensor, m_d: &Tensor, vars: &DecoderVars) -> Result<(Var, Var)> {
    let n = m_c.rows();
    let rows: Vec<usize> = (0..n).collect();
    let mut gate = |m: &Tensor, w: Var, b: Var| -> Result<Var> {
        let m = tape.constant(m.clone());
        let w = tape.gather_rows(w, &rows)?;
        let w = tape.slice_cols(w, 0, n)?;
        let b = tape.slice_cols(b, 0, n)?;
        let z = tape.matmul(m, w)?;
        let z = tape.add_row(z, b)?;
        Ok(tape.sigmoid(z)?)
    };
    Ok((gate(m_c, vars.wc, vars.bc)?, gate(m_d, vars.wd, vars.bd)?))
}

/// `P = softmax(u + u G_C + u G_D)` over available packages. Without
/// mobility the gates vanish and `P = softmax(u)`.
pub fn mobility_fuse(tape: &mut Tape, u: Var, gates: Option<(Var, Var)>, available: &[bool]) -> Result<Var> {
    let Some((g_c, g_d)) = gates else {
        return Ok(tape.masked_softmax(u, available)?);
    };
    let n = tape.value(u).numel();
    let r_c = tape.matmul(u, g_c)?;
    let r_c = tape.reshape(r_c, vec![n])?;
    let r_d = tape.matmul(u, g_d)?;
    let r_d = tape.reshape(r_d, vec![n])?;
    let z = tape.add_many(&[u, r_c, r_d])?;
    Ok(tape.masked_softmax(z, available)?)
}

/// Argmax over available entries; ties go to the lowest index.
pub fn select_next(p: &[f64], available: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in p.iter().zip(available).enumerate() {
        if ok && best.is_none_or(|b| v > p[b]) {
            best = Some(i);
        }
    }
    best
}

/// `ỹ = relu([e ‖ A^π] W_t + b_t)`, scaled to minutes.
pub fn time_head(tape: &mut Tape, e: Var, a_row: Var, vars: &DecoderVars, scale: f64) -> Result<Var> {
    let x = tape.concat_cols(&[e, a_row])?;
    let z = tape.affine(x, vars.time_w, vars.time_b)?;
    let y = tape.relu(z)?;
    Ok(if scale == 1.0 { y } else { tape.scale(y, scale)? })
}

/// Settings that shape a decode.
#[derive(Clone, Copy, Debug)]
pub struct DecodeOptions {
    pub mode: DecodeMode,
    pub train: bool,
    pub dropout: f64,
    pub pointer_tanh: bool,
    pub time_scale: f64,
}

/// Runs exactly `n` steps over the pending rows of `ctx.a`.
pub fn decode_route<R: Rng + ?Sized>(
    tape: &mut Tape,
    ctx: &DecoderContext,
    vars: &DecoderVars,
    opts: DecodeOptions,
    truth: Option<&[usize]>,
    rng: &mut R,
) -> Result<DecodeTrace> {
    let n = tape.value(ctx.a).rows();
    if opts.mode == DecodeMode::TeacherForced {
        let Some(route) = truth else {
            return contract("teacher forcing needs a ground-truth route");
        };
        let mut seen = vec![false; n];
        if route.len() != n || route.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return contract(format!("ground-truth route {route:?} is not a permutation of {n} packages"));
        }
    }
    let (mut x, mut h, mut c) = init_state(tape, ctx.a, vars)?;
    let mut available = vec![true; n];
    let mut trace = DecodeTrace {
        steps: Vec::with_capacity(n),
    };
    for j in 0..n {
        (h, c) = lstm_step(tape, x, h, c, vars)?;
        let e = tape.dropout(h, opts.dropout, opts.train, rng)?;
        let scores = pointer_scores(tape, e, ctx.a_w2, vars, opts.pointer_tanh)?;
        let u = intermediate_probs(tape, scores, &available)?;
        let p = mobility_fuse(tape, u, ctx.gates, &available)?;
        let chosen = match opts.mode {
            DecodeMode::TeacherForced => truth.expect("checked above")[j],
            DecodeMode::Greedy => select_next(tape.value(p).data(), &available).expect("one package left"),
        };
        let a_row = tape.gather_rows(ctx.a, &[chosen])?;
        let minutes = time_head(tape, e, a_row, vars, opts.time_scale)?;
        trace.steps.push(Step {
            available: available.clone(),
            scores,
            u,
            p,
            chosen,
            minutes,
        });
        available[chosen] = false;
        x = a_row;
    }
    Ok(trace)
}
