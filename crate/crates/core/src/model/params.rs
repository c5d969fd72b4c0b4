//! Parameter names, shapes, initialization, and binding onto a tape.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::config::ModelConfig;
use parcel_tensor::{normal, xavier_uniform, ParamStore, Result, Tape, Tensor, Var};

/// Unconstrained loss-weight parameter; `softplus(ln(e - 1)) = 1`.
pub const ALPHA_INIT: f64 = 0.541_324_854_612_918_1;

#[derive(Clone, Copy, Debug)]
enum Init {
    Xavier,
    Zeros,
    Ones,
    Normal(f64),
    Const(f64),
}

fn specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.d_model;
    let ff = d * cfg.ffn_mult;
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| out.push((name, shape, init));
    for branch in ["hist", "pend"] {
        push(format!("{branch}.embed.w"), vec![cfg.d_in, d], Init::Xavier);
        push(format!("{branch}.embed.b"), vec![d], Init::Zeros);
        for k in 0..cfg.blocks {
            let p = format!("{branch}.block{k}");
            for w in ["wq", "wk", "wv", "wo"] {
                push(format!("{p}.{w}"), vec![d, d], Init::Xavier);
            }
            push(format!("{p}.bo"), vec![d], Init::Zeros);
            push(format!("{p}.ln1.g"), vec![d], Init::Ones);
            push(format!("{p}.ln1.b"), vec![d], Init::Zeros);
            push(format!("{p}.ff1.w"), vec![d, ff], Init::Xavier);
            push(format!("{p}.ff1.b"), vec![ff], Init::Zeros);
            push(format!("{p}.ff2.w"), vec![ff, d], Init::Xavier);
            push(format!("{p}.ff2.b"), vec![d], Init::Zeros);
            push(format!("{p}.ln2.g"), vec![d], Init::Ones);
            push(format!("{p}.ln2.b"), vec![d], Init::Zeros);
        }
    }
    push("hist.start".into(), vec![d], Init::Normal(0.1));
    push("memory".into(), vec![cfg.l_m, 2 * d], Init::Normal(0.02));
    push("dec.w_ih".into(), vec![4 * d, 4 * d], Init::Xavier);
    push("dec.w_hh".into(), vec![d, 4 * d], Init::Xavier);
    push("dec.b".into(), vec![4 * d], Init::Zeros);
    push("dec.h0".into(), vec![d], Init::Normal(0.1));
    push("dec.c0".into(), vec![d], Init::Normal(0.1));
    push("ptr.w1".into(), vec![d, d], Init::Xavier);
    push("ptr.w2".into(), vec![4 * d, d], Init::Xavier);
    push("ptr.v".into(), vec![d, 1], Init::Xavier);
    push("mob.wc".into(), vec![cfg.l_f, cfg.l_f], Init::Xavier);
    push("mob.bc".into(), vec![cfg.l_f], Init::Zeros);
    push("mob.wd".into(), vec![cfg.l_f, cfg.l_f], Init::Xavier);
    push("mob.bd".into(), vec![cfg.l_f], Init::Zeros);
    push("time.w".into(), vec![5 * d, 1], Init::Xavier);
    push("time.b".into(), vec![1], Init::Const(cfg.time_bias));
    push("alpha".into(), vec![1], Init::Const(ALPHA_INIT));
    out
}

/// Every parameter name with its expected shape, in initialization order.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    specs(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Fresh parameters, fully determined by `seed`.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape, init) in specs(cfg) {
        let t = match init {
            Init::Xavier => xavier_uniform(shape[0], shape[1], &mut rng),
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::filled(shape, 1.0),
            Init::Normal(std) => normal(shape, std, &mut rng),
            Init::Const(v) => Tensor::filled(shape, v),
        };
        store.insert(name, t);
    }
    store
}

/// Lists mismatches between a store and the shapes `cfg` expects.
pub fn audit(store: &ParamStore, cfg: &ModelConfig) -> Vec<String> {
    let expected = param_shapes(cfg);
    let mut problems = Vec::new();
    for (name, shape) in &expected {
        match store.get(name) {
            None => problems.push(format!("missing parameter {name}")),
            Some(t) if t.shape() != shape.as_slice() => {
                problems.push(format!("{name}: expected {shape:?}, found {:?}", t.shape()))
            }
            Some(t) if !t.is_finite() => problems.push(format!("{name}: non-finite values")),
            Some(_) => {}
        }
    }
    for name in store.names() {
        if !expected.iter().any(|(n, _)| n == name) {
            problems.push(format!("unexpected parameter {name}"));
        }
    }
    problems
}

pub struct BlockVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub bo: Var,
    pub ln1_g: Var,
    pub ln1_b: Var,
    pub ff1_w: Var,
    pub ff1_b: Var,
    pub ff2_w: Var,
    pub ff2_b: Var,
    pub ln2_g: Var,
    pub ln2_b: Var,
}

pub struct EncoderVars {
    pub embed_w: Var,
    pub embed_b: Var,
    pub blocks: Vec<BlockVars>,
}

pub struct DecoderVars {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b: Var,
    pub h0: Var,
    pub c0: Var,
    pub w1: Var,
    pub w2: Var,
    pub v: Var,
    pub wc: Var,
    pub bc: Var,
    pub wd: Var,
    pub bd: Var,
    pub time_w: Var,
    pub time_b: Var,
}

/// All parameters bound as tape leaves for one forward pass.
pub struct ModelVars {
    pub history: EncoderVars,
    pub hist_start: Var,
    pub pending: EncoderVars,
    pub memory: Var,
    pub decoder: DecoderVars,
    pub alpha: Var,
}

impl EncoderVars {
    pub fn bind(tape: &mut Tape, store: &ParamStore, branch: &str, blocks: usize) -> Result<Self> {
        let mut b = |n: &str| tape.bind(store, &format!("{branch}.{n}"));
        let embed_w = b("embed.w")?;
        let embed_b = b("embed.b")?;
        let mut out = Vec::with_capacity(blocks);
        for k in 0..blocks {
            let mut b = |n: &str| tape.bind(store, &format!("{branch}.block{k}.{n}"));
            out.push(BlockVars {
                wq: b("wq")?,
                wk: b("wk")?,
                wv: b("wv")?,
                wo: b("wo")?,
                bo: b("bo")?,
                ln1_g: b("ln1.g")?,
                ln1_b: b("ln1.b")?,
                ff1_w: b("ff1.w")?,
                ff1_b: b("ff1.b")?,
                ff2_w: b("ff2.w")?,
                ff2_b: b("ff2.b")?,
                ln2_g: b("ln2.g")?,
                ln2_b: b("ln2.b")?,
            });
        }
        Ok(Self {
            embed_w,
            embed_b,
            blocks: out,
        })
    }
}

impl DecoderVars {
    pub fn bind(tape: &mut Tape, store: &ParamStore) -> Result<Self> {
        let mut b = |n: &str| tape.bind(store, n);
        Ok(Self {
            w_ih: b("dec.w_ih")?,
            w_hh: b("dec.w_hh")?,
            b: b("dec.b")?,
            h0: b("dec.h0")?,
            c0: b("dec.c0")?,
            w1: b("ptr.w1")?,
            w2: b("ptr.w2")?,
            v: b("ptr.v")?,
            wc: b("mob.wc")?,
            bc: b("mob.bc")?,
            wd: b("mob.wd")?,
            bd: b("mob.bd")?,
            time_w: b("time.w")?,
            time_b: b("time.b")?,
        })
    }
}

impl ModelVars {
    pub fn bind(tape: &mut Tape, store: &ParamStore, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            history: EncoderVars::bind(tape, store, "hist", cfg.blocks)?,
            hist_start: tape.bind(store, "hist.start")?,
            pending: EncoderVars::bind(tape, store, "pend", cfg.blocks)?,
            memory: tape.bind(store, "memory")?,
            decoder: DecoderVars::bind(tape, store)?,
            alpha: tape.bind(store, "alpha")?,
        })
    }
}
