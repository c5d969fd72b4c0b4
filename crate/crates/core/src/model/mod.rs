//! The route-and-time network: two Transformer encoders, a pattern memory,
//! and a pointer decoder fused with mobility priors.

pub mod config;
pub mod decoder;
pub mod encoder;
pub mod memory;
pub mod params;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::features::{EncodedSample, FeatureStats};
use crate::data::mobility::MobilityTensors;
use crate::error::{contract, Error, Result};
pub use config::ModelConfig;
pub use decoder::{DecodeMode, DecodeOptions, DecodeTrace, DecoderContext, Step};
use parcel_tensor::{checkpoint, ParamStore, Tape, Var};
pub use params::{audit, init_params, param_shapes, ModelVars};

/// Tape handles produced by one forward pass.
pub struct Forward {
    pub t_h: Option<Var>,
    pub t_f: Var,
    pub t_c: Var,
    pub mem: Option<Var>,
    pub a: Var,
    pub trace: DecodeTrace,
    pub alpha: Var,
}

/// Records the full network for one sample on `tape`.
#[allow(clippy::too_many_arguments)]
pub fn forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &ModelConfig,
    sample: &EncodedSample,
    mobility: Option<&MobilityTensors>,
    mode: DecodeMode,
    train: bool,
    rng: &mut R,
) -> Result<Forward> {
    let vars = ModelVars::bind(tape, params, cfg)?;
    forward_bound(tape, &vars, cfg, sample, mobility, mode, train, rng)
}

/// [`forward`] with parameters already bound on `tape`, so several samples
/// can share one binding.
#[allow(clippy::too_many_arguments)]
pub fn forward_bound<R: Rng + ?Sized>(
    tape: &mut Tape,
    vars: &ModelVars,
    cfg: &ModelConfig,
    sample: &EncodedSample,
    mobility: Option<&MobilityTensors>,
    mode: DecodeMode,
    train: bool,
    rng: &mut R,
) -> Result<Forward> {
    let h = tape.constant(sample.history.clone());
    let f = tape.constant(sample.pending.clone());
    let t_h = encoder::encode_history(tape, h, &sample.history_mask, &vars.history, cfg.heads)?;
    let t_f = encoder::encode_pending(tape, f, &sample.pending_mask, &vars.pending, cfg.heads)?;
    let t_c = encoder::fuse(tape, t_h, vars.hist_start, t_f)?;
    let mem = if cfg.use_memory {
        Some(memory::memory_lookup(tape, t_c, vars.memory)?)
    } else {
        None
    };
    let a = memory::concat_output(tape, t_c, mem)?;
    let n = tape.value(a).rows();

    let gates = if cfg.use_mobility {
        let Some(m) = mobility else {
            return contract("mobility fusion is enabled but no mobility tensors were given");
        };
        if let Some(a) = sample.pending_aoi[..n].iter().flatten().find(|&&a| a >= m.n_aoi) {
            return contract(format!("AOI {a} is outside the mobility tables ({} AOIs)", m.n_aoi));
        }
        let (m_c, m_d) = m.slice(&sample.pending_aoi[..n], sample.slot);
        Some(decoder::mobility_gates(tape, &m_c, &m_d, &vars.decoder)?)
    } else {
        None
    };
    let a_w2 = tape.matmul(a, vars.decoder.w2)?;
    let ctx = DecoderContext { a, a_w2, gates };
    let opts = DecodeOptions {
        mode,
        train,
        dropout: cfg.dropout,
        pointer_tanh: cfg.pointer_tanh,
        time_scale: cfg.time_scale,
    };
    let truth = sample.target.as_ref().map(|t| t.route.as_slice());
    let truth = if mode == DecodeMode::TeacherForced { truth } else { None };
    let trace = decoder::decode_route(tape, &ctx, &vars.decoder, opts, truth, rng)?;
    Ok(Forward {
        t_h,
        t_f,
        t_c,
        mem,
        a,
        trace,
        alpha: vars.alpha,
    })
}

/// Greedy route and times for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Pending row indices in predicted visiting order.
    pub route: Vec<usize>,
    /// Predicted minutes from `t`, per pending row.
    pub minutes: Vec<f64>,
    /// `P(π_j)` per step, padded to `L_f`.
    pub probs: Vec<Vec<f64>>,
}

impl Prediction {
    /// Position of each pending row in the predicted route.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.route.len()];
        for (k, &i) in self.route.iter().enumerate() {
            pos[i] = k;
        }
        pos
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

pub const CHECKPOINT_META_VERSION: u32 = 1;

/// JSON stored next to the tensors in a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub meta_version: u32,
    /// Free-form label reported by the server.
    pub model_version: String,
    pub model: ModelConfig,
    pub features: FeatureStats,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(Self { config, params })
    }

    pub fn predict(&self, sample: &EncodedSample, mobility: Option<&MobilityTensors>) -> Result<Prediction> {
        let mut tape = Tape::new();
        let vars = ModelVars::bind(&mut tape, &self.params, &self.config)?;
        self.predict_bound(&mut tape, &vars, sample, mobility)
    }

    /// Predicts several samples in one execution with a single parameter
    /// binding. Each sample's result is independent of the others.
    pub fn predict_batch(&self, samples: &[&EncodedSample], mobility: Option<&MobilityTensors>) -> Result<Vec<Result<Prediction>>> {
        let mut tape = Tape::new();
        let vars = ModelVars::bind(&mut tape, &self.params, &self.config)?;
        Ok(samples
            .iter()
            .map(|s| self.predict_bound(&mut tape, &vars, s, mobility))
            .collect())
    }

    fn predict_bound(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        sample: &EncodedSample,
        mobility: Option<&MobilityTensors>,
    ) -> Result<Prediction> {
        // Dropout is off at inference, so the generator is never drawn from.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fwd = forward_bound(tape, vars, &self.config, sample, mobility, DecodeMode::Greedy, false, &mut rng)?;
        let tape = &*tape;
        let n = fwd.trace.steps.len();
        let mut minutes = vec![0.0; n];
        let mut probs = Vec::with_capacity(n);
        for step in &fwd.trace.steps {
            minutes[step.chosen] = tape.value(step.minutes).data()[0];
            let mut p = tape.value(step.p).to_vec();
            p.resize(self.config.l_f, 0.0);
            probs.push(p);
        }
        Ok(Prediction {
            route: fwd.trace.route(),
            minutes,
            probs,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, features: &FeatureStats, model_version: &str) -> Result<()> {
        let meta = CheckpointMeta {
            meta_version: CHECKPOINT_META_VERSION,
            model_version: model_version.to_string(),
            model: self.config.clone(),
            features: features.clone(),
        };
        checkpoint::save(path, &self.params, &serde_json::to_string(&meta)?)?;
        Ok(())
    }

    /// Loads a checkpoint and audits every parameter shape against its
    /// stored configuration.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointMeta)> {
        let (params, meta) = checkpoint::load(path)?;
        let meta: CheckpointMeta = serde_json::from_str(&meta)?;
        if meta.meta_version != CHECKPOINT_META_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint metadata version {}", meta.meta_version)));
        }
        meta.model.validate()?;
        let problems = audit(&params, &meta.model);
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok((
            Self {
                config: meta.model.clone(),
                params,
            },
            meta,
        ))
    }
}
