//! Sample preparation and the mini-batch training loop.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::features::{EncodedSample, FeatureStats};
use crate::data::mobility::MobilityTensors;
use crate::data::schema::{DayRecord, Sample};
use crate::data::split::split_routes;
use crate::error::{config, Error, Result};
use crate::eval::{csv_err, evaluate, ModelPredictor};
use crate::loss::{combined_loss, loss_aux, loss_main};
use crate::model::{forward, DecodeMode, Model, ModelConfig};
use parcel_tensor::{clip_global_norm, Adam, Tape, Tensor, TensorError};

/// Every training hyperparameter. Field names double as config-file keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Epochs without validation RMSE improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Take a sample at every `stride`-th completion.
    pub stride: usize,
    /// Cap on training samples after shuffling by seed; 0 keeps all.
    pub max_train_samples: usize,
    /// Cap on validation samples; 0 keeps all.
    pub max_val_samples: usize,
    pub d_model: usize,
    pub heads: usize,
    pub blocks: usize,
    pub ffn_mult: usize,
    pub l_h: usize,
    pub l_f: usize,
    pub l_m: usize,
    pub dropout: f64,
    pub pointer_tanh: bool,
    pub use_memory: bool,
    pub use_mobility: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            batch_size: 128,
            lr: 1e-4,
            epochs: 30,
            patience: 5,
            clip_norm: 5.0,
            seed: 42,
            stride: 1,
            max_train_samples: 0,
            max_val_samples: 0,
            d_model: m.d_model,
            heads: m.heads,
            blocks: m.blocks,
            ffn_mult: m.ffn_mult,
            l_h: m.l_h,
            l_f: m.l_f,
            l_m: m.l_m,
            dropout: m.dropout,
            pointer_tanh: m.pointer_tanh,
            use_memory: m.use_memory,
            use_mobility: m.use_mobility,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.stride == 0 {
            return config("batch_size and stride must be at least 1");
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) || !(self.clip_norm > 0.0) {
            return config("lr must be non-negative and clip_norm positive");
        }
        Ok(())
    }

    /// Network shape for feature rows of width `d_in`, with the time head
    /// scaled to the training offsets.
    pub fn model_config(&self, d_in: usize, time_scale: f64, time_bias: f64) -> ModelConfig {
        ModelConfig {
            d_in,
            d_model: self.d_model,
            heads: self.heads,
            blocks: self.blocks,
            ffn_mult: self.ffn_mult,
            l_h: self.l_h,
            l_f: self.l_f,
            l_m: self.l_m,
            dropout: self.dropout,
            pointer_tanh: self.pointer_tanh,
            use_memory: self.use_memory,
            use_mobility: self.use_mobility,
            time_scale,
            time_bias,
        }
    }
}

/// Route-split samples of every day.
pub fn samples_from_records(records: &[DayRecord], stride: usize) -> Vec<Sample> {
    records.iter().flat_map(|d| split_routes(d, stride)).collect()
}

/// Encodes samples, dropping those with nothing pending.
pub fn encode_all(samples: &[Sample], stats: &FeatureStats) -> Vec<EncodedSample> {
    samples
        .iter()
        .filter(|s| !s.pending.is_empty())
        .map(|s| stats.encode(s))
        .collect()
}

/// Mean and population std of the training delivery offsets, used to put
/// the time head on the scale of its targets.
pub fn time_head_scale(train: &[EncodedSample]) -> (f64, f64) {
    let ys: Vec<f64> = train
        .iter()
        .filter_map(|s| s.target.as_ref())
        .flat_map(|t| t.offsets.iter().flatten().copied())
        .collect();
    if ys.is_empty() {
        return (1.0, 0.0);
    }
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let std = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n).sqrt();
    let scale = std.max(1.0);
    (scale, mean / scale)
}

/// Seed-shuffled prefix of `samples` when `cap > 0`.
pub fn subsample(mut samples: Vec<EncodedSample>, cap: usize, seed: u64) -> Vec<EncodedSample> {
    if cap == 0 || samples.len() <= cap {
        return samples;
    }
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    samples.truncate(cap);
    samples
}

/// Encoded splits plus everything fitted on the training split.
pub struct Prepared {
    pub stats: FeatureStats,
    pub train: Vec<EncodedSample>,
    pub val: Vec<EncodedSample>,
    pub time_scale: f64,
    pub time_bias: f64,
}

/// Fits feature statistics on `train`, encodes both splits, applies the
/// sample caps and sizes the time head.
pub fn prepare(train: &[Sample], val: &[Sample], cfg: &TrainConfig) -> Result<Prepared> {
    cfg.validate()?;
    let stats = FeatureStats::fit(train, cfg.l_h, cfg.l_f)?;
    let train = subsample(encode_all(train, &stats), cfg.max_train_samples, cfg.seed);
    let val = subsample(encode_all(val, &stats), cfg.max_val_samples, cfg.seed.wrapping_add(1));
    if train.is_empty() {
        return config("no training samples");
    }
    let (time_scale, time_bias) = time_head_scale(&train);
    Ok(Prepared {
        stats,
        train,
        val,
        time_scale,
        time_bias,
    })
}

/// Initialises a model for `prep` and trains it.
pub fn fit(
    prep: &Prepared,
    mobility: Option<&MobilityTensors>,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let model_cfg = cfg.model_config(prep.stats.width(), prep.time_scale, prep.time_bias);
    let model = Model::new(model_cfg, cfg.seed)?;
    train(&prep.train, &prep.val, mobility, model, cfg, on_epoch)
}

/// Losses from one batch or epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub main: f64,
    pub aux: f64,
    pub alpha: f64,
    pub total: f64,
    /// Samples whose route held no delivery, so only the route loss applied.
    pub zero_delivery: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub main: f64,
    pub aux: f64,
    pub alpha: f64,
    pub zero_delivery: usize,
    pub val_rmse: Option<f64>,
    pub val_mape: Option<f64>,
    pub val_lmd: Option<f64>,
    pub val_hr3: Option<f64>,
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation RMSE (the
    /// initial parameters when no epoch ran).
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

fn per_sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Loss and parameter gradients for one teacher-forced sample.
pub fn sample_gradients(
    model: &Model,
    sample: &EncodedSample,
    mobility: Option<&MobilityTensors>,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(LossReport, BTreeMap<String, Tensor>)> {
    let target = sample
        .target
        .as_ref()
        .ok_or_else(|| Error::Contract("training samples need ground truth".into()))?;
    let mut tape = Tape::new();
    let fwd = forward(
        &mut tape,
        &model.params,
        &model.config,
        sample,
        mobility,
        DecodeMode::TeacherForced,
        train,
        rng,
    )?;
    let main = loss_main(&mut tape, &fwd.trace, &target.offsets)?;
    let aux = loss_aux(&mut tape, &fwd.trace)?;
    let (total, alpha) = combined_loss(&mut tape, main, aux, fwd.alpha)?;
    let report = LossReport {
        main: main.map_or(0.0, |m| tape.value(m).data()[0]),
        aux: tape.value(aux).data()[0],
        alpha: tape.value(alpha).data()[0],
        total: tape.value(total).data()[0],
        zero_delivery: usize::from(main.is_none()),
    };
    let grads = tape.backward(total)?.params();
    Ok((report, grads))
}

fn non_finite(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::Tensor(TensorError::NonFinite { op }) => Error::NonFiniteLoss {
            epoch,
            batch,
            detail: format!("non-finite value in {op}"),
        },
        Error::Tensor(TensorError::NonFiniteGradient(name)) => Error::NonFiniteLoss {
            epoch,
            batch,
            detail: format!("non-finite gradient for {name}"),
        },
        other => other,
    }
}

/// Mini-batch Adam over teacher-forced decoding with per-epoch validation
/// and early stopping on validation RMSE.
///
/// Per-sample gradients are summed in sample order and divided by the batch
/// size, so runs with the same seed are bit-for-bit identical.
pub fn train(
    train: &[EncodedSample],
    val: &[EncodedSample],
    mobility: Option<&MobilityTensors>,
    mut model: Model,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train: Vec<&EncodedSample> = train.iter().filter(|s| s.target.is_some()).collect();
    let mut adam = Adam::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = LossReport::default();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for &i in batch {
                let mut rng = per_sample_rng(cfg.seed, epoch, i);
                let (report, grads) =
                    sample_gradients(&model, train[i], mobility, true, &mut rng).map_err(|e| non_finite(epoch, b, e))?;
                if !report.total.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch,
                        batch: b,
                        detail: format!("sample {i}: {report:?}"),
                    });
                }
                sums.main += report.main;
                sums.aux += report.aux;
                sums.total += report.total;
                sums.alpha = report.alpha;
                sums.zero_delivery += report.zero_delivery;
                for (name, g) in grads {
                    let slot = acc.entry(name).or_insert_with(|| vec![0.0; g.numel()]);
                    for (a, v) in slot.iter_mut().zip(g.data()) {
                        *a += v;
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            let mut grads: BTreeMap<String, Tensor> = acc
                .into_iter()
                .map(|(name, v)| {
                    let shape = model.params.get(&name).expect("bound from the store").shape().to_vec();
                    let data = v.into_iter().map(|x| x * inv).collect();
                    (name, Tensor::new(shape, data).expect("same shape"))
                })
                .collect();
            clip_global_norm(&mut grads, cfg.clip_norm);
            adam.step(&mut model.params, &grads, cfg.lr).map_err(|e| non_finite(epoch, b, e.into()))?;
        }
        let n = train.len().max(1) as f64;
        let val_result = if val.is_empty() {
            None
        } else {
            let predictor = ModelPredictor {
                model: &model,
                mobility,
            };
            Some(evaluate(val, &predictor)?)
        };
        let record = EpochRecord {
            epoch,
            loss: sums.total / n,
            main: sums.main / n,
            aux: sums.aux / n,
            alpha: crate::tensor::softplus(model.params.get("alpha").map_or(0.0, |a| a.data()[0])),
            zero_delivery: sums.zero_delivery,
            val_rmse: val_result.as_ref().and_then(|r| r.rmse),
            val_mape: val_result.as_ref().and_then(|r| r.mape),
            val_lmd: val_result.as_ref().and_then(|r| r.lmd),
            val_hr3: val_result.as_ref().and_then(|r| r.hr3),
        };
        on_epoch(&record);
        let score = record.val_rmse.unwrap_or(record.loss);
        history.push(record);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (model, best_epoch) = match best {
        Some((_, e, m)) => (m, Some(e)),
        None => (model, None),
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Training history as CSV, one row per epoch.
pub fn write_history_csv<W: Write>(w: W, history: &[EpochRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in history {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
