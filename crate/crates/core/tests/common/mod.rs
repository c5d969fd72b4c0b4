//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use parcel_eta::data::{EncodedSample, FeatureStats, Kind, MobilityTensors, Sample};
use parcel_eta::data::features::Target;
use parcel_eta::loss::{combined_loss, loss_aux, loss_main};
use parcel_eta::model::{forward, DecodeMode, Model, ModelConfig};
use parcel_eta::serve::PredictRequest;
use parcel_eta::synth::{generate_world, simulate, split_by_date, World, WorldConfig};
use parcel_eta::train::{samples_from_records, TrainConfig};
use parcel_eta::tensor::gradcheck::rel_err;
use parcel_eta::tensor::{ParamStore, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SLOTS: usize = 12;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small model shape for property and gradient tests.
pub fn small_config(d_in: usize, l_h: usize, l_f: usize) -> ModelConfig {
    ModelConfig {
        d_in,
        d_model: 8,
        l_h,
        l_f,
        l_m: 5,
        ..ModelConfig::default()
    }
}

/// Random encoded sample with `n_h` history and `n_f` pending rows, AOIs
/// below `n_aoi`, a random true route and offsets of a few minutes.
pub fn random_sample(rng: &mut impl Rng, cfg: &ModelConfig, n_h: usize, n_f: usize, n_aoi: usize) -> EncodedSample {
    let d = cfg.d_in;
    let mut h = vec![0.0; cfg.l_h * d];
    h[..n_h * d].iter_mut().for_each(|v| *v = rng.random_range(-1.5..1.5));
    let mut f = vec![0.0; cfg.l_f * d];
    f[..n_f * d].iter_mut().for_each(|v| *v = rng.random_range(-1.5..1.5));
    let kinds: Vec<Kind> = (0..n_f)
        .map(|_| if rng.random_bool(0.25) { Kind::Pickup } else { Kind::Delivery })
        .collect();
    let mut route: Vec<usize> = (0..n_f).collect();
    route.shuffle(rng);
    let mut offsets = vec![None; cfg.l_f];
    for (i, k) in kinds.iter().enumerate() {
        if *k == Kind::Delivery {
            offsets[i] = Some(rng.random_range(0.2..3.0));
        }
    }
    let prefix = |n: usize, l: usize| (0..l).map(|i| i < n).collect::<Vec<_>>();
    EncodedSample {
        t: 0,
        slot: rng.random_range(0..SLOTS),
        history: Tensor::new(vec![cfg.l_h, d], h).unwrap(),
        history_mask: prefix(n_h, cfg.l_h),
        pending: Tensor::new(vec![cfg.l_f, d], f).unwrap(),
        pending_mask: prefix(n_f, cfg.l_f),
        pending_aoi: (0..cfg.l_f).map(|i| (i < n_f).then(|| rng.random_range(0..n_aoi))).collect(),
        pending_kind: (0..cfg.l_f).map(|i| kinds.get(i).copied()).collect(),
        pending_ids: (0..n_f).map(|i| format!("p{i}")).collect(),
        target: Some(Target { route, offsets }),
        unknown_levels: 0,
    }
}

/// Random transition counts (some slots left empty) and distances.
pub fn random_mobility(rng: &mut impl Rng, n_aoi: usize) -> MobilityTensors {
    let counts = (0..SLOTS * n_aoi * n_aoi)
        .map(|_| if rng.random_bool(0.6) { rng.random_range(0..20) as f64 } else { 0.0 })
        .collect();
    let mut dist = vec![0.0; n_aoi * n_aoi];
    for a in 0..n_aoi {
        for b in 0..a {
            let v = rng.random_range(100.0..8000.0);
            dist[a * n_aoi + b] = v;
            dist[b * n_aoi + a] = v;
        }
    }
    MobilityTensors { n_aoi, counts, dist }
}

/// Teacher-forced training loss of `sample` under `params`, dropout off.
pub fn total_loss(params: &ParamStore, cfg: &ModelConfig, sample: &EncodedSample, mob: Option<&MobilityTensors>) -> f64 {
    let mut tape = Tape::new();
    let (total, _) = record_loss(&mut tape, params, cfg, sample, mob);
    tape.value(total).data()[0]
}

fn record_loss(
    tape: &mut Tape,
    params: &ParamStore,
    cfg: &ModelConfig,
    sample: &EncodedSample,
    mob: Option<&MobilityTensors>,
) -> (parcel_eta::tensor::Var, usize) {
    let mut r = rng(0);
    let fwd = forward(tape, params, cfg, sample, mob, DecodeMode::TeacherForced, false, &mut r).unwrap();
    let offsets = &sample.target.as_ref().unwrap().offsets;
    let main = loss_main(tape, &fwd.trace, offsets).unwrap();
    let aux = loss_aux(tape, &fwd.trace).unwrap();
    let (total, _) = combined_loss(tape, main, aux, fwd.alpha).unwrap();
    (total, fwd.trace.steps.len())
}

/// Largest relative error between the tape gradient and a central
/// difference, over every element of every parameter.
pub fn end_to_end_gradcheck(params: &ParamStore, cfg: &ModelConfig, sample: &EncodedSample, mob: Option<&MobilityTensors>, step: f64) -> f64 {
    let mut tape = Tape::new();
    let (total, _) = record_loss(&mut tape, params, cfg, sample, mob);
    let grads = tape.backward(total).unwrap().params();
    let mut worst: f64 = 0.0;
    for (name, value) in params.iter() {
        let analytic = grads.get(name).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; value.numel()]);
        for (i, &a) in analytic.iter().enumerate() {
            let eval = |delta: f64| {
                let mut data = value.to_vec();
                data[i] += delta;
                let mut p = params.clone();
                p.insert(name, Tensor::new(value.shape().to_vec(), data).unwrap());
                total_loss(&p, cfg, sample, mob)
            };
            let numeric = (eval(step) - eval(-step)) / (2.0 * step);
            worst = worst.max(rel_err(a, numeric));
        }
    }
    worst
}

/// A random small model plus a matching sample and mobility tensors.
pub fn random_case(seed: u64, d_in: usize, l_h: usize, l_f: usize) -> (Model, EncodedSample, MobilityTensors) {
    let mut r = rng(seed);
    let cfg = small_config(d_in, l_h, l_f);
    let model = Model::new(cfg.clone(), seed).unwrap();
    let n_aoi = r.random_range(1..6);
    let n_h = r.random_range(0..=l_h);
    let n_f = r.random_range(1..=l_f);
    let sample = random_sample(&mut r, &cfg, n_h, n_f, n_aoi);
    let mob = random_mobility(&mut r, n_aoi);
    (model, sample, mob)
}

pub fn world(couriers: usize, days: usize, seed: u64) -> (World, Vec<parcel_eta::data::DayRecord>) {
    let cfg = WorldConfig {
        couriers,
        days,
        seed,
        ..WorldConfig::default()
    };
    let world = generate_world(&cfg).unwrap();
    let records = simulate(&world);
    (world, records)
}

pub fn request_for(sample: &Sample, id: impl Into<String>) -> PredictRequest {
    PredictRequest {
        id: id.into(),
        courier_id: sample.courier_id.clone(),
        t: sample.t,
        history: sample.history.clone(),
        pending: sample.pending.clone(),
        context: (*sample.context).clone(),
    }
}

/// `sample` with its valid pending rows reordered so that new row `k` is old
/// row `perm[k]`. The true route is relabelled to match.
pub fn permute_pending(sample: &EncodedSample, perm: &[usize]) -> EncodedSample {
    let n = perm.len();
    let l_f = sample.l_f();
    let d = sample.pending.shape()[1];
    let mut order: Vec<usize> = perm.to_vec();
    order.extend(n..l_f);
    let old = sample.pending.data();
    let rows: Vec<f64> = order.iter().flat_map(|&o| old[o * d..(o + 1) * d].iter().copied()).collect();
    let mut new_of_old = vec![0; l_f];
    for (new, &o) in order.iter().enumerate() {
        new_of_old[o] = new;
    }
    let target = sample.target.as_ref().map(|t| Target {
        route: t.route.iter().map(|&o| new_of_old[o]).collect(),
        offsets: order.iter().map(|&o| t.offsets[o]).collect(),
    });
    EncodedSample {
        pending: Tensor::new(vec![l_f, d], rows).unwrap(),
        pending_mask: order.iter().map(|&o| sample.pending_mask[o]).collect(),
        pending_aoi: order.iter().map(|&o| sample.pending_aoi[o]).collect(),
        pending_kind: order.iter().map(|&o| sample.pending_kind[o]).collect(),
        pending_ids: perm.iter().map(|&o| sample.pending_ids[o].clone()).collect(),
        target,
        ..sample.clone()
    }
}

/// An untrained model with the features and mobility of a small world,
/// plus test samples that have something pending.
pub struct ServeFixture {
    pub model: Model,
    pub stats: FeatureStats,
    pub mob: MobilityTensors,
    pub samples: Vec<parcel_eta::data::Sample>,
}

/// Small, fast training settings.
pub fn tiny_train_config() -> TrainConfig {
    TrainConfig {
        d_model: 8,
        epochs: 2,
        lr: 1e-3,
        batch_size: 16,
        max_train_samples: 120,
        max_val_samples: 40,
        ..TrainConfig::default()
    }
}

pub fn serve_fixture() -> ServeFixture {
    let (world, records) = world(3, 10, 5);
    let (tr, _, te) = split_by_date(records).unwrap();
    let mob = MobilityTensors::build(&tr, &world.aois);
    let cfg = tiny_train_config();
    let train = samples_from_records(&tr, 1);
    let stats = FeatureStats::fit(&train, cfg.l_h, cfg.l_f).unwrap();
    let model = Model::new(cfg.model_config(stats.width(), 20.0, 1.0), 3).unwrap();
    let samples = samples_from_records(&te, 1).into_iter().filter(|s| !s.pending.is_empty()).collect();
    ServeFixture { model, stats, mob, samples }
}
