//! Per-package feature rows for the two encoder branches.
//!
//! Row layout, left to right:
//!
//! | block | width |
//! |---|---|
//! | kind one-hot (delivery, pickup) | 2 |
//! | z-scored numerics (lat, lon, weight, volume, remaining minutes, km from courier, courier profile, weather readings) | varies |
//! | promised-time slot one-hot | 12 |
//! | weekday one-hot | 7 |
//! | holiday flag | 1 |
//! | weather level one-hot, last column = unseen level | levels + 1 |
//!
//! Numeric columns with zero variance on the training split are dropped.

use serde::{Deserialize, Serialize};

use crate::data::schema::{Kind, Package, Sample};
use crate::error::{contract, Result};
use crate::geo::{haversine_m, slot_of, weekday_of, SLOTS};
use parcel_tensor::Tensor;

const MIN_STD: f64 = 1e-12;

/// Mean and standard deviation per kept numeric column, fitted on training
/// samples, for each branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub l_h: usize,
    pub l_f: usize,
    pub profile_keys: Vec<String>,
    pub weather_keys: Vec<String>,
    pub weather_levels: Vec<String>,
    /// Names of the numeric columns that survived.
    pub numeric: Vec<String>,
    /// Indices (into the full numeric column list) that survived.
    kept: Vec<usize>,
    pub dropped: Vec<String>,
    pub history_mean: Vec<f64>,
    pub history_std: Vec<f64>,
    pub pending_mean: Vec<f64>,
    pub pending_std: Vec<f64>,
}

/// Training targets aligned with encoded rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    /// Pending row indices in completion order.
    pub route: Vec<usize>,
    /// Minutes from `t` per pending row; `None` for pickups and padding.
    pub offsets: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    pub t: i64,
    pub slot: usize,
    pub history: Tensor,
    pub history_mask: Vec<bool>,
    pub pending: Tensor,
    pub pending_mask: Vec<bool>,
    /// AOI per pending row, `None` for padding.
    pub pending_aoi: Vec<Option<usize>>,
    pub pending_kind: Vec<Option<Kind>>,
    pub pending_ids: Vec<String>,
    pub target: Option<Target>,
    /// Categorical levels that fell into the "other" bucket.
    pub unknown_levels: usize,
}

impl EncodedSample {
    pub fn n_history(&self) -> usize {
        self.history_mask.iter().filter(|&&m| m).count()
    }

    pub fn n_pending(&self) -> usize {
        self.pending_mask.iter().filter(|&&m| m).count()
    }

    pub fn l_f(&self) -> usize {
        self.pending_mask.len()
    }

    pub fn is_delivery(&self, row: usize) -> bool {
        self.pending_kind.get(row).copied().flatten() == Some(Kind::Delivery)
    }

    pub fn has_pickup(&self) -> bool {
        self.pending_kind.iter().any(|k| *k == Some(Kind::Pickup))
    }
}

fn raw_numeric(p: &Package, sample: &Sample, courier: (f64, f64), profile_keys: &[String], weather_keys: &[String]) -> Vec<f64> {
    let mut v = vec![
        p.lat,
        p.lon,
        p.weight,
        p.volume,
        (p.promised_time - sample.t) as f64 / 60.0,
        haversine_m(courier, p.loc()) / 1000.0,
    ];
    let ctx = &sample.context;
    v.extend(profile_keys.iter().map(|k| ctx.courier_profile.get(k).copied().unwrap_or(0.0)));
    v.extend(weather_keys.iter().map(|k| ctx.weather.numeric.get(k).copied().unwrap_or(0.0)));
    v
}

fn numeric_names(profile_keys: &[String], weather_keys: &[String]) -> Vec<String> {
    let mut names: Vec<String> = ["lat", "lon", "weight", "volume", "remaining_min", "distance_km"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    names.extend(profile_keys.iter().map(|k| format!("profile.{k}")));
    names.extend(weather_keys.iter().map(|k| format!("weather.{k}")));
    names
}

fn history_window(sample: &Sample, l_h: usize) -> &[Package] {
    let n = sample.history.len();
    &sample.history[n.saturating_sub(l_h)..]
}

fn pending_window(sample: &Sample, l_f: usize) -> &[Package] {
    &sample.pending[..sample.pending.len().min(l_f)]
}

fn moments(rows: &[Vec<f64>], width: usize) -> (Vec<f64>, Vec<f64>) {
    if rows.is_empty() {
        return (vec![0.0; width], vec![1.0; width]);
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; width];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; width];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    (mean, var.into_iter().map(|s| (s / n).sqrt()).collect())
}

impl FeatureStats {
    /// Fits normalization statistics on the rows that encoding will keep.
    pub fn fit(samples: &[Sample], l_h: usize, l_f: usize) -> Result<Self> {
        if samples.is_empty() {
            return contract("feature statistics need at least one training sample");
        }
        let mut profile_keys: Vec<String> = samples
            .iter()
            .flat_map(|s| s.context.courier_profile.keys().cloned())
            .collect();
        profile_keys.sort();
        profile_keys.dedup();
        let mut weather_keys: Vec<String> = samples
            .iter()
            .flat_map(|s| s.context.weather.numeric.keys().cloned())
            .collect();
        weather_keys.sort();
        weather_keys.dedup();
        let mut weather_levels: Vec<String> = samples.iter().map(|s| s.context.weather.kind.clone()).collect();
        weather_levels.sort();
        weather_levels.dedup();

        let names = numeric_names(&profile_keys, &weather_keys);
        let mut hist_rows = Vec::new();
        let mut pend_rows = Vec::new();
        for s in samples {
            let courier = s.courier_location();
            for p in history_window(s, l_h) {
                hist_rows.push(raw_numeric(p, s, courier, &profile_keys, &weather_keys));
            }
            for p in pending_window(s, l_f) {
                pend_rows.push(raw_numeric(p, s, courier, &profile_keys, &weather_keys));
            }
        }
        let (hm, hs) = moments(&hist_rows, names.len());
        let (pm, ps) = moments(&pend_rows, names.len());

        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for (i, name) in names.iter().enumerate() {
            let hist_flat = !hist_rows.is_empty() && hs[i] < MIN_STD;
            if hist_flat || ps[i] < MIN_STD {
                dropped.push(name.clone());
            } else {
                kept.push(i);
            }
        }
        let pick = |v: &[f64]| kept.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Self {
            l_h,
            l_f,
            numeric: kept.iter().map(|&i| names[i].clone()).collect(),
            history_mean: pick(&hm),
            history_std: pick(&hs),
            pending_mean: pick(&pm),
            pending_std: pick(&ps),
            kept,
            dropped,
            profile_keys,
            weather_keys,
            weather_levels,
        })
    }

    /// Feature row width `D_m`.
    pub fn width(&self) -> usize {
        2 + self.numeric.len() + SLOTS + 7 + 1 + self.weather_levels.len() + 1
    }

    /// Column offset of the first z-scored numeric feature.
    pub fn numeric_offset(&self) -> usize {
        2
    }

    fn row(&self, p: &Package, sample: &Sample, courier: (f64, f64), history: bool, unknown: &mut usize) -> Vec<f64> {
        let mut row = Vec::with_capacity(self.width());
        row.push(if p.kind == Kind::Delivery { 1.0 } else { 0.0 });
        row.push(if p.kind == Kind::Pickup { 1.0 } else { 0.0 });
        let raw = raw_numeric(p, sample, courier, &self.profile_keys, &self.weather_keys);
        let (mean, std) = if history {
            (&self.history_mean, &self.history_std)
        } else {
            (&self.pending_mean, &self.pending_std)
        };
        for (k, &i) in self.kept.iter().enumerate() {
            row.push((raw[i] - mean[k]) / std[k]);
        }
        let mut slot = [0.0; SLOTS];
        slot[slot_of(p.promised_time)] = 1.0;
        row.extend_from_slice(&slot);
        let mut wd = [0.0; 7];
        wd[weekday_of(sample.t)] = 1.0;
        row.extend_from_slice(&wd);
        row.push(if sample.context.holiday { 1.0 } else { 0.0 });
        let mut levels = vec![0.0; self.weather_levels.len() + 1];
        match self.weather_levels.binary_search(&sample.context.weather.kind) {
            Ok(i) => levels[i] = 1.0,
            Err(_) => {
                *levels.last_mut().expect("non-empty") = 1.0;
                *unknown += 1;
            }
        }
        row.extend(levels);
        row
    }

    /// Encodes one sample: the most recent `l_h` completions and the `l_f`
    /// pending packages with the earliest deadlines, zero-padded and masked.
    pub fn encode(&self, sample: &Sample) -> EncodedSample {
        let d = self.width();
        let courier = sample.courier_location();
        let mut unknown = 0;

        let hist = history_window(sample, self.l_h);
        let mut h = vec![0.0; self.l_h * d];
        let mut hmask = vec![false; self.l_h];
        for (i, p) in hist.iter().enumerate() {
            h[i * d..(i + 1) * d].copy_from_slice(&self.row(p, sample, courier, true, &mut unknown));
            hmask[i] = true;
        }

        let pend = pending_window(sample, self.l_f);
        let mut f = vec![0.0; self.l_f * d];
        let mut fmask = vec![false; self.l_f];
        let mut aoi = vec![None; self.l_f];
        let mut kind = vec![None; self.l_f];
        let mut ids = Vec::with_capacity(pend.len());
        for (i, p) in pend.iter().enumerate() {
            f[i * d..(i + 1) * d].copy_from_slice(&self.row(p, sample, courier, false, &mut unknown));
            fmask[i] = true;
            aoi[i] = Some(p.aoi);
            kind[i] = Some(p.kind);
            ids.push(p.id.clone());
        }

        let target = sample.truth.as_ref().map(|truth| {
            let n = pend.len();
            let mut offsets = vec![None; self.l_f];
            offsets[..n].copy_from_slice(&truth.offsets[..n]);
            Target {
                route: truth.perm.iter().copied().filter(|&i| i < n).collect(),
                offsets,
            }
        });

        EncodedSample {
            t: sample.t,
            slot: slot_of(sample.t),
            history: Tensor::matrix(self.l_h, d, h).expect("sized above"),
            history_mask: hmask,
            pending: Tensor::matrix(self.l_f, d, f).expect("sized above"),
            pending_mask: fmask,
            pending_aoi: aoi,
            pending_kind: kind,
            pending_ids: ids,
            target,
            unknown_levels: unknown,
        }
    }
}
