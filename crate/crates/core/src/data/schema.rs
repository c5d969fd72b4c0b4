use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Delivery,
    Pickup,
}

/// Daily weather: one categorical level plus numeric readings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weather {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(flatten)]
    pub numeric: BTreeMap<String, f64>,
}

/// Facts shared by every package of one courier-day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayContext {
    pub courier_profile: BTreeMap<String, f64>,
    pub weather: Weather,
    pub holiday: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Package {
    pub id: String,
    pub kind: Kind,
    pub lat: f64,
    pub lon: f64,
    pub aoi: usize,
    pub dispatched_time: i64,
    pub promised_time: i64,
    pub finish_time: Option<i64>,
    /// kg
    pub weight: f64,
    /// liters
    pub volume: f64,
}

impl Package {
    pub fn loc(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }

    pub fn is_delivery(&self) -> bool {
        self.kind == Kind::Delivery
    }

    /// Problems with this package's own invariants, if any.
    pub fn violations(&self, n_aoi: Option<usize>) -> Vec<String> {
        let mut out = Vec::new();
        if self.dispatched_time > self.promised_time {
            out.push(format!("package {}: promised_time before dispatched_time", self.id));
        }
        if let Some(f) = self.finish_time {
            if f < self.dispatched_time {
                out.push(format!("package {}: finish_time before dispatched_time", self.id));
            }
        }
        if let Some(n) = n_aoi {
            if self.aoi >= n {
                out.push(format!("package {}: aoi {} outside [0, {n})", self.id, self.aoi));
            }
        }
        if !(self.lat.is_finite() && self.lon.is_finite() && self.weight.is_finite() && self.volume.is_finite()) {
            out.push(format!("package {}: non-finite numeric field", self.id));
        }
        out
    }
}

/// All packages one courier handled on one date.
#[derive(Clone, Debug, PartialEq)]
pub struct DayRecord {
    pub courier_id: String,
    /// Days since the epoch.
    pub date: i64,
    pub context: Arc<DayContext>,
    pub packages: Vec<Package>,
}

impl DayRecord {
    /// Completed packages in completion order (ties broken by id).
    pub fn completed(&self) -> Vec<&Package> {
        let mut done: Vec<&Package> = self.packages.iter().filter(|p| p.finish_time.is_some()).collect();
        done.sort_by(|a, b| a.finish_time.cmp(&b.finish_time).then_with(|| a.id.cmp(&b.id)));
        done
    }

    /// Earliest dispatch of the day; the courier starts working then.
    pub fn day_start(&self) -> Option<i64> {
        self.packages.iter().map(|p| p.dispatched_time).min()
    }
}

/// Ground truth attached to a training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    /// Indices into `pending`, in the order the courier completed them.
    pub perm: Vec<usize>,
    /// Minutes from `t` to completion, per pending package; `None` for pickups.
    pub offsets: Vec<Option<f64>>,
}

/// One prediction instance at query time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub courier_id: String,
    pub t: i64,
    /// Completed before `t`, oldest first.
    pub history: Vec<Package>,
    /// Dispatched and not completed at `t`, ordered by `(promised_time, id)`.
    pub pending: Vec<Package>,
    pub context: Arc<DayContext>,
    pub truth: Option<Truth>,
}

impl Sample {
    pub fn n_deliveries(&self) -> usize {
        self.pending.iter().filter(|p| p.is_delivery()).count()
    }

    pub fn n_pickups(&self) -> usize {
        self.pending.len() - self.n_deliveries()
    }

    /// Courier position at `t`: the last completed package, or the centroid
    /// of the pending set when nothing has been completed yet.
    pub fn courier_location(&self) -> (f64, f64) {
        if let Some(last) = self.history.last() {
            return last.loc();
        }
        let n = self.pending.len().max(1) as f64;
        let lat = self.pending.iter().map(|p| p.lat).sum::<f64>() / n;
        let lon = self.pending.iter().map(|p| p.lon).sum::<f64>() / n;
        (lat, lon)
    }

    /// Derives the truth from the pending packages' finish times.
    pub(crate) fn derive_truth(t: i64, pending: &[Package]) -> Option<Truth> {
        let mut perm: Vec<usize> = (0..pending.len()).collect();
        if pending.iter().any(|p| p.finish_time.is_none()) {
            return None;
        }
        perm.sort_by(|&a, &b| {
            pending[a]
                .finish_time
                .cmp(&pending[b].finish_time)
                .then_with(|| pending[a].id.cmp(&pending[b].id))
        });
        let offsets = pending
            .iter()
            .map(|p| p.is_delivery().then(|| (p.finish_time.unwrap() - t) as f64 / 60.0))
            .collect();
        Some(Truth { perm, offsets })
    }
}

pub(crate) fn sort_pending(pending: &mut [Package]) {
    pending.sort_by(|a, b| a.promised_time.cmp(&b.promised_time).then_with(|| a.id.cmp(&b.id)));
}
