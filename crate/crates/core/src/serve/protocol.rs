//! Line-delimited JSON messages exchanged with the prediction service.
//!
//! Every request and response is one JSON object on one line and carries
//! `"v": 1`. Requests are tagged by `"type"`:
//!
//! ```json
//! {"v":1,"type":"predict","id":"r1","courier_id":"c07","t":1677657600,
//!  "history":[...],"pending":[...],"context":{...}}
//! {"v":1,"type":"reload"}
//! {"v":1,"type":"stats"}
//! ```
//!
//! Packages use the dataset schema; `finish_time` is ignored for pending
//! packages.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::schema::{sort_pending, DayContext, Kind, Package, Sample};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub id: String,
    pub courier_id: String,
    /// Query time, epoch seconds.
    pub t: i64,
    /// Completed packages, oldest first.
    pub history: Vec<Package>,
    pub pending: Vec<Package>,
    pub context: DayContext,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Predict(PredictRequest),
    /// Re-reads the mobility tensors from their file.
    Reload,
    Stats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub v: u32,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Envelope<T> {
    pub fn new(body: T) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            body,
        }
    }
}

/// Prediction for one pending delivery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackageEta {
    pub package_id: String,
    /// 0-based position in the predicted route over all predicted packages.
    pub position: usize,
    /// Predicted completion time, epoch seconds.
    pub eta: f64,
    pub minutes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub id: String,
    pub model_version: String,
    pub deliveries: Vec<PackageEta>,
    /// Pending packages beyond the model's window, which get no prediction.
    pub truncated: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ServiceStats {
    pub accepted: u64,
    pub rejected: u64,
    pub executions: u64,
    pub predicted: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Prediction(PredictResponse),
    Error {
        id: Option<String>,
        message: String,
        /// Set when the queue was full; resend after this many milliseconds.
        retry_after_ms: Option<u64>,
    },
    Reloaded {
        n_aoi: usize,
    },
    Stats(ServiceStats),
}

impl Response {
    pub fn error(id: Option<String>, message: impl Into<String>) -> Self {
        Self::Error {
            id,
            message: message.into(),
            retry_after_ms: None,
        }
    }
}

impl PredictRequest {
    /// Checks the request and turns it into a sample without ground truth.
    pub fn to_sample(&self, n_aoi: Option<usize>) -> Result<Sample, Vec<String>> {
        let mut problems = Vec::new();
        if self.pending.is_empty() {
            problems.push("no pending packages".to_string());
        }
        for p in self.history.iter().chain(&self.pending) {
            problems.extend(p.violations(n_aoi));
        }
        for p in &self.history {
            if p.finish_time.is_none_or(|f| f > self.t) {
                problems.push(format!("history package {} was not completed by t", p.id));
            }
        }
        for p in &self.pending {
            if p.dispatched_time > self.t {
                problems.push(format!("pending package {} is dispatched after t", p.id));
            }
        }
        let mut ids: Vec<&str> = self.history.iter().chain(&self.pending).map(|p| p.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            problems.push(format!("duplicate package id {}", w[0]));
        }
        if !problems.is_empty() {
            return Err(problems);
        }
        let mut pending: Vec<Package> = self
            .pending
            .iter()
            .map(|p| Package {
                finish_time: None,
                ..p.clone()
            })
            .collect();
        sort_pending(&mut pending);
        Ok(Sample {
            courier_id: self.courier_id.clone(),
            t: self.t,
            history: self.history.clone(),
            pending,
            context: Arc::new(self.context.clone()),
            truth: None,
        })
    }
}

/// Keeps only deliveries and converts minutes to epoch seconds.
pub(crate) fn delivery_etas(sample: &Sample, route: &[usize], minutes: &[f64]) -> Vec<PackageEta> {
    let mut position = vec![0; route.len()];
    for (k, &i) in route.iter().enumerate() {
        position[i] = k;
    }
    route
        .iter()
        .filter(|&&i| sample.pending[i].kind == Kind::Delivery)
        .map(|&i| PackageEta {
            package_id: sample.pending[i].id.clone(),
            position: position[i],
            eta: sample.t as f64 + minutes[i] * 60.0,
            minutes: minutes[i],
        })
        .collect()
}
