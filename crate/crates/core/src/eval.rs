//! Scoring predictors on encoded samples, baselines, and report output.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::features::EncodedSample;
use crate::data::mobility::MobilityTensors;
use crate::error::{contract, Error, Result};
use crate::metrics;
use crate::model::Model;

/// What a predictor returns for one sample; either part may be absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Output {
    pub route: Option<Vec<usize>>,
    /// Minutes from `t` per pending row.
    pub minutes: Option<Vec<f64>>,
}

pub trait Predictor {
    fn predict(&self, sample: &EncodedSample) -> Result<Output>;
}

pub struct ModelPredictor<'a> {
    pub model: &'a Model,
    pub mobility: Option<&'a MobilityTensors>,
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, sample: &EncodedSample) -> Result<Output> {
        let p = self.model.predict(sample, self.mobility)?;
        Ok(Output {
            route: Some(p.route),
            minutes: Some(p.minutes),
        })
    }
}

/// Historical mean delivery offset keyed by `(AOI, slot of t)`, falling back
/// to the global mean.
#[derive(Clone, Debug, PartialEq)]
pub struct AvgBaseline {
    pub global: f64,
    table: HashMap<(usize, usize), (f64, usize)>,
}

impl AvgBaseline {
    pub fn fit(train: &[EncodedSample]) -> Result<Self> {
        let mut table: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
        let mut sum = 0.0;
        let mut count = 0usize;
        for s in train {
            let Some(target) = &s.target else { continue };
            for (aoi, y) in s.pending_aoi.iter().zip(&target.offsets) {
                if let (Some(aoi), Some(y)) = (aoi, y) {
                    let e = table.entry((*aoi, s.slot)).or_insert((0.0, 0));
                    e.0 += y;
                    e.1 += 1;
                    sum += y;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return contract("the average baseline needs at least one training delivery");
        }
        Ok(Self {
            global: sum / count as f64,
            table,
        })
    }

    pub fn estimate(&self, aoi: usize, slot: usize) -> f64 {
        self.table.get(&(aoi, slot)).map_or(self.global, |&(s, n)| s / n as f64)
    }
}

impl Predictor for AvgBaseline {
    fn predict(&self, sample: &EncodedSample) -> Result<Output> {
        let minutes = sample
            .pending_aoi
            .iter()
            .map_while(|a| a.map(|aoi| self.estimate(aoi, sample.slot)))
            .collect();
        Ok(Output {
            route: None,
            minutes: Some(minutes),
        })
    }
}

/// Visits pending packages in promised-time order, which is the row order.
pub struct NearestDeadline;

impl Predictor for NearestDeadline {
    fn predict(&self, sample: &EncodedSample) -> Result<Output> {
        Ok(Output {
            route: Some((0..sample.n_pending()).collect()),
            minutes: None,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Minutes.
    pub rmse: Option<f64>,
    /// Percent.
    pub mape: Option<f64>,
    pub lmd: Option<f64>,
    /// Percent.
    pub hr1: Option<f64>,
    /// Percent.
    pub hr3: Option<f64>,
    /// MAPE over samples whose pending set contains a pickup.
    pub pickup_mape: Option<f64>,
    pub samples: usize,
    pub deliveries: usize,
    pub mape_filtered: usize,
    pub pickup_samples: usize,
    /// Wall-clock inference time over all samples.
    pub seconds: f64,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs `predictor` on every sample and pools the metrics.
pub fn evaluate(samples: &[EncodedSample], predictor: &dyn Predictor) -> Result<EvalResult> {
    let mut y = Vec::new();
    let mut y_hat = Vec::new();
    let mut py = Vec::new();
    let mut py_hat = Vec::new();
    let mut lmd_sum = 0.0;
    let mut hr1_sum = 0.0;
    let mut hr3_sum = 0.0;
    let mut routed = 0usize;
    let mut result = EvalResult::default();
    let start = Instant::now();
    let outputs = samples.iter().map(|s| predictor.predict(s)).collect::<Result<Vec<_>>>()?;
    result.seconds = start.elapsed().as_secs_f64();

    for (s, out) in samples.iter().zip(outputs) {
        let Some(target) = &s.target else {
            return contract("evaluation samples need ground truth");
        };
        result.samples += 1;
        let pickup = s.has_pickup();
        if pickup {
            result.pickup_samples += 1;
        }
        if let Some(minutes) = &out.minutes {
            for (i, t) in target.offsets.iter().enumerate() {
                if let Some(t) = t {
                    let m = *minutes.get(i).ok_or_else(|| Error::Contract(format!("no prediction for row {i}")))?;
                    y.push(*t);
                    y_hat.push(m);
                    if pickup {
                        py.push(*t);
                        py_hat.push(m);
                    }
                }
            }
        }
        if let Some(route) = &out.route {
            lmd_sum += metrics::lmd(&target.route, route)?;
            hr1_sum += metrics::hr_at_k(&target.route, route, 1)?;
            hr3_sum += metrics::hr_at_k(&target.route, route, 3)?;
            routed += 1;
        }
    }
    result.deliveries = y.len();
    result.rmse = defined(metrics::rmse(&y, &y_hat))?;
    match metrics::mape(&y, &y_hat) {
        Ok((m, filtered)) => {
            result.mape = Some(m);
            result.mape_filtered = filtered;
        }
        Err(Error::UndefinedMetric(_)) => result.mape_filtered = y.len(),
        Err(e) => return Err(e),
    }
    result.pickup_mape = defined(metrics::mape(&py, &py_hat).map(|m| m.0))?;
    if routed > 0 {
        let n = routed as f64;
        result.lmd = Some(lmd_sum / n);
        result.hr1 = Some(hr1_sum / n * 100.0);
        result.hr3 = Some(hr3_sum / n * 100.0);
    }
    Ok(result)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// One CSV row per method. Timing is left blank when `timing` is false so
/// reports can be compared byte for byte.
pub fn write_report_csv<W: Write>(w: W, rows: &[(String, EvalResult)], timing: bool) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "method",
        "rmse",
        "mape",
        "lmd",
        "hr1",
        "hr3",
        "pickup_mape",
        "samples",
        "deliveries",
        "inference_s",
    ])
    .map_err(csv_err)?;
    for (name, r) in rows {
        out.write_record([
            name.clone(),
            cell(r.rmse),
            cell(r.mape),
            cell(r.lmd),
            cell(r.hr1),
            cell(r.hr3),
            cell(r.pickup_mape),
            r.samples.to_string(),
            r.deliveries.to_string(),
            if timing { format!("{:.4}", r.seconds) } else { "-".into() },
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Contract(format!("csv: {other:?}")),
    }
}

/// Fixed-width table with the same columns as the CSV.
pub fn format_table(rows: &[(String, EvalResult)], timing: bool) -> String {
    let mut s = format!(
        "{:<18} {:>9} {:>9} {:>7} {:>8} {:>12} {:>12}\n",
        "Method", "RMSE", "MAPE(%)", "LMD", "HR@3(%)", "MAPE-pickup", "Inference(s)"
    );
    for (name, r) in rows {
        let t = if timing { format!("{:.3}", r.seconds) } else { "-".into() };
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        s.push_str(&format!(
            "{:<18} {:>9} {:>9} {:>7} {:>8} {:>12} {:>12}\n",
            name,
            f(r.rmse),
            f(r.mape),
            f(r.lmd),
            f(r.hr3),
            f(r.pickup_mape),
            t
        ));
    }
    s
}
