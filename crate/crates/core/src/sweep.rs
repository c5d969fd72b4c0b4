//! One-at-a-time hyperparameter sweeps over the memory size and the pending
//! window, each run trained and evaluated end to end.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::mobility::MobilityTensors;
use crate::data::schema::Sample;
use crate::error::{config, Result};
use crate::eval::{csv_err, evaluate, EvalResult, ModelPredictor};
use crate::train::{encode_all, fit, prepare, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Memory sizes to try, others at their base value.
    pub l_m: Vec<usize>,
    /// Pending windows to try.
    pub l_f: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            l_m: (12..=28).step_by(4).collect(),
            l_f: (5..=30).step_by(5).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: usize,
    pub best_epoch: Option<usize>,
    pub result: EvalResult,
}

/// Every configuration of `sweep` applied to `base`, in order: first the
/// `l_m` values, then the `l_f` values. `on_row` sees each row as it lands.
pub fn run_sweep(
    train: &[Sample],
    val: &[Sample],
    test: &[Sample],
    mobility: Option<&MobilityTensors>,
    base: &TrainConfig,
    sweep: &SweepConfig,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    if sweep.l_m.is_empty() && sweep.l_f.is_empty() {
        return config("the sweep has no values");
    }
    let runs = sweep
        .l_m
        .iter()
        .map(|&v| ("l_m", v, TrainConfig { l_m: v, ..base.clone() }))
        .chain(sweep.l_f.iter().map(|&v| ("l_f", v, TrainConfig { l_f: v, ..base.clone() })));
    let mut rows = Vec::new();
    for (param, value, cfg) in runs {
        let prep = prepare(train, val, &cfg)?;
        let outcome = fit(&prep, mobility, &cfg, |_| {})?;
        let test = encode_all(test, &prep.stats);
        let predictor = ModelPredictor {
            model: &outcome.model,
            mobility,
        };
        let row = SweepRow {
            param: param.to_string(),
            value,
            best_epoch: outcome.best_epoch,
            result: evaluate(&test, &predictor)?,
        };
        on_row(&row);
        rows.push(row);
    }
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Comparison table as CSV. Timing is left out so reruns compare equal.
pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["param", "value", "best_epoch", "rmse", "mape", "lmd", "hr3", "samples"])
        .map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.param.clone(),
            r.value.to_string(),
            r.best_epoch.map_or_else(|| "-".into(), |e| e.to_string()),
            cell(r.result.rmse),
            cell(r.result.mape),
            cell(r.result.lmd),
            cell(r.result.hr3),
            r.result.samples.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
