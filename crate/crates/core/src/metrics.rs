//! Time and route accuracy metrics.
//!
//! Time metrics pool every delivery; route metrics are per sample. Routes are
//! sequences of pending-row indices.

use crate::error::{contract, Error, Result};

/// Targets below this many minutes are left out of MAPE.
pub const MAPE_FLOOR_MIN: f64 = 1.0;

fn check_lengths(y: &[f64], y_hat: &[f64], metric: &str) -> Result<()> {
    if y.len() != y_hat.len() {
        return contract(format!("{metric}: {} targets vs {} predictions", y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(Error::UndefinedMetric(format!("{metric} of zero targets")));
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, "rmse")?;
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat, "mae")?;
    let sae: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum();
    Ok(sae / y.len() as f64)
}

/// Mean absolute percentage error over targets of at least one minute.
/// Returns the percentage and how many targets were filtered out.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<(f64, usize)> {
    if y.len() != y_hat.len() {
        return contract(format!("mape: {} targets vs {} predictions", y.len(), y_hat.len()));
    }
    let mut sum = 0.0;
    let mut kept = 0;
    for (&a, &b) in y.iter().zip(y_hat) {
        if a >= MAPE_FLOOR_MIN {
            sum += (a - b).abs() / a;
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(Error::UndefinedMetric("mape: every target is under one minute".into()));
    }
    Ok((sum / kept as f64 * 100.0, y.len() - kept))
}

/// Position of each element in `route`; errors unless `route` is a
/// permutation of `0..route.len()`.
pub fn positions(route: &[usize]) -> Result<Vec<usize>> {
    let mut pos = vec![usize::MAX; route.len()];
    for (k, &i) in route.iter().enumerate() {
        if i >= route.len() || pos[i] != usize::MAX {
            return contract(format!("{route:?} is not a permutation"));
        }
        pos[i] = k;
    }
    Ok(pos)
}

/// Location mean deviation: mean over packages of the absolute difference
/// between a package's position in the true and the predicted route.
pub fn lmd(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.len() != pred.len() {
        return contract("lmd: routes differ in length");
    }
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("lmd of an empty route".into()));
    }
    let pt = positions(truth)?;
    let pp = positions(pred)?;
    let total: usize = pt.iter().zip(&pp).map(|(a, b)| a.abs_diff(*b)).sum();
    Ok(total as f64 / truth.len() as f64)
}

/// Overlap of the first `k` entries of both routes, as a fraction of `k`
/// (capped at the route length).
pub fn hr_at_k(truth: &[usize], pred: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return contract("hr@k needs k >= 1");
    }
    let k = k.min(truth.len()).min(pred.len());
    if k == 0 {
        return Err(Error::UndefinedMetric("hr@k of an empty route".into()));
    }
    let hits = truth[..k].iter().filter(|i| pred[..k].contains(i)).count();
    Ok(hits as f64 / k as f64)
}
