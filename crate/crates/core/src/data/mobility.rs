//! AOI-to-AOI transition counts per time slot and centroid distances.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::AoiTable;
use crate::data::schema::DayRecord;
use crate::error::{Error, Result};
use crate::geo::{haversine_m, slot_of, SLOTS};
use parcel_tensor::Tensor;

/// Additive smoothing applied during row normalization.
pub const SMOOTHING: f64 = 1e-6;

const MOBILITY_FORMAT: &str = "parcel-mobility";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityTensors {
    pub n_aoi: usize,
    /// `SLOTS × n × n`, row-major; `counts[s][a][b]` is the number of
    /// consecutive completions going from AOI `a` to AOI `b` whose second
    /// completion fell in slot `s`.
    pub counts: Vec<f64>,
    /// `n × n` meters between centroids.
    pub dist: Vec<f64>,
}

impl MobilityTensors {
    /// Counts transitions in `records` and measures centroid distances.
    pub fn build(records: &[DayRecord], aois: &AoiTable) -> Self {
        let n = aois.len();
        let mut counts = vec![0.0; SLOTS * n * n];
        for day in records {
            let done = day.completed();
            for pair in done.windows(2) {
                let (a, b) = (pair[0].aoi, pair[1].aoi);
                if a >= n || b >= n {
                    continue;
                }
                let s = slot_of(pair[1].finish_time.expect("completed"));
                counts[(s * n + a) * n + b] += 1.0;
            }
        }
        let mut dist = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let d = haversine_m(aois.centroids[a], aois.centroids[b]);
                dist[a * n + b] = d;
                dist[b * n + a] = d;
            }
        }
        Self { n_aoi: n, counts, dist }
    }

    pub fn count(&self, slot: usize, a: usize, b: usize) -> f64 {
        self.counts[(slot * self.n_aoi + a) * self.n_aoi + b]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n_aoi + b]
    }

    /// Gathers the rows and columns for the pending AOIs at `slot` and
    /// row-normalizes both matrices.
    ///
    /// `aois[i] = None` marks padding; those rows and columns stay zero, as
    /// do those of AOIs outside the tables.
    pub fn slice(&self, aois: &[Option<usize>], slot: usize) -> (Tensor, Tensor) {
        let n = self.n_aoi;
        let counts = |a: usize, b: usize| {
            if a < n && b < n {
                self.count(slot, a, b)
            } else {
                0.0
            }
        };
        let dist = |a: usize, b: usize| if a < n && b < n { self.distance(a, b) } else { 0.0 };
        (gather_normalized(aois, counts), gather_normalized(aois, dist))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", serde_json::json!({ "format": MOBILITY_FORMAT, "version": 1 }))?;
        serde_json::to_writer(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let parsed: serde_json::Value = serde_json::from_str(&header).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if parsed["format"] != MOBILITY_FORMAT || parsed["version"] != 1 {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected {MOBILITY_FORMAT} version 1 header"),
            });
        }
        let body = lines.next().transpose()?.unwrap_or_default();
        let tensors: Self = serde_json::from_str(&body).map_err(|e| Error::Parse {
            line: 2,
            message: e.to_string(),
        })?;
        let n = tensors.n_aoi;
        if tensors.counts.len() != SLOTS * n * n || tensors.dist.len() != n * n {
            return Err(Error::Parse {
                line: 2,
                message: format!("matrix sizes do not match n_aoi = {n}"),
            });
        }
        Ok(tensors)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(f))
    }
}

/// Row normalization with additive smoothing, written so that scaling a row
/// by any positive constant leaves the result unchanged: with row sum `S > 0`
/// each entry becomes `(m + εS) / (S(1 + nε))`; an all-zero row becomes
/// uniform.
fn gather_normalized(aois: &[Option<usize>], value: impl Fn(usize, usize) -> f64) -> Tensor {
    let l = aois.len();
    let valid: Vec<usize> = (0..l).filter(|&i| aois[i].is_some()).collect();
    let nv = valid.len() as f64;
    let mut out = vec![0.0; l * l];
    for &i in &valid {
        let a = aois[i].expect("valid");
        let row: Vec<f64> = valid.iter().map(|&j| value(a, aois[j].expect("valid"))).collect();
        let s: f64 = row.iter().sum();
        for (&j, &m) in valid.iter().zip(&row) {
            out[i * l + j] = if s > 0.0 {
                (m + SMOOTHING * s) / (s * (1.0 + nv * SMOOTHING))
            } else {
                1.0 / nv
            };
        }
    }
    Tensor::matrix(l, l, out).expect("non-empty pending window")
}
