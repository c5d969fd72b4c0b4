//! Line-delimited JSON dataset and AOI table files.
//!
//! Both files start with a header object naming the format and version; every
//! following non-empty line is one JSON object. An empty file is an empty
//! dataset.
//!
//! Dataset line fields: `courier_id, package_id, kind, lat, lon, aoi,
//! dispatched_time, promised_time, finish_time, weight, volume,
//! courier_profile, weather, holiday`. AOI table line fields: `aoi_index,
//! lat, lon`, with indices contiguous from 0.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::schema::{DayContext, DayRecord, Kind, Package, Weather};
use crate::error::{Error, Result};
use crate::geo::{day_of, haversine_m};

pub const DATASET_FORMAT: &str = "parcel-dataset";
pub const AOI_FORMAT: &str = "parcel-aoi";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PackageLine {
    courier_id: String,
    package_id: String,
    kind: Kind,
    lat: f64,
    lon: f64,
    aoi: usize,
    dispatched_time: i64,
    promised_time: i64,
    finish_time: Option<i64>,
    weight: f64,
    volume: f64,
    courier_profile: BTreeMap<String, f64>,
    weather: Weather,
    holiday: bool,
}

fn check_header(line: &str, lineno: usize, format: &str) -> Result<()> {
    let h: Header = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        message: format!("bad header: {e}"),
    })?;
    if h.format != format || h.version != FORMAT_VERSION {
        return Err(Error::Parse {
            line: lineno,
            message: format!(
                "expected {format} v{FORMAT_VERSION}, found {} v{}",
                h.format, h.version
            ),
        });
    }
    Ok(())
}

fn header_line(format: &str) -> String {
    serde_json::to_string(&Header {
        format: format.into(),
        version: FORMAT_VERSION,
    })
    .expect("header serializes")
}

/// Parses a dataset, validating package invariants.
///
/// `n_aoi`, when given, bounds the AOI indices. Packages sharing courier,
/// kind, AOI, location and promised time within a day are merged with summed
/// weight and volume.
pub fn parse_dataset<R: BufRead>(reader: R, n_aoi: Option<usize>) -> Result<Vec<DayRecord>> {
    let mut lines = Vec::new();
    let mut header_seen = false;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            check_header(&line, lineno, DATASET_FORMAT)?;
            header_seen = true;
            continue;
        }
        let rec: PackageLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        lines.push((lineno, rec));
    }

    let mut problems = Vec::new();
    for (lineno, rec) in &lines {
        for v in to_package(rec).violations(n_aoi) {
            problems.push(format!("line {lineno}: {v}"));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }

    let mut days: BTreeMap<(i64, String), DayRecord> = BTreeMap::new();
    for (_, rec) in lines {
        let date = day_of(rec.dispatched_time);
        let day = days
            .entry((date, rec.courier_id.clone()))
            .or_insert_with(|| DayRecord {
                courier_id: rec.courier_id.clone(),
                date,
                context: Arc::new(DayContext {
                    courier_profile: rec.courier_profile.clone(),
                    weather: rec.weather.clone(),
                    holiday: rec.holiday,
                }),
                packages: Vec::new(),
            });
        day.packages.push(to_package(&rec));
    }
    Ok(days
        .into_values()
        .map(|mut d| {
            d.packages = aggregate(std::mem::take(&mut d.packages));
            d
        })
        .collect())
}

pub fn read_dataset(path: impl AsRef<Path>, n_aoi: Option<usize>) -> Result<Vec<DayRecord>> {
    let f = std::fs::File::open(path)?;
    parse_dataset(std::io::BufReader::new(f), n_aoi)
}

fn to_package(rec: &PackageLine) -> Package {
    Package {
        id: rec.package_id.clone(),
        kind: rec.kind,
        lat: rec.lat,
        lon: rec.lon,
        aoi: rec.aoi,
        dispatched_time: rec.dispatched_time,
        promised_time: rec.promised_time,
        finish_time: rec.finish_time,
        weight: rec.weight,
        volume: rec.volume,
    }
}

type DedupKey = (Kind, usize, u64, u64, i64);

fn aggregate(packages: Vec<Package>) -> Vec<Package> {
    let mut out: Vec<Package> = Vec::with_capacity(packages.len());
    let mut seen: HashMap<DedupKey, usize> = HashMap::new();
    for p in packages {
        let key = (p.kind, p.aoi, p.lat.to_bits(), p.lon.to_bits(), p.promised_time);
        match seen.get(&key) {
            Some(&i) => {
                let q = &mut out[i];
                q.weight += p.weight;
                q.volume += p.volume;
                q.dispatched_time = q.dispatched_time.min(p.dispatched_time);
                q.finish_time = q.finish_time.max(p.finish_time);
            }
            None => {
                seen.insert(key, out.len());
                out.push(p);
            }
        }
    }
    out
}

pub fn write_dataset<W: Write>(mut w: W, records: &[DayRecord]) -> Result<()> {
    writeln!(w, "{}", header_line(DATASET_FORMAT))?;
    for day in records {
        for p in &day.packages {
            let line = PackageLine {
                courier_id: day.courier_id.clone(),
                package_id: p.id.clone(),
                kind: p.kind,
                lat: p.lat,
                lon: p.lon,
                aoi: p.aoi,
                dispatched_time: p.dispatched_time,
                promised_time: p.promised_time,
                finish_time: p.finish_time,
                weight: p.weight,
                volume: p.volume,
                courier_profile: day.context.courier_profile.clone(),
                weather: day.context.weather.clone(),
                holiday: day.context.holiday,
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// AOI centroids indexed by AOI id.
#[derive(Clone, Debug, PartialEq)]
pub struct AoiTable {
    pub centroids: Vec<(f64, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AoiLine {
    aoi_index: usize,
    lat: f64,
    lon: f64,
}

impl AoiTable {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Index of the centroid nearest to `loc`.
    pub fn nearest(&self, loc: (f64, f64)) -> usize {
        self.centroids
            .iter()
            .enumerate()
            .map(|(i, &c)| (i, haversine_m(c, loc)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0, |(i, _)| i)
    }

    /// Known AOIs pass through; unknown ones snap to the nearest centroid.
    pub fn resolve(&self, aoi: usize, loc: (f64, f64)) -> usize {
        if aoi < self.len() {
            aoi
        } else {
            self.nearest(loc)
        }
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut centroids = Vec::new();
        let mut header_seen = false;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                check_header(&line, lineno, AOI_FORMAT)?;
                header_seen = true;
                continue;
            }
            let rec: AoiLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
            if rec.aoi_index != centroids.len() {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected aoi_index {}, found {}", centroids.len(), rec.aoi_index),
                });
            }
            centroids.push((rec.lat, rec.lon));
        }
        Ok(Self { centroids })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(f))
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", header_line(AOI_FORMAT))?;
        for (i, &(lat, lon)) in self.centroids.iter().enumerate() {
            let line = AoiLine { aoi_index: i, lat, lon };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        w.flush()?;
        Ok(())
    }
}
