use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::io::{write_dataset, AoiTable};
use crate::data::mobility::MobilityTensors;
use crate::data::schema::{DayRecord, Kind};
use crate::error::{config, Result};
use crate::synth::sim::simulate_day;
use crate::synth::world::{generate_world, World, WorldConfig};

pub const TRAIN_FILE: &str = "train.jsonl";
pub const VAL_FILE: &str = "val.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const AOI_FILE: &str = "aoi.jsonl";
pub const MOBILITY_FILE: &str = "mobility.json";
pub const STATS_FILE: &str = "stats.json";

/// Counts describing a set of courier-days.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub courier_days: usize,
    pub dates: usize,
    pub deliveries: usize,
    pub pickups: usize,
    /// Pickups over all tasks.
    pub pickup_share: f64,
    /// Completed packages finished after their promised time.
    pub violation_rate: f64,
}

impl DatasetStats {
    pub fn of(records: &[DayRecord]) -> Self {
        let mut s = Self {
            courier_days: records.len(),
            dates: records.iter().map(|r| r.date).collect::<BTreeSet<_>>().len(),
            ..Self::default()
        };
        let mut late = 0;
        let mut completed = 0;
        for p in records.iter().flat_map(|r| &r.packages) {
            match p.kind {
                Kind::Delivery => s.deliveries += 1,
                Kind::Pickup => s.pickups += 1,
            }
            if let Some(f) = p.finish_time {
                completed += 1;
                if f > p.promised_time {
                    late += 1;
                }
            }
        }
        let total = s.deliveries + s.pickups;
        if total > 0 {
            s.pickup_share = s.pickups as f64 / total as f64;
        }
        if completed > 0 {
            s.violation_rate = late as f64 / completed as f64;
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub train: DatasetStats,
    pub val: DatasetStats,
    pub test: DatasetStats,
    pub all: DatasetStats,
}

/// Simulates every courier on every configured date.
pub fn simulate(world: &World) -> Vec<DayRecord> {
    let cfg = &world.config;
    let mut out = Vec::with_capacity(cfg.days * cfg.couriers);
    for d in 0..cfg.days as i64 {
        for c in 0..world.couriers.len() {
            out.push(simulate_day(world, c, cfg.start_date + d));
        }
    }
    out
}

/// Partitions records 6:2:2 by date, earliest dates to training.
pub fn split_by_date(records: Vec<DayRecord>) -> Result<(Vec<DayRecord>, Vec<DayRecord>, Vec<DayRecord>)> {
    let dates: Vec<i64> = records.iter().map(|r| r.date).collect::<BTreeSet<_>>().into_iter().collect();
    if dates.len() < 10 {
        return config(format!("need at least 10 distinct dates to split 6:2:2, found {}", dates.len()));
    }
    let n_train = (dates.len() as f64 * 0.6).round() as usize;
    let n_val = (dates.len() as f64 * 0.2).round() as usize;
    let train_end = dates[n_train];
    let val_end = dates[n_train + n_val];
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        if r.date < train_end {
            train.push(r);
        } else if r.date < val_end {
            val.push(r);
        } else {
            test.push(r);
        }
    }
    Ok((train, val, test))
}

/// Writes the three splits, the AOI table, mobility tensors built from the
/// training split, and a stats report into `dir`.
pub fn emit_dataset(records: Vec<DayRecord>, aois: &AoiTable, dir: impl AsRef<Path>) -> Result<SplitReport> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let all = DatasetStats::of(&records);
    let (train, val, test) = split_by_date(records)?;
    for (name, part) in [(TRAIN_FILE, &train), (VAL_FILE, &val), (TEST_FILE, &test)] {
        write_dataset(BufWriter::new(File::create(dir.join(name))?), part)?;
    }
    aois.write(BufWriter::new(File::create(dir.join(AOI_FILE))?))?;
    MobilityTensors::build(&train, aois).save(dir.join(MOBILITY_FILE))?;
    let report = SplitReport {
        train: DatasetStats::of(&train),
        val: DatasetStats::of(&val),
        test: DatasetStats::of(&test),
        all,
    };
    std::fs::write(dir.join(STATS_FILE), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Generates a world from `config`, simulates it and writes it to `dir`.
pub fn generate(config: &WorldConfig, dir: impl AsRef<Path>) -> Result<SplitReport> {
    let world = generate_world(config)?;
    let records = simulate(&world);
    emit_dataset(records, &world.aois, dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            couriers: 2,
            deliveries_per_day: 6.0,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn ten_dates_split_six_two_two() {
        let world = generate_world(&small()).unwrap();
        let (train, val, test) = split_by_date(simulate(&world)).unwrap();
        let dates = |r: &[DayRecord]| r.iter().map(|d| d.date).collect::<BTreeSet<_>>().len();
        assert_eq!((dates(&train), dates(&val), dates(&test)), (6, 2, 2));
        assert!(train.iter().map(|r| r.date).max() < val.iter().map(|r| r.date).min());
    }

    #[test]
    fn one_date_is_a_config_error() {
        let world = generate_world(&WorldConfig { days: 1, ..small() }).unwrap();
        assert!(matches!(split_by_date(simulate(&world)), Err(crate::Error::Config(_))));
    }

    #[test]
    fn emitted_files_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        generate(&cfg, dir.path()).unwrap();
        let aois = AoiTable::read(dir.path().join(AOI_FILE)).unwrap();
        assert_eq!(aois.len(), cfg.n_aoi);
        let mut n = 0;
        for f in [TRAIN_FILE, VAL_FILE, TEST_FILE] {
            n += crate::data::io::read_dataset(dir.path().join(f), Some(aois.len())).unwrap().len();
        }
        assert_eq!(n, cfg.days * cfg.couriers);
        MobilityTensors::read(dir.path().join(MOBILITY_FILE)).unwrap();
    }

    #[test]
    fn default_pickup_share_is_a_minority() {
        let cfg = WorldConfig {
            couriers: 10,
            ..WorldConfig::default()
        };
        let records = simulate(&generate_world(&cfg).unwrap());
        assert_eq!(records.len(), 100);
        let stats = DatasetStats::of(&records);
        assert!(stats.pickup_share > 0.02 && stats.pickup_share < 0.10, "{stats:?}");
    }
}
