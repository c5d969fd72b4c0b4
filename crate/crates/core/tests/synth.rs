mod common;

use std::collections::BTreeSet;

use parcel_eta::data::{read_dataset, split_routes, AoiTable, Kind, Package};
use parcel_eta::synth::sim::{date_context, DAY_START_SECS};
use parcel_eta::synth::{generate, generate_world, simulate, split_by_date, WorldConfig};

/// Great-circle distance, written out here rather than shared with the
/// simulator.
fn distance_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let r = 6_371_000.0;
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dp = p2 - p1;
    let dl = (b.1 - a.1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().asin()
}

fn plain_world() -> WorldConfig {
    WorldConfig {
        couriers: 4,
        days: 3,
        preference_spread: 0.0,
        pickup_rate_per_hour: 0.0,
        seed: 17,
        ..WorldConfig::default()
    }
}

/// Replays a deliveries-only day with a from-scratch greedy scorer. With
/// neutral preferences and no pickups the score reduces to urgency plus
/// closeness, so every recorded choice must be the oracle's argmax.
#[test]
fn deliveries_follow_the_greedy_score() {
    let cfg = plain_world();
    let world = generate_world(&cfg).unwrap();
    let records = simulate(&world);
    let horizon = (cfg.shift_hours + 2.0) * 3600.0;
    let mut checked = 0;
    for day in &records {
        let courier = world.couriers.iter().find(|c| c.id == day.courier_id).unwrap();
        let (_, _, speed_factor) = date_context(cfg.seed, day.date);
        let speed = cfg.speed_mps * courier.speed_multiplier * speed_factor;
        let mut remaining: Vec<&Package> = day.packages.iter().collect();
        remaining.sort_by(|a, b| a.id.cmp(&b.id));
        let mut here = world.aois.centroids[courier.zone[0]];
        let mut now = (day.date * 86_400 + DAY_START_SECS) as f64;
        for actual in day.completed() {
            let score = |p: &Package| {
                let urgency = 1.0 - ((p.promised_time as f64 - now) / horizon).clamp(0.0, 1.0);
                let closeness = 1.0 / (1.0 + distance_m(here, (p.lat, p.lon)) / 1000.0);
                cfg.w_urgency * urgency + cfg.w_distance * closeness
            };
            let mut best = 0;
            for i in 1..remaining.len() {
                if score(remaining[i]) > score(remaining[best]) {
                    best = i;
                }
            }
            let chosen = remaining.remove(best);
            assert_eq!(chosen.id, actual.id, "courier {} date {}", day.courier_id, day.date);
            let travel = distance_m(here, (chosen.lat, chosen.lon)) / speed + cfg.service_s;
            let finish = chosen.finish_time.unwrap() as f64;
            assert!((finish - now - travel).abs() <= 1.0, "{finish} vs {}", now + travel);
            here = (chosen.lat, chosen.lon);
            now = finish;
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn same_seed_same_world() {
    let a = common::world(3, 4, 5).1;
    let b = common::world(3, 4, 5).1;
    let c = common::world(3, 4, 6).1;
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn records_are_well_formed() {
    let (world, records) = common::world(5, 10, 3);
    assert_eq!(records.len(), 50);
    let mut pickups_after_start = 0;
    for day in &records {
        let day_start = day.date * 86_400 + DAY_START_SECS;
        let mut ids = BTreeSet::new();
        for p in &day.packages {
            assert!(ids.insert(&p.id));
            assert!(p.aoi < world.aois.len());
            assert!(p.dispatched_time <= p.finish_time.unwrap());
            assert!(p.dispatched_time < p.promised_time);
            if p.kind == Kind::Pickup && p.dispatched_time > day_start {
                pickups_after_start += 1;
            }
        }
        let problems: Vec<String> = day.packages.iter().flat_map(|p| p.violations(Some(world.aois.len()))).collect();
        assert!(problems.is_empty(), "{problems:?}");
    }
    assert!(pickups_after_start > 0);
}

#[test]
fn samples_from_simulated_days_are_consistent() {
    let (_, records) = common::world(3, 10, 8);
    for day in &records {
        for s in split_routes(day, 1) {
            let truth = s.truth.as_ref().unwrap();
            assert_eq!(truth.perm.len(), s.pending.len());
            assert!(s.pending.iter().all(|p| p.dispatched_time <= s.t));
            assert!(s.history.iter().all(|p| p.finish_time.unwrap() <= s.t));
        }
    }
}

#[test]
fn emitted_dataset_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = WorldConfig {
        couriers: 2,
        days: 10,
        seed: 4,
        ..WorldConfig::default()
    };
    let report = generate(&cfg, dir.path()).unwrap();
    let aois = AoiTable::read(dir.path().join("aoi.jsonl")).unwrap();
    let world = generate_world(&cfg).unwrap();
    assert_eq!(aois, world.aois);
    let (train, val, test) = split_by_date(simulate(&world)).unwrap();
    for (name, part) in [("train.jsonl", train), ("val.jsonl", val), ("test.jsonl", test)] {
        assert_eq!(read_dataset(dir.path().join(name), Some(aois.len())).unwrap(), part, "{name}");
    }
    assert_eq!(report.all.courier_days, 20);
    assert_eq!(report.train.dates + report.val.dates + report.test.dates, 10);
}

#[test]
fn invalid_world_config_is_rejected() {
    for cfg in [
        WorldConfig { couriers: 0, ..WorldConfig::default() },
        WorldConfig { speed_mps: -1.0, ..WorldConfig::default() },
    ] {
        assert!(generate_world(&cfg).is_err());
    }
}
