use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::data::schema::{DayContext, DayRecord, Kind, Package, Weather};
use crate::geo::{haversine_m, weekday_of, SECONDS_PER_DAY};
use crate::synth::world::{World, MAX_PREFERENCE};

/// Couriers start at 08:00 UTC.
pub const DAY_START_SECS: i64 = 8 * 3600;
const JITTER_KM: f64 = 0.3;
const KM_PER_DEG: f64 = 111.195;

const WEATHER_LEVELS: [(&str, f64, f64); 4] = [
    // level, probability, speed factor
    ("sunny", 0.5, 1.0),
    ("cloudy", 0.25, 1.0),
    ("rain", 0.2, 0.9),
    ("snow", 0.05, 0.75),
];

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Weather and holiday for one date, shared by every courier.
pub fn date_context(seed: u64, date: i64) -> (Weather, bool, f64) {
    let mut rng = stream_rng(seed, date as u64);
    let draw: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = WEATHER_LEVELS[0];
    for level in WEATHER_LEVELS {
        acc += level.1;
        if draw < acc {
            pick = level;
            break;
        }
    }
    let temp: f64 = Normal::new(10.0, 6.0).expect("valid normal").sample(&mut rng);
    let wind: f64 = rng.random_range(0.0..8.0);
    let weekend = weekday_of(date * SECONDS_PER_DAY) >= 5;
    let holiday = weekend || rng.random_bool(0.05);
    let weather = Weather {
        kind: pick.0.to_string(),
        numeric: BTreeMap::from([
            ("temp_avg".to_string(), (temp * 10.0).round() / 10.0),
            ("wind".to_string(), (wind * 10.0).round() / 10.0),
        ]),
    };
    (weather, holiday, pick.2)
}

fn jitter(rng: &mut ChaCha8Rng, c: (f64, f64)) -> (f64, f64) {
    let dlat = rng.random_range(-JITTER_KM..=JITTER_KM) / KM_PER_DEG;
    let dlon = rng.random_range(-JITTER_KM..=JITTER_KM) / (KM_PER_DEG * c.0.to_radians().cos());
    (c.0 + dlat, c.1 + dlon)
}

/// Score weights and the pickup override used at each decision point.
#[derive(Clone, Copy, Debug)]
pub struct Policy {
    pub w_urgency: f64,
    pub w_distance: f64,
    pub w_preference: f64,
    pub override_s: f64,
    /// Remaining time at which urgency saturates to 0, seconds.
    pub horizon_s: f64,
}

impl Policy {
    /// Picks the next package among `pending` from `here` (in AOI `from`).
    /// Returns an index into `pending`; ties go to the lowest index.
    pub fn choose(&self, now: f64, here: (f64, f64), from: usize, pending: &[Package], preference: impl Fn(usize, usize) -> f64) -> usize {
        let urgent = pending
            .iter()
            .enumerate()
            .filter(|(_, p)| p.kind == Kind::Pickup && (p.promised_time as f64 - now) < self.override_s)
            .min_by(|a, b| a.1.promised_time.cmp(&b.1.promised_time).then(a.0.cmp(&b.0)));
        if let Some((i, _)) = urgent {
            return i;
        }
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, p) in pending.iter().enumerate() {
            let remaining = p.promised_time as f64 - now;
            let urgency = 1.0 - (remaining / self.horizon_s).clamp(0.0, 1.0);
            let closeness = 1.0 / (1.0 + haversine_m(here, p.loc()) / 1000.0);
            let pref = preference(from, p.aoi).ln() / MAX_PREFERENCE.ln();
            let score = self.w_urgency * urgency + self.w_distance * closeness + self.w_preference * pref;
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }
}

/// Simulates one working day of `courier` on `date`.
pub fn simulate_day(world: &World, courier: usize, date: i64) -> DayRecord {
    let cfg = &world.config;
    let profile = &world.couriers[courier];
    let (weather, holiday, speed_factor) = date_context(cfg.seed, date);
    let mut rng = stream_rng(cfg.seed, ((courier as u64 + 1) << 32) | (date as u64 & 0xffff_ffff));
    let day_start = date * SECONDS_PER_DAY + DAY_START_SECS;
    let shift_s = cfg.shift_hours * 3600.0;
    let aoi_loc = |aoi: usize| world.aois.centroids[aoi];

    let mean = cfg.deliveries_per_day * if holiday { 1.2 } else { 1.0 };
    let n_del = 1 + Poisson::new(mean.max(1.0) - 1.0 + 1e-9).expect("positive rate").sample(&mut rng) as usize;
    let mut deliveries = Vec::with_capacity(n_del);
    for k in 0..n_del {
        let aoi = profile.zone[rng.random_range(0..profile.zone.len())];
        let (lat, lon) = jitter(&mut rng, aoi_loc(aoi));
        let quarter_hours = rng.random_range((2.0 * 4.0) as i64..=((cfg.shift_hours + 2.0) * 4.0) as i64);
        deliveries.push(Package {
            id: format!("{}-{date}-d{k:03}", profile.id),
            kind: Kind::Delivery,
            lat,
            lon,
            aoi,
            dispatched_time: day_start,
            promised_time: day_start + quarter_hours * 900,
            finish_time: None,
            weight: (rng.random_range(0.2..10.0_f64) * 100.0).round() / 100.0,
            volume: (rng.random_range(0.5..40.0_f64) * 10.0).round() / 10.0,
        });
    }

    let mut pickups = Vec::new();
    if cfg.pickup_rate_per_hour > 0.0 {
        let gap = Exp::new(cfg.pickup_rate_per_hour / 3600.0).expect("positive rate");
        let mut at = gap.sample(&mut rng);
        while at < shift_s {
            let dispatched = day_start + at.ceil() as i64;
            let aoi = profile.zone[rng.random_range(0..profile.zone.len())];
            let (lat, lon) = jitter(&mut rng, aoi_loc(aoi));
            let window = rng.random_range(0.5..=1.0) * cfg.pickup_deadline_min * 60.0;
            pickups.push(Package {
                id: format!("{}-{date}-p{:03}", profile.id, pickups.len()),
                kind: Kind::Pickup,
                lat,
                lon,
                aoi,
                dispatched_time: dispatched,
                promised_time: dispatched + window.round() as i64,
                finish_time: None,
                weight: (rng.random_range(0.2..5.0_f64) * 100.0).round() / 100.0,
                volume: (rng.random_range(0.5..20.0_f64) * 10.0).round() / 10.0,
            });
            at += gap.sample(&mut rng);
        }
    }

    let policy = Policy {
        w_urgency: cfg.w_urgency,
        w_distance: cfg.w_distance,
        w_preference: cfg.w_preference,
        override_s: cfg.override_min * 60.0,
        horizon_s: shift_s + 2.0 * 3600.0,
    };
    let speed = cfg.speed_mps * profile.speed_multiplier * speed_factor;
    let done = run_policy(
        &policy,
        day_start,
        aoi_loc(profile.zone[0]),
        profile.zone[0],
        deliveries,
        pickups,
        speed,
        cfg.service_s,
        |a, b| profile.preference(a, b),
    );

    let mut courier_profile = BTreeMap::new();
    courier_profile.insert("age".to_string(), profile.age);
    courier_profile.insert("tenure_years".to_string(), profile.tenure_years);
    DayRecord {
        courier_id: profile.id.clone(),
        date,
        context: Arc::new(DayContext {
            courier_profile,
            weather,
            holiday,
        }),
        packages: done,
    }
}

/// Serves every package, releasing pickups as their dispatch time passes.
/// Returns the packages in completion order with `finish_time` set.
#[allow(clippy::too_many_arguments)]
pub fn run_policy(
    policy: &Policy,
    day_start: i64,
    start_loc: (f64, f64),
    start_aoi: usize,
    mut pending: Vec<Package>,
    arrivals: Vec<Package>,
    speed_mps: f64,
    service_s: f64,
    preference: impl Fn(usize, usize) -> f64,
) -> Vec<Package> {
    let mut arrivals = arrivals.into_iter().peekable();
    let mut now = day_start as f64;
    let mut here = start_loc;
    let mut from = start_aoi;
    let mut done = Vec::with_capacity(pending.len() + arrivals.len());
    loop {
        while let Some(p) = arrivals.next_if(|p| p.dispatched_time as f64 <= now) {
            pending.push(p);
        }
        if pending.is_empty() {
            match arrivals.peek() {
                Some(p) => {
                    now = p.dispatched_time as f64;
                    continue;
                }
                None => break,
            }
        }
        let i = policy.choose(now, here, from, &pending, &preference);
        let mut p = pending.remove(i);
        now += haversine_m(here, p.loc()) / speed_mps + service_s;
        p.finish_time = Some(now.round() as i64);
        here = p.loc();
        from = p.aoi;
        done.push(p);
    }
    done
}
