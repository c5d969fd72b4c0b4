use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::io::AoiTable;
use crate::error::{config, Result};
use crate::geo::haversine_m;

/// Centre of the simulated city.
pub const ORIGIN: (f64, f64) = (39.9, 116.4);
const KM_PER_DEG_LAT: f64 = 111.195;
/// Preference multipliers live in `[1/4, 4]`.
pub const MAX_PREFERENCE: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_aoi: usize,
    /// Side of the square city, km.
    pub grid_km: f64,
    pub couriers: usize,
    pub days: usize,
    /// First simulated date, days since the epoch (19417 = 2023-03-01).
    pub start_date: i64,
    /// AOIs a courier works in.
    pub zone_size: usize,
    pub deliveries_per_day: f64,
    /// Poisson arrivals per hour during the shift.
    pub pickup_rate_per_hour: f64,
    /// Pickups must be served within this many minutes of dispatch.
    pub pickup_deadline_min: f64,
    pub shift_hours: f64,
    pub speed_mps: f64,
    pub service_s: f64,
    pub w_urgency: f64,
    pub w_distance: f64,
    pub w_preference: f64,
    /// Pickups with less time left than this are served first.
    pub override_min: f64,
    /// Scales log preference multipliers; 0 makes every multiplier 1.
    pub preference_spread: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_aoi: 40,
            grid_km: 10.0,
            couriers: 20,
            days: 10,
            start_date: 19_417,
            zone_size: 8,
            deliveries_per_day: 20.0,
            pickup_rate_per_hour: 0.25,
            pickup_deadline_min: 60.0,
            shift_hours: 6.0,
            speed_mps: 4.0,
            service_s: 120.0,
            w_urgency: 0.5,
            w_distance: 0.3,
            w_preference: 0.2,
            override_min: 30.0,
            preference_spread: 1.0,
            seed: 7,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grid_km", self.grid_km),
            ("deliveries_per_day", self.deliveries_per_day),
            ("pickup_deadline_min", self.pickup_deadline_min),
            ("shift_hours", self.shift_hours),
            ("speed_mps", self.speed_mps),
            ("service_s", self.service_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return config(format!("{name} must be positive, got {v}"));
            }
        }
        let non_negative = [
            ("pickup_rate_per_hour", self.pickup_rate_per_hour),
            ("w_urgency", self.w_urgency),
            ("w_distance", self.w_distance),
            ("w_preference", self.w_preference),
            ("override_min", self.override_min),
            ("preference_spread", self.preference_spread),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return config(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.n_aoi == 0 || self.couriers == 0 || self.days == 0 || self.zone_size == 0 {
            return config("n_aoi, couriers, days and zone_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CourierProfile {
    pub id: String,
    /// AOIs this courier serves; the first is the depot.
    pub zone: Vec<usize>,
    /// `n_aoi × n_aoi` multipliers on moving from one AOI to another.
    pub preference: Vec<f64>,
    pub speed_multiplier: f64,
    pub age: f64,
    pub tenure_years: f64,
}

impl CourierProfile {
    pub fn preference(&self, from: usize, to: usize) -> f64 {
        let n = (self.preference.len() as f64).sqrt() as usize;
        self.preference[from * n + to]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub config: WorldConfig,
    pub aois: AoiTable,
    pub couriers: Vec<CourierProfile>,
}

/// Lays out AOI centroids uniformly in the city square and samples courier
/// profiles. Fully determined by `config.seed`.
pub fn generate_world(config: &WorldConfig) -> Result<World> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let half = config.grid_km / 2.0;
    let dlat = half / KM_PER_DEG_LAT;
    // Use the latitude nearest the equator so east-west extent never
    // exceeds grid_km anywhere in the square.
    let dlon = half / (KM_PER_DEG_LAT * (ORIGIN.0 - dlat).to_radians().cos());
    let centroids: Vec<(f64, f64)> = (0..config.n_aoi)
        .map(|_| {
            (
                ORIGIN.0 + rng.random_range(-dlat..=dlat),
                ORIGIN.1 + rng.random_range(-dlon..=dlon),
            )
        })
        .collect();

    let n = config.n_aoi;
    let span = MAX_PREFERENCE.ln() * config.preference_spread;
    let shared: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..=1.0) * 0.7 * span).collect();

    let couriers = (0..config.couriers)
        .map(|c| {
            let depot = rng.random_range(0..n);
            let mut by_dist: Vec<usize> = (0..n).collect();
            by_dist.sort_by(|&a, &b| {
                haversine_m(centroids[depot], centroids[a])
                    .total_cmp(&haversine_m(centroids[depot], centroids[b]))
                    .then(a.cmp(&b))
            });
            by_dist.truncate(config.zone_size.min(n));
            let preference = shared
                .iter()
                .map(|&s| {
                    let noise = rng.random_range(-1.0..=1.0) * 0.3 * span;
                    (s + noise).clamp(-MAX_PREFERENCE.ln(), MAX_PREFERENCE.ln()).exp()
                })
                .collect();
            CourierProfile {
                id: format!("c{c:03}"),
                zone: by_dist,
                preference,
                speed_multiplier: rng.random_range(0.8..=1.2),
                age: rng.random_range(20..=55) as f64,
                tenure_years: (rng.random_range(0.0..10.0_f64) * 10.0).round() / 10.0,
            }
        })
        .collect();

    Ok(World {
        config: config.clone(),
        aois: AoiTable { centroids },
        couriers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        let cfg = WorldConfig::default();
        assert_eq!(generate_world(&cfg).unwrap(), generate_world(&cfg).unwrap());
    }

    #[test]
    fn distances_bounded_by_grid_diagonal() {
        let cfg = WorldConfig {
            n_aoi: 100,
            ..WorldConfig::default()
        };
        let w = generate_world(&cfg).unwrap();
        let bound = cfg.grid_km * 1000.0 * 2f64.sqrt();
        for &a in &w.aois.centroids {
            for &b in &w.aois.centroids {
                assert!(haversine_m(a, b) <= bound);
            }
        }
    }

    #[test]
    fn preferences_stay_in_range() {
        let w = generate_world(&WorldConfig::default()).unwrap();
        for c in &w.couriers {
            assert!(c.preference.iter().all(|&m| (0.25..=4.0).contains(&m)));
        }
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = WorldConfig {
            speed_mps: 0.0,
            ..WorldConfig::default()
        };
        assert!(generate_world(&cfg).is_err());
    }
}
