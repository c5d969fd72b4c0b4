//! Distances and calendar helpers. All timestamps are UTC epoch seconds.

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
pub const SLOTS: usize = 12;
pub const SECONDS_PER_DAY: i64 = 86_400;

/// Great-circle distance in meters between two `(lat, lon)` points in degrees.
pub fn haversine_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Two-hour slot of the day, `floor(hour / 2)`.
pub fn slot_of(ts: i64) -> usize {
    let secs = ts.rem_euclid(SECONDS_PER_DAY);
    (secs / 7200) as usize
}

pub fn day_of(ts: i64) -> i64 {
    ts.div_euclid(SECONDS_PER_DAY)
}

/// Monday = 0. 1970-01-01 was a Thursday.
pub fn weekday_of(ts: i64) -> usize {
    (day_of(ts) + 3).rem_euclid(7) as usize
}
