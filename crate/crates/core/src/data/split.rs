//! Cutting a courier-day into samples at newly dispatched pickups.
//!
//! Deliveries are known at the start of the day; pickups arrive while the
//! courier is out. A pickup that arrives after the courier has completed at
//! least one package invalidates the plan made before it, so the completion
//! sequence is cut at the first completion that happened after that pickup
//! was dispatched. When the courier serves the new pickup immediately, the
//! cut lands right before it.

use std::ops::Range;

use crate::data::schema::{sort_pending, DayRecord, Kind, Package, Sample};

/// A contiguous run of the completion sequence and the time its plan starts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub range: Range<usize>,
    pub start_time: i64,
}

/// Splits the completion order of `day` into segments.
pub fn route_segments(day: &DayRecord) -> Vec<Segment> {
    let done = day.completed();
    let Some(day_start) = day.day_start() else {
        return Vec::new();
    };
    if done.is_empty() {
        return Vec::new();
    }
    let first_finish = done[0].finish_time.expect("completed");

    // cut position -> latest triggering dispatch time
    let mut cuts: Vec<(usize, i64)> = Vec::new();
    for p in done.iter().filter(|p| p.kind == Kind::Pickup) {
        let d = p.dispatched_time;
        if d <= day_start || d < first_finish {
            continue;
        }
        let Some(pos) = done.iter().position(|q| q.finish_time.expect("completed") > d) else {
            continue;
        };
        if pos == 0 {
            continue;
        }
        match cuts.iter_mut().find(|(c, _)| *c == pos) {
            Some(entry) => entry.1 = entry.1.max(d),
            None => cuts.push((pos, d)),
        }
    }
    cuts.sort_unstable();

    let mut segments = Vec::with_capacity(cuts.len() + 1);
    let mut begin = 0;
    let mut start_time = day_start;
    for (pos, t) in cuts {
        segments.push(Segment {
            range: begin..pos,
            start_time,
        });
        begin = pos;
        start_time = t;
    }
    segments.push(Segment {
        range: begin..done.len(),
        start_time,
    });
    segments
}

/// Builds samples from every `stride`-th completion point of each segment.
///
/// At completion point `k` the query time is the previous completion (or the
/// segment start), the history is everything completed so far that day, and
/// the pending set is the rest of the segment. Points where some pending
/// package had not been dispatched yet are skipped.
pub fn split_routes(day: &DayRecord, stride: usize) -> Vec<Sample> {
    let stride = stride.max(1);
    let done = day.completed();
    let mut out = Vec::new();
    for seg in route_segments(day) {
        for k in seg.range.clone().step_by(stride) {
            let t = if k == seg.range.start {
                seg.start_time
            } else {
                done[k - 1].finish_time.expect("completed").max(seg.start_time)
            };
            let pending_refs = &done[k..seg.range.end];
            if pending_refs.iter().any(|p| p.dispatched_time > t) {
                continue;
            }
            let history: Vec<Package> = done[..k]
                .iter()
                .filter(|p| p.finish_time.expect("completed") <= t)
                .map(|&p| p.clone())
                .collect();
            let mut pending: Vec<Package> = pending_refs.iter().map(|&p| p.clone()).collect();
            sort_pending(&mut pending);
            let truth = Sample::derive_truth(t, &pending);
            out.push(Sample {
                courier_id: day.courier_id.clone(),
                t,
                history,
                pending,
                context: day.context.clone(),
                truth,
            });
        }
    }
    out
}
