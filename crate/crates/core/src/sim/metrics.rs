//! Trip records, trip delay and per-run statistics.

use serde::{Deserialize, Serialize};

use crate::engine::{CaseSummary, Protocol};
use crate::road::PathId;
use crate::vehicle::{VehicleId, VehicleKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub vehicle: VehicleId,
    pub kind: VehicleKind,
    pub path: PathId,
    /// Scheduled arrival; entry deferral counts toward the trip.
    pub spawn_t: f64,
    pub start_point_t: f64,
    pub end_point_t: Option<f64>,
    pub free_flow_s: f64,
}

/// Trip time minus the free-flow time, floored at zero; `None` while the
/// trip is incomplete.
pub fn trip_delay(r: &TripRecord) -> Option<f64> {
    r.end_point_t
        .map(|end| ((end - r.start_point_t) - r.free_flow_s).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub protocol: Protocol,
    pub seed: u64,
    /// Delays of scored, completed trips, by vehicle id.
    pub delays: Vec<(VehicleId, f64)>,
    pub average_trip_delay_s: f64,
    pub worst_trip_delay_s: f64,
    pub scored: usize,
    pub incomplete_scored: usize,
    pub spawned: usize,
    pub completed: usize,
    pub in_flight: usize,
    pub never_entered: usize,
    pub deadlocks: usize,
    pub resolution_times: Vec<f64>,
    pub mean_resolution_s: f64,
    pub unresolved_cases: usize,
    pub cases: Vec<CaseSummary>,
    pub collisions: usize,
    pub end_t: f64,
}

/// Statistics over the trips scheduled inside `[window_start, window_end)`.
pub fn summarize_trips(trips: &[TripRecord], window_start: f64, window_end: f64) -> (Vec<(VehicleId, f64)>, usize, usize) {
    let mut delays = Vec::new();
    let mut scored = 0;
    let mut incomplete = 0;
    for r in trips {
        if r.spawn_t < window_start || r.spawn_t >= window_end {
            continue;
        }
        scored += 1;
        match trip_delay(r) {
            Some(d) => delays.push((r.vehicle, d)),
            None => incomplete += 1,
        }
    }
    (delays, scored, incomplete)
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(start: f64, end: Option<f64>, ff: f64) -> TripRecord {
        TripRecord {
            vehicle: 1,
            kind: VehicleKind::ConnectedAutomated,
            path: 0,
            spawn_t: start,
            start_point_t: start,
            end_point_t: end,
            free_flow_s: ff,
        }
    }

    #[test]
    fn delay_examples() {
        assert_eq!(trip_delay(&rec(10.0, Some(45.0), 30.0)), Some(5.0));
        assert_eq!(trip_delay(&rec(10.0, Some(40.0), 30.0)), Some(0.0));
        assert_eq!(trip_delay(&rec(10.0, None, 30.0)), None);
        assert_eq!(trip_delay(&rec(10.0, Some(39.99), 30.0)), Some(0.0));
    }

    #[test]
    fn window_excludes_outside_and_counts_incomplete() {
        let trips = vec![rec(100.0, Some(140.0), 30.0), rec(700.0, Some(735.0), 30.0), rec(800.0, None, 30.0)];
        let (d, scored, inc) = summarize_trips(&trips, 600.0, 1800.0);
        assert_eq!(scored, 2);
        assert_eq!(inc, 1);
        assert_eq!(d, vec![(1, 5.0)]);
    }
}
