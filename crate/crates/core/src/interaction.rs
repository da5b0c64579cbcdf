//! Pairwise relations between vehicles on the scene: who claims the
//! section, who stands in whose way, and the geometry the safety layer and
//! the wait-for graph both read.

use serde::{Deserialize, Serialize};

use crate::road::{ConflictKind, Evacuation, RoadScene};
use crate::vehicle::{commitment, KinematicLimits, MotionCommand, Vehicle, VehicleId, VehicleState};

/// A vehicle plus the bookkeeping the protocol layers need about it.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub vehicle: Vehicle,
    /// Time the vehicle last came to rest, if it is at rest.
    pub stopped_since: Option<f64>,
    /// Time the vehicle first came to rest at its stop line.
    pub arrived_at: Option<f64>,
    /// Pulled aside at a turnout; invisible to conflicting traffic.
    pub pulled_aside: bool,
    /// Holds the right of way through the section.
    pub granted: bool,
    /// Admission said go on the last tick.
    pub go: bool,
    /// Active deadlock case this vehicle belongs to.
    pub case: Option<u32>,
    /// Where a yielding vehicle backs up to.
    pub evacuation: Option<Evacuation>,
    /// Vehicles this one gave way to and lets through before moving on.
    pub yield_to: Vec<VehicleId>,
    /// Position the vehicle was last told to back up to.
    pub recede_to: Option<f64>,
}

impl Agent {
    pub fn new(vehicle: Vehicle) -> Self {
        Agent {
            vehicle,
            stopped_since: None,
            arrived_at: None,
            pulled_aside: false,
            granted: false,
            go: false,
            case: None,
            evacuation: None,
            yield_to: Vec::new(),
            recede_to: None,
        }
    }

    pub fn id(&self) -> u32 {
        self.vehicle.id
    }

    pub fn waited(&self, now: f64) -> f64 {
        self.stopped_since.map_or(0.0, |t| now - t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractionParams {
    /// Gap the controller keeps to obstacles.
    pub min_gap_m: f64,
    /// Gap below which two bodies count as colliding.
    pub collision_gap_m: f64,
    /// Half-width of the zone around a crossing point.
    pub zone_half_width_m: f64,
    /// How far ahead a blocking vehicle is looked for.
    pub lookahead_m: f64,
}

impl Default for InteractionParams {
    fn default() -> Self {
        InteractionParams {
            min_gap_m: 2.0,
            collision_gap_m: 0.5,
            zone_half_width_m: 1.15,
            lookahead_m: 5.0,
        }
    }
}

/// What a command means for where the vehicle may go this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Intent {
    /// Forward up to the given arc-length.
    Forward(f64),
    /// Backward down to the given arc-length.
    Backward(f64),
    Stay,
}

impl Intent {
    pub fn of(cmd: &MotionCommand, v: &Vehicle) -> Intent {
        match *cmd {
            MotionCommand::Hold => Intent::Stay,
            MotionCommand::Proceed { .. } => Intent::Forward(f64::INFINITY),
            MotionCommand::StopAt { line } => {
                let stop = line + v.failure.overshoot_m;
                if stop > v.s {
                    Intent::Forward(stop)
                } else {
                    Intent::Stay
                }
            }
            MotionCommand::Recede { target, .. } => {
                if target < v.s {
                    Intent::Backward(target)
                } else {
                    Intent::Stay
                }
            }
        }
    }
}

/// Furthest the front could get if the vehicle accelerates this tick and
/// brakes from the next one on.
pub fn forward_reach(v: &Vehicle, intent: Intent, lim: &KinematicLimits, dt: f64) -> f64 {
    let speed = v.v.max(0.0);
    match intent {
        Intent::Forward(limit) => {
            let next = (speed + lim.accel_mps2 * dt).min(lim.cruise_mps.max(speed));
            (v.s + next * dt + commitment(next, lim.decel_mps2, dt)).min(limit.max(v.s + commitment(speed, lim.decel_mps2, dt)))
        }
        _ => v.s + commitment(speed, lim.decel_mps2, dt),
    }
}

/// Whether `j`'s body lies in the part of its path that conflicts with the
/// other path of `kind` (given in `j`'s coordinates as the `a` side).
pub fn occupies(kind: &ConflictKind, j: &Vehicle, hw: f64) -> bool {
    match *kind {
        ConflictKind::Shared { a_lo, a_hi, .. } => j.s > a_lo + 1e-9 && j.rear() < a_hi - 1e-9,
        ConflictKind::Crossing { a_at, .. } => j.s > a_at - hw + 1e-9 && j.rear() < a_at + hw - 1e-9,
    }
}

/// Does `j` claim its section, as seen by conflicting traffic: it holds the
/// right of way, is crossing, is inside, or is going and cannot stop before
/// the entrance.
pub fn is_claim(scene: &RoadScene, j: &Agent, lim: &KinematicLimits, dt: f64) -> bool {
    if j.pulled_aside {
        return false;
    }
    let v = &j.vehicle;
    let Some((_, e)) = scene.section_of(v.path) else {
        return false;
    };
    if v.rear() >= e.exit {
        return false;
    }
    if j.granted || v.state == VehicleState::Crossing && v.s > e.stop_line - 1e-9 {
        return true;
    }
    if v.s > e.entrance + 1e-6 {
        return true;
    }
    j.go && v.v > 0.0 && is_committed(v.v, e.entrance - v.s, lim, dt)
}

/// Is `j` still on its way through its section, so that a vehicle that gave
/// way to it must keep waiting.
pub fn passing_through(scene: &RoadScene, j: &Agent) -> bool {
    let v = &j.vehicle;
    let inside = scene.section_of(v.path).is_some_and(|(_, e)| v.rear() < e.exit);
    inside && (j.granted || matches!(v.state, VehicleState::Crossing | VehicleState::InDeadlock))
}

/// Tolerance below which a stop exactly at a boundary counts as stopping.
pub const COMMIT_TOL_M: f64 = 0.05;

/// Cannot stop within `dist` any more.
pub fn is_committed(speed: f64, dist: f64, lim: &KinematicLimits, dt: f64) -> bool {
    commitment(speed, lim.decel_mps2, dt) > dist + COMMIT_TOL_M
}

/// Does `j` physically stand in `w`'s way through their shared section?
pub fn obstructs(scene: &RoadScene, j: &Agent, w: &Agent, hw: f64) -> bool {
    if j.pulled_aside || j.vehicle.path == w.vehicle.path {
        return false;
    }
    match scene.conflict(j.vehicle.path, w.vehicle.path) {
        Some(c) => occupies(&c.kind, &j.vehicle, hw),
        None => false,
    }
}

/// Position, in `i`'s coordinates, of the near face of an opposing vehicle
/// `j` on a shared stretch; may lie past `a_hi` when `j` has not entered.
pub fn facing_face(kind: &ConflictKind, j: &Vehicle) -> Option<f64> {
    match *kind {
        ConflictKind::Shared { a_lo, a_hi, b_lo, .. } => Some((a_hi - (j.s - b_lo)).max(a_lo)),
        ConflictKind::Crossing { .. } => None,
    }
}

/// How far `i` can go forward before running into `j`, looking only at
/// what stands still right now; `None` when `j` is not in `i`'s way.
pub fn static_gap_ahead(scene: &RoadScene, i: &Agent, j: &Agent, p: &InteractionParams) -> Option<f64> {
    let (vi, vj) = (&i.vehicle, &j.vehicle);
    if vi.id == vj.id {
        return None;
    }
    if vi.path == vj.path {
        return (vj.s > vi.s).then(|| vj.rear() - vi.s);
    }
    if i.pulled_aside || j.pulled_aside {
        return None;
    }
    let c = scene.conflict(vi.path, vj.path)?;
    match c.kind {
        ConflictKind::Shared { a_hi, b_lo, b_hi, .. } => {
            if vi.s >= a_hi || vj.rear() >= b_hi || vj.s <= b_lo {
                return None;
            }
            Some(facing_face(&c.kind, vj).unwrap() - vi.s)
        }
        ConflictKind::Crossing { a_at, b_at } => {
            let hw = p.zone_half_width_m;
            let jk = ConflictKind::Crossing { a_at: b_at, b_at: a_at };
            if vi.s > a_at - hw || !occupies(&jk, vj, hw) {
                return None;
            }
            Some(a_at - hw - vi.s)
        }
    }
}

/// Clearance between two bodies along their common geometry, if they share
/// any; negative values mean overlap.
pub fn body_clearance(scene: &RoadScene, i: &Agent, j: &Agent, hw: f64) -> Option<f64> {
    let (vi, vj) = (&i.vehicle, &j.vehicle);
    if vi.path == vj.path {
        let (lead, follow) = if vi.s >= vj.s { (vi, vj) } else { (vj, vi) };
        return Some(lead.rear() - follow.s);
    }
    if i.pulled_aside || j.pulled_aside {
        return None;
    }
    let c = scene.conflict(vi.path, vj.path)?;
    match c.kind {
        ConflictKind::Shared { a_lo, a_hi, b_lo, .. } => {
            let lo_i = vi.rear().max(a_lo);
            let hi_i = vi.s.min(a_hi);
            // j mapped into i's coordinates: front is the low end.
            let lo_j = (a_hi - (vj.s - b_lo)).max(a_lo);
            let hi_j = (a_hi - (vj.rear() - b_lo)).min(a_hi);
            if hi_i <= lo_i || hi_j <= lo_j {
                return None;
            }
            Some((lo_j - hi_i).max(lo_i - hi_j))
        }
        ConflictKind::Crossing { a_at, b_at } => {
            let in_i = vi.s > a_at - hw && vi.rear() < a_at + hw;
            let in_j = vj.s > b_at - hw && vj.rear() < b_at + hw;
            (in_i && in_j).then_some(-1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::{FourWayParams, SingleTrackParams};
    use crate::vehicle::VehicleKind;

    fn agent(id: u32, path: usize, s: f64) -> Agent {
        Agent::new(Vehicle::new(id, VehicleKind::ConnectedAutomated, path, s, 4.5))
    }

    #[test]
    fn head_on_gap_inside_single_track() {
        let scene = RoadScene::single_track(&SingleTrackParams::default()).unwrap();
        // Section spans s ∈ [300, 330] on both paths.
        let e = agent(0, 0, 312.0);
        let w = agent(1, 1, 314.0);
        // West front at x = 16, east front at x = 12.
        let g = static_gap_ahead(&scene, &e, &w, &InteractionParams::default()).unwrap();
        assert!((g - 4.0).abs() < 1e-9);
        let c = body_clearance(&scene, &e, &w, 1.15).unwrap();
        assert!((c - 4.0).abs() < 1e-9);
    }

    #[test]
    fn vehicle_outside_the_stretch_is_not_in_the_way() {
        let scene = RoadScene::single_track(&SingleTrackParams::default()).unwrap();
        let e = agent(0, 0, 312.0);
        let w = agent(1, 1, 299.0);
        assert!(static_gap_ahead(&scene, &e, &w, &InteractionParams::default()).is_none());
        assert!(body_clearance(&scene, &e, &w, 1.15).is_none());
    }

    #[test]
    fn claims() {
        let scene = RoadScene::single_track(&SingleTrackParams::default()).unwrap();
        let lim = KinematicLimits::default();
        let mut a = agent(0, 0, 250.0);
        assert!(!is_claim(&scene, &a, &lim, 0.05));
        a.vehicle.v = 10.0;
        a.vehicle.s = 285.0; // 15 m from the entrance, needs ~17 m to stop
        assert!(!is_claim(&scene, &a, &lim, 0.05));
        a.go = true;
        assert!(is_claim(&scene, &a, &lim, 0.05));
        a.go = false;
        a.vehicle.v = 0.0;
        a.vehicle.s = 299.5;
        assert!(!is_claim(&scene, &a, &lim, 0.05));
        a.vehicle.s = 300.5;
        assert!(is_claim(&scene, &a, &lim, 0.05));
        a.vehicle.s = 340.0; // rear past the exit
        assert!(!is_claim(&scene, &a, &lim, 0.05));
    }

    #[test]
    fn crossing_zone_overlap() {
        let scene = RoadScene::four_way(&FourWayParams::default()).unwrap();
        // East crosses north at east s = 306.75 and north s = 303.25.
        let e = agent(0, 0, 307.0);
        let n = agent(1, 2, 303.5);
        assert!(body_clearance(&scene, &e, &n, 1.15).unwrap() < 0.0);
        let n_out = agent(1, 2, 301.0);
        assert!(body_clearance(&scene, &e, &n_out, 1.15).is_none());
        let g = static_gap_ahead(&scene, &n_out, &e, &InteractionParams::default()).unwrap();
        assert!((g - (303.25 - 1.15 - 301.0)).abs() < 1e-9);
    }
}
