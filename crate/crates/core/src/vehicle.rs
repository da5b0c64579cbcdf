//! Vehicle identity, the six-state protocol machine, failure injection and
//! point-vehicle kinematics along a path.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::road::{PathId, RoadError, RoadScene};

pub type VehicleId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VehicleKind {
    ConnectedAutomated,
    NonConnectedAutomated,
    HumanDriven,
}

impl VehicleKind {
    /// Only connected vehicles send or receive beacons.
    pub fn is_connected(self) -> bool {
        matches!(self, VehicleKind::ConnectedAutomated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VehicleState {
    NotAroundIntersection,
    Approach,
    Wait,
    Crossing,
    InDeadlock,
    Yielding,
}

impl VehicleState {
    pub const ALL: [VehicleState; 6] = [
        VehicleState::NotAroundIntersection,
        VehicleState::Approach,
        VehicleState::Wait,
        VehicleState::Crossing,
        VehicleState::InDeadlock,
        VehicleState::Yielding,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

impl fmt::Display for VehicleState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    EnterApproachZone,
    ArriveStopLine,
    EnterSection,
    ExitSection,
    DeadlockDetected,
    YieldDecided,
    DeadlockResolved,
    /// The yielding vehicle reached its evacuation point.
    ReachEvacuation,
}

impl Event {
    pub const ALL: [Event; 8] = [
        Event::EnterApproachZone,
        Event::ArriveStopLine,
        Event::EnterSection,
        Event::ExitSection,
        Event::DeadlockDetected,
        Event::YieldDecided,
        Event::DeadlockResolved,
        Event::ReachEvacuation,
    ];
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VehicleError {
    #[error("illegal transition from {state} on {event:?}")]
    IllegalTransition { state: VehicleState, event: Event },
    #[error("vehicle {id} would leave its path extent (s = {s})")]
    LeavesPath { id: VehicleId, s: f64 },
    #[error(transparent)]
    Road(#[from] RoadError),
}

/// The protocol state machine. Every pair not listed is rejected.
pub fn transition(state: VehicleState, event: Event) -> Result<VehicleState, VehicleError> {
    use Event as E;
    use VehicleState as S;
    match (state, event) {
        (S::NotAroundIntersection, E::EnterApproachZone) => Ok(S::Approach),
        (S::Approach, E::ArriveStopLine) => Ok(S::Wait),
        (S::Wait | S::Approach, E::EnterSection) => Ok(S::Crossing),
        (S::Crossing, E::ExitSection) => Ok(S::NotAroundIntersection),
        (S::Wait | S::Crossing, E::DeadlockDetected) => Ok(S::InDeadlock),
        (S::InDeadlock, E::YieldDecided) => Ok(S::Yielding),
        (S::InDeadlock, E::DeadlockResolved) => Ok(S::Crossing),
        (S::Yielding, E::ReachEvacuation) => Ok(S::Wait),
        _ => Err(VehicleError::IllegalTransition { state, event }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureProfile {
    /// Added to the true position when the vehicle localizes itself.
    pub localization_offset_m: f64,
    /// How far past a commanded stop point the vehicle comes to rest.
    pub overshoot_m: f64,
    /// Per-vehicle loss probability for every link to or from it.
    pub packet_loss_override: Option<f64>,
}

impl FailureProfile {
    pub fn validate(&self) -> Result<(), String> {
        if !self.localization_offset_m.is_finite() {
            return Err("localization_offset_m must be finite".into());
        }
        if !(self.overshoot_m >= 0.0 && self.overshoot_m.is_finite()) {
            return Err("overshoot_m must be a non-negative finite number".into());
        }
        if let Some(p) = self.packet_loss_override {
            if !(0.0..=1.0).contains(&p) {
                return Err("packet_loss_override must lie in [0, 1]".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicLimits {
    pub accel_mps2: f64,
    pub decel_mps2: f64,
    pub cruise_mps: f64,
    pub back_speed_mps: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        KinematicLimits {
            accel_mps2: 3.0,
            decel_mps2: 3.0,
            cruise_mps: 10.0,
            back_speed_mps: 2.0,
        }
    }
}

/// Distance below which a stop target counts as reached.
pub const SNAP_M: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MotionCommand {
    /// Stay put; a moving vehicle brakes.
    Hold,
    Proceed { target_speed: f64 },
    /// Stop with the front at `line` (plus any injected overshoot).
    StopAt { line: f64 },
    /// Back up along the path toward `target`.
    Recede { speed: f64, target: f64 },
}

impl MotionCommand {
    /// Where a forward command would bring the front to rest, if anywhere.
    pub fn forward_limit(&self, overshoot: f64) -> Option<f64> {
        match *self {
            MotionCommand::StopAt { line } => Some(line + overshoot),
            MotionCommand::Proceed { .. } => Some(f64::INFINITY),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub path: PathId,
    /// Arc-length of the front bumper.
    pub s: f64,
    /// Signed speed along the path; negative while backing up.
    pub v: f64,
    pub length: f64,
    pub state: VehicleState,
    /// Believed localization state as last evaluated.
    pub rho: bool,
    /// Tie-break draw for the current episode, uniform on [0, 1).
    pub r: f64,
    pub hv_flag: bool,
    pub failure: FailureProfile,
}

impl Vehicle {
    pub fn new(id: VehicleId, kind: VehicleKind, path: PathId, s: f64, length: f64) -> Self {
        Vehicle {
            id,
            kind,
            path,
            s,
            v: 0.0,
            length,
            state: VehicleState::NotAroundIntersection,
            rho: false,
            r: 0.0,
            hv_flag: false,
            failure: FailureProfile::default(),
        }
    }

    pub fn rear(&self) -> f64 {
        self.s - self.length
    }

    pub fn apply(&mut self, event: Event) -> Result<VehicleState, VehicleError> {
        self.state = transition(self.state, event)?;
        Ok(self.state)
    }
}

/// ρ as the vehicle believes it: section containment at its self-localized
/// position, which differs from the truth under an injected offset.
pub fn believed_localization_state(vehicle: &Vehicle, scene: &RoadScene) -> Result<bool, VehicleError> {
    localization_state_at(vehicle, scene, vehicle.s + vehicle.failure.localization_offset_m)
}

/// Ground-truth ρ.
pub fn true_localization_state(vehicle: &Vehicle, scene: &RoadScene) -> Result<bool, VehicleError> {
    localization_state_at(vehicle, scene, vehicle.s)
}

fn localization_state_at(vehicle: &Vehicle, scene: &RoadScene, s: f64) -> Result<bool, VehicleError> {
    let path = scene.path(vehicle.path)?;
    let Some((section, _)) = scene.section_of(vehicle.path) else {
        return Ok(false);
    };
    let pose = path.pose_at(s.clamp(0.0, path.length()))?;
    if s < 0.0 || s > path.length() {
        return Ok(false);
    }
    Ok(scene.in_section(section, pose.position)?)
}

/// Largest speed from which the vehicle can cover this tick and still stop
/// within `room`, keeping one extra tick of reaction margin.
pub fn safe_speed(room: f64, decel: f64, dt: f64) -> f64 {
    if room <= 0.0 {
        return 0.0;
    }
    decel * (-2.0 * dt + (4.0 * dt * dt + 2.0 * room / decel).sqrt())
}

/// Safe speed, rounded down to rest once it would move less than
/// `SNAP_M` per tick, so a vehicle closing on an obstacle stops instead of
/// creeping toward it forever.
fn room_cap(room: f64, decel: f64, dt: f64) -> f64 {
    let v = safe_speed(room, decel, dt);
    if v * dt < SNAP_M {
        0.0
    } else {
        v
    }
}

/// Largest speed that still stops exactly within `dist`.
fn stopping_speed(dist: f64, decel: f64, dt: f64) -> f64 {
    if dist <= 0.0 {
        return 0.0;
    }
    decel * (-dt + (dt * dt + 2.0 * dist / decel).sqrt())
}

/// Distance a vehicle moving at `speed` may still cover: one tick of travel
/// plus its braking distance.
pub fn commitment(speed: f64, decel: f64, dt: f64) -> f64 {
    let v = speed.abs();
    v * v / (2.0 * decel) + v * dt
}

/// Advance one tick. `room` bounds the travel in the direction of motion
/// (use infinity when unconstrained); `extent` is the allowed range of `s`.
pub fn advance(
    vehicle: &mut Vehicle,
    command: MotionCommand,
    dt: f64,
    limits: &KinematicLimits,
    room: f64,
    extent: (f64, f64),
) -> Result<(), VehicleError> {
    let (a, b) = (limits.accel_mps2, limits.decel_mps2);
    let v = vehicle.v;
    let backward = matches!(command, MotionCommand::Recede { target, .. } if target < vehicle.s);
    let (new_s, new_v) = if v < 0.0 && !backward {
        // Moving backward but asked to stop or go forward: brake first.
        let w = (-v - b * dt).max(0.0);
        (vehicle.s - w * dt, -w)
    } else if v > 0.0 && backward {
        let w = (v - b * dt).max(0.0);
        (vehicle.s + w * dt, w)
    } else if backward {
        let MotionCommand::Recede { speed, target } = command else {
            unreachable!()
        };
        let w = -v;
        let dist = vehicle.s - target;
        if dist < SNAP_M && w <= b * dt {
            (target, 0.0)
        } else {
            let upper = speed.min(w + a * dt).min(room_cap(room, b, dt)).min(stopping_speed(dist, b, dt));
            let w2 = upper.max((w - b * dt).max(0.0));
            (vehicle.s - w2 * dt, -w2)
        }
    } else {
        // Forward or at rest.
        let (desired, stop) = match command {
            MotionCommand::Hold => (0.0, None),
            MotionCommand::Proceed { target_speed } => (target_speed.max(0.0), None),
            MotionCommand::StopAt { line } => (limits.cruise_mps, Some(line + vehicle.failure.overshoot_m)),
            MotionCommand::Recede { .. } => (0.0, None),
        };
        if v == 0.0 && desired == 0.0 {
            (vehicle.s, 0.0)
        } else if let Some(stop) = stop.filter(|&st| st - vehicle.s < SNAP_M && v <= b * dt) {
            if stop >= vehicle.s {
                (stop, 0.0)
            } else {
                ((vehicle.s + (v - b * dt).max(0.0) * dt), (v - b * dt).max(0.0))
            }
        } else {
            let mut upper = desired.min(v + a * dt).min(room_cap(room, b, dt));
            if let Some(stop) = stop {
                upper = upper.min(stopping_speed(stop - vehicle.s, b, dt));
            }
            let v2 = upper.max((v - b * dt).max(0.0));
            (vehicle.s + v2 * dt, v2)
        }
    };
    if new_s < extent.0 - 1e-9 || new_s > extent.1 + 1e-9 {
        return Err(VehicleError::LeavesPath {
            id: vehicle.id,
            s: new_s,
        });
    }
    vehicle.s = new_s;
    vehicle.v = new_v;
    Ok(())
}

/// Unconstrained kinematic step within the vehicle's path.
pub fn step_kinematics(
    vehicle: &mut Vehicle,
    command: MotionCommand,
    dt: f64,
    limits: &KinematicLimits,
    scene: &RoadScene,
) -> Result<(), VehicleError> {
    let len = scene.path(vehicle.path)?.length();
    advance(vehicle, command, dt, limits, f64::INFINITY, (0.0, len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::SingleTrackParams;

    fn scene() -> RoadScene {
        RoadScene::single_track(&SingleTrackParams::default()).unwrap()
    }

    #[test]
    fn transition_examples() {
        use Event as E;
        use VehicleState as S;
        assert_eq!(transition(S::Wait, E::DeadlockDetected).unwrap(), S::InDeadlock);
        assert_eq!(transition(S::Crossing, E::ExitSection).unwrap(), S::NotAroundIntersection);
        assert_eq!(
            transition(S::NotAroundIntersection, E::DeadlockDetected),
            Err(VehicleError::IllegalTransition {
                state: S::NotAroundIntersection,
                event: E::DeadlockDetected
            })
        );
    }

    #[test]
    fn exactly_ten_legal_edges() {
        let legal = VehicleState::ALL
            .iter()
            .flat_map(|&s| Event::ALL.iter().map(move |&e| (s, e)))
            .filter(|&(s, e)| transition(s, e).is_ok())
            .count();
        assert_eq!(legal, 10);
    }

    #[test]
    fn believed_rho_examples() {
        let scene = scene();
        // Entrance of the east path is at s = 300.
        let mut v = Vehicle::new(0, VehicleKind::ConnectedAutomated, 0, 310.0, 4.5);
        assert!(believed_localization_state(&v, &scene).unwrap());
        v.s = 302.0;
        v.failure.localization_offset_m = -3.0;
        assert!(!believed_localization_state(&v, &scene).unwrap());
        assert!(true_localization_state(&v, &scene).unwrap());
        v.s = 295.0;
        v.failure.localization_offset_m = 0.0;
        assert!(!believed_localization_state(&v, &scene).unwrap());
    }

    #[test]
    fn kinematics_examples() {
        let scene = scene();
        let lim = KinematicLimits::default();
        let mut v = Vehicle::new(0, VehicleKind::ConnectedAutomated, 0, 100.0, 4.5);
        step_kinematics(&mut v, MotionCommand::Hold, 0.7, &lim, &scene).unwrap();
        assert_eq!(v.s, 100.0);

        v.v = 10.0;
        step_kinematics(&mut v, MotionCommand::Proceed { target_speed: 10.0 }, 0.1, &lim, &scene).unwrap();
        assert!((v.s - 101.0).abs() < 1e-12);
        assert_eq!(v.v, 10.0);
    }

    #[test]
    fn overshoot_settles_past_the_line() {
        let scene = scene();
        let lim = KinematicLimits::default();
        let mut v = Vehicle::new(0, VehicleKind::ConnectedAutomated, 0, 250.0, 4.5);
        v.v = 10.0;
        v.failure.overshoot_m = 2.0;
        for _ in 0..2000 {
            step_kinematics(&mut v, MotionCommand::StopAt { line: 299.0 }, 0.05, &lim, &scene).unwrap();
        }
        assert_eq!(v.v, 0.0);
        assert!((v.s - 301.0).abs() < 1e-9, "rested at {}", v.s);
    }

    #[test]
    fn recede_backs_up_to_target_and_stops() {
        let scene = scene();
        let lim = KinematicLimits::default();
        let mut v = Vehicle::new(0, VehicleKind::ConnectedAutomated, 0, 320.0, 4.5);
        let mut last = v.s;
        for _ in 0..400 {
            step_kinematics(&mut v, MotionCommand::Recede { speed: 2.0, target: 299.0 }, 0.05, &lim, &scene)
                .unwrap();
            assert!(v.s <= last);
            assert!(v.v >= -2.0 - 1e-12);
            last = v.s;
        }
        assert_eq!(v.s, 299.0);
        assert_eq!(v.v, 0.0);
    }

    #[test]
    fn leaving_the_path_is_an_error() {
        let scene = scene();
        let lim = KinematicLimits::default();
        let mut v = Vehicle::new(3, VehicleKind::HumanDriven, 0, 0.05, 4.5);
        v.v = -2.0;
        let r = step_kinematics(&mut v, MotionCommand::Recede { speed: 2.0, target: -5.0 }, 0.1, &lim, &scene);
        assert!(matches!(r, Err(VehicleError::LeavesPath { id: 3, .. })));
    }

    #[test]
    fn safe_speed_respects_room() {
        let (b, dt) = (3.0, 0.05);
        for room in [0.1, 1.0, 5.0, 20.0, 80.0] {
            let v = safe_speed(room, b, dt);
            assert!(v * v / (2.0 * b) + 2.0 * v * dt <= room + 1e-9);
        }
        assert_eq!(safe_speed(-1.0, b, dt), 0.0);
    }
}
