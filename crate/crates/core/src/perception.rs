//! Ideal on-board sensing: who is around, how they move, whether they are
//! talking, and whether anyone follows.

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::channel::Beacon;
use crate::geometry::Point;
use crate::road::{PathId, RoadError, RoadScene};
use crate::vehicle::{Vehicle, VehicleId};

pub const STOPPED_BELOW_MPS: f64 = 0.1;
pub const ASSOCIATION_GATE_M: f64 = 2.0;
/// Lateral tolerance when projecting a beacon onto a path.
pub const LANE_MATCH_M: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MotionClass {
    Stopped,
    Advancing,
    Receding,
}

pub fn motion_class(path_speed: f64) -> MotionClass {
    if path_speed.abs() < STOPPED_BELOW_MPS {
        MotionClass::Stopped
    } else if path_speed > 0.0 {
        MotionClass::Advancing
    } else {
        MotionClass::Receding
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceivedVehicle {
    pub target_id: VehicleId,
    pub relative_position: Point,
    /// Signed speed along the target's own path.
    pub speed: f64,
    pub motion_class: MotionClass,
    pub connected_believed: bool,
    pub path: PathId,
    pub s: f64,
}

pub fn position_of(v: &Vehicle, scene: &RoadScene) -> Result<Point, RoadError> {
    let path = scene.path(v.path)?;
    Ok(path.pose_at(v.s.clamp(0.0, path.length()))?.position)
}

/// Every other vehicle within `range` of the subject, with true kinematics.
pub fn sense<'a>(
    subject: &Vehicle,
    others: impl IntoIterator<Item = &'a Vehicle>,
    scene: &RoadScene,
    range: f64,
) -> Result<Vec<PerceivedVehicle>, RoadError> {
    let me = position_of(subject, scene)?;
    let mut out = Vec::new();
    for o in others {
        if o.id == subject.id {
            continue;
        }
        let p = position_of(o, scene)?;
        if p.dist(me) <= range {
            out.push(PerceivedVehicle {
                target_id: o.id,
                relative_position: p.sub(me),
                speed: o.v,
                motion_class: motion_class(o.v),
                connected_believed: false,
                path: o.path,
                s: o.s,
            });
        }
    }
    Ok(out)
}

/// Where a beacon's sender should be at `now` by dead reckoning.
pub fn dead_reckon(b: &Beacon, now: f64) -> Point {
    let dt = (now - b.timestamp).max(0.0);
    b.position.add(Point::from_heading(b.heading).scale(b.velocity * dt))
}

/// Marks each perceived vehicle connected iff an unexpired beacon lands
/// within the association gate of it. `beacons` must already be filtered
/// to unexpired entries.
pub fn classify_connected(
    observer: Point,
    perceived: &mut [PerceivedVehicle],
    beacons: &[Beacon],
    now: f64,
) -> Vec<bool> {
    perceived
        .iter_mut()
        .map(|p| {
            let abs = observer.add(p.relative_position);
            p.connected_believed = beacons
                .iter()
                .any(|b| dead_reckon(b, now).dist(abs) <= ASSOCIATION_GATE_M);
            p.connected_believed
        })
        .collect()
}

/// G: someone is behind the subject on its own path within sensor range.
pub fn follower_presence<'a>(subject: &Vehicle, others: impl IntoIterator<Item = &'a Vehicle>, range: f64) -> bool {
    others.into_iter().any(|o| {
        o.id != subject.id && o.path == subject.path && o.s < subject.s && subject.s - o.s <= range
    })
}

/// N_f: beacon senders travelling the subject's path behind it within
/// `range`, as the subject sees them from its believed position.
pub fn count_followers(
    subject: &Vehicle,
    beacons: &[Beacon],
    scene: &RoadScene,
    range: f64,
) -> Result<u32, RoadError> {
    let path = scene.path(subject.path)?;
    let my_s = subject.s + subject.failure.localization_offset_m;
    let mut n = 0;
    for b in beacons {
        if b.sender == subject.id {
            continue;
        }
        let (s, lateral) = path.project(b.position);
        let aligned = (b.heading - path.heading_at(s)).cos() > 0.5;
        if lateral < LANE_MATCH_M && aligned && s < my_s && my_s - s <= range {
            n += 1;
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::road::SingleTrackParams;
    use crate::vehicle::VehicleKind;

    fn scene() -> RoadScene {
        RoadScene::single_track(&SingleTrackParams::default()).unwrap()
    }

    fn car(id: VehicleId, path: PathId, s: f64, v: f64) -> Vehicle {
        let mut c = Vehicle::new(id, VehicleKind::ConnectedAutomated, path, s, 4.5);
        c.v = v;
        c
    }

    #[test]
    fn sense_examples() {
        let scene = scene();
        // East front at x = 10, west front 30 m further east.
        let me = car(0, 0, 310.0, 0.0);
        let facing = car(1, 1, 290.0, 0.0);
        let far = car(2, 1, 210.0, 5.0);
        let seen = sense(&me, &[me.clone(), facing.clone(), far], &scene, 80.0).unwrap();
        assert_eq!(seen.len(), 1);
        assert_eq!(seen[0].target_id, 1);
        assert_eq!(seen[0].motion_class, MotionClass::Stopped);
        assert!((seen[0].relative_position.x - 30.0).abs() < 1e-9);

        let backing = car(3, 1, 290.0, -2.0);
        let seen = sense(&me, &[backing], &scene, 80.0).unwrap();
        assert_eq!(seen[0].motion_class, MotionClass::Receding);
    }

    #[test]
    fn motion_class_threshold() {
        assert_eq!(motion_class(0.099), MotionClass::Stopped);
        assert_eq!(motion_class(-0.099), MotionClass::Stopped);
        assert_eq!(motion_class(0.1), MotionClass::Advancing);
        assert_eq!(motion_class(-0.1), MotionClass::Receding);
    }

    #[test]
    fn connectivity_classification() {
        let scene = scene();
        let me = car(0, 0, 310.0, 0.0);
        let other = car(1, 1, 290.0, 0.0);
        let pos = position_of(&other, &scene).unwrap();
        let beacon = Beacon {
            sender: 1,
            timestamp: 10.0,
            position: pos,
            heading: std::f64::consts::PI,
            ..Default::default()
        };
        let observer = position_of(&me, &scene).unwrap();
        let mut seen = sense(&me, &[other], &scene, 80.0).unwrap();
        assert_eq!(classify_connected(observer, &mut seen, &[beacon], 10.05), vec![true]);
        assert!(seen[0].connected_believed);
        assert_eq!(classify_connected(observer, &mut seen, &[], 10.05), vec![false]);
    }

    #[test]
    fn mislocalized_beacon_fails_association() {
        let scene = scene();
        let me = car(0, 0, 310.0, 0.0);
        let other = car(1, 1, 290.0, 0.0);
        let mut pos = position_of(&other, &scene).unwrap();
        pos.x += 3.0;
        let beacon = Beacon {
            sender: 1,
            timestamp: 10.0,
            position: pos,
            ..Default::default()
        };
        let observer = position_of(&me, &scene).unwrap();
        let mut seen = sense(&me, &[other], &scene, 80.0).unwrap();
        assert_eq!(classify_connected(observer, &mut seen, &[beacon], 10.0), vec![false]);
    }

    #[test]
    fn follower_presence_examples() {
        let me = car(0, 0, 200.0, 0.0);
        assert!(follower_presence(&me, &[car(1, 0, 180.0, 0.0)], 80.0));
        assert!(!follower_presence(&me, &[], 80.0));
        assert!(!follower_presence(&me, &[car(1, 0, 100.0, 0.0)], 80.0));
        // Vehicles ahead or on the other path do not count.
        assert!(!follower_presence(&me, &[car(1, 0, 220.0, 0.0), car(2, 1, 150.0, 0.0)], 80.0));
    }

    #[test]
    fn followers_counted_from_beacons() {
        let scene = scene();
        let me = car(0, 0, 300.0, 0.0);
        let mk = |id, x: f64, heading: f64| Beacon {
            sender: id,
            position: Point::new(x, 0.0),
            heading,
            ..Default::default()
        };
        let beacons = [
            mk(1, -7.0, 0.0),
            mk(2, -14.0, 0.0),
            mk(3, -20.0, std::f64::consts::PI), // opposite direction
            mk(4, 5.0, 0.0),                     // ahead
            mk(5, -450.0, 0.0),                  // out of range, off path
        ];
        assert_eq!(count_followers(&me, &beacons, &scene, 400.0).unwrap(), 2);
    }
}
