//! Decision rules: V2V ranking, perception-gated threshold waiting, HV flag
//! propagation and the lane-priority baseline. All pure.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::channel::Beacon;
use crate::cost::{priority_order, Contender};
use crate::perception::{MotionClass, PerceivedVehicle};
use crate::vehicle::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Hold,
    Proceed,
    /// Back out; `backing` is false when the vehicle already stands clear
    /// and only gives up its turn.
    StartYield { backing: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct V2vOutcome {
    pub ranking: Vec<Contender>,
    pub winner: VehicleId,
    /// Decision per contender, in ranking order.
    pub decisions: Vec<(VehicleId, Decision)>,
}

/// Rank the broadcast `(ρ, χ, R)` of every negotiator; the top one proceeds
/// once clear, those physically in its way back out, the rest give way
/// where they stand.
pub fn negotiate_v2v(contenders: &[Contender], obstructing: &BTreeSet<VehicleId>) -> V2vOutcome {
    let ranking = priority_order(contenders);
    let winner = ranking[0].id;
    let decisions = ranking
        .iter()
        .map(|c| {
            let d = if c.id == winner {
                Decision::Proceed
            } else {
                Decision::StartYield {
                    backing: obstructing.contains(&c.id),
                }
            };
            (c.id, d)
        })
        .collect();
    V2vOutcome {
        ranking,
        winner,
        decisions,
    }
}

/// What the vehicle sees of one opposing negotiator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Opponent {
    pub motion: MotionClass,
    /// Already backed off noticeably from where it stood at detection.
    pub receded: bool,
}

/// Perception-mode rule for one vehicle. Yield once the wait exceeds Δ and
/// someone opposing still stands its ground; proceed once every opponent
/// backs off (or none is left).
pub fn wait_out_threshold(delta: f64, elapsed: f64, opponents: &[Opponent]) -> Decision {
    let backing_off = |o: &Opponent| o.motion == MotionClass::Receding || o.receded;
    if opponents.iter().all(backing_off) {
        return Decision::Proceed;
    }
    let standing = opponents
        .iter()
        .any(|o| o.motion == MotionClass::Stopped && !o.receded);
    if elapsed > delta && standing {
        Decision::StartYield { backing: true }
    } else {
        Decision::Hold
    }
}

/// HV flag: raised when a perceived episode member does not associate with
/// any beacon, or when a member's beacon already carries the flag.
pub fn update_hv_flag(current: bool, perceived_members: &[PerceivedVehicle], member_beacons: &[Beacon]) -> bool {
    current
        || perceived_members.iter().any(|p| !p.connected_believed)
        || member_beacons.iter().any(|b| b.hv_flag)
}

/// Baseline: the negotiator on the highest-priority lane wins, everyone
/// else backs out to its evacuation site whatever its position.
pub fn baseline_lane_priority(negotiators: &[(VehicleId, u32)]) -> (VehicleId, Vec<(VehicleId, Decision)>) {
    let winner = negotiators
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("at least one negotiator")
        .0;
    let decisions = negotiators
        .iter()
        .map(|&(id, _)| {
            let d = if id == winner {
                Decision::Proceed
            } else {
                Decision::StartYield { backing: true }
            };
            (id, d)
        })
        .collect();
    (winner, decisions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{threshold_wait, CostParams};

    fn c(id: VehicleId, rho: bool, chi: f64, r: f64) -> Contender {
        Contender { id, rho, chi, r }
    }

    #[test]
    fn higher_cost_wins_and_blocker_backs() {
        let out = negotiate_v2v(&[c(1, true, 50.0, 0.1), c(2, true, 10.0, 0.9)], &BTreeSet::from([2]));
        assert_eq!(out.winner, 1);
        assert_eq!(out.decisions, vec![(1, Decision::Proceed), (2, Decision::StartYield { backing: true })]);
    }

    #[test]
    fn four_way_tie_goes_to_highest_draw() {
        let cs = [c(1, false, 5.0, 0.3), c(2, false, 40.0, 0.1), c(3, false, 0.0, 0.8), c(4, false, 9.0, 0.5)];
        let out = negotiate_v2v(&cs, &BTreeSet::new());
        assert_eq!(out.winner, 3);
        assert_eq!(
            out.decisions.iter().filter(|(_, d)| *d == Decision::Proceed).count(),
            1
        );
    }

    #[test]
    fn believed_outside_vehicle_yields_to_inside_one() {
        // A waits at its line (ρ=0); B is physically inside but believes ρ=0
        // too, so the draw decides between them.
        let out = negotiate_v2v(&[c(1, false, 0.0, 0.4), c(2, false, 3.0, 0.7)], &BTreeSet::from([2]));
        assert_eq!(out.winner, 2);
        let out = negotiate_v2v(&[c(1, false, 0.0, 0.9), c(2, false, 3.0, 0.7)], &BTreeSet::from([2]));
        assert_eq!(out.winner, 1);
        assert_eq!(out.decisions[1], (2, Decision::StartYield { backing: true }));
    }

    #[test]
    fn lower_threshold_backs_first() {
        let p = CostParams::default();
        let (da, db) = (threshold_wait(&p, 35.0, 0.0), threshold_wait(&p, 10.0, 0.0));
        assert!((db - 1.0).abs() < 1e-12 && (da - 3.5).abs() < 1e-12);
        let stopped = [Opponent { motion: MotionClass::Stopped, receded: false }];
        assert_eq!(wait_out_threshold(db, 1.05, &stopped), Decision::StartYield { backing: true });
        assert_eq!(wait_out_threshold(da, 1.05, &stopped), Decision::Hold);
        let backing = [Opponent { motion: MotionClass::Receding, receded: false }];
        assert_eq!(wait_out_threshold(da, 1.10, &backing), Decision::Proceed);
    }

    #[test]
    fn equal_cost_draw_orders_thresholds() {
        let p = CostParams::default();
        assert!(threshold_wait(&p, 20.0, 0.2) < threshold_wait(&p, 20.0, 0.9));
    }

    #[test]
    fn receding_opponent_prevents_double_yield() {
        let opp = [Opponent { motion: MotionClass::Receding, receded: false }];
        assert_ne!(wait_out_threshold(0.5, 9.0, &opp), Decision::StartYield { backing: true });
        let gone = [Opponent { motion: MotionClass::Stopped, receded: true }];
        assert_eq!(wait_out_threshold(0.5, 9.0, &gone), Decision::Proceed);
    }

    #[test]
    fn baseline_picks_the_priority_lane() {
        let (w, d) = baseline_lane_priority(&[(4, 1), (9, 2)]);
        assert_eq!(w, 9);
        assert_eq!(d[0], (4, Decision::StartYield { backing: true }));
    }

    #[test]
    fn hv_flag_sources() {
        let p = PerceivedVehicle {
            target_id: 1,
            relative_position: crate::geometry::Point::new(5.0, 0.0),
            speed: 0.0,
            motion_class: MotionClass::Stopped,
            connected_believed: true,
            path: 0,
            s: 0.0,
        };
        assert!(!update_hv_flag(false, &[p], &[]));
        assert!(update_hv_flag(false, &[PerceivedVehicle { connected_believed: false, ..p }], &[]));
        assert!(update_hv_flag(false, &[p], &[Beacon { hv_flag: true, ..Default::default() }]));
        assert!(update_hv_flag(true, &[], &[]));
    }
}
