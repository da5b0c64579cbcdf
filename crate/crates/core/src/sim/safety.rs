//! Perception-gated motion limits. Each vehicle gets, per tick, the distance
//! it may still commit to in its direction of travel, computed from the
//! frozen snapshot and everyone's declared intent. Negotiation outcomes
//! never enter here, so belief errors cannot cause contact.

use crate::interaction::{
    body_clearance, forward_reach, is_committed, Agent, Intent, InteractionParams,
};
use crate::road::{ConflictKind, RoadScene};
use crate::vehicle::{commitment, KinematicLimits, VehicleId};

/// Vehicles farther than this before their entrance cannot interact with
/// conflicting traffic within one braking distance.
pub const NEAR_M: f64 = 50.0;

#[derive(Debug, Clone, Copy)]
pub struct Body {
    pub id: VehicleId,
    pub path: usize,
    pub s: f64,
    pub rear: f64,
    pub v: f64,
    pub intent: Intent,
    pub pulled_aside: bool,
    pub near: bool,
    /// Furthest the front may get before it could come to rest.
    pub front_max: f64,
    /// Furthest back the rear may get before it could come to rest.
    pub rear_min: f64,
}

pub struct Snapshot<'a> {
    pub scene: &'a RoadScene,
    pub ip: &'a InteractionParams,
    pub lim: &'a KinematicLimits,
    pub dt: f64,
    pub bodies: Vec<Body>,
    pub leader: Vec<Option<usize>>,
    pub follower: Vec<Option<usize>>,
    pub near: Vec<usize>,
}

fn split(avail: f64, mine: f64, theirs: f64) -> f64 {
    mine.max((avail / 2.0).min(avail - theirs))
}

impl<'a> Snapshot<'a> {
    pub fn build(
        scene: &'a RoadScene,
        agents: &[Agent],
        intents: &[Intent],
        ip: &'a InteractionParams,
        lim: &'a KinematicLimits,
        dt: f64,
    ) -> Self {
        let (a, b) = (lim.accel_mps2, lim.decel_mps2);
        let bodies: Vec<Body> = agents
            .iter()
            .zip(intents)
            .map(|(ag, &intent)| {
                let v = &ag.vehicle;
                let near = scene
                    .section_of(v.path)
                    .is_some_and(|(_, e)| v.s >= e.entrance - NEAR_M && v.rear() < e.exit);
                let back = match intent {
                    Intent::Backward(target) => {
                        let w = (-v.v).max(0.0);
                        let w2 = (w + a * dt).min(lim.back_speed_mps.max(w));
                        (w2 * dt + commitment(w2, b, dt)).min((v.s - target).max(commitment(w, b, dt)))
                    }
                    _ => commitment((-v.v).max(0.0), b, dt),
                };
                Body {
                    id: v.id,
                    path: v.path,
                    s: v.s,
                    rear: v.rear(),
                    v: v.v,
                    intent,
                    pulled_aside: ag.pulled_aside,
                    near,
                    front_max: forward_reach(v, intent, lim, dt),
                    rear_min: v.rear() - back,
                }
            })
            .collect();
        let n = bodies.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| {
            bodies[x]
                .path
                .cmp(&bodies[y].path)
                .then(bodies[x].s.total_cmp(&bodies[y].s))
                .then(bodies[x].id.cmp(&bodies[y].id))
        });
        let mut leader = vec![None; n];
        let mut follower = vec![None; n];
        for w in order.windows(2) {
            let (f, l) = (w[0], w[1]);
            if bodies[f].path == bodies[l].path {
                leader[f] = Some(l);
                follower[l] = Some(f);
            }
        }
        let near = (0..n).filter(|&i| bodies[i].near).collect();
        Snapshot {
            scene,
            ip,
            lim,
            dt,
            bodies,
            leader,
            follower,
            near,
        }
    }

    fn commit(&self, speed: f64) -> f64 {
        commitment(speed.max(0.0), self.lim.decel_mps2, self.dt)
    }

    fn credit(&self, speed_away: f64) -> f64 {
        let w = speed_away.max(0.0);
        (w * w / (2.0 * self.lim.decel_mps2) - w * self.dt).max(0.0)
    }

    /// `(occupies, in_play, committed)` of `j` for a crossing zone centred at
    /// `at` on its own path.
    fn zone_status(&self, j: &Body, at: f64) -> (bool, bool, bool) {
        let hw = self.ip.zone_half_width_m;
        let (lo, hi) = (at - hw, at + hw);
        let occupies = j.s > lo + 1e-9 && j.rear < hi - 1e-9;
        if occupies {
            return (true, true, true);
        }
        let in_play = j.front_max > lo + 1e-9 && j.rear_min < hi - 1e-9;
        let committed = if j.s <= lo + 1e-9 {
            j.v > 0.0 && is_committed(j.v, lo - j.s, self.lim, self.dt)
        } else {
            j.v < 0.0 && is_committed(-j.v, j.rear - hi, self.lim, self.dt)
        };
        (false, in_play, committed)
    }

    fn conflicting(&self, i: usize) -> impl Iterator<Item = (usize, ConflictKind)> + '_ {
        let bi = self.bodies[i];
        let active = bi.near && !bi.pulled_aside;
        self.near
            .iter()
            .copied()
            .filter(move |&j| active && j != i && !self.bodies[j].pulled_aside && self.bodies[j].path != bi.path)
            .filter_map(move |j| self.scene.conflict(bi.path, self.bodies[j].path).map(|c| (j, c.kind)))
    }

    /// Distance vehicle `i` may commit to moving forward.
    pub fn forward_room(&self, i: usize) -> f64 {
        let bi = &self.bodies[i];
        let gap = self.ip.min_gap_m;
        let mine = self.commit(bi.v);
        let mut room = f64::INFINITY;
        if let Some(l) = self.leader[i] {
            let bj = &self.bodies[l];
            let avail = (bj.rear - bi.s) - gap;
            let toward = bj.v < 0.0 || matches!(bj.intent, Intent::Backward(_));
            room = room.min(if toward {
                split(avail, mine, self.commit(-bj.v))
            } else {
                avail + self.credit(bj.v)
            });
        }
        for (j, kind) in self.conflicting(i) {
            let bj = &self.bodies[j];
            match kind {
                ConflictKind::Shared { a_lo, a_hi, b_lo, b_hi } => {
                    if bi.s >= a_hi || bj.rear >= b_hi {
                        continue;
                    }
                    if bj.s <= b_lo && bj.front_max < b_lo {
                        continue;
                    }
                    // Same projection as `facing_face`.
                    let face = (a_hi - (bj.s - b_lo)).max(a_lo);
                    let avail = face - bi.s - gap;
                    let toward = bj.v > 0.0 || matches!(bj.intent, Intent::Forward(_));
                    room = room.min(if toward {
                        split(avail, mine, self.commit(bj.v))
                    } else {
                        avail + self.credit(-bj.v)
                    });
                }
                ConflictKind::Crossing { a_at, b_at } => {
                    let lo = a_at - self.ip.zone_half_width_m;
                    if bi.s > lo + 1e-9 {
                        continue;
                    }
                    let (occ, play, committed) = self.zone_status(bj, b_at);
                    let i_committed = bi.v > 0.0 && is_committed(bi.v, lo - bi.s, self.lim, self.dt);
                    if occ || play && (committed || !i_committed && bj.id < bi.id) {
                        room = room.min(lo - bi.s);
                    }
                }
            }
        }
        room
    }

    /// Distance vehicle `i` may commit to moving backward.
    pub fn backward_room(&self, i: usize) -> f64 {
        let bi = &self.bodies[i];
        let gap = self.ip.min_gap_m;
        let mine = self.commit(-bi.v);
        // The road continues upstream of where paths begin.
        let mut room = f64::INFINITY;
        if let Some(f) = self.follower[i] {
            let bk = &self.bodies[f];
            let avail = (bi.rear - bk.s) - gap;
            let toward = bk.v > 0.0 || matches!(bk.intent, Intent::Forward(_));
            room = room.min(if toward {
                split(avail, mine, self.commit(bk.v))
            } else {
                avail + self.credit(-bk.v)
            });
        }
        for (j, kind) in self.conflicting(i) {
            if let ConflictKind::Crossing { a_at, b_at } = kind {
                let hi = a_at + self.ip.zone_half_width_m;
                if bi.rear < hi - 1e-9 {
                    continue;
                }
                let bj = &self.bodies[j];
                let (occ, play, committed) = self.zone_status(bj, b_at);
                let i_committed = bi.v < 0.0 && is_committed(-bi.v, bi.rear - hi, self.lim, self.dt);
                if occ || play && (committed || !i_committed && bj.id < bi.id) {
                    room = room.min(bi.rear - hi);
                }
            }
        }
        room
    }
}

/// First pair of bodies closer than the collision gap, if any.
pub fn find_collision(
    scene: &RoadScene,
    agents: &[Agent],
    ip: &InteractionParams,
) -> Option<(VehicleId, VehicleId, f64)> {
    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by(|&x, &y| {
        let (a, b) = (&agents[x].vehicle, &agents[y].vehicle);
        a.path.cmp(&b.path).then(a.s.total_cmp(&b.s)).then(a.id.cmp(&b.id))
    });
    for w in order.windows(2) {
        let (f, l) = (&agents[w[0]].vehicle, &agents[w[1]].vehicle);
        if f.path == l.path {
            let c = l.rear() - f.s;
            if c < ip.collision_gap_m {
                return Some((f.id.min(l.id), f.id.max(l.id), c));
            }
        }
    }
    let near: Vec<usize> = (0..agents.len())
        .filter(|&i| {
            let v = &agents[i].vehicle;
            !agents[i].pulled_aside
                && scene
                    .section_of(v.path)
                    .is_some_and(|(_, e)| v.s >= e.entrance - 1.0 && v.rear() < e.exit)
        })
        .collect();
    for (k, &i) in near.iter().enumerate() {
        for &j in &near[k + 1..] {
            if agents[i].vehicle.path == agents[j].vehicle.path {
                continue;
            }
            if let Some(c) = body_clearance(scene, &agents[i], &agents[j], ip.zone_half_width_m) {
                if c < ip.collision_gap_m {
                    let (a, b) = (agents[i].id(), agents[j].id());
                    return Some((a.min(b), a.max(b), c));
                }
            }
        }
    }
    None
}
