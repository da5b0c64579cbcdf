//! The tick loop: spawn, detect state events, run the protocol engine,
//! exchange beacons, command, constrain, move, check and retire.

use super::config::SimConfig;
use super::metrics::{mean, summarize_trips, RunResult, TripRecord};
use super::safety::{find_collision, Snapshot};
use super::traffic::{ArrivalStream, PendingSpawn, SpawnQueues};
use super::SimError;
use crate::channel::{Beacon, Channel, Station};
use crate::engine::{Engine, EventLog, Protocol, Record, StepContext};
use crate::geometry::Point;
use crate::interaction::{is_claim, is_committed, passing_through, Agent, Intent};
use crate::road::{PathId, RoadScene};
use crate::vehicle::{
    advance, safe_speed, Event, KinematicLimits, MotionCommand, Vehicle, VehicleId, VehicleState, SNAP_M,
};

/// Extra clearance kept between vehicles backing up in a chain.
pub const CHAIN_MARGIN_M: f64 = 0.5;
/// A vehicle at rest this close before its stop line has arrived there.
pub const ARRIVAL_TOLERANCE_M: f64 = 0.5;
/// Headway a lower-priority vehicle keeps ahead of higher-priority traffic.
pub const GAP_MARGIN_S: f64 = 1.0;

/// One transmitted frame, for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct BeaconFrame {
    pub t: f64,
    pub sender: VehicleId,
    pub hex: String,
}

pub struct World {
    pub cfg: SimConfig,
    pub scene: RoadScene,
    /// Vehicles on the road, sorted by id.
    pub agents: Vec<Agent>,
    pub channel: Channel,
    pub engine: Engine,
    /// Trip of every scheduled vehicle, indexed by id.
    pub trips: Vec<TripRecord>,
    pub beacon_frames: Option<Vec<BeaconFrame>>,
    limits: KinematicLimits,
    streams: Vec<ArrivalStream>,
    pending: SpawnQueues,
    /// Scripted vehicles not yet due, as `(spawn_t, script index)`.
    scripts: Vec<(f64, usize)>,
    tick: u64,
    ticks_per_beacon: u64,
    next_id: VehicleId,
}

impl World {
    pub fn new(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let scene = cfg.scene.build(None)?;
        let limits = cfg.vehicle.limits();
        let mut streams = Vec::new();
        for p in &scene.paths {
            let fed = cfg.traffic.paths.is_empty() || cfg.traffic.paths.contains(&p.name);
            if fed {
                if let Some(s) = ArrivalStream::new(cfg.seed, p.id, cfg.traffic.vph, cfg.traffic.mix.clone()) {
                    streams.push(s);
                }
            }
        }
        let mut scripts: Vec<(f64, usize)> = cfg.vehicles.iter().enumerate().map(|(k, v)| (v.spawn_t, k)).collect();
        scripts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        let mut w = World {
            cfg: cfg.clone(),
            channel: Channel::new(cfg.channel, cfg.seed),
            engine: Engine::new(cfg.protocol, cfg.engine, cfg.cost, cfg.seed, cfg.channel.interval()),
            pending: SpawnQueues::new(scene.paths.len()),
            scene,
            agents: Vec::new(),
            trips: Vec::new(),
            beacon_frames: None,
            limits,
            streams,
            scripts,
            tick: 0,
            ticks_per_beacon: cfg.ticks_per_beacon().expect("validated"),
            next_id: 0,
        };
        // Scripted vehicles take the first ids, in file order.
        for k in 0..cfg.vehicles.len() {
            let sv = &cfg.vehicles[k];
            let path = w.scene.path_by_name(&sv.path).expect("validated").id;
            let s0 = sv.s.unwrap_or(cfg.vehicle.length_m);
            w.schedule(path, sv.spawn_t, sv.kind, s0);
        }
        Ok(w)
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.cfg.dt
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn record_beacons(&mut self) {
        self.beacon_frames.get_or_insert_with(Vec::new);
    }

    pub fn agent(&self, id: VehicleId) -> Option<&Agent> {
        self.agents
            .binary_search_by_key(&id, |a| a.id())
            .ok()
            .map(|i| &self.agents[i])
    }

    fn schedule(&mut self, path: PathId, t: f64, kind: crate::vehicle::VehicleKind, s0: f64) -> VehicleId {
        let id = self.next_id;
        self.next_id += 1;
        let len = self.scene.paths[path].length();
        self.trips.push(TripRecord {
            vehicle: id,
            kind,
            path,
            spawn_t: t,
            start_point_t: t,
            end_point_t: None,
            free_flow_s: (len - s0) / self.limits.cruise_mps,
        });
        id
    }

    fn desired_speed(&self) -> f64 {
        self.limits.cruise_mps.min(self.scene.speed_limit)
    }

    /// Entry speed for a vehicle placed at `s` on `path`, or `None` while
    /// the spot is taken.
    fn entry_speed(&self, path: PathId, s: f64, length: f64, wanted: f64) -> Option<f64> {
        let gap = self.cfg.interaction.min_gap_m;
        let b = self.limits.decel_mps2;
        let dt = self.cfg.dt;
        let mut speed = wanted;
        for a in &self.agents {
            let v = &a.vehicle;
            if v.path != path {
                continue;
            }
            if v.s >= s {
                let room = v.rear() - s - gap;
                if (room < CHAIN_MARGIN_M || v.v < 0.0)
                    && room < CHAIN_MARGIN_M + 4.0 * gap {
                        return None;
                    }
                let credit = (v.v.max(0.0).powi(2) / (2.0 * b) - v.v.max(0.0) * dt).max(0.0);
                speed = speed.min(safe_speed(room + credit, b, dt));
            } else if s - length - v.s < gap + CHAIN_MARGIN_M || v.rear() < 0.0 {
                return None;
            }
        }
        Some(speed.max(0.0))
    }

    fn spawn(&mut self, now: f64) {
        let until = self.cfg.duration_s;
        for k in 0..self.streams.len() {
            let path = self.streams[k].path;
            for (t, kind) in self.streams[k].due(now, until) {
                let id = self.schedule(path, t, kind, self.cfg.vehicle.length_m);
                self.pending.queues[path].push_back(PendingSpawn {
                    id,
                    scheduled_t: t,
                    kind,
                    script: None,
                });
            }
        }
        while let Some(&(t, k)) = self.scripts.last() {
            if t > now + 1e-9 {
                break;
            }
            self.scripts.pop();
            let sv = &self.cfg.vehicles[k];
            let path = self.scene.path_by_name(&sv.path).expect("validated").id;
            self.pending.queues[path].push_back(PendingSpawn {
                id: k as VehicleId,
                scheduled_t: t,
                kind: sv.kind,
                script: Some(k),
            });
        }
        let length = self.cfg.vehicle.length_m;
        for path in 0..self.pending.queues.len() {
            while let Some(p) = self.pending.queues[path].front().cloned() {
                let (s0, wanted, failure) = match p.script {
                    Some(k) => {
                        let sv = &self.cfg.vehicles[k];
                        (sv.s.unwrap_or(length), sv.speed.unwrap_or(self.desired_speed()), sv.failure)
                    }
                    None => (length, self.desired_speed(), Default::default()),
                };
                let Some(speed) = self.entry_speed(path, s0, length, wanted) else {
                    break;
                };
                self.pending.queues[path].pop_front();
                let id = p.id;
                let mut v = Vehicle::new(id, p.kind, path, s0, length);
                v.v = speed;
                v.failure = failure;
                let mut a = Agent::new(v);
                a.go = true;
                let at = self.agents.partition_point(|x| x.id() < id);
                self.agents.insert(at, a);
            }
        }
    }

    fn state_events(&mut self, now: f64) -> Result<(), SimError> {
        let radius = self.scene.approach_radius;
        // Forget yielded-to vehicles once they are gone or past the section.
        let uncleared: Vec<VehicleId> = self
            .agents
            .iter()
            .filter(|j| {
                let v = &j.vehicle;
                self.scene.section_of(v.path).is_some_and(|(_, e)| v.rear() < e.exit)
            })
            .map(Agent::id)
            .collect();
        for a in &mut self.agents {
            a.yield_to.retain(|id| uncleared.binary_search(id).is_ok());
        }
        for a in &mut self.agents {
            let Some((_, e)) = self.scene.section_of(a.vehicle.path) else {
                continue;
            };
            let e = *e;
            let v = &mut a.vehicle;
            let at_rest = v.v == 0.0;
            match v.state {
                VehicleState::NotAroundIntersection => {
                    if v.s >= e.stop_line - radius && v.s <= e.entrance + 1e-9 {
                        v.apply(Event::EnterApproachZone)?;
                    }
                }
                VehicleState::Approach => {
                    if at_rest && v.s >= e.stop_line - ARRIVAL_TOLERANCE_M && v.rear() < e.exit {
                        v.apply(Event::ArriveStopLine)?;
                        a.arrived_at.get_or_insert(now);
                    }
                }
                VehicleState::Crossing => {
                    if v.rear() >= e.exit {
                        v.apply(Event::ExitSection)?;
                        a.granted = false;
                        a.arrived_at = None;
                    }
                }
                VehicleState::Yielding => {
                    if let Some(evac) = a.evacuation {
                        let target = a.recede_to.map_or(evac.position, |t| t.min(evac.position));
                        if at_rest && v.s <= target + SNAP_M {
                            v.apply(Event::ReachEvacuation)?;
                            a.pulled_aside = evac.passing_place.is_some() && v.s >= evac.position - SNAP_M;
                            a.evacuation = None;
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn beacon_round(&mut self, now: f64) -> Result<(), SimError> {
        let mut stations = Vec::new();
        for a in &self.agents {
            let v = &a.vehicle;
            if !v.kind.is_connected() {
                continue;
            }
            let path = &self.scene.paths[v.path];
            let len = path.length();
            let truth = path.pose_at(v.s.clamp(0.0, len))?;
            let believed = path.pose_at((v.s + v.failure.localization_offset_m).clamp(0.0, len))?;
            let (rho, chi, r) = self.engine.payload(a);
            stations.push(Station {
                kind: v.kind,
                position: truth.position,
                loss_override: v.failure.packet_loss_override,
                beacon: Beacon {
                    sender: v.id,
                    timestamp: now,
                    position: believed.position,
                    heading: believed.heading,
                    velocity: v.v,
                    state: v.state,
                    rho,
                    chi,
                    r,
                    hv_flag: v.hv_flag,
                },
            });
        }
        self.channel.broadcast_step(&stations, now)?;
        if let Some(frames) = &mut self.beacon_frames {
            for st in &stations {
                if let Some(f) = self.channel.last_frame(st.beacon.sender) {
                    frames.push(BeaconFrame {
                        t: now,
                        sender: st.beacon.sender,
                        hex: crate::channel::to_hex(f),
                    });
                }
            }
        }
        Ok(())
    }

    fn commands(&mut self, now: f64) -> Result<Vec<MotionCommand>, SimError> {
        let scene = &self.scene;
        let lim = self.limits;
        let dt = self.cfg.dt;
        let range = self.cfg.engine.sensor_range_m;
        let tie = self.cfg.engine.fcfs_tie_s;
        let desired = self.desired_speed();
        let lane_priority = self.cfg.protocol == Protocol::LanePriority;
        let n = self.agents.len();
        let claims: Vec<bool> = self.agents.iter().map(|a| is_claim(scene, a, &lim, dt)).collect();
        let watch: Vec<Option<Point>> = self
            .agents
            .iter()
            .map(|a| {
                let v = &a.vehicle;
                let near = scene
                    .section_of(v.path)
                    .is_some_and(|(_, e)| v.s >= e.stop_line - range && v.rear() < e.exit);
                near.then(|| crate::perception::position_of(v, scene).ok()).flatten()
            })
            .collect();
        let mut cmds = Vec::with_capacity(n);
        let mut go = vec![false; n];
        let mut enter = vec![false; n];
        for i in 0..n {
            let a = &self.agents[i];
            let v = &a.vehicle;
            let cmd = match v.state {
                VehicleState::InDeadlock => MotionCommand::Hold,
                VehicleState::Yielding => MotionCommand::Recede {
                    speed: lim.back_speed_mps,
                    target: a.evacuation.map_or(v.s, |e| e.position),
                },
                VehicleState::Crossing => {
                    go[i] = true;
                    MotionCommand::Proceed { target_speed: desired }
                }
                VehicleState::NotAroundIntersection | VehicleState::Approach | VehicleState::Wait => {
                    let entry = scene.section_of(v.path);
                    match (entry, watch[i]) {
                        (Some((sid, e)), Some(me)) if !(v.state == VehicleState::NotAroundIntersection && v.s > e.entrance) => {
                            let all_way = scene.sections[sid].all_way_stop;
                            let connected = v.kind.is_connected();
                            let clear_s = (e.exit - v.rear()) / desired
                                + (desired - v.v).max(0.0) / (2.0 * lim.accel_mps2)
                                + GAP_MARGIN_S;
                            let mut blocked = a.yield_to.iter().any(|&id| {
                                self.agents
                                    .binary_search_by_key(&id, Agent::id)
                                    .is_ok_and(|k| passing_through(scene, &self.agents[k]))
                            });
                            for j in 0..n {
                                if blocked {
                                    break;
                                }
                                if j == i {
                                    continue;
                                }
                                let b = &self.agents[j];
                                if b.vehicle.path == v.path || scene.conflict(v.path, b.vehicle.path).is_none() {
                                    continue;
                                }
                                let sensed = watch[j].is_some_and(|pj| pj.dist(me) <= range);
                                // Lower-priority lanes give way to any known higher-priority
                                // vehicle due at the section before they could clear it.
                                if lane_priority
                                    && !all_way
                                    && !b.pulled_aside
                                    && (sensed || connected && self.channel.hears(v.id, b.id(), now))
                                    && scene.path(b.vehicle.path)?.priority > scene.path(v.path)?.priority
                                {
                                    if let Some((_, eb)) = scene.section_of(b.vehicle.path) {
                                        let ahead = eb.entrance - b.vehicle.s;
                                        if ahead >= 0.0 && ahead / desired < clear_s {
                                            blocked = true;
                                            break;
                                        }
                                    }
                                }
                                if !sensed {
                                    continue;
                                }
                                if claims[j] {
                                    blocked = true;
                                    break;
                                }
                                if all_way && b.vehicle.state == VehicleState::Wait && !b.pulled_aside {
                                    if let (Some(ti), Some(tj)) = (a.arrived_at, b.arrived_at) {
                                        if tj <= ti + tie {
                                            blocked = true;
                                            break;
                                        }
                                    }
                                }
                            }
                            if all_way && !(v.state == VehicleState::Wait && a.arrived_at.is_some()) {
                                blocked = true;
                            }
                            let mut g = !blocked;
                            if !g && a.go && v.v > 0.0 && is_committed(v.v, e.entrance - v.s, &lim, dt) {
                                g = true;
                            }
                            go[i] = g;
                            enter[i] = g && v.s > e.entrance && v.state != VehicleState::NotAroundIntersection;
                            if g {
                                MotionCommand::Proceed { target_speed: desired }
                            } else {
                                MotionCommand::StopAt { line: e.stop_line }
                            }
                        }
                        _ => {
                            go[i] = true;
                            MotionCommand::Proceed { target_speed: desired }
                        }
                    }
                }
            };
            cmds.push(cmd);
        }
        for i in 0..n {
            let a = &mut self.agents[i];
            a.go = go[i];
            if go[i] && a.pulled_aside && a.vehicle.state == VehicleState::Wait {
                a.pulled_aside = false;
            }
            if enter[i] {
                a.vehicle.apply(Event::EnterSection)?;
            }
        }
        self.make_room(&mut cmds);
        Ok(cmds)
    }

    /// Vehicles queued behind one that backs up back up with it, each
    /// stopping a car length plus margin behind the one ahead.
    fn make_room(&mut self, cmds: &mut [MotionCommand]) {
        let n = self.agents.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| {
            let (a, b) = (&self.agents[x].vehicle, &self.agents[y].vehicle);
            a.path.cmp(&b.path).then(b.s.total_cmp(&a.s)).then(a.id.cmp(&b.id))
        });
        let spacing = self.cfg.interaction.min_gap_m + CHAIN_MARGIN_M;
        let back = self.limits.back_speed_mps;
        let mut required: Option<f64> = None;
        let mut last_path = usize::MAX;
        for &k in &order {
            let a = &mut self.agents[k];
            let v = &a.vehicle;
            if v.path != last_path {
                required = None;
                last_path = v.path;
            }
            if let Some(req) = required {
                if v.state != VehicleState::InDeadlock {
                    if v.s > req + SNAP_M {
                        let target = match cmds[k] {
                            MotionCommand::Recede { target, .. } => target.min(req),
                            _ => req,
                        };
                        cmds[k] = MotionCommand::Recede { speed: back, target };
                        a.go = false;
                    } else if matches!(cmds[k], MotionCommand::Proceed { .. } | MotionCommand::StopAt { .. }) {
                        cmds[k] = MotionCommand::Hold;
                        a.go = false;
                    }
                }
            }
            a.recede_to = match cmds[k] {
                MotionCommand::Recede { target, .. } => Some(target),
                _ => None,
            };
            required = match cmds[k] {
                MotionCommand::Recede { target, .. } if target < v.s - SNAP_M => Some(target - v.length - spacing),
                _ => None,
            };
        }
    }

    /// Advance the world by one tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        let now = self.time();
        let dt = self.cfg.dt;
        self.spawn(now);
        self.state_events(now)?;
        {
            let ctx = StepContext {
                scene: &self.scene,
                channel: &self.channel,
                now,
                dt,
                limits: &self.limits,
                interaction: &self.cfg.interaction,
            };
            self.engine.step(&mut self.agents, &ctx)?;
        }
        if self.tick.is_multiple_of(self.ticks_per_beacon) {
            self.beacon_round(now)?;
        }
        let cmds = self.commands(now)?;
        let intents: Vec<Intent> = cmds
            .iter()
            .zip(&self.agents)
            .map(|(c, a)| Intent::of(c, &a.vehicle))
            .collect();
        let rooms: Vec<f64> = {
            let snap = Snapshot::build(&self.scene, &self.agents, &intents, &self.cfg.interaction, &self.limits, dt);
            (0..self.agents.len())
                .map(|i| match intents[i] {
                    Intent::Backward(_) => snap.backward_room(i),
                    _ => snap.forward_room(i),
                })
                .collect()
        };
        let before: Vec<f64> = self.agents.iter().map(|a| a.vehicle.s).collect();
        for (i, a) in self.agents.iter_mut().enumerate() {
            advance(&mut a.vehicle, cmds[i], dt, &self.limits, rooms[i], (f64::NEG_INFINITY, f64::INFINITY))?;
        }
        let t1 = now + dt;
        if let Some((a, b, clearance)) = find_collision(&self.scene, &self.agents, &self.cfg.interaction) {
            self.engine.log.push(Record::Collision { t: t1, a, b, clearance });
            return Err(SimError::SafetyViolation { t: t1, a, b, clearance });
        }
        let mut kept = Vec::with_capacity(self.agents.len());
        for (a, &s0) in std::mem::take(&mut self.agents).into_iter().zip(&before) {
            let v = &a.vehicle;
            let len = self.scene.paths[v.path].length();
            if v.s < len {
                kept.push(a);
                continue;
            }
            let frac = if v.s > s0 { (len - s0) / (v.s - s0) } else { 1.0 };
            self.trips[v.id as usize].end_point_t = Some(now + dt * frac.clamp(0.0, 1.0));
            self.channel.forget(v.id);
            self.engine.forget(v.id);
        }
        self.agents = kept;
        for a in &mut self.agents {
            if a.vehicle.v == 0.0 {
                a.stopped_since.get_or_insert(t1);
            } else {
                a.stopped_since = None;
            }
        }
        self.tick += 1;
        Ok(())
    }

    /// Vehicles scheduled but not yet on the road.
    pub fn pending(&self) -> usize {
        self.pending.len() + self.scripts.len()
    }

    /// Run to the horizon, then drain until every vehicle has finished or
    /// the drain cap is hit.
    pub fn run_to_end(&mut self) -> Result<RunResult, SimError> {
        let horizon = self.cfg.duration_s;
        let cap = horizon + self.cfg.drain_cap_s;
        while self.time() < horizon - 1e-9 {
            self.step()?;
        }
        while (!self.agents.is_empty() || self.pending() > 0) && self.time() < cap - 1e-9 {
            self.step()?;
        }
        Ok(self.result())
    }

    pub fn result(&self) -> RunResult {
        let window_end = self.cfg.duration_s;
        let window_start = window_end - self.cfg.scoring_window_s;
        let (delays, scored, incomplete) = summarize_trips(&self.trips, window_start, window_end);
        let cases = self.engine.all_cases();
        let resolution_times: Vec<f64> = cases
            .iter()
            .filter_map(|c| c.resolved_at.map(|r| r - c.detected_at))
            .collect();
        let completed = self.trips.iter().filter(|r| r.end_point_t.is_some()).count();
        RunResult {
            protocol: self.cfg.protocol,
            seed: self.cfg.seed,
            average_trip_delay_s: mean(delays.iter().map(|d| d.1)),
            worst_trip_delay_s: delays.iter().map(|d| d.1).fold(0.0, f64::max),
            delays,
            scored,
            incomplete_scored: incomplete,
            spawned: self.trips.len() - self.pending(),
            completed,
            in_flight: self.agents.len(),
            never_entered: self.pending(),
            deadlocks: cases.len(),
            mean_resolution_s: mean(resolution_times.iter().copied()),
            resolution_times,
            unresolved_cases: self.engine.open_cases().filter(|c| c.resolution.is_none()).count(),
            cases,
            collisions: 0,
            end_t: self.time(),
        }
    }

    pub fn event_log(&self) -> &EventLog {
        &self.engine.log
    }
}
