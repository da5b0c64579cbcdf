//! The protocol engine: finds deadlocks, freezes each member's ranking
//! inputs, picks the operating mode and drives members to a resolution.

pub mod case;
pub mod graph;
pub mod log;
pub mod negotiate;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use case::{DeadlockCase, Frozen, Mode, Resolution};
pub use graph::{build_wait_graph, detect_deadlocks, DetectedCycle, WaitForGraph};
pub use log::{EventLog, Record};
pub use negotiate::{
    baseline_lane_priority, negotiate_v2v, update_hv_flag, wait_out_threshold, Decision, Opponent, V2vOutcome,
};

use crate::channel::Channel;
use crate::cost::{
    threshold_wait, yielding_cost_comm, yielding_cost_perception, Contender, CostInputs, CostParams,
};
use crate::interaction::{is_claim, obstructs, Agent, InteractionParams};
use crate::perception::{
    classify_connected, count_followers, follower_presence, motion_class, position_of, sense,
};
use crate::road::{Evacuation, RoadError, RoadScene};
use crate::vehicle::{
    believed_localization_state, Event, KinematicLimits, VehicleError, VehicleId, VehicleKind, VehicleState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    #[serde(rename = "adrive")]
    ADrive,
    LanePriority,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::ADrive => "adrive",
            Protocol::LanePriority => "lane-priority",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adrive" | "a-drive" => Ok(Protocol::ADrive),
            "lane-priority" | "baseline" => Ok(Protocol::LanePriority),
            other => Err(format!("unknown protocol {other:?} (expected adrive or lane-priority)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineParams {
    /// Stationary time before a mutual wait counts as a deadlock.
    pub t_wait_detect_s: f64,
    /// Arrivals at an all-way stop closer than this count as simultaneous.
    pub fcfs_tie_s: f64,
    pub sensor_range_m: f64,
    /// How far back followers are counted for the yielding cost.
    pub follower_range_m: f64,
    /// Patience of a human driver before backing off.
    pub human_patience_s: f64,
    /// Backing distance after which an opponent counts as having yielded.
    pub recede_margin_m: f64,
    /// Backing distance of a yielder that already stands clear.
    pub courtesy_backoff_m: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        EngineParams {
            t_wait_detect_s: 3.0,
            fcfs_tie_s: 0.5,
            sensor_range_m: 80.0,
            follower_range_m: 80.0,
            human_patience_s: 10.0,
            recede_margin_m: 0.5,
            courtesy_backoff_m: 1.0,
        }
    }
}

impl EngineParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("t_wait_detect_s", self.t_wait_detect_s),
            ("sensor_range_m", self.sensor_range_m),
            ("follower_range_m", self.follower_range_m),
            ("human_patience_s", self.human_patience_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("engine {name} must be positive"));
            }
        }
        let non_negative = [
            ("fcfs_tie_s", self.fcfs_tie_s),
            ("recede_margin_m", self.recede_margin_m),
            ("courtesy_backoff_m", self.courtesy_backoff_m),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("engine {name} must be non-negative"));
            }
        }
        if self.courtesy_backoff_m <= self.recede_margin_m {
            return Err("courtesy_backoff_m must exceed recede_margin_m".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Road(#[from] RoadError),
}

/// Read-only world context for one engine step.
pub struct StepContext<'a> {
    pub scene: &'a RoadScene,
    pub channel: &'a Channel,
    pub now: f64,
    pub dt: f64,
    pub limits: &'a KinematicLimits,
    pub interaction: &'a InteractionParams,
}

/// Summary of a finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub id: u32,
    pub mode: Mode,
    pub members: usize,
    pub detected_at: f64,
    pub resolved_at: Option<f64>,
    pub closed_at: Option<f64>,
    pub bound_s: f64,
}

impl CaseSummary {
    /// Closed no later than `factor` times its bound after detection.
    pub fn within_bound(&self, factor: f64) -> bool {
        self.closed_at.is_some_and(|t| t - self.detected_at <= factor * self.bound_s)
    }
}

impl From<&DeadlockCase> for CaseSummary {
    fn from(c: &DeadlockCase) -> Self {
        CaseSummary {
            id: c.id,
            mode: c.mode,
            members: c.negotiators.len() + c.chained.len(),
            detected_at: c.detected_at,
            resolved_at: c.resolution.as_ref().map(|r| r.resolved_at),
            closed_at: c.closed_at,
            bound_s: c.bound_s,
        }
    }
}

pub struct Engine {
    pub protocol: Protocol,
    pub params: EngineParams,
    pub cost: CostParams,
    seed: u64,
    beacon_interval: f64,
    rngs: HashMap<VehicleId, ChaCha8Rng>,
    open: BTreeMap<u32, DeadlockCase>,
    closed: Vec<CaseSummary>,
    next_case: u32,
    pub log: EventLog,
}

fn index_of(agents: &[Agent], id: VehicleId) -> Option<usize> {
    agents.binary_search_by_key(&id, |a| a.id()).ok()
}

impl Engine {
    pub fn new(protocol: Protocol, params: EngineParams, cost: CostParams, seed: u64, beacon_interval: f64) -> Self {
        Engine {
            protocol,
            params,
            cost,
            seed,
            beacon_interval,
            rngs: HashMap::new(),
            open: BTreeMap::new(),
            closed: Vec::new(),
            next_case: 0,
            log: EventLog::default(),
        }
    }

    pub fn open_cases(&self) -> impl Iterator<Item = &DeadlockCase> {
        self.open.values()
    }

    pub fn closed_cases(&self) -> &[CaseSummary] {
        &self.closed
    }

    /// Every episode so far, finished or not, in detection order.
    pub fn all_cases(&self) -> Vec<CaseSummary> {
        let mut v: Vec<CaseSummary> = self.closed.clone();
        v.extend(self.open.values().map(CaseSummary::from));
        v.sort_by_key(|c| c.id);
        v
    }

    /// Drop per-vehicle state of a vehicle that left the simulation.
    pub fn forget(&mut self, id: VehicleId) {
        self.rngs.remove(&id);
    }

    /// A fresh uniform draw from the vehicle's own stream.
    fn draw_r(&mut self, id: VehicleId) -> f64 {
        let seed = self.seed;
        self.rngs
            .entry(id)
            .or_insert_with(|| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(1000 + u64::from(id));
                r
            })
            .random::<f64>()
    }

    /// `(ρ, χ, R)` the vehicle currently broadcasts.
    pub fn payload(&self, agent: &Agent) -> (bool, f64, f64) {
        let v = &agent.vehicle;
        if let Some(f) = agent.case.and_then(|c| self.open.get(&c)).and_then(|c| c.frozen.get(&v.id)) {
            return (f.rho, f.chi_comm, f.r);
        }
        (v.rho, 0.0, v.r)
    }

    pub fn step(&mut self, agents: &mut [Agent], ctx: &StepContext) -> Result<(), EngineError> {
        self.detect(agents, ctx)?;
        let ids: Vec<u32> = self.open.keys().copied().collect();
        for id in ids {
            let mut case = self.open.remove(&id).expect("open case");
            self.advance_case(&mut case, agents, ctx)?;
            let still_waiting = case
                .members()
                .filter_map(|m| index_of(agents, m))
                .any(|i| agents[i].vehicle.state == VehicleState::InDeadlock);
            if still_waiting {
                self.open.insert(id, case);
            } else {
                case.closed_at = Some(ctx.now);
                for m in case.members() {
                    if let Some(i) = index_of(agents, m) {
                        agents[i].case = None;
                        agents[i].vehicle.hv_flag = false;
                    }
                }
                self.log.push(Record::Closed { t: ctx.now, case: id });
                self.closed.push(CaseSummary::from(&case));
            }
        }
        Ok(())
    }

    fn detect(&mut self, agents: &mut [Agent], ctx: &StepContext) -> Result<(), EngineError> {
        let p = self.params;
        let graph = build_wait_graph(
            agents,
            ctx.scene,
            ctx.now,
            p.t_wait_detect_s,
            p.sensor_range_m,
            p.fcfs_tie_s,
            ctx.interaction,
            ctx.limits,
            ctx.dt,
            &|i: &Agent, j: &Agent| {
                i.vehicle.kind.is_connected() && ctx.channel.hears(i.id(), j.id(), ctx.now)
            },
        );
        if graph.edges.is_empty() {
            return Ok(());
        }
        let waits: BTreeMap<VehicleId, f64> = graph
            .nodes
            .iter()
            .filter_map(|&id| index_of(agents, id).map(|i| (id, agents[i].waited(ctx.now))))
            .collect();
        for cycle in detect_deadlocks(&graph, &waits, p.t_wait_detect_s) {
            self.open_case(cycle, agents, ctx)?;
        }
        Ok(())
    }

    fn freeze(&mut self, agents: &[Agent], i: usize, ctx: &StepContext) -> Result<Frozen, EngineError> {
        let v = agents[i].vehicle.clone();
        let scene = ctx.scene;
        let r = self.draw_r(v.id);
        let rho = believed_localization_state(&v, scene)?;
        let len = scene.path(v.path)?.length();
        let believed_s = (v.s + v.failure.localization_offset_m).clamp(0.0, len);
        let d_space = scene.distance_to_evacuation(v.path, believed_s)?;
        let n_f = if v.kind.is_connected() {
            count_followers(&v, &ctx.channel.neighbors(v.id, ctx.now), scene, self.params.follower_range_m)?
        } else {
            0
        };
        let g = follower_presence(&v, agents.iter().map(|a| &a.vehicle), self.params.sensor_range_m);
        let inputs = CostInputs { d_space, n_f, g };
        let chi_comm = yielding_cost_comm(&self.cost, &inputs);
        let chi_perception = yielding_cost_perception(&self.cost, &inputs);
        let delta = if v.kind == VehicleKind::HumanDriven {
            self.params.human_patience_s + self.cost.r_scale * r
        } else {
            threshold_wait(&self.cost, chi_perception, r)
        };
        Ok(Frozen {
            rho,
            chi_comm,
            chi_perception,
            r,
            delta,
            s_at_detect: v.s,
        })
    }

    fn open_case(&mut self, cycle: DetectedCycle, agents: &mut [Agent], ctx: &StepContext) -> Result<(), EngineError> {
        let id = self.next_case;
        self.next_case += 1;
        let now = ctx.now;
        let mut frozen = BTreeMap::new();
        let mut any_unconnected = false;
        let mut max_delta: f64 = 0.0;
        let mut max_d: f64 = 0.0;
        for m in cycle.members() {
            let i = index_of(agents, m).expect("detected member exists");
            let f = self.freeze(agents, i, ctx)?;
            let a = &mut agents[i];
            a.vehicle.apply(Event::DeadlockDetected)?;
            a.vehicle.rho = f.rho;
            a.vehicle.r = f.r;
            a.case = Some(id);
            a.go = false;
            any_unconnected |= !a.vehicle.kind.is_connected();
            if cycle.negotiators.contains(&m) {
                max_delta = max_delta.max(f.delta);
                max_d = max_d.max(ctx.scene.distance_to_evacuation(a.vehicle.path, a.vehicle.s)?);
            }
            frozen.insert(m, f);
        }
        let mode = match self.protocol {
            Protocol::LanePriority => Mode::LanePriority,
            Protocol::ADrive if any_unconnected => Mode::PerceptionThreshold,
            Protocol::ADrive => Mode::V2VNegotiation,
        };
        let lim = ctx.limits;
        let section_len = ctx.scene.sections.iter().map(|s| s.length_m).fold(0.0, f64::max);
        let bound_s = max_delta
            + 2.0 * self.beacon_interval
            + (max_d + self.params.courtesy_backoff_m) / lim.back_speed_mps
            + lim.back_speed_mps / lim.accel_mps2
            + section_len / lim.cruise_mps
            + lim.cruise_mps / lim.accel_mps2;
        self.log.push(Record::Detected {
            t: now,
            case: id,
            negotiators: cycle.negotiators.clone(),
            chained: cycle.chained.clone(),
        });
        self.log.push(Record::Mode { t: now, case: id, mode });
        let mut case = DeadlockCase {
            id,
            negotiators: cycle.negotiators,
            chained: cycle.chained,
            detected_at: now,
            mode,
            frozen,
            agreed: false,
            winners: BTreeSet::new(),
            yielders: BTreeSet::new(),
            resolution: None,
            bound_s,
            closed_at: None,
        };
        if mode == Mode::LanePriority {
            self.decide_baseline(&mut case, agents, ctx)?;
        }
        self.open.insert(id, case);
        Ok(())
    }

    fn advance_case(&mut self, case: &mut DeadlockCase, agents: &mut [Agent], ctx: &StepContext) -> Result<(), EngineError> {
        if self.protocol == Protocol::ADrive && !case.agreed {
            self.update_flags(case, agents, ctx);
        }
        match case.mode {
            Mode::V2VNegotiation if !case.agreed => self.try_agree(case, agents, ctx)?,
            Mode::PerceptionThreshold => self.decide_perception(case, agents, ctx)?,
            _ => {}
        }
        self.resolve_winners(case, agents, ctx)
    }

    fn update_flags(&mut self, case: &mut DeadlockCase, agents: &mut [Agent], ctx: &StepContext) {
        let members: Vec<VehicleId> = case.members().collect();
        let idx: Vec<usize> = members.iter().filter_map(|&m| index_of(agents, m)).collect();
        let mut raised = Vec::new();
        for &i in &idx {
            let me = &agents[i].vehicle;
            if !me.kind.is_connected() || me.hv_flag {
                continue;
            }
            let Ok(observer) = position_of(me, ctx.scene) else {
                continue;
            };
            let others = idx.iter().map(|&j| &agents[j].vehicle);
            let Ok(mut perceived) = sense(me, others, ctx.scene, self.params.sensor_range_m) else {
                continue;
            };
            let beacons = ctx.channel.neighbors(me.id, ctx.now);
            classify_connected(observer, &mut perceived, &beacons, ctx.now);
            let member_beacons: Vec<_> = beacons.into_iter().filter(|b| members.contains(&b.sender)).collect();
            if update_hv_flag(false, &perceived, &member_beacons) {
                raised.push(i);
            }
        }
        for i in raised {
            agents[i].vehicle.hv_flag = true;
            self.log.push(Record::HvFlag {
                t: ctx.now,
                case: case.id,
                vehicle: agents[i].id(),
            });
        }
        let flagged = idx.iter().any(|&i| agents[i].vehicle.hv_flag);
        if flagged && case.mode == Mode::V2VNegotiation {
            case.mode = Mode::PerceptionThreshold;
            self.log.push(Record::Mode {
                t: ctx.now,
                case: case.id,
                mode: case.mode,
            });
        }
    }

    fn try_agree(&mut self, case: &mut DeadlockCase, agents: &mut [Agent], ctx: &StepContext) -> Result<(), EngineError> {
        let neg = &case.negotiators;
        let fresh = |rx: VehicleId, tx: VehicleId| {
            ctx.channel.latest(rx, tx, ctx.now).filter(|b| {
                b.state == VehicleState::InDeadlock && !b.hv_flag && b.timestamp >= case.detected_at - 1e-9
            })
        };
        let all = neg
            .iter()
            .all(|&i| neg.iter().all(|&j| i == j || fresh(i, j).is_some()));
        if !all {
            return Ok(());
        }
        let viewer = neg[0];
        let contenders: Vec<Contender> = neg
            .iter()
            .map(|&j| {
                if j == viewer {
                    let f = &case.frozen[&j];
                    Contender {
                        id: j,
                        rho: f.rho,
                        chi: f.chi_comm,
                        r: f.r,
                    }
                } else {
                    let b = fresh(viewer, j).expect("checked above");
                    Contender {
                        id: j,
                        rho: b.rho,
                        chi: b.chi,
                        r: b.r,
                    }
                }
            })
            .collect();
        let ranked = crate::cost::priority_order(&contenders);
        let winner = ranked[0].id;
        let obstructing = self.obstructing(case, agents, winner, ctx);
        let outcome = negotiate_v2v(&contenders, &obstructing);
        case.agreed = true;
        case.winners.insert(outcome.winner);
        self.log_decision(case.id, outcome.winner, Decision::Proceed, None, ctx.now);
        for &(id, d) in &outcome.decisions {
            if let Decision::StartYield { backing } = d {
                self.yield_member(case, agents, id, backing, false, ctx)?;
            }
        }
        for c in case.chained.clone() {
            if !case.decided(c) {
                self.yield_member(case, agents, c, obstructing.contains(&c), false, ctx)?;
            }
        }
        Ok(())
    }

    fn obstructing(&self, case: &DeadlockCase, agents: &[Agent], winner: VehicleId, ctx: &StepContext) -> BTreeSet<VehicleId> {
        let Some(w) = index_of(agents, winner) else {
            return BTreeSet::new();
        };
        case.members()
            .filter(|&m| m != winner)
            .filter(|&m| {
                index_of(agents, m)
                    .is_some_and(|j| obstructs(ctx.scene, &agents[j], &agents[w], ctx.interaction.zone_half_width_m))
            })
            .collect()
    }

    fn decide_baseline(&mut self, case: &mut DeadlockCase, agents: &mut [Agent], ctx: &StepContext) -> Result<(), EngineError> {
        let mut lanes = Vec::new();
        for &n in &case.negotiators {
            let i = index_of(agents, n).expect("negotiator exists");
            lanes.push((n, ctx.scene.path(agents[i].vehicle.path)?.priority));
        }
        let (winner, decisions) = baseline_lane_priority(&lanes);
        let obstructing = self.obstructing(case, agents, winner, ctx);
        case.winners.insert(winner);
        self.log_decision(case.id, winner, Decision::Proceed, None, ctx.now);
        for (id, d) in decisions {
            if let Decision::StartYield { backing } = d {
                self.yield_member(case, agents, id, backing, false, ctx)?;
            }
        }
        for c in case.chained.clone() {
            if !case.decided(c) {
                self.yield_member(case, agents, c, obstructing.contains(&c), false, ctx)?;
            }
        }
        Ok(())
    }

    fn decide_perception(&mut self, case: &mut DeadlockCase, agents: &mut [Agent], ctx: &StepContext) -> Result<(), EngineError> {
        let elapsed = ctx.now - case.detected_at;
        let mut decisions = Vec::new();
        for &n in &case.negotiators {
            if case.decided(n) {
                continue;
            }
            let Some(i) = index_of(agents, n) else {
                continue;
            };
            let me = &agents[i].vehicle;
            if me.state != VehicleState::InDeadlock {
                continue;
            }
            let my_pos = position_of(me, ctx.scene)?;
            let mut opponents = Vec::new();
            for &m in &case.negotiators {
                if m == n || ctx.scene.conflict(me.path, agents_path(agents, m).unwrap_or(me.path)).is_none() {
                    continue;
                }
                let Some(j) = index_of(agents, m) else {
                    continue;
                };
                let other = &agents[j].vehicle;
                if !matches!(other.state, VehicleState::InDeadlock | VehicleState::Yielding) {
                    continue;
                }
                if position_of(other, ctx.scene)?.dist(my_pos) > self.params.sensor_range_m {
                    continue;
                }
                opponents.push(Opponent {
                    motion: motion_class(other.v),
                    receded: other.s < case.frozen[&m].s_at_detect - self.params.recede_margin_m,
                });
            }
            let d = wait_out_threshold(case.frozen[&n].delta, elapsed, &opponents);
            if d != Decision::Hold {
                decisions.push((n, d));
            }
        }
        for (n, d) in decisions {
            match d {
                Decision::Proceed => {
                    case.winners.insert(n);
                    self.log_decision(case.id, n, d, None, ctx.now);
                }
                Decision::StartYield { backing } => self.yield_member(case, agents, n, backing, true, ctx)?,
                Decision::Hold => {}
            }
        }
        Ok(())
    }

    /// Move a member from deadlock into yielding, backing to its evacuation
    /// site when `backing`. Chained members queued behind a backing yielder
    /// give way with it.
    fn yield_member(
        &mut self,
        case: &mut DeadlockCase,
        agents: &mut [Agent],
        id: VehicleId,
        backing: bool,
        courtesy: bool,
        ctx: &StepContext,
    ) -> Result<(), EngineError> {
        let Some(i) = index_of(agents, id) else {
            return Ok(());
        };
        if agents[i].vehicle.state != VehicleState::InDeadlock {
            return Ok(());
        }
        let scene = ctx.scene;
        let (path, s, length) = {
            let v = &agents[i].vehicle;
            (v.path, v.s, v.length)
        };
        let mut target = Evacuation {
            position: s,
            passing_place: None,
        };
        if backing {
            let evac = scene.evacuation_target(path, s)?;
            if evac.passing_place.is_some() {
                target = evac;
            } else if evac.position < s {
                let stop = scene.section_of(path).map_or(evac.position, |(_, e)| e.stop_line);
                target.position = stop.min(s);
            } else if courtesy {
                target.position = s - self.params.courtesy_backoff_m;
            }
        }
        target.position = target.position.max(length);
        let yield_to: Vec<VehicleId> = agents
            .iter()
            .filter(|j| {
                j.vehicle.path != path
                    && scene.conflict(path, j.vehicle.path).is_some()
                    && if j.case == Some(case.id) {
                        case.negotiators.contains(&j.id())
                    } else {
                        is_claim(scene, j, ctx.limits, ctx.dt)
                    }
            })
            .map(|j| j.id())
            .collect();
        let a = &mut agents[i];
        a.vehicle.apply(Event::YieldDecided)?;
        a.evacuation = Some(target);
        a.yield_to = yield_to;
        a.go = false;
        a.granted = false;
        case.yielders.insert(id);
        self.log_decision(case.id, id, Decision::StartYield { backing }, Some(target.position), ctx.now);
        if backing {
            for c in case.chained.clone() {
                let behind = index_of(agents, c).is_some_and(|j| agents[j].vehicle.path == path && agents[j].vehicle.s < s);
                if behind && !case.decided(c) {
                    self.yield_member(case, agents, c, false, false, ctx)?;
                }
            }
        }
        Ok(())
    }

    fn resolve_winners(&mut self, case: &mut DeadlockCase, agents: &mut [Agent], ctx: &StepContext) -> Result<(), EngineError> {
        let hw = ctx.interaction.zone_half_width_m;
        for w in case.winners.clone() {
            let Some(wi) = index_of(agents, w) else {
                continue;
            };
            if agents[wi].vehicle.state != VehicleState::InDeadlock {
                continue;
            }
            // Vehicles that queued up after detection and now stand in the
            // winner's way join the episode and clear out.
            let late: Vec<usize> = (0..agents.len())
                .filter(|&j| {
                    let a = &agents[j];
                    a.case.is_none()
                        && !a.pulled_aside
                        && matches!(a.vehicle.state, VehicleState::Wait | VehicleState::Crossing)
                        && obstructs(ctx.scene, a, &agents[wi], hw)
                })
                .collect();
            for j in late {
                let f = self.freeze(agents, j, ctx)?;
                let id = agents[j].id();
                let d = ctx.scene.distance_to_evacuation(agents[j].vehicle.path, agents[j].vehicle.s)?;
                let a = &mut agents[j];
                a.vehicle.apply(Event::DeadlockDetected)?;
                a.vehicle.rho = f.rho;
                a.vehicle.r = f.r;
                a.case = Some(case.id);
                a.go = false;
                case.frozen.insert(id, f);
                case.chained.push(id);
                case.bound_s += d / ctx.limits.back_speed_mps;
                self.yield_member(case, agents, id, true, false, ctx)?;
            }
            let blocked = agents
                .iter()
                .any(|j| j.id() != w && !j.pulled_aside && obstructs(ctx.scene, j, &agents[wi], hw));
            if blocked {
                continue;
            }
            let a = &mut agents[wi];
            a.vehicle.apply(Event::DeadlockResolved)?;
            a.granted = true;
            a.go = true;
            if case.resolution.is_none() {
                case.resolution = Some(Resolution {
                    winner: w,
                    yielders: case.yielders.iter().copied().collect(),
                    resolved_at: ctx.now,
                });
            }
            self.log.push(Record::Resolved {
                t: ctx.now,
                case: case.id,
                winner: w,
                yielders: case.yielders.iter().copied().collect(),
                detected_at: case.detected_at,
            });
        }
        if case.resolution.is_some() {
            for c in case.chained.clone() {
                if !case.decided(c) {
                    self.yield_member(case, agents, c, false, false, ctx)?;
                }
            }
        }
        Ok(())
    }

    fn log_decision(&mut self, case: u32, vehicle: VehicleId, d: Decision, target: Option<f64>, t: f64) {
        let decision = match d {
            Decision::Hold => "hold",
            Decision::Proceed => "proceed",
            Decision::StartYield { backing: true } => "yield",
            Decision::StartYield { backing: false } => "give-way",
        };
        self.log.push(Record::Decision {
            t,
            case,
            vehicle,
            decision: decision.into(),
            target,
        });
    }
}

fn agents_path(agents: &[Agent], id: VehicleId) -> Option<usize> {
    index_of(agents, id).map(|i| agents[i].vehicle.path)
}
