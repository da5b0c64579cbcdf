#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use adrive::engine::{Record, WaitForGraph};
use adrive::sim::{preset, SimConfig, World};
use adrive::vehicle::{VehicleId, VehicleKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A deadlock as the oracle sees it: cycle members and the stalled
/// vehicles queued into it.
pub type Found = (Vec<VehicleId>, Vec<VehicleId>);

/// Brute-force reference for deadlock detection: transitive closure by
/// repeated relaxation, mutual reachability for components, then a direct
/// scan for stalled vehicles that lead into a qualifying component.
pub fn oracle(graph: &WaitForGraph, waits: &BTreeMap<VehicleId, f64>, t_wait: f64) -> BTreeSet<Found> {
    let nodes: Vec<VehicleId> = graph.nodes.iter().copied().collect();
    let n = nodes.len();
    let idx = |v: VehicleId| nodes.iter().position(|&x| x == v).unwrap();
    let mut reach = vec![vec![false; n]; n];
    for &(i, j) in &graph.edges {
        reach[idx(i)][idx(j)] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let waited = |v: VehicleId| waits.get(&v).is_some_and(|&w| w >= t_wait);
    let mut comps: Vec<Vec<VehicleId>> = Vec::new();
    let mut placed = vec![false; n];
    for i in 0..n {
        if placed[i] {
            continue;
        }
        let comp: Vec<usize> = (0..n).filter(|&j| j == i || reach[i][j] && reach[j][i]).collect();
        for &j in &comp {
            placed[j] = true;
        }
        let mut ids: Vec<VehicleId> = comp.iter().map(|&j| nodes[j]).collect();
        ids.sort_unstable();
        if ids.len() >= 2 && ids.iter().all(|&v| waited(v)) {
            comps.push(ids);
        }
    }
    comps.sort_by_key(|c| c[0]);
    let in_cycle: BTreeSet<VehicleId> = comps.iter().flatten().copied().collect();
    let mut out = BTreeSet::new();
    let mut taken = BTreeSet::new();
    for c in &comps {
        let mut chained = Vec::new();
        for (i, &v) in nodes.iter().enumerate() {
            if in_cycle.contains(&v) || !waited(v) || taken.contains(&v) {
                continue;
            }
            if c.iter().any(|&m| reach[i][idx(m)]) {
                taken.insert(v);
                chained.push(v);
            }
        }
        chained.sort_unstable();
        out.insert((c.clone(), chained));
    }
    out
}

/// Seeded random wait-for graph with at most `max_nodes` nodes and random
/// wait times around `t_wait`.
pub fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize, t_wait: f64) -> (WaitForGraph, BTreeMap<VehicleId, f64>) {
    let n = rng.random_range(1..=max_nodes);
    let ids: Vec<VehicleId> = {
        let mut pool: Vec<VehicleId> = (0..20).collect();
        for k in 0..n {
            let j = rng.random_range(k..pool.len());
            pool.swap(k, j);
        }
        pool.truncate(n);
        pool
    };
    let density: f64 = rng.random_range(0.1..0.7);
    let mut g = WaitForGraph::new();
    let mut waits = BTreeMap::new();
    for &i in &ids {
        g.add_node(i);
        let w = if rng.random_bool(0.8) {
            rng.random_range(t_wait..2.0 * t_wait + 1.0)
        } else {
            rng.random_range(0.0..t_wait)
        };
        waits.insert(i, w);
        for &j in &ids {
            if i != j && rng.random_bool(density) {
                g.add_edge(i, j);
            }
        }
    }
    (g, waits)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Narrow-road overshoot deadlock between two vehicles, with the
/// overshooting vehicle's radio silenced.
pub fn silent_member_scenario() -> SimConfig {
    let mut cfg = preset("lane-overshoot").unwrap();
    cfg.vehicles[1].failure.packet_loss_override = Some(1.0);
    cfg
}

/// The same encounter with neither vehicle connected.
pub fn unconnected_scenario() -> SimConfig {
    let mut cfg = preset("lane-overshoot").unwrap();
    for v in &mut cfg.vehicles {
        v.kind = VehicleKind::NonConnectedAutomated;
    }
    cfg
}

/// What an encounter decided: winner, yielders and the order in which
/// vehicles received their decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub winner: VehicleId,
    pub yielders: Vec<VehicleId>,
    pub decisions: Vec<(VehicleId, String)>,
    pub detected_at: f64,
    /// Latest time a connected member raised its HV flag, if all did.
    pub all_flagged_at: Option<f64>,
}

pub fn run_encounter(cfg: &SimConfig) -> Outcome {
    let mut w = World::new(cfg).unwrap();
    w.run_to_end().unwrap();
    // Scripted vehicles take ids in script order.
    let connected: Vec<VehicleId> = (0..cfg.vehicles.len() as VehicleId)
        .filter(|&k| cfg.vehicles[k as usize].kind.is_connected())
        .collect();
    let mut flagged: BTreeMap<VehicleId, f64> = BTreeMap::new();
    let mut detected_at = None;
    let mut winner = None;
    let mut yielders = Vec::new();
    let mut decisions = Vec::new();
    for r in &w.event_log().records {
        match r {
            Record::Detected { t, .. } if detected_at.is_none() => detected_at = Some(*t),
            Record::HvFlag { t, vehicle, .. } => {
                flagged.entry(*vehicle).or_insert(*t);
            }
            Record::Resolved { winner: wn, yielders: ys, .. } if winner.is_none() => {
                winner = Some(*wn);
                yielders = ys.clone();
            }
            Record::Decision { vehicle, decision, .. } => decisions.push((*vehicle, decision.clone())),
            _ => {}
        }
    }
    let all_flagged_at = if connected.iter().all(|id| flagged.contains_key(id)) {
        connected.iter().map(|id| flagged[id]).reduce(f64::max)
    } else {
        None
    };
    Outcome {
        winner: winner.expect("encounter resolved"),
        yielders,
        decisions,
        detected_at: detected_at.expect("deadlock detected"),
        all_flagged_at,
    }
}
