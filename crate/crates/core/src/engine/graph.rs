//! Wait-for graph over stalled vehicles and cycle-based deadlock detection.

use std::collections::{BTreeMap, BTreeSet};

use crate::interaction::{is_claim, static_gap_ahead, Agent, InteractionParams};
use crate::perception::position_of;
use crate::road::RoadScene;
use crate::vehicle::{KinematicLimits, VehicleId, VehicleState};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WaitForGraph {
    pub nodes: BTreeSet<VehicleId>,
    /// `(i, j)`: i is blocked by j.
    pub edges: BTreeSet<(VehicleId, VehicleId)>,
}

impl WaitForGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, v: VehicleId) {
        self.nodes.insert(v);
    }

    pub fn add_edge(&mut self, i: VehicleId, j: VehicleId) {
        self.nodes.insert(i);
        self.nodes.insert(j);
        self.edges.insert((i, j));
    }

    pub fn successors(&self, i: VehicleId) -> impl Iterator<Item = VehicleId> + '_ {
        self.edges.range((i, 0)..=(i, VehicleId::MAX)).map(|&(_, j)| j)
    }

    /// Strongly connected components (Tarjan), each sorted, listed in order
    /// of their smallest member.
    pub fn sccs(&self) -> Vec<Vec<VehicleId>> {
        struct St<'a> {
            g: &'a WaitForGraph,
            index: BTreeMap<VehicleId, usize>,
            low: BTreeMap<VehicleId, usize>,
            on_stack: BTreeSet<VehicleId>,
            stack: Vec<VehicleId>,
            next: usize,
            out: Vec<Vec<VehicleId>>,
        }
        fn visit(st: &mut St, v: VehicleId) {
            st.index.insert(v, st.next);
            st.low.insert(v, st.next);
            st.next += 1;
            st.stack.push(v);
            st.on_stack.insert(v);
            let succ: Vec<VehicleId> = st.g.successors(v).collect();
            for w in succ {
                if !st.index.contains_key(&w) {
                    visit(st, w);
                    let lw = st.low[&w];
                    let lv = st.low.get_mut(&v).unwrap();
                    *lv = (*lv).min(lw);
                } else if st.on_stack.contains(&w) {
                    let iw = st.index[&w];
                    let lv = st.low.get_mut(&v).unwrap();
                    *lv = (*lv).min(iw);
                }
            }
            if st.low[&v] == st.index[&v] {
                let mut comp = Vec::new();
                loop {
                    let w = st.stack.pop().unwrap();
                    st.on_stack.remove(&w);
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                st.out.push(comp);
            }
        }
        let mut st = St {
            g: self,
            index: BTreeMap::new(),
            low: BTreeMap::new(),
            on_stack: BTreeSet::new(),
            stack: Vec::new(),
            next: 0,
            out: Vec::new(),
        };
        for &v in &self.nodes {
            if !st.index.contains_key(&v) {
                visit(&mut st, v);
            }
        }
        let mut out = st.out;
        out.sort_by_key(|c| c[0]);
        out
    }

    /// Nodes from which some node of `targets` is reachable (excluding the
    /// targets themselves).
    pub fn reaching(&self, targets: &BTreeSet<VehicleId>) -> BTreeSet<VehicleId> {
        let mut rev: BTreeMap<VehicleId, Vec<VehicleId>> = BTreeMap::new();
        for &(i, j) in &self.edges {
            rev.entry(j).or_default().push(i);
        }
        let mut seen: BTreeSet<VehicleId> = targets.clone();
        let mut queue: Vec<VehicleId> = targets.iter().copied().collect();
        while let Some(v) = queue.pop() {
            for &u in rev.get(&v).into_iter().flatten() {
                if seen.insert(u) {
                    queue.push(u);
                }
            }
        }
        seen.difference(targets).copied().collect()
    }
}

/// A mutual wait found in the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectedCycle {
    /// Members of the strongly connected component.
    pub negotiators: Vec<VehicleId>,
    /// Stalled vehicles whose waits lead into the component.
    pub chained: Vec<VehicleId>,
}

impl DetectedCycle {
    pub fn members(&self) -> BTreeSet<VehicleId> {
        self.negotiators.iter().chain(&self.chained).copied().collect()
    }
}

/// One result per strongly connected component of two or more nodes whose
/// members have all waited at least `t_wait`. Stalled nodes that reach such
/// a component join it as chained members; a node reaching several joins
/// the one with the smallest member id.
pub fn detect_deadlocks(
    graph: &WaitForGraph,
    wait_times: &BTreeMap<VehicleId, f64>,
    t_wait: f64,
) -> Vec<DetectedCycle> {
    let waited = |v: &VehicleId| wait_times.get(v).is_some_and(|&w| w >= t_wait);
    let mut cycles: Vec<DetectedCycle> = graph
        .sccs()
        .into_iter()
        .filter(|c| c.len() >= 2 && c.iter().all(waited))
        .map(|c| DetectedCycle {
            negotiators: c,
            chained: Vec::new(),
        })
        .collect();
    let in_cycle: BTreeSet<VehicleId> = cycles.iter().flat_map(|c| c.negotiators.iter().copied()).collect();
    let mut taken = BTreeSet::new();
    for c in cycles.iter_mut() {
        let targets: BTreeSet<VehicleId> = c.negotiators.iter().copied().collect();
        for v in graph.reaching(&targets) {
            if !in_cycle.contains(&v) && waited(&v) && taken.insert(v) {
                c.chained.push(v);
            }
        }
    }
    cycles
}

/// Edge `i → j` when stalled vehicle `i` is held by `j`: `j` stands within
/// the look-ahead in front of it, `j` claims the section `i` waits to
/// enter, or both wait at an all-way stop and `j` arrived first or at the
/// same moment.
#[allow(clippy::too_many_arguments)]
pub fn build_wait_graph(
    agents: &[Agent],
    scene: &RoadScene,
    now: f64,
    t_wait: f64,
    sensor_range: f64,
    fcfs_tie_s: f64,
    ip: &InteractionParams,
    lim: &KinematicLimits,
    dt: f64,
    aware: &dyn Fn(&Agent, &Agent) -> bool,
) -> WaitForGraph {
    let mut g = WaitForGraph::new();
    let is_node = |a: &Agent| {
        a.case.is_none()
            && !a.pulled_aside
            && matches!(a.vehicle.state, VehicleState::Wait | VehicleState::Crossing)
    };
    let nodes: Vec<&Agent> = agents.iter().filter(|a| is_node(a)).collect();
    for a in &nodes {
        g.add_node(a.id());
    }
    let positions: BTreeMap<VehicleId, _> = nodes
        .iter()
        .filter_map(|a| position_of(&a.vehicle, scene).ok().map(|p| (a.id(), p)))
        .collect();
    for i in &nodes {
        if i.waited(now) < t_wait || i.stopped_since.is_none() {
            continue;
        }
        let vi = &i.vehicle;
        for j in &nodes {
            let vj = &j.vehicle;
            if vi.id == vj.id {
                continue;
            }
            let ahead = static_gap_ahead(scene, i, j, ip).is_some_and(|gap| gap <= ip.lookahead_m);
            let conflicting = vi.path != vj.path && scene.conflict(vi.path, vj.path).is_some();
            let in_range = match (positions.get(&vi.id), positions.get(&vj.id)) {
                (Some(p), Some(q)) => p.dist(*q) <= sensor_range,
                _ => false,
            } || conflicting && aware(i, j);
            let contention =
                conflicting && in_range && vi.state == VehicleState::Wait && is_claim(scene, j, lim, dt);
            let fcfs = conflicting
                && vi.state == VehicleState::Wait
                && vj.state == VehicleState::Wait
                && scene
                    .section_of(vi.path)
                    .is_some_and(|(sid, _)| scene.sections[sid].all_way_stop)
                && match (i.arrived_at, j.arrived_at) {
                    (Some(ti), Some(tj)) => tj <= ti + fcfs_tie_s,
                    _ => false,
                };
            if ahead || contention || fcfs {
                g.add_edge(vi.id, vj.id);
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(edges: &[(VehicleId, VehicleId)]) -> WaitForGraph {
        let mut g = WaitForGraph::new();
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    fn all_waited(g: &WaitForGraph, w: f64) -> BTreeMap<VehicleId, f64> {
        g.nodes.iter().map(|&v| (v, w)).collect()
    }

    #[test]
    fn two_cycle_is_one_case() {
        let g = graph(&[(1, 2), (2, 1)]);
        let cases = detect_deadlocks(&g, &all_waited(&g, 5.0), 3.0);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].negotiators, vec![1, 2]);
        assert!(cases[0].chained.is_empty());
    }

    #[test]
    fn queue_has_no_cycle() {
        let g = graph(&[(1, 2), (2, 3)]);
        assert!(detect_deadlocks(&g, &all_waited(&g, 5.0), 3.0).is_empty());
        assert!(detect_deadlocks(&WaitForGraph::new(), &BTreeMap::new(), 3.0).is_empty());
    }

    #[test]
    fn short_waits_suppress_detection() {
        let g = graph(&[(1, 2), (2, 1)]);
        let mut w = all_waited(&g, 5.0);
        w.insert(2, 2.9);
        assert!(detect_deadlocks(&g, &w, 3.0).is_empty());
    }

    #[test]
    fn followers_join_as_chained_members() {
        // 3 and 4 queue behind 1; 5 is behind 2; 1 and 2 face each other.
        let g = graph(&[(1, 2), (2, 1), (3, 1), (4, 3), (5, 2)]);
        let cases = detect_deadlocks(&g, &all_waited(&g, 5.0), 3.0);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].chained, vec![3, 4, 5]);
    }

    #[test]
    fn chained_node_reaching_two_cycles_joins_the_first() {
        let g = graph(&[(1, 2), (2, 1), (7, 8), (8, 7), (5, 1), (5, 7)]);
        let cases = detect_deadlocks(&g, &all_waited(&g, 5.0), 3.0);
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].chained, vec![5]);
        assert!(cases[1].chained.is_empty());
    }

    #[test]
    fn four_way_mutual_deferral() {
        // East/west each defer to north/south and vice versa.
        let mut edges = Vec::new();
        for a in [1, 2] {
            for b in [3, 4] {
                edges.push((a, b));
                edges.push((b, a));
            }
        }
        let g = graph(&edges);
        let cases = detect_deadlocks(&g, &all_waited(&g, 4.0), 3.0);
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].negotiators, vec![1, 2, 3, 4]);
    }
}
