mod common;

use std::collections::{BTreeMap, BTreeSet};

use adrive::engine::{detect_deadlocks, WaitForGraph};
use common::{oracle, random_graph, rng, Found};

fn detected(g: &WaitForGraph, waits: &BTreeMap<u32, f64>, t_wait: f64) -> BTreeSet<Found> {
    detect_deadlocks(g, waits, t_wait)
        .into_iter()
        .map(|c| {
            let mut chained = c.chained.clone();
            chained.sort_unstable();
            (c.negotiators, chained)
        })
        .collect()
}

#[test]
fn matches_brute_force_on_small_random_graphs() {
    let mut r = rng(7);
    for k in 0..1000 {
        let (g, waits) = random_graph(&mut r, 6, 3.0);
        assert_eq!(detected(&g, &waits, 3.0), oracle(&g, &waits, 3.0), "graph {k}: {g:?} waits {waits:?}");
    }
}

#[test]
fn oracle_sees_a_plain_two_cycle() {
    let mut g = WaitForGraph::new();
    g.add_edge(1, 2);
    g.add_edge(2, 1);
    g.add_edge(3, 1);
    let waits: BTreeMap<u32, f64> = [(1, 5.0), (2, 5.0), (3, 5.0)].into();
    let want: BTreeSet<Found> = [(vec![1, 2], vec![3])].into();
    assert_eq!(oracle(&g, &waits, 3.0), want);
    assert_eq!(detected(&g, &waits, 3.0), want);
}

#[test]
fn short_waits_are_not_deadlocks() {
    let mut g = WaitForGraph::new();
    g.add_edge(1, 2);
    g.add_edge(2, 1);
    let waits: BTreeMap<u32, f64> = [(1, 5.0), (2, 1.0)].into();
    assert!(detected(&g, &waits, 3.0).is_empty());
}

#[test]
fn chain_without_cycle_is_not_a_deadlock() {
    let mut g = WaitForGraph::new();
    g.add_edge(1, 2);
    g.add_edge(2, 3);
    let waits: BTreeMap<u32, f64> = [(1, 9.0), (2, 9.0), (3, 9.0)].into();
    assert!(detected(&g, &waits, 3.0).is_empty());
}

#[test]
fn queue_feeding_two_cycles_joins_the_lower() {
    let mut g = WaitForGraph::new();
    for (i, j) in [(1, 2), (2, 1), (5, 6), (6, 5), (9, 2), (9, 6)] {
        g.add_edge(i, j);
    }
    let waits: BTreeMap<u32, f64> = [1, 2, 5, 6, 9].iter().map(|&v| (v, 4.0)).collect();
    let want: BTreeSet<Found> = [(vec![1, 2], vec![9]), (vec![5, 6], vec![])].into();
    assert_eq!(detected(&g, &waits, 3.0), want);
}
