use adrive::engine::Protocol;
use adrive::sim::traffic::ArrivalStream;
use adrive::sim::{preset, run_matrix, MatrixSpec, SceneConfig, SimConfig, TrafficMix, World, BOUND_SLACK, PRESETS};
use adrive::road::SingleTrackParams;

fn run(mut cfg: SimConfig, protocol: Protocol) -> adrive::sim::RunResult {
    cfg.protocol = protocol;
    World::new(&cfg).unwrap().run_to_end().unwrap()
}

#[test]
fn every_preset_deadlocks_and_recovers() {
    for p in PRESETS {
        for protocol in [Protocol::ADrive, Protocol::LanePriority] {
            let cfg = preset(p.name).unwrap();
            let scripted = cfg.vehicles.len();
            let r = run(cfg, protocol);
            assert!(r.deadlocks >= 1, "{} {protocol}: no deadlock", p.name);
            assert_eq!(r.unresolved_cases, 0, "{} {protocol}", p.name);
            assert!(r.cases.iter().all(|c| c.within_bound(BOUND_SLACK)), "{} {protocol}: {:?}", p.name, r.cases);
            assert_eq!(r.completed, scripted, "{} {protocol}", p.name);
            assert_eq!(r.collisions, 0);
        }
    }
}

#[test]
fn hidden_overshoot_is_settled_by_perception() {
    let r = run(preset("hidden-overshoot").unwrap(), Protocol::ADrive);
    assert!(r.cases.iter().all(|c| c.mode == adrive::engine::Mode::PerceptionThreshold));
}

#[test]
fn late_detection_sends_the_pair_back_to_the_turnout() {
    let mut w = World::new(&preset("late-detection").unwrap()).unwrap();
    w.run_to_end().unwrap();
    let resolved = w.event_log().records.iter().find_map(|r| match r {
        adrive::engine::Record::Resolved { winner, yielders, .. } => Some((*winner, yielders.clone())),
        _ => None,
    });
    // The east pair sits a short way past the turnout while the west
    // vehicle would have to reverse most of the lane.
    assert_eq!(resolved, Some((1, vec![0, 2])));
}

#[test]
fn arrivals_are_exponential_with_the_configured_rate() {
    for vph in [200.0, 800.0] {
        let mut s = ArrivalStream::new(11, 0, vph, TrafficMix::default()).unwrap();
        let n = 20_000;
        let gaps: Vec<f64> = (0..n).map(|_| s.draw_gap()).collect();
        let mean = gaps.iter().sum::<f64>() / n as f64;
        let want = 3600.0 / vph;
        assert!((mean - want).abs() < 0.03 * want, "mean gap {mean} vs {want}");
        // Memorylessness: the share of gaps above the mean is 1/e.
        let above = gaps.iter().filter(|&&g| g > want).count() as f64 / n as f64;
        assert!((above - (-1.0f64).exp()).abs() < 0.015, "{above}");
    }
}

fn short_run(vph: f64, length: f64) -> SimConfig {
    SimConfig {
        duration_s: 300.0,
        scoring_window_s: 200.0,
        scene: SceneConfig::SingleTrack(SingleTrackParams {
            length_m: length,
            ..SingleTrackParams::default()
        }),
        traffic: adrive::sim::TrafficConfig {
            vph,
            ..Default::default()
        },
        ..SimConfig::default()
    }
}

#[test]
fn vehicles_are_conserved() {
    for protocol in [Protocol::ADrive, Protocol::LanePriority] {
        let r = run(short_run(600.0, 70.0), protocol);
        assert!(r.spawned > 0);
        assert_eq!(r.spawned, r.completed + r.in_flight);
    }
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = short_run(800.0, 100.0);
    let a = serde_json::to_string(&run(cfg.clone(), Protocol::ADrive)).unwrap();
    let b = serde_json::to_string(&run(cfg, Protocol::ADrive)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn matrix_output_does_not_depend_on_worker_count() {
    let spec = MatrixSpec {
        volumes: vec![400.0, 800.0],
        sizes: vec![10.0, 100.0],
        reps: 2,
        ..MatrixSpec::default_with(short_run(0.0, 30.0))
    };
    let mut serial = Vec::new();
    let mut parallel = Vec::new();
    run_matrix(&spec, 1, &mut serial).unwrap();
    run_matrix(&spec, 4, &mut parallel).unwrap();
    assert_eq!(serial, parallel);
    assert_eq!(String::from_utf8(serial).unwrap().lines().count(), 1 + 16);
}
