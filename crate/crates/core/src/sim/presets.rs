//! Named failure scenarios, one per deadlock pattern.

use super::config::{SceneConfig, ScriptedVehicle, SimConfig, TrafficConfig};
use crate::road::{FourWayParams, SingleTrackParams};
use crate::vehicle::{FailureProfile, VehicleKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
}

pub const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        name: "four-way-tie",
        description: "four-way all-way stop, four vehicles arrive together and each defers to the others",
    },
    PresetInfo {
        name: "box-overshoot",
        description: "four-way all-way stop, one vehicle stops past its stop line inside the box",
    },
    PresetInfo {
        name: "lane-overshoot",
        description: "narrow road, a vehicle overshoots its stop line into oncoming traffic",
    },
    PresetInfo {
        name: "hidden-overshoot",
        description: "narrow road, overshoot hidden by a localization offset so the vehicle believes it is outside",
    },
    PresetInfo {
        name: "late-detection",
        description: "long single-track lane, sensing shorter than the lane, vehicles meet head-on inside",
    },
];

fn scripted(path: &str, spawn_t: f64, s: f64, speed: f64) -> ScriptedVehicle {
    ScriptedVehicle {
        path: path.into(),
        spawn_t,
        kind: VehicleKind::ConnectedAutomated,
        s: Some(s),
        speed: Some(speed),
        failure: FailureProfile::default(),
    }
}

fn base() -> SimConfig {
    SimConfig {
        duration_s: 60.0,
        scoring_window_s: 60.0,
        drain_cap_s: 120.0,
        traffic: TrafficConfig {
            vph: 0.0,
            ..TrafficConfig::default()
        },
        ..SimConfig::default()
    }
}

/// Configuration of a named preset.
pub fn preset(name: &str) -> Option<SimConfig> {
    let mut cfg = base();
    cfg.failures.preset = Some(name.to_string());
    match name {
        "four-way-tie" => {
            cfg.scene = SceneConfig::FourWay(FourWayParams {
                all_way_stop: true,
                ..FourWayParams::default()
            });
            cfg.vehicles = ["east", "west", "north", "south"]
                .iter()
                .map(|p| scripted(p, 0.0, 280.0, 6.0))
                .collect();
        }
        "box-overshoot" => {
            cfg.scene = SceneConfig::FourWay(FourWayParams {
                all_way_stop: true,
                ..FourWayParams::default()
            });
            let mut east = scripted("east", 0.0, 280.0, 6.0);
            east.failure.overshoot_m = 3.5;
            cfg.vehicles = vec![east, scripted("north", 0.0, 280.0, 6.0)];
        }
        "lane-overshoot" | "hidden-overshoot" => {
            cfg.scene = SceneConfig::SingleTrack(SingleTrackParams::default());
            let mut west = scripted("west", 0.0, 240.0, 10.0);
            west.failure.overshoot_m = 3.0;
            if name == "hidden-overshoot" {
                west.failure.localization_offset_m = -3.5;
            }
            cfg.vehicles = vec![scripted("east", 0.0, 255.0, 10.0), west];
        }
        "late-detection" => {
            cfg.scene = SceneConfig::SingleTrack(SingleTrackParams {
                length_m: 100.0,
                passing_places_m: vec![30.0],
                ..SingleTrackParams::default()
            });
            cfg.engine.sensor_range_m = 40.0;
            cfg.engine.follower_range_m = 40.0;
            cfg.channel.range_m = 40.0;
            cfg.vehicles = vec![
                scripted("east", 0.0, 270.0, 10.0),
                scripted("west", 0.0, 270.0, 10.0),
                scripted("east", 4.0, 220.0, 10.0),
            ];
        }
        _ => return None,
    }
    Some(cfg)
}
