//! Scenario configuration, read from TOML.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::channel::ChannelParams;
use crate::cost::CostParams;
use crate::engine::{EngineParams, Protocol};
use crate::interaction::InteractionParams;
use crate::road::{FourWayParams, RoadScene, SceneFile, SingleTrackParams};
use crate::vehicle::{FailureProfile, KinematicLimits, VehicleKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SceneConfig {
    SingleTrack(SingleTrackParams),
    FourWay(FourWayParams),
    File { path: PathBuf },
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig::SingleTrack(SingleTrackParams::default())
    }
}

impl SceneConfig {
    pub fn build(&self, base_dir: Option<&FsPath>) -> Result<RoadScene, SimError> {
        Ok(match self {
            SceneConfig::SingleTrack(p) => RoadScene::single_track(p)?,
            SceneConfig::FourWay(p) => RoadScene::four_way(p)?,
            SceneConfig::File { path } => {
                let full = match base_dir {
                    Some(d) if path.is_relative() => d.join(path),
                    _ => path.clone(),
                };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| SimError::Config(format!("cannot read scene file {}: {e}", full.display())))?;
                SceneFile::from_toml(&text)?.build()?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficMix {
    pub non_connected: f64,
    pub human_driven: f64,
}

impl Default for TrafficMix {
    fn default() -> Self {
        TrafficMix {
            non_connected: 0.0,
            human_driven: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    /// Arrival rate per direction, vehicles per hour; 0 disables random
    /// traffic.
    pub vph: f64,
    /// Paths fed with random traffic, by name; empty means all.
    pub paths: Vec<String>,
    pub mix: TrafficMix,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            vph: 400.0,
            paths: Vec::new(),
            mix: TrafficMix::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub length_m: f64,
    pub accel_mps2: f64,
    pub decel_mps2: f64,
    pub cruise_mps: f64,
    pub back_speed_mps: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        let l = KinematicLimits::default();
        VehicleParams {
            length_m: 4.5,
            accel_mps2: l.accel_mps2,
            decel_mps2: l.decel_mps2,
            cruise_mps: l.cruise_mps,
            back_speed_mps: l.back_speed_mps,
        }
    }
}

impl VehicleParams {
    pub fn limits(&self) -> KinematicLimits {
        KinematicLimits {
            accel_mps2: self.accel_mps2,
            decel_mps2: self.decel_mps2,
            cruise_mps: self.cruise_mps,
            back_speed_mps: self.back_speed_mps,
        }
    }
}

/// A vehicle placed by hand rather than drawn from the arrival process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedVehicle {
    pub path: String,
    pub spawn_t: f64,
    #[serde(default = "default_kind")]
    pub kind: VehicleKind,
    /// Initial front position; defaults to the start of the path.
    #[serde(default)]
    pub s: Option<f64>,
    /// Initial speed; defaults to cruise.
    #[serde(default)]
    pub speed: Option<f64>,
    #[serde(default)]
    pub failure: FailureProfile,
}

fn default_kind() -> VehicleKind {
    VehicleKind::ConnectedAutomated
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureConfig {
    /// Start from a named failure preset; other fields of this file then
    /// override the preset's.
    pub preset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub protocol: Protocol,
    pub seed: u64,
    pub duration_s: f64,
    pub scoring_window_s: f64,
    pub dt: f64,
    pub drain_cap_s: f64,
    pub scene: SceneConfig,
    pub traffic: TrafficConfig,
    pub vehicle: VehicleParams,
    pub interaction: InteractionParams,
    pub channel: ChannelParams,
    pub cost: CostParams,
    pub engine: EngineParams,
    pub vehicles: Vec<ScriptedVehicle>,
    pub failures: FailureConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: Protocol::ADrive,
            seed: 1,
            duration_s: 1800.0,
            scoring_window_s: 1200.0,
            dt: 0.05,
            drain_cap_s: 600.0,
            scene: SceneConfig::default(),
            traffic: TrafficConfig::default(),
            vehicle: VehicleParams::default(),
            interaction: InteractionParams::default(),
            channel: ChannelParams::default(),
            cost: CostParams::default(),
            engine: EngineParams::default(),
            vehicles: Vec::new(),
            failures: FailureConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        match cfg.failures.preset.clone() {
            None => Ok(cfg),
            Some(name) => {
                // Re-read on top of the preset so unspecified fields keep the
                // preset's values.
                let base = super::presets::preset(&name)
                    .ok_or_else(|| SimConfig::unknown_preset(&name))?;
                let mut merged = toml::Table::try_from(&base).map_err(|e| SimError::Config(e.to_string()))?;
                let overlay: toml::Table = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
                merge(&mut merged, overlay);
                merged
                    .try_into()
                    .map_err(|e: toml::de::Error| SimError::Config(e.to_string()))
            }
        }
    }

    pub fn load(path: &FsPath) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let SceneConfig::File { path: p } = &mut cfg.scene {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    fn unknown_preset(name: &str) -> SimError {
        SimError::Config(format!(
            "unknown preset {name:?}; known presets: {}",
            super::presets::PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
        ))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Number of ticks per beacon interval, if the tick divides it.
    pub fn ticks_per_beacon(&self) -> Option<u64> {
        let ratio = self.channel.interval() / self.dt;
        let n = ratio.round();
        ((ratio - n).abs() < 1e-9 && n >= 1.0).then_some(n as u64)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be positive".into());
        }
        if !(self.scoring_window_s > 0.0 && self.scoring_window_s <= self.duration_s) {
            return bad("scoring_window_s must lie in (0, duration_s]".into());
        }
        if !(self.drain_cap_s >= 0.0 && self.drain_cap_s.is_finite()) {
            return bad("drain_cap_s must be non-negative".into());
        }
        self.channel.validate().map_err(SimError::Config)?;
        if self.ticks_per_beacon().is_none() {
            return bad(format!(
                "dt = {} must divide the beacon interval {} exactly",
                self.dt,
                self.channel.interval()
            ));
        }
        self.cost.validate().map_err(SimError::Config)?;
        self.engine.validate().map_err(SimError::Config)?;
        let v = &self.vehicle;
        for (name, x) in [
            ("length_m", v.length_m),
            ("accel_mps2", v.accel_mps2),
            ("decel_mps2", v.decel_mps2),
            ("cruise_mps", v.cruise_mps),
            ("back_speed_mps", v.back_speed_mps),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return bad(format!("vehicle {name} must be positive"));
            }
        }
        let ip = &self.interaction;
        if !(ip.min_gap_m > ip.collision_gap_m && ip.collision_gap_m >= 0.0) {
            return bad("interaction min_gap_m must exceed collision_gap_m >= 0".into());
        }
        if !(ip.zone_half_width_m > 0.0 && ip.lookahead_m > 0.0) {
            return bad("interaction zone_half_width_m and lookahead_m must be positive".into());
        }
        let t = &self.traffic;
        if !(t.vph >= 0.0 && t.vph.is_finite()) {
            return bad("traffic vph must be non-negative".into());
        }
        let (a, b) = (t.mix.non_connected, t.mix.human_driven);
        if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0) {
            return bad("traffic mix fractions must be non-negative and sum to at most 1".into());
        }
        let scene = self.scene.build(None)?;
        scene.validate()?;
        for name in &t.paths {
            if scene.path_by_name(name).is_none() {
                return bad(format!("traffic path {name:?} is not in the scene"));
            }
        }
        for (k, sv) in self.vehicles.iter().enumerate() {
            let Some(p) = scene.path_by_name(&sv.path) else {
                return bad(format!("vehicle {k}: unknown path {:?}", sv.path));
            };
            if !(sv.spawn_t >= 0.0 && sv.spawn_t.is_finite()) {
                return bad(format!("vehicle {k}: spawn_t must be non-negative"));
            }
            if let Some(s) = sv.s {
                if !(s >= v.length_m && s < p.length()) {
                    return bad(format!("vehicle {k}: s must lie in [length, path length)"));
                }
            }
            if let Some(sp) = sv.speed {
                if !(sp >= 0.0 && sp <= v.cruise_mps) {
                    return bad(format!("vehicle {k}: speed must lie in [0, cruise]"));
                }
            }
            sv.failure.validate().map_err(|m| SimError::Config(format!("vehicle {k}: {m}")))?;
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
