//! Discrete-time simulation: configuration, the tick loop, failure presets,
//! metrics and the experiment matrix.

pub mod config;
pub mod matrix;
pub mod metrics;
pub mod presets;
pub mod safety;
pub mod traffic;
pub mod world;

use thiserror::Error;

use crate::channel::CodecError;
use crate::engine::EngineError;
use crate::road::RoadError;
use crate::vehicle::{VehicleError, VehicleId};

pub use config::{SceneConfig, ScriptedVehicle, SimConfig, TrafficConfig, TrafficMix, VehicleParams};
pub use matrix::{run_cell, run_matrix, Cell, MatrixRow, MatrixSpec, BOUND_SLACK, CSV_HEADER};
pub use metrics::{trip_delay, RunResult, TripRecord};
pub use presets::{preset, PresetInfo, PRESETS};
pub use world::{BeaconFrame, World};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Road(#[from] RoadError),
    #[error(transparent)]
    Vehicle(#[from] VehicleError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("safety violation at t = {t:.2} s: vehicles {a} and {b} at clearance {clearance:.3} m")]
    SafetyViolation {
        t: f64,
        a: VehicleId,
        b: VehicleId,
        clearance: f64,
    },
}

/// Run one scenario to completion.
pub fn run(cfg: &SimConfig) -> Result<RunResult, SimError> {
    World::new(cfg)?.run_to_end()
}
