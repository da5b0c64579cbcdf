//! One deadlock episode from detection to close.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::vehicle::VehicleId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    V2VNegotiation,
    PerceptionThreshold,
    LanePriority,
}

/// Values a member fixed when the episode began.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frozen {
    pub rho: bool,
    pub chi_comm: f64,
    pub chi_perception: f64,
    pub r: f64,
    /// Patience in perception mode.
    pub delta: f64,
    pub s_at_detect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub winner: VehicleId,
    pub yielders: Vec<VehicleId>,
    pub resolved_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeadlockCase {
    pub id: u32,
    pub negotiators: Vec<VehicleId>,
    pub chained: Vec<VehicleId>,
    pub detected_at: f64,
    pub mode: Mode,
    pub frozen: BTreeMap<VehicleId, Frozen>,
    /// V2V ranking has been agreed on; the mode can no longer change.
    pub agreed: bool,
    /// Members that proceed once their way is clear.
    pub winners: BTreeSet<VehicleId>,
    pub yielders: BTreeSet<VehicleId>,
    pub resolution: Option<Resolution>,
    /// Upper bound on how long any member should stay in deadlock.
    pub bound_s: f64,
    pub closed_at: Option<f64>,
}

impl DeadlockCase {
    pub fn members(&self) -> impl Iterator<Item = VehicleId> + '_ {
        self.negotiators.iter().chain(&self.chained).copied()
    }

    pub fn is_negotiator(&self, id: VehicleId) -> bool {
        self.negotiators.contains(&id)
    }

    pub fn decided(&self, id: VehicleId) -> bool {
        self.winners.contains(&id) || self.yielders.contains(&id)
    }

    /// Seconds from detection to the first winner taking the section.
    pub fn resolution_time(&self) -> Option<f64> {
        self.resolution.as_ref().map(|r| r.resolved_at - self.detected_at)
    }

    /// Seconds from detection until no member was left waiting in deadlock.
    pub fn duration(&self) -> Option<f64> {
        self.closed_at.map(|t| t - self.detected_at)
    }
}
