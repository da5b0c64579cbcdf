//! Per-episode event records, written as newline-delimited JSON.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::vehicle::VehicleId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Record {
    Detected {
        t: f64,
        case: u32,
        negotiators: Vec<VehicleId>,
        chained: Vec<VehicleId>,
    },
    HvFlag {
        t: f64,
        case: u32,
        vehicle: VehicleId,
    },
    Mode {
        t: f64,
        case: u32,
        mode: Mode,
    },
    Decision {
        t: f64,
        case: u32,
        vehicle: VehicleId,
        decision: String,
        target: Option<f64>,
    },
    Resolved {
        t: f64,
        case: u32,
        winner: VehicleId,
        yielders: Vec<VehicleId>,
        detected_at: f64,
    },
    Closed {
        t: f64,
        case: u32,
    },
    Collision {
        t: f64,
        a: VehicleId,
        b: VehicleId,
        clearance: f64,
    },
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub records: Vec<Record>,
}

impl EventLog {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}
