//! Cartesian experiment runner writing one CSV row per run.

use std::io::{self, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use super::config::{SceneConfig, SimConfig};
use super::{SimError, World};
use crate::engine::Protocol;

pub const CSV_HEADER: &str = "protocol,volume,size,seed,avg_delay_s,worst_delay_s,deadlocks,mean_resolution_s,\
unresolved,over_bound,collisions,error";

/// Allowed overrun of a deadlock case past its computed bound.
pub const BOUND_SLACK: f64 = 1.1;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSpec {
    pub base: SimConfig,
    pub volumes: Vec<f64>,
    pub sizes: Vec<f64>,
    pub protocols: Vec<Protocol>,
    pub reps: u32,
}

impl MatrixSpec {
    /// Volumes 200 to 800 vph, sizes 10 to 100 m, both protocols, 10 seeds.
    pub fn default_with(base: SimConfig) -> Self {
        MatrixSpec {
            base,
            volumes: vec![200.0, 400.0, 600.0, 800.0],
            sizes: vec![10.0, 40.0, 70.0, 100.0],
            protocols: vec![Protocol::LanePriority, Protocol::ADrive],
            reps: 10,
        }
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &protocol in &self.protocols {
            for &volume in &self.volumes {
                for &size in &self.sizes {
                    for rep in 0..self.reps {
                        out.push(Cell {
                            protocol,
                            volume,
                            size,
                            seed: self.base.seed.wrapping_add(rep as u64),
                        });
                    }
                }
            }
        }
        out
    }

    pub fn config(&self, cell: &Cell) -> Result<SimConfig, SimError> {
        let mut cfg = self.base.clone();
        cfg.protocol = cell.protocol;
        cfg.seed = cell.seed;
        cfg.traffic.vph = cell.volume;
        match &mut cfg.scene {
            SceneConfig::SingleTrack(p) => p.length_m = cell.size,
            SceneConfig::FourWay(p) => p.box_m = cell.size,
            SceneConfig::File { .. } => {
                return Err(SimError::Config("matrix sizes need a built-in scene".into()));
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub protocol: Protocol,
    pub volume: f64,
    pub size: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub cell: Cell,
    pub avg_delay_s: f64,
    pub worst_delay_s: f64,
    pub deadlocks: usize,
    pub mean_resolution_s: f64,
    /// Cases still open when the run ended.
    pub unresolved: usize,
    /// Cases that stayed open longer than their bound with slack.
    pub over_bound: usize,
    pub collisions: usize,
    pub error: Option<String>,
}

impl MatrixRow {
    pub fn csv(&self) -> String {
        let c = &self.cell;
        let err = self.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        format!(
            "{},{},{},{},{:.6},{:.6},{},{:.6},{},{},{},{}",
            c.protocol,
            c.volume,
            c.size,
            c.seed,
            self.avg_delay_s,
            self.worst_delay_s,
            self.deadlocks,
            self.mean_resolution_s,
            self.unresolved,
            self.over_bound,
            self.collisions,
            err
        )
    }
}

/// Run one cell; failures become error rows.
pub fn run_cell(spec: &MatrixSpec, cell: Cell) -> MatrixRow {
    let mut row = MatrixRow {
        cell,
        avg_delay_s: 0.0,
        worst_delay_s: 0.0,
        deadlocks: 0,
        mean_resolution_s: 0.0,
        unresolved: 0,
        over_bound: 0,
        collisions: 0,
        error: None,
    };
    let outcome = spec.config(&cell).and_then(|cfg| World::new(&cfg)?.run_to_end());
    match outcome {
        Ok(r) => {
            row.avg_delay_s = r.average_trip_delay_s;
            row.worst_delay_s = r.worst_trip_delay_s;
            row.deadlocks = r.deadlocks;
            row.mean_resolution_s = r.mean_resolution_s;
            row.unresolved = r.cases.iter().filter(|c| c.closed_at.is_none()).count();
            row.over_bound = r.cases.iter().filter(|c| !c.within_bound(BOUND_SLACK)).count();
            row.collisions = r.collisions;
        }
        Err(e) => {
            if matches!(e, SimError::SafetyViolation { .. }) {
                row.collisions = 1;
            }
            row.error = Some(e.to_string());
        }
    }
    row
}

/// Run every cell on `jobs` threads, writing rows in cell order as they
/// become available.
pub fn run_matrix(spec: &MatrixSpec, jobs: usize, out: &mut dyn Write) -> io::Result<Vec<MatrixRow>> {
    let cells = spec.cells();
    writeln!(out, "{CSV_HEADER}")?;
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, MatrixRow)>();
    let mut rows: Vec<Option<MatrixRow>> = vec![None; cells.len()];
    let jobs = jobs.max(1).min(cells.len().max(1));
    std::thread::scope(|scope| -> io::Result<()> {
        for _ in 0..jobs {
            let tx = tx.clone();
            let (next, cells) = (&next, &cells);
            scope.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= cells.len() {
                    break;
                }
                if tx.send((k, run_cell(spec, cells[k]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut written = 0;
        for (k, row) in rx {
            rows[k] = Some(row);
            while written < rows.len() {
                let Some(r) = &rows[written] else { break };
                writeln!(out, "{}", r.csv())?;
                written += 1;
            }
            out.flush()?;
        }
        Ok(())
    })?;
    Ok(rows.into_iter().flatten().collect())
}
