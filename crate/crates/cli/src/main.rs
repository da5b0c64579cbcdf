use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adrive::engine::Protocol;
use adrive::sim::{matrix::MatrixSpec, preset, run_matrix, SimConfig, SimError, World, PRESETS};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

/// Exit status when a run reports a collision.
const SAFETY_EXIT: u8 = 2;

#[derive(Parser)]
#[command(name = "adrive", version, about = "Vehicle deadlock recovery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario.
    Run {
        /// Scenario file (TOML).
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Named failure preset instead of a file.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Write the run result as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the episode event log as newline-delimited JSON here.
        #[arg(long)]
        events: Option<PathBuf>,
        /// Write every transmitted beacon frame as hex here.
        #[arg(long)]
        beacons: Option<PathBuf>,
    },
    /// Run the volume by size by protocol by seed experiment matrix.
    Matrix {
        /// Base scenario file; defaults to the built-in single-track scene.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [200.0, 400.0, 600.0, 800.0])]
        volumes: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [10.0, 40.0, 70.0, 100.0])]
        sizes: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [Protocol::LanePriority, Protocol::ADrive])]
        protocols: Vec<Protocol>,
        #[arg(long, default_value_t = 10)]
        reps: u32,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
        /// CSV destination; defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the failure presets, or print one as a scenario file.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

fn load(config: Option<&Path>, preset_name: Option<&str>) -> Result<SimConfig> {
    match (config, preset_name) {
        (Some(p), _) => Ok(SimConfig::load(p)?),
        (None, Some(n)) => preset(n).with_context(|| {
            let names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
            format!("unknown preset {n:?}; known presets: {}", names.join(", "))
        }),
        (None, None) => Ok(SimConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run {
            config,
            preset,
            seed,
            protocol,
            out,
            events,
            beacons,
        } => {
            let mut cfg = load(config.as_deref(), preset.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(p) = protocol {
                cfg.protocol = p;
            }
            let mut world = World::new(&cfg)?;
            if beacons.is_some() {
                world.record_beacons();
            }
            let outcome = world.run_to_end();
            if let Some(p) = &events {
                let mut w = create(p)?;
                world.event_log().write_ndjson(&mut w)?;
                w.flush()?;
            }
            if let (Some(p), Some(frames)) = (&beacons, &world.beacon_frames) {
                let mut w = create(p)?;
                for f in frames {
                    writeln!(w, "{:.2} {} {}", f.t, f.sender, f.hex)?;
                }
                w.flush()?;
            }
            match outcome {
                Ok(result) => {
                    let json = serde_json::to_string_pretty(&result)?;
                    match &out {
                        Some(p) => {
                            let mut w = create(p)?;
                            writeln!(w, "{json}")?;
                            w.flush()?;
                        }
                        None => println!("{json}"),
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(e @ SimError::SafetyViolation { .. }) => {
                    eprintln!("error: {e}");
                    Ok(ExitCode::from(SAFETY_EXIT))
                }
                Err(e) => Err(e.into()),
            }
        }
        Command::Matrix {
            config,
            volumes,
            sizes,
            protocols,
            reps,
            jobs,
            out,
        } => {
            if reps == 0 {
                bail!("--reps must be at least 1");
            }
            let base = load(config.as_deref(), None)?;
            base.validate()?;
            let spec = MatrixSpec {
                base,
                volumes,
                sizes,
                protocols,
                reps,
            };
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let rows = match &out {
                Some(p) => {
                    let mut w = create(p)?;
                    let rows = run_matrix(&spec, jobs, &mut w)?;
                    w.flush()?;
                    rows
                }
                None => run_matrix(&spec, jobs, &mut io::stdout().lock())?,
            };
            let collisions: usize = rows.iter().map(|r| r.collisions).sum();
            let errors = rows.iter().filter(|r| r.error.is_some()).count();
            let unresolved: usize = rows.iter().map(|r| r.unresolved).sum();
            let over: usize = rows.iter().map(|r| r.over_bound).sum();
            eprintln!(
                "{} runs, {errors} errors, {collisions} collisions, {unresolved} unresolved cases, {over} cases over bound",
                rows.len()
            );
            Ok(if collisions > 0 {
                ExitCode::from(SAFETY_EXIT)
            } else if errors > 0 {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Validate { config } => {
            let cfg = SimConfig::load(&config)?;
            cfg.validate()?;
            println!("{}: ok", config.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets { show } => {
            match show {
                Some(n) => print!("{}", load(None, Some(&n))?.to_toml()),
                None => {
                    for p in PRESETS {
                        println!("{:<16} {}", p.name, p.description);
                    }
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
