//! Presets, telemetry, plots, metrics, the oracle suite and parameter sweeps.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sim::{SimError, SimRun};
use crate::trajectory::TrajectoryError;

pub mod plot;
pub mod preset;
pub mod records;
pub mod sweep;
pub mod verify;

pub use preset::{builtin, builtins, resolve, Preset, TrajectorySpec};
pub use records::{read_records, write_records, RunMetrics};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown preset `{0}` (see `bicopter presets`)")]
    UnknownPreset(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("plot: {0}")]
    Plot(String),
    #[error("simulation failed: {error}")]
    Simulation { error: SimError, metrics: Box<RunMetrics> },
}

impl HarnessError {
    /// Bad input from the user, as opposed to a failed run.
    pub fn is_usage(&self) -> bool {
        matches!(self, HarnessError::UnknownPreset(_) | HarnessError::Config(_) | HarnessError::Trajectory(_))
    }
}

/// Files and metrics produced by [`run`].
#[derive(Debug)]
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub csv: PathBuf,
    pub plots: Vec<PathBuf>,
    pub run: SimRun<f64>,
}

/// Simulates `preset`, writes `<name>.csv` and the SVG plots into `out_dir`.
/// On a simulation error the partial CSV and plots are still written.
pub fn run(preset: &Preset, out_dir: &Path) -> Result<RunOutput, HarnessError> {
    let sim = preset.simulate()?;
    fs::create_dir_all(out_dir)?;
    let csv = out_dir.join(format!("{}.csv", preset.name));
    write_records(BufWriter::new(File::create(&csv)?), &sim.records)?;
    let plots = if sim.records.is_empty() {
        Vec::new()
    } else {
        plot::write_plots(out_dir, &sim.records)?
    };
    let metrics = RunMetrics::from_run(&preset.name, &sim);
    if let Some(error) = sim.error.clone() {
        return Err(HarnessError::Simulation { error, metrics: Box::new(metrics) });
    }
    Ok(RunOutput { metrics, csv, plots, run: sim })
}
