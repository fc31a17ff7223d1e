use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bicopter::harness::{self, sweep, verify, HarnessError};

const EXIT_USAGE: u8 = 1;
const EXIT_SIMULATION: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(name = "bicopter", version, about = "Adaptive backstepping bicopter simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a preset (builtin name or TOML file); writes CSV and SVG plots.
    Run {
        preset: String,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Integration step [s].
        #[arg(long)]
        dt: Option<f64>,
        /// Run length [s].
        #[arg(long)]
        duration: Option<f64>,
        /// Override a preset field, e.g. `controller.gamma1=1`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VAL")]
        set: Vec<String>,
    },
    /// Run the oracle suite and print a pass/fail table.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a parameter grid; prints one metrics row per point as CSV.
    Sweep {
        grid: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List builtin presets.
    Presets {
        /// Print each preset as TOML.
        #[arg(long)]
        toml: bool,
    },
}

fn fail(e: &HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    if let HarnessError::Simulation { metrics, .. } = e {
        eprintln!("{metrics}");
    }
    ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_SIMULATION })
}

fn run_cmd(name: &str, out: PathBuf, dt: Option<f64>, duration: Option<f64>, set: &[String]) -> Result<(), HarnessError> {
    let mut preset = harness::resolve(name)?;
    for kv in set {
        preset.apply_override(kv)?;
    }
    if let Some(dt) = dt {
        preset.dt = dt;
    }
    if duration.is_some() {
        preset.duration = duration;
    }
    preset.validate()?;
    let output = harness::run(&preset, &out)?;
    println!("{}", output.metrics);
    println!("wrote {}", output.csv.display());
    for p in &output.plots {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn sweep_cmd(grid: PathBuf, jobs: usize, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let text = std::fs::read_to_string(&grid)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", grid.display())))?;
    let grid = sweep::Grid::from_toml(&text)?;
    let rows = sweep::sweep(&grid, jobs)?;
    match out {
        Some(path) => sweep::write_sweep(BufWriter::new(File::create(path)?), &grid, &rows),
        None => sweep::write_sweep(std::io::stdout().lock(), &grid, &rows),
    }
}

fn presets_cmd(toml: bool) -> Result<(), HarnessError> {
    for p in harness::builtins() {
        if toml {
            println!("# {}\n{}", p.name, p.to_toml()?);
        } else {
            println!("{:<16} dt={:<8} T={:<8.3} {}", p.name, p.dt, p.duration()?, p.description);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run { preset, out, dt, duration, set } => run_cmd(&preset, out, dt, duration, &set),
        Command::Verify { seed } => {
            let report = verify::verify(seed);
            println!("{report}");
            return if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_VERIFY) };
        }
        Command::Sweep { grid, jobs, out } => sweep_cmd(grid, jobs, out),
        Command::Presets { toml } => presets_cmd(toml),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
