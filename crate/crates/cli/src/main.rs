use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sphere_pint_cli::{commands, ExperimentConfig, Overrides, RunError};

#[derive(Parser)]
#[command(name = "sphere-pint", version, about = "Parallel-in-time experiments for the shallow water equations on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file, layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in starting configuration (tiny, bumps64, bumps64_aggressive, jet64, bumps256).
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Serial fine run, snapshots, spectra and the error-vs-dt table.
    RunSerial,
    /// MGRIT or Parareal run with per-iteration errors.
    RunPint,
    /// Stability region rasters.
    Stability,
    /// Viscosity coefficient and damping-factor tables.
    ViscosityTable,
}

fn run(cli: &Cli) -> Result<(), RunError> {
    let overrides = Overrides {
        workers: cli.workers,
        output_dir: cli.out.clone(),
    };
    if cli.preset.is_none() && cli.config.is_none() {
        return Err(sphere_pint_cli::ConfigError::Invalid("give --preset, --config, or both".into()).into());
    }
    let cfg = ExperimentConfig::resolve(cli.preset.as_deref(), cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::RunSerial => commands::run_serial(&cfg),
        Command::RunPint => commands::run_pint(&cfg),
        Command::Stability => commands::stability(&cfg),
        Command::ViscosityTable => commands::viscosity_table(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sphere-pint: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
