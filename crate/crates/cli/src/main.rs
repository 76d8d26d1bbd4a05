//! `bnspde <mode> --config <file> --out <dir> [--paths N] [--seed S]`

use std::path::PathBuf;
use std::process::ExitCode;

use bnspde::config::load;
use bnspde::experiment::{run_experiment, Mode, Overrides};
use bnspde::Error;
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CliMode {
    Solve,
    DeterministicOracle,
    VariationalCheck,
    RegularityStudy,
    ConvergenceStudy,
    ValidateOnly,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Solve => Mode::Solve,
            CliMode::DeterministicOracle => Mode::DeterministicOracle,
            CliMode::VariationalCheck => Mode::VariationalCheck,
            CliMode::RegularityStudy => Mode::RegularityStudy,
            CliMode::ConvergenceStudy => Mode::ConvergenceStudy,
            CliMode::ValidateOnly => Mode::ValidateOnly,
        }
    }
}

/// Simulation and verification of parabolic SPDEs with Neumann boundary noise.
#[derive(Debug, Parser)]
#[command(name = "bnspde", version)]
struct Cli {
    mode: CliMode,
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Override the number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli.config)
        .and_then(|cfg| run_experiment(cfg, cli.mode.into(), &cli.out, Overrides { paths: cli.paths, seed: cli.seed }));
    match result {
        Ok(summary) => {
            print!("{}", summary.text());
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(Error::Config(violations)) => {
            for v in &violations {
                eprintln!("rejected [{}]: {}", v.anchor.as_str(), v.message);
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
