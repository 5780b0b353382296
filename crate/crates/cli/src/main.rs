//! `triform`: observability analysis, triangular forms and observer runs
//! for control-affine systems.
//!
//! Exit codes: 0 ok, 2 parse error, 3 configuration error, 4 construction
//! refused, 5 runtime domain violation.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use triform::{parse_system, ControlAffineSystem};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "triform", version, about = "Observability analysis and triangular canonical forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// System definition file.
    #[arg(long)]
    system: PathBuf,
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a system (and optionally a config) and print a summary.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Print L_f^k h and L_g L_f^{k-1} h for k up to the order.
    DumpLie {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        order: usize,
    },
    /// Rank, injectivity, fiber, kernel and Lipschitz scans over the region.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Build the triangular form and save it as JSON.
    Transform {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate the plant and a high-gain observer on a saved form.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Form file written by `transform`.
        #[arg(long)]
        form: PathBuf,
    },
    /// Integrate the tangent-lifted system and test infinitesimal rank.
    TangentSim {
        #[command(flatten)]
        common: Common,
    },
    /// Sampled modulus of continuity of a value map against a key map.
    Modulus {
        #[command(flatten)]
        common: Common,
    },
}

/// System, resolved config and output directory shared by all commands.
pub struct Context {
    pub system: Arc<ControlAffineSystem>,
    pub config: RunConfig,
    pub out: PathBuf,
}

fn load(common: &Common) -> Result<Context, CliError> {
    let path = common.system.display().to_string();
    let text = std::fs::read_to_string(&common.system).map_err(|e| CliError::Config(format!("cannot read {path}: {e}")))?;
    let system = parse_system(&text).map_err(|e| CliError::Parse(format!("{path}: {e}")))?;
    let mut config = RunConfig::load(common.config.as_deref().and_then(|p| p.to_str()))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = Some(out.display().to_string());
    }
    config.validate(system.n(), system.m())?;
    let out = PathBuf::from(config.output_dir.clone().unwrap_or_else(|| "out".into()));
    Ok(Context { system: Arc::new(system), config, out })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { common } => commands::validate(&load(&common)?),
        Command::DumpLie { common, order } => commands::dump_lie(&load(&common)?, order),
        Command::Analyze { common } => commands::analyze::run(&load(&common)?),
        Command::Transform { common } => commands::transform::run(&load(&common)?),
        Command::Simulate { common, form } => commands::simulate::run(&load(&common)?, &form),
        Command::TangentSim { common } => commands::tangent::run(&load(&common)?),
        Command::Modulus { common } => commands::modulus::run(&load(&common)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
