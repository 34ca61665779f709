use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use openmaps_cli::commands::{self, GlobalOptions};

#[derive(Parser)]
#[command(name = "openmaps", version, about = "Density-matrix simulations of dissipative spin-chain maps")]
struct Cli {
    /// Output directory (overrides `out` in configs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the state after every step as JSON.
    #[arg(long, global = true)]
    dump_states: bool,
    /// Treat unknown config keys as errors.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more configs.
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Run the configs in parallel.
        #[arg(long)]
        sweep: bool,
    },
    /// Check a directory of pulse tables.
    VerifySequences { dir: PathBuf },
    /// Print closed-form tables: order, mixture, ssm or all.
    Analytics {
        table: String,
        #[arg(long, default_value_t = 2)]
        n_min: usize,
        #[arg(long, default_value_t = 8)]
        n_max: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = GlobalOptions { out: cli.out, dump_states: cli.dump_states, strict: cli.strict };
    let code = match cli.command {
        Command::Run { configs, sweep } => commands::run_configs(&configs, &opts, sweep),
        Command::VerifySequences { dir } => commands::verify_sequences(&dir, &opts),
        Command::Analytics { table, n_min, n_max } => commands::analytics(&table, n_min, n_max),
    };
    ExitCode::from(code as u8)
}
