use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use densecoord_cli::studies::Study;
use densecoord_cli::verify::Fault;
use densecoord_cli::{cmd_run, cmd_study, cmd_verify, RunFlags};

/// Pairing, coordinated precoding and Monte-Carlo rate evaluation for
/// ultra-dense networks.
#[derive(Parser)]
#[command(name = "densecoord", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign from a JSON config.
    Run {
        /// Config file; defaults are used for missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a pre-baked study: proportionate, densification or ue-density.
    Study {
        name: Study,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Use 250 snapshots per cell instead of 25.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run the oracle self-checks and print a pass/fail table.
    Verify {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Args)]
struct Common {
    /// Set a config key, e.g. `snr_ref_db=20` (repeatable).
    #[arg(long = "override", value_name = "KEY=VAL")]
    overrides: Vec<String>,
    /// Snapshots per grid cell.
    #[arg(long)]
    snapshots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (1 runs serially).
    #[arg(long)]
    threads: Option<usize>,
    /// No progress or summary output.
    #[arg(long)]
    quiet: bool,
}

impl From<Common> for RunFlags {
    fn from(c: Common) -> Self {
        RunFlags { overrides: c.overrides, snapshots: c.snapshots, seed: c.seed, threads: c.threads, quiet: c.quiet }
    }
}

fn main() -> ExitCode {
    let code = match Cli::parse().command {
        Command::Run { config, out, common } => cmd_run(config.as_deref(), &out, &common.into()),
        Command::Study { name, out, full, common } => cmd_study(name, &out, full, &common.into()),
        Command::Verify { out, inject_fault } => cmd_verify(&out, inject_fault),
    };
    ExitCode::from(code as u8)
}
