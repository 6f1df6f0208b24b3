use std::path::PathBuf;
use std::process::ExitCode;

use backvol_cli::{run, Command, RunOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "backvol",
    version,
    about = "Backward volume contraction experiments"
)]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run one experiment stage and write its artifacts.
    Run {
        #[arg(value_enum)]
        command: Command,
        /// Experiment configuration (TOML); not needed for `report`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to `[output] dir` or `out`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads, 0 for one per core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Action::Run {
        command,
        config,
        out,
        threads,
        seed,
    } = cli.action;
    if threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot start {threads} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(command, &RunOptions { config, out, seed }) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            for f in &outcome.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
