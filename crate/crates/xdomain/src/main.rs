use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xdomain::commands::{self, Options};

#[derive(Parser)]
#[command(name = "xdomain", version, about = "Few-shot cross-domain Siamese training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic domain-shift datasets.
    GenData(Common),
    /// Run the k-fold protocol for the configured method.
    Run(Common),
    /// Compare the full loss against each single cross-domain term.
    Ablate(Common),
    /// Sweep the number of target shots.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Small, fast variant of the command.
    #[arg(long)]
    smoke: bool,
    /// Folds to run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options {
            config: c.config,
            out: c.out,
            force: c.force,
            smoke: c.smoke,
            jobs: c.jobs,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(c) => commands::gen_data(&c.into()),
        Command::Run(c) => commands::run(&c.into()),
        Command::Ablate(c) => commands::ablate(&c.into()),
        Command::Sweep(c) => commands::sweep(&c.into()),
    };
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
