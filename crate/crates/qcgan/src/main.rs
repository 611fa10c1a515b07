use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qcgan::cli;

/// Hybrid quantum-classical GAN experiments.
#[derive(Parser)]
#[command(name = "qcgan", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a generator against the discriminator and log metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample images from a checkpoint into a PGM grid.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated images against the real set.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Diagnostic: score the real set against itself (expects ~0).
        #[arg(long, default_value_t = false)]
        real_vs_real: bool,
    },
    /// Print the trainable-parameter table and verify it.
    Audit,
}

fn main() -> ExitCode {
    // QCGAN_THREADS caps internal parallelism; execution is single-threaded,
    // so any positive value is honored, but a malformed one is still a
    // usage error.
    if let Ok(raw) = std::env::var("QCGAN_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {}
            _ => {
                eprintln!("error: QCGAN_THREADS must be a positive integer, got '{raw}'");
                return ExitCode::from(1);
            }
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are not failures.
            if err.use_stderr() {
                eprintln!("{err}");
                return ExitCode::from(1);
            }
            print!("{err}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Train { config } => cli::cmd_train(&config),
        Command::Generate { checkpoint, count, seed, out } => {
            cli::cmd_generate(&checkpoint, count, seed, &out)
        }
        Command::Evaluate { checkpoint, config, real_vs_real } => {
            cli::cmd_evaluate(&checkpoint, &config, real_vs_real)
        }
        Command::Audit => cli::cmd_audit(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
