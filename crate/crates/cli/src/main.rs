use std::process::ExitCode;

use clap::Parser;

mod commands;

/// Workbench for grounded visual captioning on synthetic scenes:
/// generate data, train with the cyclical regimen, and score grounding.
#[derive(Debug, Parser)]
#[command(name = "cycleground", version, arg_required_else_help = true)]
struct Cli {
    /// Worker thread cap (falls back to CYCLEGROUND_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: commands::Command,
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("CYCLEGROUND_THREADS") {
        Ok(raw) => raw
            .parse::<usize>()
            .map(Some)
            .map_err(|_| format!("CYCLEGROUND_THREADS must be a number, got {raw:?}")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match thread_cap(cli.threads) {
        Ok(Some(n)) if n > 0 => {
            if let Err(e) = cycleground::parallel::configure_threads(n) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(Some(_)) => {
            eprintln!("error: thread count must be positive");
            return ExitCode::from(2);
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
