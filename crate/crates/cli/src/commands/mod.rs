//! Subcommand implementations and shared plumbing.

pub mod ablate;
pub mod eval;
pub mod gen_data;
pub mod gradcheck;
pub mod manifest;
pub mod train;

use clap::Subcommand;

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic grounded-captioning dataset.
    GenData(gen_data::GenDataArgs),
    /// Train a captioning model with the cyclical regimen.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint or externally produced predictions.
    Eval(eval::EvalArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
    /// Train a grid of configurations and tabulate the results.
    Ablate(ablate::AblateArgs),
}

pub fn run(command: &Command) -> anyhow::Result<()> {
    match command {
        Command::GenData(args) => gen_data::run(args),
        Command::Train(args) => train::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Gradcheck(args) => gradcheck::run(args),
        Command::Ablate(args) => ablate::run(args),
    }
}

/// Exit code for an error: 2 for configuration and usage problems, 3 for
/// data problems, 4 for numeric failures, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<cycleground::Error>() {
        Some(cycleground::Error::Config(_)) => 2,
        Some(cycleground::Error::Data(_))
        | Some(cycleground::Error::Io(_))
        | Some(cycleground::Error::Json(_)) => 3,
        Some(cycleground::Error::Numeric(_)) => 4,
        None => 1,
    }
}
