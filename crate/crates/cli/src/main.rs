//! `dfd`: batch front end for defocus simulation, depth estimation and evaluation.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dfd", version, about = "Defocus blur simulation and depth-from-defocus tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate blur diameter against depth as CSV
    BlurCurve(commands::BlurCurveArgs),
    /// Render defocused images for every entry of a manifest
    Render(commands::RenderArgs),
    /// Estimate depth from a single defocused image
    Estimate(commands::EstimateArgs),
    /// Score predicted depth maps against ground truth
    Evaluate(commands::EvaluateArgs),
    /// Per-pixel mean and variance of a stack of depth samples
    Uncertainty(commands::UncertaintyArgs),
    /// Write a deterministic procedural RGB-D dataset with its manifest
    Generate(commands::GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    /// Some inputs failed; the rest were processed.
    Partial,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or unreadable inputs.
    Usage(String),
    /// The inputs were readable but processing them failed.
    Data(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

impl From<dfd_core::Error> for CliError {
    fn from(e: dfd_core::Error) -> Self {
        use dfd_core::Error as E;
        match e {
            E::InvalidConfig(_) | E::InvalidArgument(_) | E::Io { .. } | E::Format { .. } => {
                CliError::Usage(e.to_string())
            }
            E::Precondition(_) | E::Estimation(_) | E::Evaluation(_) => CliError::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BlurCurve(a) => commands::blur_curve(a),
        Command::Render(a) => commands::render(a),
        Command::Estimate(a) => commands::estimate(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Uncertainty(a) => commands::uncertainty(a),
        Command::Generate(a) => commands::generate(a),
    };
    match result {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Data(_) => ExitCode::from(1),
            }
        }
    }
}
