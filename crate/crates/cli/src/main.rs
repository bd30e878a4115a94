//! `tree-ldp`: reproducible experiments for large deviations of walks on
//! the d-regular tree.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{
    AcceptanceArgs, ConcatArgs, ConjugateArgs, CoupleArgs, DistArgs, LambdaStarArgs, McArgs, MgfArgs, RateEndpointArgs,
    RatePathArgs, SimulateArgs,
};
use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "tree-ldp", version, about = "Large deviations of nearest-neighbour walks on the d-regular tree")]
#[command(args_conflicts_with_subcommands = true, allow_negative_numbers = true)]
struct Cli {
    /// JSON file with parameters for the subcommand; flags take precedence.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Output file (stdout when absent). A `<output>.manifest.json` is
    /// written next to it.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[arg(long, value_enum, global = true)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate walks and write their length profiles.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Exact law of the distance to the root, or of the biased walk.
    #[command(allow_negative_numbers = true)]
    Dist(DistArgs),
    /// Compare the distance chain with the folded biased walk.
    #[command(allow_negative_numbers = true)]
    CoupleCheck(CoupleArgs),
    /// Checkpointed log-MGF table with large-n extrapolation.
    #[command(allow_negative_numbers = true)]
    Mgf(MgfArgs),
    /// Grid Legendre conjugate of an extrapolated MGF table.
    #[command(allow_negative_numbers = true)]
    Conjugate(ConjugateArgs),
    /// Closed-form endpoint rate of the simple walk.
    #[command(allow_negative_numbers = true)]
    LambdaStar(LambdaStarArgs),
    /// Numerical endpoint rate against the closed form.
    #[command(allow_negative_numbers = true)]
    RateEndpoint(RateEndpointArgs),
    /// Integral rate functional of a piecewise-linear path.
    #[command(allow_negative_numbers = true)]
    RatePath(RatePathArgs),
    /// Concatenation construction and box containment report.
    #[command(allow_negative_numbers = true)]
    ConcatVerify(ConcatArgs),
    /// Monte Carlo box-probability rates, optionally tilted.
    #[command(allow_negative_numbers = true)]
    McRate(McArgs),
    /// Run the verification battery.
    #[command(allow_negative_numbers = true)]
    Acceptance(AcceptanceArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return output::report_error(&commands::CliError::Config(e.to_string()));
        }
    };
    let ctx = commands::Context { config: cli.config, output: cli.output, format: cli.format };
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&ctx, a),
        Command::Dist(a) => commands::dist(&ctx, a),
        Command::CoupleCheck(a) => commands::couple_check(&ctx, a),
        Command::Mgf(a) => commands::mgf(&ctx, a),
        Command::Conjugate(a) => commands::conjugate(&ctx, a),
        Command::LambdaStar(a) => commands::lambda_star(&ctx, a),
        Command::RateEndpoint(a) => commands::rate_endpoint(&ctx, a),
        Command::RatePath(a) => commands::rate_path(&ctx, a),
        Command::ConcatVerify(a) => commands::concat_verify(&ctx, a),
        Command::McRate(a) => commands::mc_rate(&ctx, a),
        Command::Acceptance(a) => commands::acceptance(&ctx, a),
    };
    match result {
        Ok(status) => status,
        Err(e) => output::report_error(&e),
    }
}
