//! `dgame`: minimax decoding from the command line.

mod commands;
mod error;
mod wire;

use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{analyze, sample, simulate, solve, verify};
use error::CliResult;

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  1   verification failure (verify)
  2   closed-form assumption violated or instance too large
  64  usage error
  65  data error (unreadable or invalid input, misaligned streams)

Randomness comes only from --seed, which defaults to $DGAME_SEED, then 0.";

#[derive(Debug, Parser)]
#[command(name = "dgame", version, about = "Minimax truncation decoding against a total-variation adversary", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the one-step game for a single distribution.
    Solve(solve::SolveArgs),
    /// Sample one token per record of a distribution stream.
    Sample(sample::SampleArgs),
    /// Perplexity, repetition and support-size metrics for generated tokens.
    Analyze(analyze::AnalyzeArgs),
    /// Multi-step game on a toy tree: local mechanism against a DP oracle.
    Simulate(simulate::SimulateArgs),
    /// Check the closed-form solutions against brute-force oracles.
    Verify(verify::VerifyArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Solve(a) => solve::run(a, &mut out)?,
        Command::Sample(a) => sample::run(a, &mut out)?,
        Command::Analyze(a) => analyze::run(a, &mut out)?,
        Command::Simulate(a) => simulate::run(a, &mut out)?,
        Command::Verify(a) => verify::run(a, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dgame: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
