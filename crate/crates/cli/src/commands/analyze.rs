use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use decoding_game::metrics::{MetricsAccumulator, StepRecord};

use crate::error::{CliError, CliResult};
use crate::wire::{kv, num, open_input, parse_dist, parse_token, records};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Chosen tokens: one integer or `{"token": ...}` object per line, e.g.
    /// the output of `dgame sample`.
    #[arg(long)]
    pub tokens: PathBuf,
    /// The distributions the tokens were drawn from, aligned line by line.
    #[arg(long)]
    pub dists: PathBuf,
    /// Print the full report as one JSON line instead of a summary table.
    #[arg(long)]
    pub json: bool,
}

/// Walks both streams in lockstep. A `seq` field on either record splits
/// the corpus into sequences for repetition detection; without it the
/// whole stream is one sequence.
pub fn run(args: AnalyzeArgs, out: &mut impl Write) -> CliResult<()> {
    let mut tokens = records(open_input(Some(&args.tokens))?);
    let mut dists = records(open_input(Some(&args.dists))?);
    let mut acc = MetricsAccumulator::new();
    let mut current_seq: Option<Option<String>> = None;
    let mut step = 0usize;
    loop {
        let (t, d) = match (tokens.next(), dists.next()) {
            (None, None) => break,
            (Some(t), Some(d)) => (t?, d?),
            (t, _) => {
                let (longer, shorter) = if t.is_some() { ("tokens", "dists") } else { ("dists", "tokens") };
                return Err(CliError::Data(format!(
                    "misaligned inputs: {shorter} ended after {step} records but {longer} continues"
                )));
            }
        };
        let tok = parse_token(&t.1, t.0).map_err(|e| CliError::Data(format!("tokens {}", e.message())))?;
        let rec = parse_dist(&d.1, d.0).map_err(|e| CliError::Data(format!("dists {}", e.message())))?;
        let seq = tok.seq.clone().or(rec.seq.clone());
        if current_seq.as_ref() != Some(&seq) {
            acc.start_sequence();
            current_seq = Some(seq);
        }
        let record = StepRecord {
            dist: rec.dist,
            chosen: tok.token,
            support_size: tok.support_size.or(rec.support_size),
        };
        acc.push(&record).map_err(|e| CliError::Data(e.to_string()))?;
        step += 1;
    }
    let report = acc.finish()?;
    if args.json {
        serde_json::to_writer(&mut *out, &report).map_err(|e| CliError::Io(e.into()))?;
        writeln!(out)?;
        return Ok(());
    }
    kv(out, "sequences", report.sequences)?;
    kv(out, "steps", report.steps)?;
    kv(out, "perplexity", num(report.perplexity))?;
    kv(out, "repetition_frequency", num(report.repetition_frequency))?;
    let flags: Vec<&str> = report
        .repetition_flags
        .iter()
        .map(|&f| if f { "1" } else { "0" })
        .collect();
    kv(out, "repetition_flags", flags.join(" "))?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    kv(out, "mean_entropy", num(mean(&report.entropy_series)))?;
    kv(out, "mean_surprisal", num(mean(&report.surprisal_series)))?;
    match report.support_size_quantiles {
        Some(q) => kv(out, "support_size_quantiles", format!("{} {} {} {} {}", q[0], q[1], q[2], q[3], q[4]))?,
        None => kv(out, "support_size_quantiles", "-")?,
    }
    kv(out, "mauve", "-")?;
    Ok(())
}
