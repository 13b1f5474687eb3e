use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use decoding_game::oracle::verify_suite;

use crate::error::{CliError, CliResult};
use crate::wire::{kv, num};

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Dimensions, cycled over the instances.
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    pub dims: Vec<usize>,
    #[arg(long, env = "DGAME_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Simplex grid step of the brute-force oracles.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    /// Line-delimited report, one record per instance.
    #[arg(long, default_value = "oracle_report.jsonl")]
    pub report: PathBuf,
}

pub fn run(args: VerifyArgs, out: &mut impl Write) -> CliResult<()> {
    let recs = verify_suite(args.count, &args.dims, args.seed, args.step)?;
    let file = File::create(&args.report).map_err(|e| CliError::Data(format!("{}: {e}", args.report.display())))?;
    let mut w = BufWriter::new(file);
    for r in &recs {
        serde_json::to_writer(&mut w, r).map_err(|e| CliError::Io(e.into()))?;
        writeln!(w)?;
    }
    w.flush()?;

    let failed: Vec<_> = recs.iter().filter(|r| !r.pass).collect();
    kv(out, "instances", recs.len())?;
    kv(out, "passed", recs.len() - failed.len())?;
    kv(out, "failed", failed.len())?;
    let worst_gap = recs
        .iter()
        .map(|r| r.grid_value - r.closed_form)
        .fold(f64::NEG_INFINITY, f64::max);
    kv(out, "max_grid_minus_closed_form", num(worst_gap))?;
    kv(out, "report", args.report.display())?;
    if let Some(first) = failed.first() {
        for r in &failed {
            eprintln!(
                "dgame: instance {} (d={}, eps={}): closed form {} vs grid {} (slack {}), ball {} vs vertex {}",
                r.instance,
                r.dim,
                num(r.eps),
                num(r.closed_form),
                num(r.grid_value),
                num(r.slack),
                num(r.grid_ball_value),
                num(r.vertex_value),
            );
        }
        return Err(CliError::VerifyFailed(format!(
            "{} of {} instances disagree, first {}",
            failed.len(),
            recs.len(),
            first.instance
        )));
    }
    Ok(())
}
