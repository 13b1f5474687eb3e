use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use decoding_game::multistep::{adversary_best_response, dp_oracle, local_mechanism, ToyMeasure};
use decoding_game::strategist::SolveMode;
use decoding_game::Objective;

use crate::error::{CliError, CliResult};
use crate::wire::{kv, num, num_list, open_input};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Toy measure, one `{"context": [...], "probs": [...]}` line per node.
    #[arg(long, conflicts_with_all = ["d", "horizon"])]
    pub measure: Option<PathBuf>,
    /// Vocabulary size of a random measure.
    #[arg(long)]
    pub d: Option<usize>,
    /// Horizon of a random measure.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, env = "DGAME_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value = "log")]
    pub obj: String,
    /// One-step rule applied at every node.
    #[arg(long, default_value = "exact")]
    pub mode: String,
    /// Grid step of the dynamic-programming oracle.
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Omit the per-node table.
    #[arg(long)]
    pub brief: bool,
}

fn load(args: &SimulateArgs) -> CliResult<ToyMeasure> {
    if let Some(path) = &args.measure {
        return Ok(ToyMeasure::read_lines(open_input(Some(path))?)?);
    }
    match (args.d, args.horizon) {
        (Some(d), Some(t)) => Ok(ToyMeasure::random_seeded(d, t, args.seed)?),
        _ => Err(CliError::Usage("either --measure or both --d and --horizon are required".into())),
    }
}

pub fn run(args: SimulateArgs, out: &mut impl Write) -> CliResult<()> {
    let obj: Objective = args.obj.parse()?;
    let mode: SolveMode = args.mode.parse()?;
    let phat = load(&args)?;
    let local = local_mechanism(&phat, args.eps, &obj, mode)?;
    let trace = adversary_best_response(&local, &phat, args.eps, &obj)?;
    let dp = dp_oracle(&phat, args.eps, &obj, args.grid_step)?;

    kv(out, "d", phat.d())?;
    kv(out, "horizon", phat.horizon())?;
    kv(out, "local_value", num(trace.value))?;
    if let Some(ctx) = &trace.neg_inf_context {
        kv(out, "local_neg_inf_context", format!("{ctx:?}"))?;
    }
    kv(out, "dp_value", num(dp.value))?;
    kv(out, "dp_slack", num(dp.slack))?;
    kv(out, "dp_grid_step", num(dp.grid_step))?;
    kv(out, "dp_minus_local", num(dp.value - trace.value))?;
    if args.brief {
        return Ok(());
    }
    writeln!(out, "context\tphat\tlocal_q\tadversary\tlocal_node_value\tdp_q\tdp_node_value")?;
    for c in 0..phat.len() {
        writeln!(
            out,
            "{:?}\t{}\t{}\t{}\t{}\t{}\t{}",
            phat.context_of(c),
            num_list(phat.node(c)),
            num_list(local.node(c)),
            num_list(trace.adversary.node(c)),
            num(trace.per_node_values[c]),
            num_list(dp.strategy.node(c)),
            num(dp.node_values[c]),
        )?;
    }
    Ok(())
}
