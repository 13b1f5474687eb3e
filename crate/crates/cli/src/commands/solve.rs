use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use decoding_game::strategist::{kkt_certificate, solve, SolveMode};
use decoding_game::{Objective, ProbVector};

use crate::error::{CliError, CliResult};
use crate::wire::{kv, num, num_list, open_input, parse_dist, records};

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Comma-separated probabilities.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "input")]
    pub probs: Option<Vec<f64>>,
    /// File whose first record (`{"probs": ...}` or `{"logits": ...}`) is solved.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// TV radius.
    #[arg(long, allow_hyphen_values = true)]
    pub eps: f64,
    /// `log` or `power:<tau>`.
    #[arg(long, default_value = "log")]
    pub obj: String,
    /// `exact`, `first-order` or `relaxed`.
    #[arg(long, default_value = "exact")]
    pub mode: String,
    /// Also print a KKT optimality certificate for the returned strategy.
    #[arg(long)]
    pub kkt: bool,
}

fn load(args: &SolveArgs) -> CliResult<ProbVector> {
    if let Some(p) = &args.probs {
        return Ok(ProbVector::from_probs(p)?);
    }
    let Some(path) = &args.input else {
        return Err(CliError::Usage("one of --probs or --input is required".into()));
    };
    let (line_no, line) = records(open_input(Some(path))?)
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: no records", path.display())))??;
    Ok(parse_dist(&line, line_no)?.dist.to_prob_vector()?)
}

pub fn run(args: SolveArgs, out: &mut impl Write) -> CliResult<()> {
    let obj: Objective = args.obj.parse()?;
    let mode: SolveMode = args.mode.parse()?;
    let p = load(&args)?;
    let sol = solve(&p, args.eps, &obj, mode)?;

    kv(out, "mode", &args.mode)?;
    kv(out, "objective", &obj)?;
    kv(out, "case", format!("{:?}", sol.case.case))?;
    kv(out, "support_size", sol.support_size)?;
    kv(out, "support_ids", ids(&p.perm()[..sol.support_size]))?;
    kv(out, "weights", num_list(&sol.weights))?;
    kv(out, "q", num_list(&p.scatter(&sol.q)))?;
    kv(out, "value", num(sol.value))?;
    let adv = &sol.adversary;
    match (&adv.witness, &adv.zeroing_witness) {
        (Some(w), _) => kv(out, "adversary", num_list(&p.scatter(w)))?,
        (None, Some(w)) => kv(out, "adversary", num_list(&p.scatter(w)))?,
        (None, None) => {}
    }
    if let Some(i) = adv.zeroed_index {
        kv(out, "adversary_zeroed", p.perm()[i])?;
    }
    if let (Some(from), Some(to)) = (adv.donor_index, adv.recipient_index) {
        kv(out, "adversary_move", format!("{} -> {}", p.perm()[from], p.perm()[to]))?;
    }
    if args.kkt {
        let cert = kkt_certificate(&sol.q, &p, args.eps, &obj)?;
        kv(out, "kkt_feasible", cert.feasible)?;
        kv(out, "kkt_nu", num(cert.nu_star))?;
        kv(out, "kkt_residual", num(cert.stationarity_residual))?;
        for v in &cert.violations {
            kv(out, "kkt_violation", v)?;
        }
    }
    Ok(())
}

fn ids(ids: &[usize]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}
