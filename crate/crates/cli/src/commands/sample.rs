use std::io::Write;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use decoding_game::sampler::{sample_record, Method};
use decoding_game::SamplerConfig;

use crate::error::{CliError, CliResult};
use crate::wire::{json_ids, json_list, open_input, parse_dist, records};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodName {
    Game,
    Greedy,
    Pure,
    TopK,
    Nucleus,
    Temperature,
    Typical,
    Eta,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Line-delimited distribution records; stdin when absent or `-`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "game")]
    pub method: MethodName,
    /// Game radius.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Game power exponent (1 is the log objective).
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Top-k size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Mass for nucleus and typical sampling.
    #[arg(long)]
    pub p: Option<f64>,
    /// Temperature.
    #[arg(long)]
    pub t: Option<f64>,
    /// Eta-sampling threshold.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, env = "DGAME_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Abort on the first bad record. Otherwise it is reported on stderr and
    /// an `"error"` record takes its place in the output.
    #[arg(long)]
    pub strict: bool,
    /// Game threshold with the literal power ratio instead of the form
    /// consistent with the log objective.
    #[arg(long)]
    pub paper_literal_tau: bool,
    /// Include retained masses ("q") and their vocabulary ids ("ids").
    #[arg(long)]
    pub emit_support: bool,
}

fn required<T>(v: Option<T>, flag: &str, method: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("--method {method} requires --{flag}")))
}

pub fn config(args: &SampleArgs) -> CliResult<SamplerConfig> {
    let method = match args.method {
        MethodName::Game => Method::Game {
            eps: required(args.eps, "eps", "game")?,
            tau: args.tau,
        },
        MethodName::Greedy => Method::Greedy,
        MethodName::Pure => Method::Pure,
        MethodName::TopK => Method::TopK(required(args.k, "k", "top-k")?),
        MethodName::Nucleus => Method::Nucleus(required(args.p, "p", "nucleus")?),
        MethodName::Temperature => Method::Temperature(required(args.t, "t", "temperature")?),
        MethodName::Typical => Method::Typical(required(args.p, "p", "typical")?),
        MethodName::Eta => Method::Eta(required(args.eta, "eta", "eta")?),
    };
    Ok(SamplerConfig::new(method)?.with_paper_literal(args.paper_literal_tau))
}

/// One output line per input record. Records are processed as they are
/// read, so memory does not grow with the stream.
pub fn run(args: SampleArgs, out: &mut impl Write) -> CliResult<()> {
    let cfg = config(&args)?;
    if args.paper_literal_tau {
        if matches!(args.method, MethodName::Game) {
            eprintln!("dgame: game threshold uses the literal power ratio (p_i/p_I)^(1-1/tau) [{cfg}]");
        } else {
            eprintln!("dgame: --paper-literal-tau has no effect on --method {:?}", args.method);
        }
    }
    let mut index = 0u64;
    let mut failures = 0usize;
    for rec in records(open_input(args.input.as_deref())?) {
        let (line_no, line) = rec?;
        let i = index;
        index += 1;
        let result = parse_dist(&line, line_no).and_then(|r| {
            let (token, tr) = sample_record(&cfg, &r.dist, args.seed, i)?;
            Ok((r, token, tr))
        });
        match result {
            Ok((r, token, tr)) => {
                let id = r.id.map_or_else(|| i.to_string(), |id| id.to_json());
                write!(out, "{{\"id\":{id},\"token\":{token},\"support_size\":{}", tr.support_size)?;
                if args.emit_support {
                    write!(out, ",\"q\":{},\"ids\":{}", json_list(&tr.masses), json_ids(&tr.support_vocab_ids))?;
                }
                writeln!(out, "}}")?;
            }
            Err(e) => {
                let msg = format!("line {line_no}: {}", e.message());
                if args.strict {
                    return Err(CliError::Data(msg));
                }
                eprintln!("dgame: record {i}: {msg}");
                let err = serde_json::Value::String(msg).to_string();
                writeln!(out, "{{\"id\":{i},\"token\":null,\"support_size\":null,\"error\":{err}}}")?;
                failures += 1;
            }
        }
    }
    if index == 0 {
        return Err(CliError::Data("input contains no records".into()));
    }
    if failures > 0 {
        eprintln!("dgame: {failures} of {index} records failed");
    }
    Ok(())
}
