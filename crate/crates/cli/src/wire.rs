//! Line-delimited record formats and number printing.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use decoding_game::RawDist;
use serde::Deserialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Record identifier as it appeared on input, echoed verbatim on output.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RecordId {
    Int(i64),
    Str(String),
}

impl RecordId {
    pub fn to_json(&self) -> String {
        match self {
            RecordId::Int(i) => i.to_string(),
            RecordId::Str(s) => Value::String(s.clone()).to_string(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            RecordId::Int(i) => i.to_string(),
            RecordId::Str(s) => s.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Wire {
    id: Option<RecordId>,
    probs: Option<Vec<f64>>,
    logits: Option<Vec<f64>>,
    seq: Option<Value>,
    support_size: Option<usize>,
}

/// One input distribution record.
#[derive(Debug, Clone)]
pub struct DistRecord {
    pub id: Option<RecordId>,
    pub dist: RawDist,
    /// Sequence key; consecutive records sharing it form one sequence.
    pub seq: Option<String>,
    pub support_size: Option<usize>,
}

pub fn parse_dist(line: &str, line_no: usize) -> CliResult<DistRecord> {
    let wire: Wire = serde_json::from_str(line).map_err(|e| CliError::Data(format!("line {line_no}: {e}")))?;
    let dist = match (wire.probs, wire.logits) {
        (Some(p), None) => RawDist::probs(p),
        (None, Some(l)) => RawDist::logits(l),
        _ => {
            return Err(CliError::Data(format!(
                "line {line_no}: exactly one of \"probs\" and \"logits\" is required"
            )))
        }
    };
    let dist = match &wire.id {
        Some(id) => dist.with_id(id.label()),
        None => dist,
    };
    Ok(DistRecord {
        id: wire.id,
        dist,
        seq: wire.seq.map(|v| v.to_string()),
        support_size: wire.support_size,
    })
}

/// A chosen token, from a bare integer line or an object with `"token"`
/// (such as the output of `dgame sample`).
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    pub token: usize,
    pub seq: Option<String>,
    pub support_size: Option<usize>,
}

pub fn parse_token(line: &str, line_no: usize) -> CliResult<TokenRecord> {
    let bad = |why: &str| CliError::Data(format!("line {line_no}: {why}"));
    let value: Value = serde_json::from_str(line).map_err(|e| bad(&e.to_string()))?;
    let as_index = |v: &Value| v.as_u64().map(|t| t as usize);
    match &value {
        Value::Number(_) => Ok(TokenRecord {
            token: as_index(&value).ok_or_else(|| bad("token must be a non-negative integer"))?,
            seq: None,
            support_size: None,
        }),
        Value::Object(map) => {
            let token = map
                .get("token")
                .and_then(as_index)
                .ok_or_else(|| bad("missing non-negative integer \"token\""))?;
            Ok(TokenRecord {
                token,
                seq: map.get("seq").map(|v| v.to_string()),
                support_size: map.get("support_size").and_then(as_index),
            })
        }
        _ => Err(bad("expected an integer or an object")),
    }
}

/// Opens `path`, or stdin for `-` / no path.
pub fn open_input(path: Option<&Path>) -> CliResult<Box<dyn BufRead>> {
    match path {
        None => Ok(Box::new(BufReader::new(io::stdin()))),
        Some(p) if p == Path::new("-") => Ok(Box::new(BufReader::new(io::stdin()))),
        Some(p) => {
            let f = File::open(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufReader::new(f)))
        }
    }
}

/// Iterates over non-blank lines with their 1-based line numbers.
pub fn records(input: Box<dyn BufRead>) -> impl Iterator<Item = CliResult<(usize, String)>> {
    input
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(CliError::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
}

/// Formats with 17 significant digits, trailing zeros removed. Plain
/// notation is used for moderate exponents, scientific otherwise.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-7..21).contains(&exp) {
        trim_zeros(format!("{:.*}", (16 - exp).max(0) as usize, x))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

/// Like [`num`], but `null` for values JSON cannot represent.
pub fn json_num(x: f64) -> String {
    if x.is_finite() {
        num(x)
    } else {
        "null".into()
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn num_list(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}

pub fn json_list(xs: &[f64]) -> String {
    format!("[{}]", xs.iter().map(|&x| json_num(x)).collect::<Vec<_>>().join(","))
}

pub fn json_ids(ids: &[usize]) -> String {
    format!("[{}]", ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","))
}

/// Writes a `key<TAB>value` line.
pub fn kv(out: &mut impl Write, key: &str, value: impl std::fmt::Display) -> io::Result<()> {
    writeln!(out, "{key}\t{value}")
}
