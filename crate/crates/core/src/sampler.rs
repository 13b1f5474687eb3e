//! Truncation samplers over a single next-token distribution.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use crate::error::{GameError, Result};
use crate::objective::Objective;
use crate::prob::{
    apply_scale, desc_then_index, mass_scale, scan_mass_blocks, validate_dist, SCAN_BLOCK, DistKind, ProbVector, RawDist,
};
use crate::strategist::{first_order_masses, first_order_scan, PowerThreshold};

/// Decoding rule and its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Minimax truncation with radius `eps` and temperature `tau`.
    Game { eps: f64, tau: f64 },
    Greedy,
    /// Ancestral sampling from the full distribution.
    Pure,
    TopK(usize),
    Nucleus(f64),
    Temperature(f64),
    Typical(f64),
    Eta(f64),
}

/// A validated sampler configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    method: Method,
    paper_literal: bool,
    objective: Option<Objective>,
}

impl SamplerConfig {
    pub fn new(method: Method) -> Result<Self> {
        let bad = |msg: String| Err(GameError::BadConfig(msg));
        let objective = match method {
            Method::Game { eps, tau } => {
                if !(eps > 0.0 && eps <= 1.0) {
                    return bad(format!("game radius must lie in (0, 1], got {eps}"));
                }
                if !(tau > 0.0 && tau.is_finite()) {
                    return bad(format!("game temperature must be positive, got {tau}"));
                }
                Some(Objective::from_tau(tau).map_err(|e| GameError::BadConfig(e.to_string()))?)
            }
            Method::TopK(k) if k == 0 => return bad("top-k needs k >= 1".into()),
            Method::Nucleus(p) | Method::Typical(p) if !(p > 0.0 && p <= 1.0) => {
                return bad(format!("mass threshold must lie in (0, 1], got {p}"))
            }
            Method::Temperature(t) if !(t > 0.0 && t.is_finite()) => {
                return bad(format!("temperature must be positive, got {t}"))
            }
            Method::Eta(e) if !(e > 0.0 && e < 1.0) => {
                return bad(format!("eta must lie in (0, 1), got {e}"))
            }
            _ => None,
        };
        Ok(SamplerConfig {
            method,
            paper_literal: false,
            objective,
        })
    }

    pub fn game(eps: f64, tau: f64) -> Result<Self> {
        Self::new(Method::Game { eps, tau })
    }

    pub fn greedy() -> Self {
        Self::new(Method::Greedy).expect("greedy has no parameters")
    }

    pub fn pure() -> Self {
        Self::new(Method::Pure).expect("pure has no parameters")
    }

    pub fn top_k(k: usize) -> Result<Self> {
        Self::new(Method::TopK(k))
    }

    pub fn nucleus(p: f64) -> Result<Self> {
        Self::new(Method::Nucleus(p))
    }

    pub fn temperature(t: f64) -> Result<Self> {
        Self::new(Method::Temperature(t))
    }

    pub fn typical(p: f64) -> Result<Self> {
        Self::new(Method::Typical(p))
    }

    pub fn eta(eta: f64) -> Result<Self> {
        Self::new(Method::Eta(eta))
    }

    /// Switches the game threshold for `tau != 1` to the printed ratio
    /// direction instead of the one implied by the derivation.
    pub fn with_paper_literal(mut self, on: bool) -> Self {
        self.paper_literal = on;
        self
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn paper_literal(&self) -> bool {
        self.paper_literal
    }

    fn power_form(&self) -> PowerThreshold {
        if self.paper_literal {
            PowerThreshold::Literal
        } else {
            PowerThreshold::Consistent
        }
    }

    /// Short label recorded on every truncation.
    pub fn tag(&self) -> String {
        match self.method {
            Method::Game { eps, tau } => {
                let branch = if self.paper_literal && tau != 1.0 { ",literal" } else { "" };
                format!("game(eps={eps},tau={tau}{branch})")
            }
            Method::Greedy => "greedy".into(),
            Method::Pure => "pure".into(),
            Method::TopK(k) => format!("top_k({k})"),
            Method::Nucleus(p) => format!("nucleus({p})"),
            Method::Temperature(t) => format!("temperature({t})"),
            Method::Typical(p) => format!("typical({p})"),
            Method::Eta(e) => format!("eta({e})"),
        }
    }
}

impl fmt::Display for SamplerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

/// Retained tokens and their renormalized masses, in descending order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationResult {
    pub support_vocab_ids: Vec<usize>,
    pub masses: Vec<f64>,
    pub support_size: usize,
    pub strategy_tag: String,
}

impl TruncationResult {
    fn build(ids: Vec<usize>, masses: Vec<f64>, tag: String) -> Self {
        // Extreme temperatures can underflow tail masses; those are dropped so
        // every retained mass stays positive.
        let keep = masses.iter().take_while(|&&m| m > 0.0).count().max(1);
        let mut ids = ids;
        let mut masses = masses;
        ids.truncate(keep);
        masses.truncate(keep);
        TruncationResult {
            support_size: ids.len(),
            support_vocab_ids: ids,
            masses,
            strategy_tag: tag,
        }
    }
}

fn renormalized(support: &[f64]) -> Vec<f64> {
    let total: f64 = support.iter().sum();
    support.iter().map(|&x| x / total).collect()
}

fn entropy_sorted(probs: &[f64]) -> f64 {
    -probs.iter().map(|&x| x * x.ln()).sum::<f64>()
}

/// Support size for the prefix-type rules on a sorted (possibly partial)
/// prefix. `None` means the prefix is too short to decide.
fn prefix_support(cfg: &SamplerConfig, probs: &[f64], complete: bool) -> Option<usize> {
    let n = probs.len();
    match cfg.method {
        Method::Greedy => Some(1),
        Method::TopK(k) => (complete || n >= k).then(|| k.min(n)),
        Method::Nucleus(p) => {
            let mut cum = 0.0;
            for (i, &x) in probs.iter().enumerate() {
                cum += x;
                if cum >= p {
                    return Some(i + 1);
                }
            }
            complete.then_some(n)
        }
        Method::Game { eps, .. } => {
            let obj = cfg.objective.as_ref().expect("game config carries its objective");
            let support = first_order_scan(probs, eps, obj, false, cfg.power_form(), None);
            (complete || support < n).then_some(support)
        }
        _ => unreachable!("not a prefix rule"),
    }
}

fn prefix_masses(cfg: &SamplerConfig, support: &[f64]) -> Vec<f64> {
    match cfg.method {
        Method::Game { .. } => {
            first_order_masses(support, cfg.objective.as_ref().expect("game objective"))
        }
        _ => renormalized(support),
    }
}

/// Applies the rule to a validated distribution.
pub fn truncate(cfg: &SamplerConfig, p: &ProbVector) -> TruncationResult {
    let probs = p.probs();
    let perm = p.perm();
    let d = probs.len();
    let tag = cfg.tag();
    match cfg.method {
        Method::Greedy | Method::TopK(_) | Method::Nucleus(_) | Method::Game { .. } => {
            let n = prefix_support(cfg, probs, true).expect("complete prefix decides");
            let masses = prefix_masses(cfg, &probs[..n]);
            TruncationResult::build(perm[..n].to_vec(), masses, tag)
        }
        Method::Pure => TruncationResult::build(perm.to_vec(), probs.to_vec(), tag),
        Method::Temperature(t) => {
            let top = probs[0];
            let raw: Vec<f64> = probs.iter().map(|&x| (x / top).powf(1.0 / t)).collect();
            TruncationResult::build(perm.to_vec(), renormalized(&raw), tag)
        }
        Method::Typical(mass) => {
            let h = entropy_sorted(probs);
            let mut order: Vec<usize> = (0..d).collect();
            let score = |i: usize| (-probs[i].ln() - h).abs();
            order.sort_by(|&a, &b| score(a).total_cmp(&score(b)).then(a.cmp(&b)));
            let mut cum = 0.0;
            let mut keep = d;
            for (k, &i) in order.iter().enumerate() {
                cum += probs[i];
                if cum >= mass {
                    keep = k + 1;
                    break;
                }
            }
            let mut kept = order[..keep].to_vec();
            kept.sort_unstable();
            let support: Vec<f64> = kept.iter().map(|&i| probs[i]).collect();
            let ids = kept.iter().map(|&i| perm[i]).collect();
            TruncationResult::build(ids, renormalized(&support), tag)
        }
        Method::Eta(eta) => {
            let h = entropy_sorted(probs);
            let cut = eta.min(eta.sqrt() * (-h).exp());
            let n = probs.iter().take_while(|&&x| x >= cut).count().max(1);
            TruncationResult::build(perm[..n].to_vec(), renormalized(&probs[..n]), tag)
        }
    }
}

const CANDIDATE_TARGETS: [usize; 3] = [256, 2048, 16384];
const PROBE_SIZE: usize = 1024;

/// Validates and truncates a raw record.
///
/// For probability input under a prefix rule this avoids sorting the whole
/// vocabulary. A strided probe of the values suggests a cutoff expected to
/// keep a few hundred entries; only entries above it are sorted, and the
/// cutoff is lowered when that sorted prefix cannot decide the support.
/// Validation records per-block maxima, so each screen only revisits blocks
/// that can hold a candidate. The result is bit-identical
/// to `truncate(validate_dist(raw))`.
pub fn truncate_raw(cfg: &SamplerConfig, raw: &RawDist) -> Result<TruncationResult> {
    let prefix_rule = matches!(
        cfg.method,
        Method::Greedy | Method::TopK(_) | Method::Nucleus(_) | Method::Game { .. }
    );
    let values = &raw.values;
    if raw.kind != DistKind::Probs || !prefix_rule || values.len() <= CANDIDATE_TARGETS[0] {
        return Ok(truncate(cfg, &validate_dist(raw)?));
    }

    let mut maxima = Vec::new();
    let (mass, any_sign) = scan_mass_blocks(values, &mut maxima);
    let (scale, _) = mass_scale(values, mass, any_sign)?;

    // The probe runs after the scan, when the values are already cached.
    let stride = (values.len() / PROBE_SIZE).max(1);
    let mut probe: Vec<f64> = values
        .iter()
        .step_by(stride)
        .copied()
        .filter(|&v| v > 0.0 && v.is_finite())
        .collect();
    // Each probe entry stands for about `stride` values.
    let mut cut_for = |target: usize| {
        let rank = target / stride;
        (rank < probe.len()).then(|| *probe.select_nth_unstable_by(rank, |a, b| b.total_cmp(a)).1)
    };

    let mut raw_hits: Vec<(f64, usize)> = Vec::new();
    for &target in CANDIDATE_TARGETS.iter() {
        if target >= values.len() {
            break;
        }
        let Some(raw_cut) = cut_for(target) else { break };
        let pre = raw_cut * (1.0 - 1e-9);
        raw_hits.clear();
        for (b, &top) in maxima.iter().enumerate() {
            if top >= pre {
                let offset = b * SCAN_BLOCK;
                let block = &values[offset..(offset + SCAN_BLOCK).min(values.len())];
                for (j, &v) in block.iter().enumerate() {
                    if v >= pre {
                        raw_hits.push((v, offset + j));
                    }
                }
            }
        }
        // Ties with the cutoff after rescaling are kept, so the candidate set
        // is always a prefix of the sorted order. When it happens to be the
        // whole support, an undecided prefix just falls through to the full
        // path.
        let floor = apply_scale(raw_cut, scale);
        let mut candidates: Vec<(f64, usize)> = raw_hits
            .iter()
            .map(|&(v, i)| (apply_scale(v, scale), i))
            .filter(|&(x, _)| x >= floor)
            .collect();
        candidates.sort_unstable_by(desc_then_index);
        let probs: Vec<f64> = candidates.iter().map(|c| c.0).collect();
        if let Some(n) = prefix_support(cfg, &probs, false) {
            let masses = prefix_masses(cfg, &probs[..n]);
            let ids = candidates[..n].iter().map(|c| c.1).collect();
            return Ok(TruncationResult::build(ids, masses, cfg.tag()));
        }
    }
    Ok(truncate(cfg, &validate_dist(raw)?))
}

/// Per-record random stream: the substream seed for record `n` is the first
/// SplitMix64 output from state `seed + n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub stream_index: u64,
}

impl RngState {
    pub fn new(seed: u64, stream_index: u64) -> Self {
        RngState { seed, stream_index }
    }

    pub fn substream_seed(&self) -> u64 {
        SplitMix64::seed_from_u64(self.seed.wrapping_add(self.stream_index)).gen()
    }

    /// A generator for this record's draws.
    pub fn generator(&self) -> SplitMix64 {
        SplitMix64::seed_from_u64(self.substream_seed())
    }
}

/// Inverse-CDF draw from the retained masses.
pub fn sample_token(tr: &TruncationResult, rng: &RngState) -> usize {
    draw(tr, rng.generator().gen::<f64>())
}

/// Inverse-CDF lookup for a uniform `u` in `[0, 1)`.
pub fn draw(tr: &TruncationResult, u: f64) -> usize {
    let mut cum = 0.0;
    for (k, &m) in tr.masses.iter().enumerate() {
        cum += m;
        if u < cum {
            return tr.support_vocab_ids[k];
        }
    }
    // Rounding left the cumulative sum just below u.
    *tr.support_vocab_ids.last().expect("support is never empty")
}

/// Validates, truncates and samples one record.
pub fn sample_record(
    cfg: &SamplerConfig,
    raw: &RawDist,
    seed: u64,
    index: u64,
) -> Result<(usize, TruncationResult)> {
    let tr = truncate_raw(cfg, raw)?;
    let token = sample_token(&tr, &RngState::new(seed, index));
    Ok((token, tr))
}

/// One generated step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSummary {
    pub index: usize,
    pub id: Option<String>,
    pub token: usize,
    pub support_size: usize,
}

/// Output of [`generate`]. Failed records are listed in `errors` and skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub steps: Vec<StepSummary>,
    pub errors: Vec<(usize, GameError)>,
}

impl Generation {
    pub fn tokens(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.token).collect()
    }
}

/// Samples one token per record. In strict mode the first failing record
/// aborts the run.
pub fn generate<'a, I>(stream: I, cfg: &SamplerConfig, seed: u64, strict: bool) -> Result<Generation>
where
    I: IntoIterator<Item = &'a RawDist>,
{
    let mut out = Generation {
        steps: Vec::new(),
        errors: Vec::new(),
    };
    let mut seen = 0;
    for (index, raw) in stream.into_iter().enumerate() {
        seen += 1;
        match sample_record(cfg, raw, seed, index as u64) {
            Ok((token, tr)) => out.steps.push(StepSummary {
                index,
                id: raw.id.clone(),
                token,
                support_size: tr.support_size,
            }),
            Err(e) => {
                let e = e.in_record(raw.id.clone().unwrap_or_else(|| index.to_string()));
                if strict {
                    return Err(e);
                }
                out.errors.push((index, e));
            }
        }
    }
    if seen == 0 {
        return Err(GameError::EmptyInput);
    }
    Ok(out)
}
