//! Evaluation metrics that need only the model's distributions: repetition,
//! perplexity, entropy and surprisal, and truncation profiles.

use serde::Serialize;

use crate::error::{GameError, Result};
use crate::prob::{stable_sum, ProbVector, RawDist};
use crate::sampler::{truncate_raw, SamplerConfig};

/// True iff `tokens` contains a square: some nonempty phrase immediately
/// followed by an identical copy.
///
/// For each half-length `L` a square exists iff there are `L` consecutive
/// positions `i` with `tokens[i] == tokens[i + L]`, so one pass per `L`
/// suffices (`O(n²)` overall).
pub fn repetition_flag<T: PartialEq>(tokens: &[T]) -> bool {
    let n = tokens.len();
    for half in 1..=n / 2 {
        let mut run = 0;
        for i in 0..n - half {
            if tokens[i] == tokens[i + half] {
                run += 1;
                if run >= half {
                    return true;
                }
            } else {
                run = 0;
            }
        }
    }
    false
}

/// Fraction of sequences that contain a square.
pub fn repetition_frequency<T: PartialEq>(sequences: &[Vec<T>]) -> f64 {
    if sequences.is_empty() {
        return 0.0;
    }
    let hits = sequences.iter().filter(|s| repetition_flag(s)).count();
    hits as f64 / sequences.len() as f64
}

/// One generated step: the distribution the token was drawn from and the
/// token itself.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub dist: RawDist,
    pub chosen: usize,
    pub support_size: Option<usize>,
}

impl StepRecord {
    pub fn new(dist: RawDist, chosen: usize) -> Self {
        StepRecord {
            dist,
            chosen,
            support_size: None,
        }
    }

    fn log_prob(&self, step: usize) -> Result<f64> {
        let lp = self.dist.log_prob_of(self.chosen)?;
        if lp == f64::NEG_INFINITY {
            return Err(GameError::ZeroProbabilityChosen {
                step,
                token: self.chosen,
            });
        }
        Ok(lp)
    }
}

/// `exp(-(1/n) sum ln p_step(chosen))`.
pub fn sequence_perplexity(steps: &[StepRecord]) -> Result<f64> {
    if steps.is_empty() {
        return Err(GameError::EmptyInput);
    }
    let logs = steps
        .iter()
        .enumerate()
        .map(|(i, s)| s.log_prob(i))
        .collect::<Result<Vec<f64>>>()?;
    Ok((-stable_sum(&logs) / steps.len() as f64).exp())
}

/// Shannon entropy in nats.
pub fn entropy(p: &ProbVector) -> f64 {
    entropy_of(p.probs())
}

fn entropy_of(probs: &[f64]) -> f64 {
    let terms: Vec<f64> = probs.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).collect();
    stable_sum(&terms)
}

/// `-ln p` of the token with vocabulary id `id` (`+inf` for dropped ids).
pub fn surprisal(p: &ProbVector, id: usize) -> f64 {
    p.perm()
        .iter()
        .position(|&v| v == id)
        .map_or(f64::INFINITY, |k| -p.probs()[k].ln())
}

/// Both sides of the surprisal form of the log-objective threshold at the
/// 1-based index `i`: `ln(1/p_I)` and `H(prefix) + ln(1/M) + eps/M`, where
/// the prefix is `p_1..p_{I-1}` renormalized and `M` its mass. The token is
/// kept iff the first does not exceed the second. `None` for `i < 2`.
pub fn surprisal_threshold(p: &ProbVector, eps: f64, i: usize) -> Option<(f64, f64)> {
    let probs = p.probs();
    if i < 2 || i > probs.len() {
        return None;
    }
    let prefix = &probs[..i - 1];
    let mass = stable_sum(prefix);
    let renorm: Vec<f64> = prefix.iter().map(|x| x / mass).collect();
    let rhs = entropy_of(&renorm) + (1.0 / mass).ln() + eps / mass;
    Some(((1.0 / probs[i - 1]).ln(), rhs))
}

/// Keep/drop decision of the surprisal form (`true` keeps token `i`).
pub fn surprisal_keeps(p: &ProbVector, eps: f64, i: usize) -> Option<bool> {
    surprisal_threshold(p, eps, i).map(|(lhs, rhs)| lhs <= rhs)
}

/// Support sizes over a stream with summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncationProfile {
    pub series: Vec<usize>,
    /// Minimum, quartiles and maximum (nearest-rank).
    pub quantiles: [usize; 5],
    /// `(low, high, count)` with power-of-two bucket edges: `[1,2)`, `[2,4)`, ...
    pub histogram: Vec<(usize, usize, usize)>,
}

impl TruncationProfile {
    pub fn from_series(series: Vec<usize>) -> Result<Self> {
        if series.is_empty() {
            return Err(GameError::EmptyInput);
        }
        let quantiles = quantiles(&series);
        let max = quantiles[4].max(1);
        let mut histogram = Vec::new();
        let mut lo = 1;
        while lo <= max {
            let hi = lo * 2;
            let count = series.iter().filter(|&&s| s >= lo && s < hi).count();
            histogram.push((lo, hi, count));
            lo = hi;
        }
        Ok(TruncationProfile {
            series,
            quantiles,
            histogram,
        })
    }

    /// Tab-separated histogram table with a header row.
    pub fn table(&self) -> String {
        let mut out = String::from("low\thigh\tcount\n");
        for (lo, hi, c) in &self.histogram {
            out.push_str(&format!("{lo}\t{hi}\t{c}\n"));
        }
        out
    }
}

fn quantiles(series: &[usize]) -> [usize; 5] {
    let mut s = series.to_vec();
    s.sort_unstable();
    let n = s.len();
    let rank = |q: f64| s[((q * n as f64).ceil() as usize).clamp(1, n) - 1];
    [s[0], rank(0.25), rank(0.5), rank(0.75), s[n - 1]]
}

/// Support size of the sampler at every record of the stream.
pub fn truncation_profile<'a, I>(stream: I, cfg: &SamplerConfig) -> Result<TruncationProfile>
where
    I: IntoIterator<Item = &'a RawDist>,
{
    let series = stream
        .into_iter()
        .enumerate()
        .map(|(i, raw)| {
            truncate_raw(cfg, raw)
                .map(|tr| tr.support_size)
                .map_err(|e| e.in_record(raw.id.clone().unwrap_or_else(|| i.to_string())))
        })
        .collect::<Result<Vec<_>>>()?;
    TruncationProfile::from_series(series)
}

/// Corpus-level summary. `mauve` is always empty here; it exists so scores
/// computed by external tools can be joined onto the same record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub sequences: usize,
    pub steps: usize,
    pub perplexity: f64,
    pub repetition_flags: Vec<bool>,
    pub repetition_frequency: f64,
    pub entropy_series: Vec<f64>,
    pub surprisal_series: Vec<f64>,
    pub support_size_series: Vec<usize>,
    pub support_size_quantiles: Option<[usize; 5]>,
    pub mauve: Option<f64>,
}

impl MetricsReport {
    /// Pools all steps for perplexity; repetition is per sequence.
    pub fn from_sequences(sequences: &[Vec<StepRecord>]) -> Result<Self> {
        let mut acc = MetricsAccumulator::new();
        for seq in sequences {
            acc.start_sequence();
            for step in seq {
                acc.push(step)?;
            }
        }
        acc.finish()
    }
}

/// Streaming builder for [`MetricsReport`]. Distributions are discarded
/// after each step; only token ids and per-step scalars are retained.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    sequences: Vec<Vec<usize>>,
    entropy_series: Vec<f64>,
    surprisal_series: Vec<f64>,
    support_size_series: Vec<usize>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Steps pushed after this call belong to a new sequence.
    pub fn start_sequence(&mut self) {
        self.sequences.push(Vec::new());
    }

    pub fn steps(&self) -> usize {
        self.surprisal_series.len()
    }

    pub fn push(&mut self, step: &StepRecord) -> Result<()> {
        let index = self.steps();
        let surprisal = -step.log_prob(index)?;
        let p = step.dist.to_prob_vector().map_err(|e| e.in_record(index.to_string()))?;
        if self.sequences.is_empty() {
            self.start_sequence();
        }
        self.sequences.last_mut().expect("a sequence is open").push(step.chosen);
        self.entropy_series.push(entropy(&p));
        self.surprisal_series.push(surprisal);
        if let Some(s) = step.support_size {
            self.support_size_series.push(s);
        }
        Ok(())
    }

    pub fn finish(self) -> Result<MetricsReport> {
        let steps = self.steps();
        if steps == 0 {
            return Err(GameError::EmptyInput);
        }
        let perplexity = (stable_sum(&self.surprisal_series) / steps as f64).exp();
        let support_size_quantiles =
            (!self.support_size_series.is_empty()).then(|| quantiles(&self.support_size_series));
        let sequences: Vec<Vec<usize>> = self.sequences.into_iter().filter(|s| !s.is_empty()).collect();
        Ok(MetricsReport {
            sequences: sequences.len(),
            steps,
            perplexity,
            repetition_flags: sequences.iter().map(|t| repetition_flag(t)).collect(),
            repetition_frequency: repetition_frequency(&sequences),
            entropy_series: self.entropy_series,
            surprisal_series: self.surprisal_series,
            support_size_series: self.support_size_series,
            support_size_quantiles,
            mauve: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategist::{relaxed_q, PowerThreshold};
    use crate::Objective;

    #[test]
    fn repetition_examples() {
        assert!(repetition_flag(&[5, 5]));
        assert!(repetition_flag(&[1, 2, 1, 2]));
        assert!(!repetition_flag(&[1, 2, 3, 1, 3, 2]));
        assert!(!repetition_flag::<u32>(&[]));
        assert!(!repetition_flag(&[7]));
        assert!(repetition_flag(&[9, 1, 2, 3, 1, 2, 3, 8]));
    }

    #[test]
    fn perplexity_examples() {
        let steps = vec![
            StepRecord::new(RawDist::probs(vec![0.5, 0.5]), 0),
            StepRecord::new(RawDist::probs(vec![0.25, 0.75]), 0),
        ];
        assert!((sequence_perplexity(&steps).unwrap() - 8f64.sqrt()).abs() < 1e-12);
        let ones = vec![StepRecord::new(RawDist::probs(vec![0.0, 1.0]), 1); 3];
        assert_eq!(sequence_perplexity(&ones).unwrap(), 1.0);
        let uniform: Vec<StepRecord> = (0..10)
            .map(|i| StepRecord::new(RawDist::probs(vec![0.25; 4]), i % 4))
            .collect();
        assert!((sequence_perplexity(&uniform).unwrap() - 4.0).abs() < 1e-12);
        let zero = vec![StepRecord::new(RawDist::probs(vec![0.0, 1.0]), 0)];
        assert!(matches!(
            sequence_perplexity(&zero),
            Err(GameError::ZeroProbabilityChosen { step: 0, token: 0 })
        ));
        let far = vec![StepRecord::new(RawDist::logits(vec![0.0, -700.0]), 1)];
        assert!((sequence_perplexity(&far).unwrap().ln() - 700.0).abs() < 1e-9);
    }

    #[test]
    fn entropy_examples() {
        let u = ProbVector::from_probs(&[0.25; 4]).unwrap();
        assert!((entropy(&u) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&ProbVector::from_probs(&[1.0]).unwrap()), 0.0);
        let p = ProbVector::from_probs(&[0.15, 0.5, 0.05, 0.3]).unwrap();
        assert!((surprisal(&p, 1) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn surprisal_form_matches_threshold() {
        let p = ProbVector::from_probs(&[0.5, 0.3, 0.15, 0.05]).unwrap();
        let log = Objective::log();
        for eps in [0.3, 0.1] {
            let keeps = surprisal_keeps(&p, eps, 2).unwrap();
            let support = relaxed_q(&p, eps, &log, PowerThreshold::Consistent).unwrap().support_size;
            assert_eq!(keeps, support >= 2, "eps {eps}");
        }
    }

    #[test]
    fn profile_examples() {
        let zipf: Vec<f64> = (1..=1000).map(|k| (k as f64).powf(-1.1)).collect();
        let stream: Vec<RawDist> = (0..5).map(|_| RawDist::probs(zipf.clone())).collect();
        let g = truncation_profile(&stream, &SamplerConfig::greedy()).unwrap();
        assert!(g.series.iter().all(|&s| s == 1));
        let pure = truncation_profile(&stream, &SamplerConfig::pure()).unwrap();
        assert!(pure.series.iter().all(|&s| s == 1000));
        let game = truncation_profile(&stream, &SamplerConfig::game(0.95, 2.0).unwrap()).unwrap();
        assert!(game.series.iter().all(|&s| s > 1 && s < 1000));
        assert!(game.table().lines().count() > 1);
    }

    #[test]
    fn report_pools_steps_and_flags_sequences() {
        let step = |probs: Vec<f64>, chosen| StepRecord::new(RawDist::probs(probs), chosen);
        let seqs = vec![
            vec![step(vec![0.5, 0.5], 0), step(vec![0.5, 0.5], 0)],
            vec![step(vec![0.25, 0.75], 0), step(vec![0.25, 0.75], 1)],
        ];
        let r = MetricsReport::from_sequences(&seqs).unwrap();
        assert_eq!(r.repetition_flags, vec![true, false]);
        assert_eq!(r.repetition_frequency, 0.5);
        let expected = (-(0.5f64.ln() * 2.0 + 0.25f64.ln() + 0.75f64.ln()) / 4.0).exp();
        assert!((r.perplexity - expected).abs() < 1e-12);
        assert_eq!(r.mauve, None);
    }
}
