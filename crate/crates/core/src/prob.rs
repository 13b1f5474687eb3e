//! Probability vectors: ingestion, validation, sorting with provenance, and
//! total-variation distance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{GameError, Result};

/// Input distributions are renormalized unless their mass is this close to 1.
pub const INPUT_MASS_TOL: f64 = 1e-9;

/// Whether a [`RawDist`] carries probabilities or unnormalized logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistKind {
    Probs,
    Logits,
}

/// A next-token distribution as it arrives from the outside world.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDist {
    pub values: Vec<f64>,
    pub kind: DistKind,
    pub id: Option<String>,
}

impl RawDist {
    pub fn probs(values: Vec<f64>) -> Self {
        RawDist {
            values,
            kind: DistKind::Probs,
            id: None,
        }
    }

    pub fn logits(values: Vec<f64>) -> Self {
        RawDist {
            values,
            kind: DistKind::Logits,
            id: None,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    /// Validates and sorts, dispatching on the kind.
    pub fn to_prob_vector(&self) -> Result<ProbVector> {
        match self.kind {
            DistKind::Probs => validate_dist(self),
            DistKind::Logits => from_logits(self),
        }
    }

    /// Normalized probability of the token with vocabulary id `index`.
    pub fn prob_of(&self, index: usize) -> Result<f64> {
        if index >= self.values.len() {
            return Err(GameError::DimensionMismatch {
                expected: self.values.len(),
                got: index + 1,
            });
        }
        match self.kind {
            DistKind::Probs => {
                let (scale, _) = checked_mass(&self.values)?;
                Ok(apply_scale(self.values[index], scale))
            }
            DistKind::Logits => {
                let exps = softmax_numerators(&self.values)?;
                let total = stable_sum(&exps);
                Ok(exps[index] / total)
            }
        }
    }

    /// `ln` of [`RawDist::prob_of`], computed in log space for logits so
    /// that very unlikely tokens do not underflow to `-inf`.
    pub fn log_prob_of(&self, index: usize) -> Result<f64> {
        match self.kind {
            DistKind::Probs => Ok(self.prob_of(index)?.ln()),
            DistKind::Logits => {
                let p = self.prob_of(index)?;
                if p > f64::MIN_POSITIVE {
                    return Ok(p.ln());
                }
                let max = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps = softmax_numerators(&self.values)?;
                Ok(self.values[index] - max - stable_sum(&exps).ln())
            }
        }
    }
}

/// A strictly positive distribution sorted in non-increasing order, with the
/// permutation back to the original vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector {
    probs: Vec<f64>,
    perm: Vec<usize>,
    dim: usize,
    dropped: usize,
    input_mass: f64,
}

impl ProbVector {
    /// Convenience constructor from a probability slice.
    pub fn from_probs(values: &[f64]) -> Result<Self> {
        validate_dist(&RawDist::probs(values.to_vec()))
    }

    /// Sorted probabilities.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `perm()[k]` is the vocabulary id of `probs()[k]`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Number of retained (strictly positive) entries.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Size of the original vocabulary.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of zero-probability input entries that were excluded.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Mass of the input before renormalization.
    pub fn input_mass(&self) -> f64 {
        self.input_mass
    }

    /// True when the input mass deviated from 1 by more than [`INPUT_MASS_TOL`].
    pub fn was_renormalized(&self) -> bool {
        (self.input_mass - 1.0).abs() > INPUT_MASS_TOL
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[0]
    }

    pub fn min_prob(&self) -> f64 {
        self.probs[self.probs.len() - 1]
    }

    /// Maps a vector aligned to the sorted order back onto the vocabulary.
    pub fn scatter(&self, aligned: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (k, &v) in aligned.iter().enumerate() {
            out[self.perm[k]] = v;
        }
        out
    }

    /// Pulls a vocabulary-indexed vector into the sorted order. Mass on dropped
    /// entries is returned separately.
    pub fn gather(&self, dense: &[f64]) -> Result<(Vec<f64>, f64)> {
        if dense.len() != self.dim {
            return Err(GameError::DimensionMismatch {
                expected: self.dim,
                got: dense.len(),
            });
        }
        let aligned: Vec<f64> = self.perm.iter().map(|&i| dense[i]).collect();
        let kept = stable_sum(&aligned);
        let total = stable_sum(dense);
        Ok((aligned, total - kept))
    }
}

/// Sum with eight independent accumulators. Deterministic for a given slice
/// and noticeably faster than a single dependency chain.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = values.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            acc[k] += c[k];
        }
    }
    let mut tail = 0.0;
    for &v in rest {
        tail += v;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Block length of the maxima recorded by [`scan_mass_blocks`].
pub(crate) const SCAN_BLOCK: usize = 32;

/// One block of the validation scan: adds to the eight lanes of
/// [`stable_sum`], ORs the bit patterns (so any sign bit survives) and
/// returns the block maximum.
#[inline(always)]
fn scan_block(block: &[f64], acc: &mut [f64; 8], bits: &mut [u64; 8], tail: &mut f64, tail_bits: &mut u64) -> f64 {
    let mut high = [f64::NEG_INFINITY; 8];
    let chunks = block.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            acc[k] += c[k];
            bits[k] |= c[k].to_bits();
            high[k] = if c[k] > high[k] { c[k] } else { high[k] };
        }
    }
    let mut top = high.iter().fold(f64::NEG_INFINITY, |m, &v| if v > m { v } else { m });
    // Only the final block can have a ragged end.
    for &v in rest {
        *tail += v;
        *tail_bits |= v.to_bits();
        top = top.max(v);
    }
    top
}

fn finish_scan(acc: [f64; 8], bits: [u64; 8], tail: f64, tail_bits: u64) -> (f64, bool) {
    let sum = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
    let any_sign = bits.iter().fold(tail_bits, |a, &b| a | b) >> 63 == 1;
    (sum, any_sign)
}

/// [`stable_sum`] fused with a sign check: returns the sum and whether any
/// value has its sign bit set. Non-finite inputs show up in the sum.
pub(crate) fn scan_mass(values: &[f64]) -> (f64, bool) {
    let (mut acc, mut bits, mut tail, mut tail_bits) = ([0.0; 8], [0u64; 8], 0.0, 0u64);
    let chunks = values.chunks_exact(8);
    let rest = chunks.remainder();
    for c in chunks {
        for k in 0..8 {
            acc[k] += c[k];
            bits[k] |= c[k].to_bits();
        }
    }
    for &v in rest {
        tail += v;
        tail_bits |= v.to_bits();
    }
    finish_scan(acc, bits, tail, tail_bits)
}

/// [`scan_mass`] that also records the maximum of every block of
/// [`SCAN_BLOCK`] values into `maxima`.
pub(crate) fn scan_mass_blocks(values: &[f64], maxima: &mut Vec<f64>) -> (f64, bool) {
    let (mut acc, mut bits, mut tail, mut tail_bits) = ([0.0; 8], [0u64; 8], 0.0, 0u64);
    maxima.clear();
    maxima.reserve(values.len().div_ceil(SCAN_BLOCK));
    for block in values.chunks(SCAN_BLOCK) {
        maxima.push(scan_block(block, &mut acc, &mut bits, &mut tail, &mut tail_bits));
    }
    finish_scan(acc, bits, tail, tail_bits)
}

/// Checks a probability slice and returns the rescaling factor (if any) and
/// the raw mass.
pub(crate) fn checked_mass(values: &[f64]) -> Result<(Option<f64>, f64)> {
    if values.is_empty() {
        return Err(GameError::EmptyInput);
    }
    let (mass, any_sign) = scan_mass(values);
    mass_scale(values, mass, any_sign)
}

/// Turns the output of [`scan_mass`] into an error or a rescaling factor.
pub(crate) fn mass_scale(values: &[f64], mass: f64, any_sign: bool) -> Result<(Option<f64>, f64)> {
    // A set sign bit may just be -0.0, which is accepted.
    if !mass.is_finite() || any_sign {
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(GameError::NotADistribution(format!(
                    "non-finite probability {value} at index {index}"
                )));
            }
            if value < 0.0 {
                return Err(GameError::NegativeProbability { index, value });
            }
        }
    }
    if mass <= 0.0 {
        return Err(GameError::AllZero);
    }
    // Masses within a few ulps of 1 are left alone so that re-validating a
    // validated vector is the identity.
    let ulps = values.len() as f64 * f64::EPSILON;
    let scale = if (mass - 1.0).abs() <= ulps {
        None
    } else {
        Some(mass)
    };
    Ok((scale, mass))
}

#[inline]
pub(crate) fn apply_scale(value: f64, scale: Option<f64>) -> f64 {
    match scale {
        Some(mass) => value / mass,
        None => value,
    }
}

/// Descending by probability, ascending by index on ties.
#[inline]
pub(crate) fn desc_then_index(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

/// Validates a probability input, renormalizes it, drops zero entries and
/// sorts the remainder in non-increasing order (ties by ascending index).
pub fn validate_dist(raw: &RawDist) -> Result<ProbVector> {
    if raw.kind == DistKind::Logits {
        return from_logits(raw);
    }
    let (scale, mass) = checked_mass(&raw.values)?;
    build_sorted(&raw.values, scale, mass)
}

fn build_sorted(values: &[f64], scale: Option<f64>, mass: f64) -> Result<ProbVector> {
    let mut pairs: Vec<(f64, usize)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, &v)| (apply_scale(v, scale), i))
        .filter(|(p, _)| *p > 0.0)
        .collect();
    if pairs.is_empty() {
        return Err(GameError::AllZero);
    }
    pairs.sort_unstable_by(desc_then_index);
    let dropped = values.len() - pairs.len();
    let (probs, perm) = pairs.into_iter().unzip();
    Ok(ProbVector {
        probs,
        perm,
        dim: values.len(),
        dropped,
        input_mass: mass,
    })
}

fn softmax_numerators(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(GameError::EmptyInput);
    }
    let mut max = f64::NEG_INFINITY;
    for (index, &value) in logits.iter().enumerate() {
        if !value.is_finite() {
            return Err(GameError::NonFiniteLogit { index, value });
        }
        max = max.max(value);
    }
    Ok(logits.iter().map(|&l| (l - max).exp()).collect())
}

/// Softmax (max-shifted) followed by [`validate_dist`] semantics.
pub fn from_logits(raw: &RawDist) -> Result<ProbVector> {
    let exps = softmax_numerators(&raw.values)?;
    let (scale, mass) = checked_mass(&exps)?;
    build_sorted(&exps, scale, mass)
}

/// Half the L1 distance between two aligned vectors.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(GameError::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    let diffs: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a - b).abs()).collect();
    Ok(0.5 * stable_sum(&diffs))
}
