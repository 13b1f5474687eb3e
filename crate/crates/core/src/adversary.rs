//! Nature's inner minimization over the total-variation ball around `p̂`.
//!
//! The objective `q·f(p)` is concave in `p` and the ball intersected with the
//! simplex is a polytope, so the minimum sits on a vertex. In the two
//! closed-form regimes the relevant vertices are single transfers
//! `p̂ - eps·e_i + eps·e_j`, which collapses the search to an `O(d)` scan.

use crate::error::{GameError, Result};
use crate::objective::{AssumptionCase, CaseKind, Objective};
use crate::prob::{stable_sum, ProbVector};

/// Tolerance on `sum(q) = 1` for strategies handed to the adversary.
pub const STRATEGY_MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryOutcome {
    /// Minimal `q·f(p)` over the ball (`-inf` allowed).
    pub value: f64,
    /// Minimizing distribution, aligned to the sorted order. `None` when the
    /// value is `-inf`; see `zeroing_witness`.
    pub witness: Option<Vec<f64>>,
    /// Index whose probability the adversary sets to zero in the `-inf` case.
    pub zeroed_index: Option<usize>,
    /// Canonical distribution witnessing `-inf`: the zeroed mass moves to the
    /// top entry (or the second entry when the top one is zeroed).
    pub zeroing_witness: Option<Vec<f64>>,
    /// Index losing `eps` at the optimal vertex.
    pub donor_index: Option<usize>,
    /// Index gaining `eps` at the optimal vertex.
    pub recipient_index: Option<usize>,
    pub case: CaseKind,
    /// False only when the value comes from a partial vertex list and is an
    /// upper bound on the true minimum.
    pub exact: bool,
}

/// `sum q_i f_i` with the convention `0 · (-inf) = 0`.
pub fn dot_with_zero_convention(q: &[f64], fvals: &[f64]) -> f64 {
    let terms: Vec<f64> = q
        .iter()
        .zip(fvals)
        .map(|(&qi, &fi)| if qi == 0.0 { 0.0 } else { qi * fi })
        .collect();
    stable_sum(&terms)
}

/// `q·f(p)` evaluating `f` only where `q` is positive.
pub(crate) fn supported_objective(q: &[f64], p: &[f64], obj: &Objective) -> f64 {
    let terms: Vec<f64> = q
        .iter()
        .zip(p)
        .filter(|(&qi, _)| qi != 0.0)
        .map(|(&qi, &pi)| qi * obj.value(pi))
        .collect();
    stable_sum(&terms)
}

/// `q·f(p)` for an arbitrary `p` aligned with `q`.
pub fn objective_value(q: &[f64], p: &[f64], obj: &Objective) -> f64 {
    let fvals: Vec<f64> = p.iter().map(|&x| obj.value(x.max(0.0))).collect();
    dot_with_zero_convention(q, &fvals)
}

pub(crate) fn check_strategy(q: &[f64], len: usize) -> Result<()> {
    if q.len() != len {
        return Err(GameError::DimensionMismatch {
            expected: len,
            got: q.len(),
        });
    }
    if let Some((i, &v)) = q.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(GameError::NotADistribution(format!(
            "strategy entry {i} is {v}"
        )));
    }
    let mass = stable_sum(q);
    if (mass - 1.0).abs() > STRATEGY_MASS_TOL {
        return Err(GameError::NotADistribution(format!(
            "strategy mass {mass} is not 1"
        )));
    }
    Ok(())
}

fn transfer(p: &[f64], donor: usize, recipient: usize, amount: f64) -> Vec<f64> {
    let mut v = p.to_vec();
    v[donor] -= amount;
    v[recipient] += amount;
    v
}

fn zeroing_outcome(p: &[f64], zeroed: usize, case: CaseKind) -> AdversaryOutcome {
    let target = if zeroed == 0 { 1 } else { 0 };
    let mut w = transfer(p, zeroed, target, p[zeroed]);
    w[zeroed] = 0.0;
    AdversaryOutcome {
        value: f64::NEG_INFINITY,
        witness: None,
        zeroed_index: Some(zeroed),
        zeroing_witness: Some(w),
        donor_index: Some(zeroed),
        recipient_index: Some(target),
        case,
        exact: true,
    }
}

fn unmoved(p: &[f64], base: f64, case: CaseKind) -> AdversaryOutcome {
    AdversaryOutcome {
        value: base,
        witness: Some(p.to_vec()),
        zeroed_index: None,
        zeroing_witness: None,
        donor_index: None,
        recipient_index: None,
        case,
        exact: true,
    }
}

/// Two smallest entries of `h`, ties resolved towards the larger index.
fn two_smallest(h: &[f64]) -> ((f64, usize), Option<(f64, usize)>) {
    let mut first = (f64::INFINITY, usize::MAX);
    let mut second: Option<(f64, usize)> = None;
    for (j, &v) in h.iter().enumerate() {
        if v <= first.0 {
            if first.1 != usize::MAX {
                second = Some(first);
            }
            first = (v, j);
        } else if second.map_or(true, |s| v <= s.0) {
            second = Some((v, j));
        }
    }
    (first, second)
}

/// Single-transfer vertex scan `max_{i != j} q_i g⁻_i - q_j g⁺_j` for
/// `eps < p_d`. Returns `(max, donor, recipient)`.
fn pairwise_scan(q: &[f64], p: &[f64], eps: f64, obj: &Objective) -> (f64, usize, usize) {
    let h: Vec<f64> = q
        .iter()
        .zip(p)
        .map(|(&qj, &pj)| if qj == 0.0 { 0.0 } else { qj * obj.gap_plus(pj, eps) })
        .collect();
    let (first, second) = two_smallest(&h);
    let second = second.expect("pairwise scan needs at least two entries");
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (i, (&qi, &pi)) in q.iter().zip(p).enumerate() {
        let gain = if qi == 0.0 { 0.0 } else { qi * obj.gap_minus_raw(pi, eps) };
        let cost = if first.1 == i { second.0 } else { first.0 };
        if gain - cost > best.0 {
            best = (gain - cost, i);
        }
    }
    let donor = best.1;
    let recipient = if first.1 == donor { second.1 } else { first.1 };
    (best.0, donor, recipient)
}

/// Inner minimization `min_{p in N(p̂)} q·f(p)`.
///
/// `q` must be aligned to `p`'s sorted order.
pub fn inner_min(
    q: &[f64],
    p: &ProbVector,
    eps: f64,
    obj: &Objective,
    case: &AssumptionCase,
) -> Result<AdversaryOutcome> {
    let probs = p.probs();
    let d = probs.len();
    check_strategy(q, d)?;
    if !(eps >= 0.0) {
        return Err(GameError::AssumptionViolated(format!(
            "radius must be non-negative, got {eps}"
        )));
    }
    let base = supported_objective(q, probs, obj);
    if eps == 0.0 || d == 1 {
        return Ok(unmoved(probs, base, case.case));
    }

    match case.case {
        CaseKind::CaseI => {
            let i_hat = probs.partition_point(|&x| x > eps);
            if let Some(z) = (i_hat..d).find(|&i| q[i] > 0.0) {
                return Ok(zeroing_outcome(probs, z, case.case));
            }
            let mut best = (f64::NEG_INFINITY, 0usize);
            for i in 0..i_hat {
                if q[i] == 0.0 {
                    continue;
                }
                let t = q[i] * obj.gap_minus_raw(probs[i], eps);
                if t > best.0 {
                    best = (t, i);
                }
            }
            let (donor, recipient) = (best.1, d - 1);
            Ok(AdversaryOutcome {
                value: base - best.0,
                witness: Some(transfer(probs, donor, recipient, eps)),
                zeroed_index: None,
                zeroing_witness: None,
                donor_index: Some(donor),
                recipient_index: Some(recipient),
                case: case.case,
                exact: true,
            })
        }
        CaseKind::CaseII => {
            let (gap, donor, recipient) = pairwise_scan(q, probs, eps, obj);
            Ok(AdversaryOutcome {
                value: base - gap,
                witness: Some(transfer(probs, donor, recipient, eps)),
                zeroed_index: None,
                zeroing_witness: None,
                donor_index: Some(donor),
                recipient_index: Some(recipient),
                case: case.case,
                exact: true,
            })
        }
        CaseKind::Relaxed => relaxed_min(q, probs, eps, obj, base),
    }
}

fn relaxed_min(
    q: &[f64],
    probs: &[f64],
    eps: f64,
    obj: &Objective,
    base: f64,
) -> Result<AdversaryOutcome> {
    let d = probs.len();
    if obj.diverges_at_zero() {
        if let Some(z) = (0..d).find(|&i| probs[i] <= eps && q[i] > 0.0) {
            return Ok(zeroing_outcome(probs, z, CaseKind::Relaxed));
        }
    }
    if eps < probs[d - 1] {
        // The simplex constraints are inactive: single transfers are exactly
        // the vertices of the ball.
        let (gap, donor, recipient) = pairwise_scan(q, probs, eps, obj);
        return Ok(AdversaryOutcome {
            value: base - gap,
            witness: Some(transfer(probs, donor, recipient, eps)),
            zeroed_index: None,
            zeroing_witness: None,
            donor_index: Some(donor),
            recipient_index: Some(recipient),
            case: CaseKind::Relaxed,
            exact: true,
        });
    }
    // Remaining regime: f finite at zero and eps >= p_d. Only single
    // transfers of min(p_i, eps) are searched, which bounds the minimum from
    // above.
    let zero_q: Vec<usize> = (0..d).filter(|&j| q[j] == 0.0).collect();
    let mut best = (0.0f64, None::<(usize, usize, f64)>);
    for i in 0..d {
        if q[i] == 0.0 {
            continue;
        }
        let amount = probs[i].min(eps);
        let gain = q[i] * (obj.value(probs[i]) - obj.value(probs[i] - amount));
        let (cost, j) = match zero_q.iter().rev().find(|&&j| j != i) {
            Some(&j) => (0.0, j),
            None => (0..d)
                .filter(|&j| j != i)
                .map(|j| (q[j] * (obj.value(probs[j] + amount) - obj.value(probs[j])), j))
                .fold((f64::INFINITY, 0), |acc, c| if c.0 <= acc.0 { c } else { acc }),
        };
        if gain - cost > best.0 {
            best = (gain - cost, Some((i, j, amount)));
        }
    }
    Ok(match best.1 {
        Some((donor, recipient, amount)) => AdversaryOutcome {
            value: base - best.0,
            witness: Some(transfer(probs, donor, recipient, amount)),
            zeroed_index: None,
            zeroing_witness: None,
            donor_index: Some(donor),
            recipient_index: Some(recipient),
            case: CaseKind::Relaxed,
            exact: false,
        },
        None => AdversaryOutcome {
            exact: false,
            ..unmoved(probs, base, CaseKind::Relaxed)
        },
    })
}

/// The ℓ∞-regularized form of the log-objective inner minimum:
/// `q·ln p̂ - eps · max_{i <= î} q_i / ŵ_i` with
/// `ŵ_i = eps / ln(p̂_i / (p̂_i - eps))`, or `-inf` when `q` touches the
/// zeroable tail. Requires `p_d <= eps < p_1`.
pub fn regularized_value(q: &[f64], p: &ProbVector, eps: f64) -> Result<f64> {
    let probs = p.probs();
    check_strategy(q, probs.len())?;
    if !(p.min_prob() <= eps && eps < p.max_prob()) {
        return Err(GameError::AssumptionViolated(format!(
            "radius {eps} outside [p_d, p_1) = [{}, {})",
            p.min_prob(),
            p.max_prob()
        )));
    }
    let i_hat = probs.partition_point(|&x| x > eps);
    if q[i_hat..].iter().any(|&v| v > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let log = Objective::log();
    let mut reg = f64::NEG_INFINITY;
    for i in 0..i_hat {
        let w = eps / log.gap_minus_raw(probs[i], eps);
        reg = reg.max(q[i] / w);
    }
    let fvals: Vec<f64> = probs.iter().map(|x| x.ln()).collect();
    Ok(dot_with_zero_convention(q, &fvals) - eps * reg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::classify_assumption;
    use crate::prob::tv_distance;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::from_probs(v).unwrap()
    }

    #[test]
    fn three_token_case_ii() {
        let p = pv(&[0.5, 0.3, 0.2]);
        let log = Objective::log();
        let case = classify_assumption(&log, &p, 0.1);
        let out = inner_min(&[0.5, 0.3, 0.2], &p, 0.1, &log, &case).unwrap();
        assert!((out.value + 1.081978).abs() < 1e-6, "{}", out.value);
        let w = out.witness.unwrap();
        for (a, b) in w.iter().zip([0.5, 0.4, 0.1]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(out.donor_index, Some(2));
        assert_eq!(out.recipient_index, Some(1));
    }

    #[test]
    fn point_mass_case_i() {
        let p = pv(&[0.5, 0.3, 0.15, 0.05]);
        let log = Objective::log();
        let case = classify_assumption(&log, &p, 0.1);
        assert_eq!(case.case, CaseKind::CaseI);
        let out = inner_min(&[1.0, 0.0, 0.0, 0.0], &p, 0.1, &log, &case).unwrap();
        assert!((out.value - 0.4f64.ln()).abs() < 1e-12);
        let w = out.witness.clone().unwrap();
        for (a, b) in w.iter().zip([0.4, 0.3, 0.15, 0.15]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(tv_distance(&w, p.probs()).unwrap() <= 0.1 + 1e-12);
        assert!((objective_value(&[1.0, 0.0, 0.0, 0.0], &w, &log) - out.value).abs() < 1e-10);
    }

    #[test]
    fn tail_mass_is_zeroed() {
        let p = pv(&[0.5, 0.3, 0.15, 0.05]);
        let log = Objective::log();
        let case = classify_assumption(&log, &p, 0.2);
        let out = inner_min(&[0.0, 0.0, 0.0, 1.0], &p, 0.2, &log, &case).unwrap();
        assert_eq!(out.value, f64::NEG_INFINITY);
        assert_eq!(out.zeroed_index, Some(3));
        assert!(out.witness.is_none());
        let z = out.zeroing_witness.unwrap();
        assert_eq!(z[3], 0.0);
        assert!(tv_distance(&z, p.probs()).unwrap() <= 0.2);
    }

    #[test]
    fn regularized_form_examples() {
        let p = pv(&[0.5, 0.3, 0.15, 0.05]);
        let v = regularized_value(&[1.0, 0.0, 0.0, 0.0], &p, 0.1).unwrap();
        assert!((v + 0.916291).abs() < 1e-6);
        let w1 = 0.1 / (0.5f64 / 0.4).ln();
        assert!((w1 - 0.448143).abs() < 1e-6);
        assert!((0.5f64.ln() - 0.1 / w1 - v).abs() < 1e-12);

        let v = regularized_value(&[0.7, 0.1, 0.1, 0.1], &p, 0.1).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);

        let v = regularized_value(&[0.5, 0.3, 0.2, 0.0], &p, 0.05).unwrap();
        assert!(v.is_finite());

        assert!(matches!(
            regularized_value(&[1.0, 0.0, 0.0, 0.0], &p, 0.01),
            Err(GameError::AssumptionViolated(_))
        ));
    }

    #[test]
    fn zero_radius_is_plain_objective() {
        let p = pv(&[0.25; 4]);
        let log = Objective::log();
        let case = classify_assumption(&log, &p, 0.0);
        assert!(case.is_relaxed());
        let out = inner_min(&[0.25; 4], &p, 0.0, &log, &case).unwrap();
        assert!((out.value - 0.25f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn relaxed_large_radius_is_minus_infinity() {
        let p = pv(&[0.6, 0.4]);
        let log = Objective::log();
        let case = classify_assumption(&log, &p, 0.7);
        assert!(case.is_relaxed());
        let out = inner_min(&[1.0, 0.0], &p, 0.7, &log, &case).unwrap();
        assert_eq!(out.value, f64::NEG_INFINITY);
        assert_eq!(out.zeroed_index, Some(0));
    }

    #[test]
    fn rejects_bad_strategies() {
        let p = pv(&[0.5, 0.5]);
        let log = Objective::log();
        let case = classify_assumption(&log, &p, 0.1);
        assert!(matches!(
            inner_min(&[1.0], &p, 0.1, &log, &case),
            Err(GameError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            inner_min(&[0.7, 0.7], &p, 0.1, &log, &case),
            Err(GameError::NotADistribution(_))
        ));
        assert!(matches!(
            inner_min(&[1.5, -0.5], &p, 0.1, &log, &case),
            Err(GameError::NotADistribution(_))
        ));
    }

    #[test]
    fn relaxed_finite_objective_stays_in_ball() {
        let p = pv(&[0.5, 0.3, 0.15, 0.05]);
        let sq = Objective::power(2.0).unwrap();
        let case = classify_assumption(&sq, &p, 0.2);
        let q = [0.4, 0.3, 0.2, 0.1];
        let out = inner_min(&q, &p, 0.2, &sq, &case).unwrap();
        assert!(!out.exact);
        let w = out.witness.unwrap();
        assert!(tv_distance(&w, p.probs()).unwrap() <= 0.2 + 1e-12);
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!((objective_value(&q, &w, &sq) - out.value).abs() < 1e-10);
        assert!(out.value < objective_value(&q, p.probs(), &sq));
    }
}
