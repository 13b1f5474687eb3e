//! The strategist's outer maximization: exact optimal truncation strategies,
//! their first-order approximations, support thresholds, and KKT
//! certificates.

use crate::adversary::{check_strategy, inner_min, AdversaryOutcome};
use crate::error::{GameError, Result};
use crate::objective::{classify_assumption, AssumptionCase, CaseKind, Objective, ObjectiveKind};
use crate::prob::{stable_sum, ProbVector};

/// KKT set-membership tolerance.
pub const KKT_MEMBERSHIP_TOL: f64 = 1e-10;
/// KKT sign and mass tolerance.
pub const KKT_SIGN_TOL: f64 = 1e-10;
/// KKT stationarity tolerance.
pub const KKT_RESIDUAL_TOL: f64 = 1e-8;

/// Threshold sums `S_I` are compared against their bound with a slack of
/// this many ulps of the magnitudes involved.
const THRESHOLD_ULPS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Exact minimax weights `eps / (f(p_i) - f(p_i - eps))`.
    Exact,
    /// First-order weights `1 / f'(p_i)` with the `p_I > eps` clause.
    FirstOrder,
    /// First-order weights without the `p_I > eps` clause.
    Relaxed,
}

impl std::str::FromStr for SolveMode {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SolveMode::Exact),
            "first-order" | "first_order" => Ok(SolveMode::FirstOrder),
            "relaxed" => Ok(SolveMode::Relaxed),
            other => Err(GameError::BadConfig(format!("unknown mode '{other}'"))),
        }
    }
}

/// How the power-family first-order threshold is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerThreshold {
    /// `S_I = (1-1/tau)^-1 sum_{i<I} p_i (1 - (p_I/p_i)^(1-1/tau))`, the form
    /// that agrees with the log branch as `tau -> 1`.
    #[default]
    Consistent,
    /// The ratio inverted to `(p_i/p_I)^(1-1/tau)`.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSolution {
    /// Number of retained tokens `Î`.
    pub support_size: usize,
    /// Unnormalized weights on the support (`ŵ_i` in exact mode, `1/f'(p_i)`
    /// otherwise).
    pub weights: Vec<f64>,
    /// Normalized strategy aligned to the sorted order, zero beyond `Î`.
    pub q: Vec<f64>,
    /// Worst-case value of `q` against the adversary.
    pub value: f64,
    /// Threshold sums `S_1, S_2, ...` evaluated by the scan.
    pub s_values: Vec<f64>,
    pub mode: SolveMode,
    pub case: AssumptionCase,
    pub adversary: AdversaryOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    pub nu_star: f64,
    /// Multipliers on `q_i >= 0`, aligned to the sorted order.
    pub lambda_star: Vec<f64>,
    /// Convex-combination coefficients over the active set, aligned to the
    /// sorted order.
    pub gamma: Vec<f64>,
    pub stationarity_residual: f64,
    pub feasible: bool,
    /// Why the certificate failed, empty when feasible.
    pub violations: Vec<String>,
}

impl KktCertificate {
    fn rejected(d: usize, reason: String) -> Self {
        KktCertificate {
            nu_star: f64::NAN,
            lambda_star: vec![0.0; d],
            gamma: vec![0.0; d],
            stationarity_residual: f64::INFINITY,
            feasible: false,
            violations: vec![reason],
        }
    }
}

#[inline]
fn within(s: f64, bound: f64, scale: f64) -> bool {
    s <= bound + THRESHOLD_ULPS * f64::EPSILON * (scale + bound.abs())
}

/// Exact-mode scan over `I = 1, 2, ...` while `p_I > eps`, with
/// `S_I = sum_{i<I} (f_i - f_I) / g⁻_i` evaluated from two prefix sums.
fn exact_scan(probs: &[f64], eps: f64, obj: &Objective) -> (usize, Vec<f64>) {
    let mut inv_gap = 0.0;
    let mut f_over_gap = 0.0;
    let mut s_values = Vec::new();
    let mut support = 0;
    for &pi in probs {
        if !(pi > eps) {
            break;
        }
        let fi = obj.value(pi);
        let s = f_over_gap - fi * inv_gap;
        s_values.push(s);
        if !within(s, 1.0, f_over_gap.abs() + (fi * inv_gap).abs()) {
            break;
        }
        support += 1;
        let g = obj.gap_minus_raw(pi, eps);
        inv_gap += 1.0 / g;
        f_over_gap += fi / g;
    }
    (support.max(1), s_values)
}

/// First-order scan: `S_I = sum_{i<I} (f(p_i) - f(p_I)) / f'(p_i)` compared
/// with `eps`, optionally requiring `p_I > eps`.
///
/// Also used by the game sampler on sorted candidate prefixes, so any prefix
/// containing the support yields the same answer as the full vector.
pub(crate) fn first_order_scan(
    probs: &[f64],
    eps: f64,
    obj: &Objective,
    clause: bool,
    power_form: PowerThreshold,
    mut record: Option<&mut Vec<f64>>,
) -> usize {
    if eps == 0.0 {
        // No adversary: greedy is optimal.
        if let Some(out) = record.as_deref_mut() {
            out.push(0.0);
        }
        return 1;
    }
    let mut support = 0;
    match obj.kind() {
        ObjectiveKind::Log => {
            let mut mass = 0.0;
            let mut plogp = 0.0;
            for &pi in probs {
                if clause && !(pi > eps) {
                    break;
                }
                let li = pi.ln();
                let s = plogp - li * mass;
                if let Some(out) = record.as_deref_mut() {
                    out.push(s);
                }
                if !within(s, eps, plogp.abs() + (li * mass).abs()) {
                    break;
                }
                support += 1;
                mass += pi;
                plogp += pi * li;
            }
        }
        ObjectiveKind::Power { tau } => {
            let a = 1.0 - 1.0 / tau;
            let mut mass = 0.0;
            let mut other = 0.0;
            for &pi in probs {
                if clause && !(pi > eps) {
                    break;
                }
                // One power per entry: p^(1/tau) = p / p^a and p^(1+a) = p * p^a.
                let pa = pi.powf(a);
                let (scaled, weight) = match power_form {
                    PowerThreshold::Consistent => (pa * other, pi / pa),
                    PowerThreshold::Literal => (other / pa, pi * pa),
                };
                let s = (mass - scaled) / a;
                if let Some(out) = record.as_deref_mut() {
                    out.push(s);
                }
                if !within(s, eps, (mass + scaled.abs()) / a.abs()) {
                    break;
                }
                support += 1;
                mass += pi;
                other += weight;
            }
        }
    }
    support.max(1)
}

/// Normalized first-order masses `∝ 1/f'(p_i)` on a sorted support.
pub(crate) fn first_order_masses(support: &[f64], obj: &Objective) -> Vec<f64> {
    let raw: Vec<f64> = match obj.kind() {
        ObjectiveKind::Log => support.to_vec(),
        ObjectiveKind::Power { tau } => {
            let top = support[0];
            support.iter().map(|&x| (x / top).powf(1.0 / tau)).collect()
        }
    };
    let total = stable_sum(&raw);
    raw.into_iter().map(|w| w / total).collect()
}

/// The support size `Î` under the given mode.
pub fn threshold_index(p: &ProbVector, eps: f64, obj: &Objective, mode: SolveMode) -> Result<usize> {
    match mode {
        SolveMode::Exact => {
            require_case(obj, p, eps)?;
            Ok(exact_scan(p.probs(), eps, obj).0)
        }
        SolveMode::FirstOrder => Ok(first_order_scan(
            p.probs(),
            eps,
            obj,
            true,
            PowerThreshold::Consistent,
            None,
        )),
        SolveMode::Relaxed => Ok(first_order_scan(
            p.probs(),
            eps,
            obj,
            false,
            PowerThreshold::Consistent,
            None,
        )),
    }
}

fn require_case(obj: &Objective, p: &ProbVector, eps: f64) -> Result<AssumptionCase> {
    let case = classify_assumption(obj, p, eps);
    if case.is_relaxed() {
        return Err(GameError::AssumptionViolated(format!(
            "eps = {eps} with objective {obj} satisfies {}",
            case.describe()
        )));
    }
    Ok(case)
}

fn finish(
    p: &ProbVector,
    eps: f64,
    obj: &Objective,
    case: AssumptionCase,
    mode: SolveMode,
    weights: Vec<f64>,
    masses: Vec<f64>,
    s_values: Vec<f64>,
) -> Result<GameSolution> {
    let support_size = masses.len();
    let mut q = masses;
    q.resize(p.len(), 0.0);
    let adversary = inner_min(&q, p, eps, obj, &case)?;
    Ok(GameSolution {
        support_size,
        weights,
        value: adversary.value,
        q,
        s_values,
        mode,
        case,
        adversary,
    })
}

/// Exact minimax strategy `q̃_i ∝ eps / (f(p_i) - f(p_i - eps))` on the
/// first `Î` tokens.
pub fn optimal_q(p: &ProbVector, eps: f64, obj: &Objective) -> Result<GameSolution> {
    let case = require_case(obj, p, eps)?;
    let probs = p.probs();
    let (support, s_values) = exact_scan(probs, eps, obj);
    let weights: Vec<f64> = probs[..support]
        .iter()
        .map(|&x| eps / obj.gap_minus_raw(x, eps))
        .collect();
    let top = weights.iter().cloned().fold(0.0, f64::max);
    let scaled: Vec<f64> = weights.iter().map(|w| w / top).collect();
    let total = stable_sum(&scaled);
    let masses = scaled.iter().map(|w| w / total).collect();
    finish(p, eps, obj, case, SolveMode::Exact, weights, masses, s_values)
}

fn first_order_solution(
    p: &ProbVector,
    eps: f64,
    obj: &Objective,
    clause: bool,
    power_form: PowerThreshold,
) -> Result<GameSolution> {
    let case = classify_assumption(obj, p, eps);
    let probs = p.probs();
    let mut s_values = Vec::new();
    let support = first_order_scan(probs, eps, obj, clause, power_form, Some(&mut s_values));
    let weights: Vec<f64> = probs[..support]
        .iter()
        .map(|&x| obj.inverse_derivative(x))
        .collect();
    let masses = first_order_masses(&probs[..support], obj);
    let mode = if clause {
        SolveMode::FirstOrder
    } else {
        SolveMode::Relaxed
    };
    finish(p, eps, obj, case, mode, weights, masses, s_values)
}

/// First-order strategy `q_i ∝ 1/f'(p_i)` with the threshold
/// `sum_{i<I} (f(p_i) - f(p_I))/f'(p_i) <= eps` and `p_I > eps`.
pub fn first_order_q(p: &ProbVector, eps: f64, obj: &Objective) -> Result<GameSolution> {
    first_order_solution(p, eps, obj, true, PowerThreshold::Consistent)
}

/// First-order strategy without the `p_I > eps` clause: the game sampler's
/// rule.
pub fn relaxed_q(
    p: &ProbVector,
    eps: f64,
    obj: &Objective,
    power_form: PowerThreshold,
) -> Result<GameSolution> {
    first_order_solution(p, eps, obj, false, power_form)
}

/// Dispatches on `mode`.
pub fn solve(p: &ProbVector, eps: f64, obj: &Objective, mode: SolveMode) -> Result<GameSolution> {
    match mode {
        SolveMode::Exact => optimal_q(p, eps, obj),
        SolveMode::FirstOrder => first_order_q(p, eps, obj),
        SolveMode::Relaxed => relaxed_q(p, eps, obj, PowerThreshold::Consistent),
    }
}

/// Minimax value of the one-step game.
pub fn game_value(p: &ProbVector, eps: f64, obj: &Objective) -> Result<f64> {
    Ok(optimal_q(p, eps, obj)?.value)
}

/// Builds the dual certificate `(ν*, γ, λ*)` for a candidate strategy and
/// checks sign conditions and stationarity.
///
/// Structural problems (tail mass, a level strictly between zero and the
/// maximum, a relaxed instance) are reported as an infeasible certificate.
pub fn kkt_certificate(q: &[f64], p: &ProbVector, eps: f64, obj: &Objective) -> Result<KktCertificate> {
    let probs = p.probs();
    let d = probs.len();
    check_strategy(q, d)?;
    let case = classify_assumption(obj, p, eps);
    let active_len = match case.case {
        CaseKind::Relaxed => {
            return Ok(KktCertificate::rejected(
                d,
                format!("instance is outside both closed-form cases: {}", case.describe()),
            ))
        }
        CaseKind::CaseI => {
            if let Some(i) = (case.i_hat..d).find(|&i| q[i] > 0.0) {
                return Ok(KktCertificate::rejected(
                    d,
                    format!("mass {} on zeroable tail index {i} gives value -inf", q[i]),
                ));
            }
            case.i_hat
        }
        CaseKind::CaseII => d,
    };

    let fvals: Vec<f64> = probs[..active_len].iter().map(|&x| obj.value(x)).collect();
    let gaps: Vec<f64> = probs[..active_len]
        .iter()
        .map(|&x| obj.gap_minus_raw(x, eps))
        .collect();
    let levels: Vec<f64> = (0..active_len).map(|i| q[i] * gaps[i]).collect();
    let top = levels.iter().cloned().fold(0.0, f64::max);
    let level_tol = KKT_MEMBERSHIP_TOL * top.max(1.0);

    let mut in_j = vec![false; active_len];
    let mut in_n = vec![false; active_len];
    let mut violations = Vec::new();
    for i in 0..active_len {
        if (levels[i] - top).abs() <= level_tol {
            in_j[i] = true;
        } else if q[i] <= KKT_MEMBERSHIP_TOL {
            in_n[i] = true;
        } else {
            violations.push(format!(
                "index {i} has level {} strictly between 0 and the maximum {top}",
                levels[i]
            ));
        }
    }
    if !violations.is_empty() {
        let mut cert = KktCertificate::rejected(d, String::new());
        cert.violations = violations;
        return Ok(cert);
    }

    let inv: f64 = stable_sum(&(0..active_len).filter(|&k| in_j[k]).map(|k| 1.0 / gaps[k]).collect::<Vec<_>>());
    let fsum: f64 = stable_sum(
        &(0..active_len)
            .filter(|&k| in_j[k])
            .map(|k| fvals[k] / gaps[k])
            .collect::<Vec<_>>(),
    );
    let nu = (fsum - 1.0) / inv;

    let mut gamma = vec![0.0; d];
    let mut lambda = vec![0.0; d];
    for i in 0..active_len {
        if in_j[i] {
            gamma[i] = (fvals[i] - nu) / gaps[i];
        }
    }
    let gamma_total = stable_sum(&gamma);

    let last = d - 1;
    let recipient_gap = if case.case == CaseKind::CaseII {
        if !in_n[last] {
            violations.push(format!(
                "the smallest-probability index {last} carries mass, no zero-mass recipient"
            ));
        }
        obj.gap_plus(probs[last], eps)
    } else {
        0.0
    };

    let mut residual: f64 = (gamma_total - 1.0).abs();
    for i in 0..active_len {
        let r = if in_j[i] {
            -fvals[i] + gaps[i] * gamma[i] + nu
        } else {
            let inflow = if case.case == CaseKind::CaseII && i == last {
                gamma_total
            } else {
                0.0
            };
            let correction = if case.case == CaseKind::CaseII && i == last {
                recipient_gap
            } else {
                0.0
            };
            lambda[i] = nu - fvals[i] - correction;
            -fvals[i] - recipient_gap * inflow - lambda[i] + nu
        };
        residual = residual.max(r.abs());
    }

    for i in 0..active_len {
        if gamma[i] < -KKT_SIGN_TOL {
            violations.push(format!("gamma[{i}] = {} is negative", gamma[i]));
        }
        if lambda[i] < -KKT_SIGN_TOL {
            violations.push(format!("lambda[{i}] = {} is negative", lambda[i]));
        }
    }
    if (gamma_total - 1.0).abs() > KKT_SIGN_TOL {
        violations.push(format!("gamma sums to {gamma_total}"));
    }
    if !(residual <= KKT_RESIDUAL_TOL) {
        violations.push(format!("stationarity residual {residual}"));
    }

    Ok(KktCertificate {
        nu_star: nu,
        lambda_star: lambda,
        gamma,
        stationarity_residual: residual,
        feasible: violations.is_empty(),
        violations,
    })
}
