//! Concave non-decreasing objectives `f` applied elementwise to the
//! adversary's distribution, and the assumption cases that make the one-step
//! game solvable in closed form.

use std::fmt;
use std::str::FromStr;

use crate::error::{GameError, Result};
use crate::prob::ProbVector;

const SANITY_POINTS: usize = 64;
const SANITY_LO: f64 = 1e-6;

/// Which family an [`Objective`] belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectiveKind {
    /// `f(x) = ln x`.
    Log,
    /// `f(x) = (x^(1-1/tau) - 1) / (1 - 1/tau)` with `tau > 0`, `tau != 1`.
    Power { tau: f64 },
}

/// A validated objective descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    kind: ObjectiveKind,
    diverges_at_zero: bool,
}

impl Objective {
    pub fn log() -> Self {
        Objective {
            kind: ObjectiveKind::Log,
            diverges_at_zero: true,
        }
    }

    /// The power family. `tau == 1` is rejected; use [`Objective::from_tau`]
    /// to get the logarithm there.
    pub fn power(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(GameError::BadObjective(format!(
                "tau must be finite and positive, got {tau}"
            )));
        }
        if tau == 1.0 {
            return Err(GameError::BadObjective(
                "tau = 1 is the log objective".into(),
            ));
        }
        let obj = Objective {
            kind: ObjectiveKind::Power { tau },
            // f(0) = -1/(1 - 1/tau) is finite exactly when tau > 1.
            diverges_at_zero: tau < 1.0,
        };
        obj.sanity_check()?;
        Ok(obj)
    }

    /// Log for `tau == 1`, power otherwise.
    pub fn from_tau(tau: f64) -> Result<Self> {
        if tau == 1.0 {
            Ok(Self::log())
        } else {
            Self::power(tau)
        }
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn is_log(&self) -> bool {
        matches!(self.kind, ObjectiveKind::Log)
    }

    /// Temperature parameter, 1 for the logarithm.
    pub fn tau(&self) -> f64 {
        match self.kind {
            ObjectiveKind::Log => 1.0,
            ObjectiveKind::Power { tau } => tau,
        }
    }

    /// True iff `f(x) -> -inf` as `x -> 0`.
    pub fn diverges_at_zero(&self) -> bool {
        self.diverges_at_zero
    }

    #[inline]
    fn exponent(tau: f64) -> f64 {
        1.0 - 1.0 / tau
    }

    /// `f(x)` without domain checks. Accepts any `x >= 0`.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            ObjectiveKind::Log => x.ln(),
            ObjectiveKind::Power { tau } => {
                let a = Self::exponent(tau);
                if x == 0.0 {
                    return if a > 0.0 { -1.0 / a } else { f64::NEG_INFINITY };
                }
                (a * x.ln()).exp_m1() / a
            }
        }
    }

    /// `f(x)` for `x` in `[0, 1]`; `-inf` at 0 when the objective diverges.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(GameError::DomainError { x });
        }
        Ok(self.value(x))
    }

    /// `f'(x)`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            ObjectiveKind::Log => 1.0 / x,
            ObjectiveKind::Power { tau } => (-x.ln() / tau).exp(),
        }
    }

    /// `1 / f'(x)`: the first-order strategy weight.
    #[inline]
    pub fn inverse_derivative(&self, x: f64) -> f64 {
        match self.kind {
            ObjectiveKind::Log => x,
            ObjectiveKind::Power { tau } => x.powf(1.0 / tau),
        }
    }

    /// Downward gap `f(x) - f(x - eps)`.
    ///
    /// `+inf` when `x <= eps` and `f` diverges at zero. For objectives that
    /// stay finite at zero, `x < eps` is outside the domain.
    pub fn gap_minus(&self, x: f64, eps: f64) -> Result<f64> {
        if !(x > 0.0 && x <= 1.0) || !(eps >= 0.0) {
            return Err(GameError::DomainError { x });
        }
        if eps == 0.0 {
            return Ok(0.0);
        }
        if x <= eps && self.diverges_at_zero {
            return Ok(f64::INFINITY);
        }
        if x < eps {
            return Err(GameError::DomainError { x: x - eps });
        }
        Ok(self.gap_minus_raw(x, eps))
    }

    /// Unchecked downward gap for `x > eps` (or `x == eps` when finite at 0).
    #[inline]
    pub(crate) fn gap_minus_raw(&self, x: f64, eps: f64) -> f64 {
        if x <= eps && self.diverges_at_zero {
            return f64::INFINITY;
        }
        let r = (-eps / x).ln_1p();
        match self.kind {
            ObjectiveKind::Log => -r,
            ObjectiveKind::Power { tau } => {
                let a = Self::exponent(tau);
                (a * x.ln()).exp() * (-(a * r).exp_m1()) / a
            }
        }
    }

    /// Upward gap `f(x + eps) - f(x)`.
    #[inline]
    pub fn gap_plus(&self, x: f64, eps: f64) -> f64 {
        if eps == 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return self.value(eps) - self.value(0.0);
        }
        let r = (eps / x).ln_1p();
        match self.kind {
            ObjectiveKind::Log => r,
            ObjectiveKind::Power { tau } => {
                let a = Self::exponent(tau);
                (a * x.ln()).exp() * (a * r).exp_m1() / a
            }
        }
    }

    /// Monotonicity and midpoint concavity on a geometric grid over
    /// `[1e-6, 1]`.
    fn sanity_check(&self) -> Result<()> {
        let ratio = (1.0 / SANITY_LO).powf(1.0 / (SANITY_POINTS - 1) as f64);
        let grid: Vec<f64> = (0..SANITY_POINTS)
            .map(|k| (SANITY_LO * ratio.powi(k as i32)).min(1.0))
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&x| self.value(x)).collect();
        for k in 0..SANITY_POINTS - 1 {
            let tol = 1e-12 * (1.0 + vals[k].abs());
            if vals[k + 1] < vals[k] - tol {
                return Err(GameError::BadObjective(format!(
                    "{self} is decreasing near x = {}",
                    grid[k]
                )));
            }
        }
        for k in 0..SANITY_POINTS - 2 {
            let mid = 0.5 * (grid[k] + grid[k + 2]);
            let chord = 0.5 * (vals[k] + vals[k + 2]);
            let tol = 1e-12 * (1.0 + chord.abs());
            if self.value(mid) < chord - tol {
                return Err(GameError::BadObjective(format!(
                    "{self} is not concave near x = {mid}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ObjectiveKind::Log => write!(f, "log"),
            ObjectiveKind::Power { tau } => write!(f, "power:{tau}"),
        }
    }
}

impl FromStr for Objective {
    type Err = GameError;

    /// Parses `log` or `power:<tau>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("log") {
            return Ok(Objective::log());
        }
        let tau = s
            .strip_prefix("power:")
            .ok_or_else(|| GameError::BadObjective(format!("unknown objective '{s}'")))?
            .parse::<f64>()
            .map_err(|e| GameError::BadObjective(format!("bad tau in '{s}': {e}")))?;
        Objective::from_tau(tau)
    }
}

/// Which closed-form regime an instance falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    /// `p_d <= eps < p_1` and `f` diverges at zero.
    CaseI,
    /// `0 < eps < p_d` and the gap-ratio sum condition holds.
    CaseII,
    /// Neither; only heuristic semantics are available.
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionCase {
    pub case: CaseKind,
    pub epsilon: f64,
    /// Number of entries with `p_i > eps`, i.e. the last index (1-based)
    /// the adversary cannot zero.
    pub i_hat: usize,
}

impl AssumptionCase {
    pub fn is_relaxed(&self) -> bool {
        self.case == CaseKind::Relaxed
    }

    /// Human-readable reason for a relaxed classification.
    pub fn describe(&self) -> &'static str {
        match self.case {
            CaseKind::CaseI => "p_d <= eps < p_1 with f diverging at 0",
            CaseKind::CaseII => "eps < p_d with the gap-ratio sum at least 1",
            CaseKind::Relaxed => {
                "neither (p_d <= eps < p_1 with divergent f) nor (eps < p_d with gap-ratio sum >= 1)"
            }
        }
    }
}

/// Gap-ratio sum `sum_{i<d} (f(p_i) - f(p_d + eps)) / (f(p_i) - f(p_i - eps))`.
pub fn case_ii_sum(obj: &Objective, p: &ProbVector, eps: f64) -> f64 {
    let probs = p.probs();
    let d = probs.len();
    let top = obj.value(probs[d - 1] + eps);
    probs[..d - 1]
        .iter()
        .map(|&pi| (obj.value(pi) - top) / obj.gap_minus_raw(pi, eps))
        .sum()
}

/// Classifies `(obj, p, eps)` into one of the closed-form cases.
pub fn classify_assumption(obj: &Objective, p: &ProbVector, eps: f64) -> AssumptionCase {
    let probs = p.probs();
    let i_hat = probs.partition_point(|&x| x > eps);
    let case = if !(eps > 0.0) {
        CaseKind::Relaxed
    } else if p.min_prob() <= eps && eps < p.max_prob() && obj.diverges_at_zero() {
        CaseKind::CaseI
    } else if eps < p.min_prob() && case_ii_sum(obj, p, eps) >= 1.0 {
        CaseKind::CaseII
    } else {
        CaseKind::Relaxed
    };
    AssumptionCase {
        case,
        epsilon: eps,
        i_hat,
    }
}
