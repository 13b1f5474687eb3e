//! Brute-force ground truth: vertex enumeration, simplex grid search and
//! finite differences. Every closed form in the crate is checked against
//! these.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{inner_min, objective_value};
use crate::error::{GameError, Result};
use crate::objective::{classify_assumption, AssumptionCase, CaseKind, Objective, ObjectiveKind};
use crate::prob::{tv_distance, ProbVector};
use crate::strategist::optimal_q;

/// Largest dimension the grid oracles accept.
pub const MAX_GRID_DIM: usize = 4;
/// Largest dimension for explicit vertex listing.
pub const MAX_VERTEX_DIM: usize = 64;
/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Feasibility tolerance for grid points against the TV ball.
const BALL_TOL: f64 = 1e-12;

/// A regular grid on the probability simplex: every point is
/// `(k_1, ..., k_d) / n` with non-negative integers summing to `n = 1/step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub step: f64,
    pub dim: usize,
    divisions: usize,
}

impl GridSpec {
    pub fn new(step: f64, dim: usize) -> Result<Self> {
        if dim > MAX_GRID_DIM {
            return Err(GameError::TooLarge(format!(
                "grid oracles support at most {MAX_GRID_DIM} dimensions, got {dim}"
            )));
        }
        if dim == 0 {
            return Err(GameError::EmptyInput);
        }
        if !(step > 0.0 && step <= 0.25) {
            return Err(GameError::BadConfig(format!("grid step must lie in (0, 0.25], got {step}")));
        }
        let n = (1.0 / step).round();
        if ((1.0 / step) - n).abs() > 1e-9 * n {
            return Err(GameError::BadConfig(format!("1/step must be an integer, got step {step}")));
        }
        Ok(GridSpec {
            step,
            dim,
            divisions: n as usize,
        })
    }

    pub fn divisions(&self) -> usize {
        self.divisions
    }

    /// Number of grid points, `C(n + d - 1, d - 1)`.
    pub fn len(&self) -> usize {
        let (n, d) = (self.divisions, self.dim);
        (1..d).fold(1usize, |acc, k| acc * (n + k) / k)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Visits every point in lexicographic order of the integer composition.
    pub fn for_each<F: FnMut(&[f64])>(&self, mut visit: F) {
        let n = self.divisions;
        let d = self.dim;
        let scale = n as f64;
        let mut counts = vec![0usize; d];
        let mut point = vec![0.0; d];
        // counts[..d-1] runs through all tuples with sum <= n; the last entry
        // takes the remainder.
        loop {
            let used: usize = counts[..d - 1].iter().sum();
            counts[d - 1] = n - used;
            for k in 0..d {
                point[k] = counts[k] as f64 / scale;
            }
            visit(&point);
            // Advance like an odometer over the first d-1 digits, rightmost
            // fastest, keeping the partial sum within n.
            let mut k = d - 1;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                let used: usize = counts[..d - 1].iter().sum();
                if used < n {
                    counts[k] += 1;
                    for c in counts.iter_mut().take(d - 1).skip(k + 1) {
                        *c = 0;
                    }
                    break;
                }
                counts[k] = 0;
            }
        }
    }
}

/// Candidate minimizers of `q·f(p)` over the ball, in sorted coordinates.
pub fn vertex_enumerate(p: &ProbVector, eps: f64, case: &AssumptionCase) -> Result<Vec<Vec<f64>>> {
    let probs = p.probs();
    let d = probs.len();
    if d > MAX_VERTEX_DIM {
        return Err(GameError::TooLarge(format!(
            "vertex listing supports at most {MAX_VERTEX_DIM} entries, got {d}"
        )));
    }
    let transfer = |i: usize, j: usize, amount: f64| {
        let mut v = probs.to_vec();
        v[i] -= amount;
        v[j] += amount;
        if v[i] < 0.0 {
            v[i] = 0.0;
        }
        v
    };
    let mut out = Vec::new();
    if eps == 0.0 {
        out.push(probs.to_vec());
        return Ok(out);
    }
    match case.case {
        CaseKind::CaseII => {
            for i in 0..d {
                for j in (0..d).filter(|&j| j != i) {
                    out.push(transfer(i, j, eps));
                }
            }
        }
        CaseKind::CaseI => {
            let i_hat = case.i_hat;
            for i in 0..i_hat {
                for j in (0..d).filter(|&j| j != i) {
                    out.push(transfer(i, j, eps));
                }
            }
            for z in i_hat..d {
                let target = if z == 0 { 1 } else { 0 };
                let mut v = transfer(z, target, probs[z]);
                v[z] = 0.0;
                out.push(v);
            }
        }
        CaseKind::Relaxed => {
            for i in 0..d {
                let amount = probs[i].min(eps);
                for j in (0..d).filter(|&j| j != i) {
                    let mut v = transfer(i, j, amount);
                    if amount == probs[i] {
                        v[i] = 0.0;
                    }
                    out.push(v);
                }
            }
        }
    }
    Ok(out)
}

/// Result of [`brute_min_over_ball`].
#[derive(Debug, Clone, PartialEq)]
pub struct BallMin {
    pub grid_value: f64,
    pub grid_argmin: Vec<f64>,
    pub vertex_value: f64,
    pub vertex_argmin: Vec<f64>,
    /// Largest amount by which the grid may exceed the true minimum.
    pub slack: f64,
    pub grid_points_in_ball: usize,
    /// Grid below the vertex minimum, or above it by more than `slack`.
    pub disagreement: bool,
}

/// Minimum of `q·f(p')` over grid points of the ball and, separately, over
/// the listed vertices.
pub fn brute_min_over_ball(
    q: &[f64],
    p: &ProbVector,
    eps: f64,
    obj: &Objective,
    grid: &GridSpec,
) -> Result<BallMin> {
    let probs = p.probs();
    let d = probs.len();
    if grid.dim != d {
        return Err(GameError::DimensionMismatch {
            expected: d,
            got: grid.dim,
        });
    }
    let case = classify_assumption(obj, p, eps);
    let vertices = vertex_enumerate(p, eps, &case)?;
    let mut vertex = (f64::INFINITY, probs.to_vec());
    for v in vertices {
        let val = objective_value(q, &v, obj);
        if val < vertex.0 {
            vertex = (val, v);
        }
    }

    let mut best = (f64::INFINITY, Vec::new());
    let mut count = 0;
    grid.for_each(|point| {
        let tv = tv_distance(point, probs).expect("grid matches dimension");
        if tv <= eps + BALL_TOL {
            count += 1;
            let val = objective_value(q, point, obj);
            if val < best.0 {
                best = (val, point.to_vec());
            }
        }
    });
    if count == 0 {
        // The ball holds no grid point; fall back to the centre itself so
        // the comparison stays meaningful.
        best = (objective_value(q, probs, obj), probs.to_vec());
    }

    // A grid point within 2·d·step (in l1) of the minimizing vertex lies in
    // the ball; the objective moves by at most the gradient bound times that
    // distance.
    let reach = 2.0 * d as f64 * grid.step;
    let grad = vertex
        .1
        .iter()
        .zip(q)
        .filter(|(_, &qi)| qi > 0.0)
        .map(|(&vi, &qi)| {
            let lo = vi - reach;
            if lo <= 0.0 {
                if obj.diverges_at_zero() {
                    f64::INFINITY
                } else {
                    qi * obj.derivative(f64::MIN_POSITIVE)
                }
            } else {
                qi * obj.derivative(lo)
            }
        })
        .fold(0.0, f64::max);
    let slack = if count == 0 { f64::INFINITY } else { reach * grad };
    let disagreement = best.0 < vertex.0 - 1e-12 || best.0 > vertex.0 + slack;
    Ok(BallMin {
        grid_value: best.0,
        grid_argmin: best.1,
        vertex_value: vertex.0,
        vertex_argmin: vertex.1,
        slack,
        grid_points_in_ball: count,
        disagreement,
    })
}

/// Result of [`brute_max_q`].
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMax {
    pub value: f64,
    pub argmax: Vec<f64>,
    /// Largest amount by which the true maximum may exceed the grid value.
    pub slack: f64,
    pub relaxed: bool,
    pub case: CaseKind,
}

impl StrategyMax {
    /// True when a closed-form value is consistent with this grid search:
    /// not below any grid point (beyond 1e-9) and not above the grid by more
    /// than the slack.
    pub fn brackets(&self, closed_form: f64) -> bool {
        closed_form >= self.value - 1e-9 && closed_form <= self.value + self.slack
    }
}

/// Lipschitz bound (in l1 over `q`) of the inner minimum: the largest
/// `|f|` among coordinates of the single-transfer vertices outside the
/// zeroable tail.
fn inner_lipschitz(probs: &[f64], eps: f64, obj: &Objective, case: &AssumptionCase) -> f64 {
    let limit = match case.case {
        CaseKind::CaseI => case.i_hat,
        _ => probs.len(),
    };
    let mut l = 0.0f64;
    for &x in &probs[..limit] {
        for y in [x - eps, x, (x + eps).min(1.0)] {
            let y = y.max(0.0);
            l = l.max(obj.value(y).abs());
        }
    }
    l
}

/// Exhaustive outer maximization: the best grid strategy against the
/// closed-form adversary.
pub fn brute_max_q(p: &ProbVector, eps: f64, obj: &Objective, grid: &GridSpec) -> Result<StrategyMax> {
    let probs = p.probs();
    let d = probs.len();
    if grid.dim != d {
        return Err(GameError::DimensionMismatch {
            expected: d,
            got: grid.dim,
        });
    }
    let case = classify_assumption(obj, p, eps);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut err = None;
    grid.for_each(|q| {
        if err.is_some() {
            return;
        }
        match inner_min(q, p, eps, obj, &case) {
            // Strict improvement keeps the lexicographically first maximizer.
            Ok(out) => {
                if best.as_ref().map_or(true, |b| out.value > b.0) {
                    best = Some((out.value, q.to_vec()));
                }
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let best = best.expect("grids are never empty");
    let slack = d as f64 * grid.step * inner_lipschitz(probs, eps, obj, &case);
    Ok(StrategyMax {
        value: best.0,
        argmax: best.1,
        slack,
        relaxed: case.is_relaxed(),
        case: case.case,
    })
}

/// One finite-difference comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdPoint {
    pub x: f64,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// Truncation plus rounding bound: `h²·max|f'''|/6 + 4·ulp·|f|/h`.
    pub bound: f64,
}

impl FdPoint {
    pub fn within_bound(&self) -> bool {
        self.abs_err <= self.bound
    }
}

fn third_derivative(obj: &Objective, x: f64) -> f64 {
    match obj.kind() {
        ObjectiveKind::Log => 2.0 / (x * x * x),
        ObjectiveKind::Power { tau } => {
            let a = 1.0 - 1.0 / tau;
            (a - 1.0) * (a - 2.0) * x.powf(a - 3.0)
        }
    }
}

/// Central differences with `h = 1e-5` against the analytic derivative.
pub fn finite_diff_check(obj: &Objective, points: &[f64]) -> Vec<FdPoint> {
    let h = FD_STEP;
    points
        .iter()
        .map(|&x| {
            let analytic = obj.derivative(x);
            let numeric = (obj.value(x + h) - obj.value(x - h)) / (2.0 * h);
            let abs_err = (analytic - numeric).abs();
            // |f'''| is decreasing on (0, 1) for both families.
            let bound = h * h * third_derivative(obj, x - h).abs() / 6.0
                + 4.0 * f64::EPSILON * obj.value(x).abs().max(1.0) / h;
            FdPoint {
                x,
                analytic,
                numeric,
                abs_err,
                rel_err: abs_err / analytic.abs(),
                bound,
            }
        })
        .collect()
}

/// One line of the oracle report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub instance: String,
    pub dim: usize,
    pub eps: f64,
    pub probs: Vec<f64>,
    pub closed_form: f64,
    pub grid_value: f64,
    pub vertex_value: f64,
    pub grid_ball_value: f64,
    pub slack: f64,
    pub ball_slack: f64,
    pub pass: bool,
}

/// Short stable hash of an instance: SHA-256 over the little-endian bits of
/// the probabilities and the radius.
pub fn instance_hash(probs: &[f64], eps: f64) -> String {
    let mut h = Sha256::new();
    for x in probs.iter().chain(std::iter::once(&eps)) {
        h.update(x.to_bits().to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Random sorted distribution of dimension `d` (flat Dirichlet) with a
/// radius in `[p_d, p_1)`, so that the log objective is in its first
/// closed-form case.
pub fn random_case_i_instance(rng: &mut ChaCha8Rng, d: usize) -> (ProbVector, f64) {
    loop {
        let w: Vec<f64> = (0..d).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        let raw: Vec<f64> = w.iter().map(|x| x / total).collect();
        let Ok(p) = ProbVector::from_probs(&raw) else { continue };
        let (lo, hi) = (p.min_prob(), p.max_prob());
        if hi - lo < 1e-6 || p.len() != d {
            continue;
        }
        let eps = lo + rng.gen::<f64>() * (hi - lo);
        if eps < hi {
            return (p, eps);
        }
    }
}

/// Runs the oracle suite: for each random instance, the closed-form game
/// value against the grid maximum, and the optimal strategy's inner minimum
/// against the grid over the ball.
pub fn verify_suite(count: usize, dims: &[usize], seed: u64, step: f64) -> Result<Vec<OracleRecord>> {
    if dims.is_empty() {
        return Err(GameError::BadConfig("no dimensions requested".into()));
    }
    for &d in dims {
        if d > MAX_GRID_DIM {
            return Err(GameError::TooLarge(format!(
                "grid oracles support at most {MAX_GRID_DIM} dimensions, got {d}"
            )));
        }
        if d < 2 {
            return Err(GameError::BadConfig(format!("dimension must be at least 2, got {d}")));
        }
    }
    let log = Objective::log();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for n in 0..count {
        let d = dims[n % dims.len()];
        let (p, eps) = random_case_i_instance(&mut rng, d);
        let grid = GridSpec::new(step, d)?;
        let sol = optimal_q(&p, eps, &log)?;
        let outer = brute_max_q(&p, eps, &log, &grid)?;
        let ball = brute_min_over_ball(&sol.q, &p, eps, &log, &grid)?;
        let pass = outer.brackets(sol.value)
            && !ball.disagreement
            && (ball.vertex_value - sol.value).abs() <= 1e-10 * (1.0 + sol.value.abs());
        out.push(OracleRecord {
            instance: instance_hash(p.probs(), eps),
            dim: d,
            eps,
            probs: p.probs().to_vec(),
            closed_form: sol.value,
            grid_value: outer.value,
            vertex_value: ball.vertex_value,
            grid_ball_value: ball.grid_value,
            slack: outer.slack,
            ball_slack: ball.slack,
            pass,
        });
    }
    Ok(out)
}
