//! The multi-step game on small tabular measures.
//!
//! A measure assigns a next-token distribution to every context shorter than
//! the horizon. Contexts are stored densely: depth `t` starts at offset
//! `sum_{s<t} d^s` and a context's position within its depth is its base-`d`
//! encoding, so the children of a node are contiguous.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{dot_with_zero_convention, inner_min};
use crate::error::{GameError, Result};
use crate::objective::{classify_assumption, Objective};
use crate::oracle::{GridSpec, MAX_GRID_DIM};
use crate::prob::{stable_sum, ProbVector};
use crate::sampler::{truncate, SamplerConfig};
use crate::strategist::{optimal_q, relaxed_q, solve, PowerThreshold, SolveMode};

/// Largest horizon accepted by the dynamic-programming oracle.
pub const MAX_DP_HORIZON: usize = 3;
/// Tolerance on each node's mass.
const NODE_MASS_TOL: f64 = 1e-9;

/// Next-token distributions for every context of length below the horizon,
/// indexed by vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyMeasure {
    d: usize,
    horizon: usize,
    nodes: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct NodeLine {
    context: Vec<usize>,
    probs: Vec<f64>,
}

fn node_count(d: usize, horizon: usize) -> usize {
    (0..horizon).map(|t| d.pow(t as u32)).sum()
}

impl ToyMeasure {
    /// Builds a measure from nodes already in dense order.
    pub fn from_nodes(d: usize, horizon: usize, nodes: Vec<Vec<f64>>) -> Result<Self> {
        if d == 0 || horizon == 0 {
            return Err(GameError::ShapeMismatch("vocabulary and horizon must be positive".into()));
        }
        let expected = node_count(d, horizon);
        if nodes.len() != expected {
            return Err(GameError::ShapeMismatch(format!(
                "expected {expected} nodes for d = {d}, T = {horizon}, got {}",
                nodes.len()
            )));
        }
        let m = ToyMeasure { d, horizon, nodes };
        for (i, node) in m.nodes.iter().enumerate() {
            let ctx = m.context_of(i);
            if node.len() != d {
                return Err(GameError::DimensionMismatch {
                    expected: d,
                    got: node.len(),
                }
                .in_record(format!("{ctx:?}")));
            }
            if node.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return Err(GameError::NotADistribution("entries must be finite and non-negative".into())
                    .in_record(format!("{ctx:?}")));
            }
            let mass = stable_sum(node);
            if (mass - 1.0).abs() > NODE_MASS_TOL {
                return Err(GameError::NotADistribution(format!("mass {mass} is not 1"))
                    .in_record(format!("{ctx:?}")));
            }
        }
        Ok(m)
    }

    /// Every node drawn from the flat Dirichlet distribution.
    pub fn random(d: usize, horizon: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let nodes = (0..node_count(d, horizon))
            .map(|_| {
                let w: Vec<f64> = (0..d).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            })
            .collect();
        Self::from_nodes(d, horizon, nodes)
    }

    /// Convenience wrapper seeding ChaCha8 from `seed`.
    pub fn random_seeded(d: usize, horizon: usize, seed: u64) -> Result<Self> {
        Self::random(d, horizon, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// The same distribution at every context.
    pub fn stationary(node: &[f64], horizon: usize) -> Result<Self> {
        let d = node.len();
        Self::from_nodes(d, horizon, vec![node.to_vec(); node_count(d, horizon)])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &[f64] {
        &self.nodes[index]
    }

    fn offset(&self, depth: usize) -> usize {
        node_count(self.d, depth)
    }

    pub fn depth_of(&self, index: usize) -> usize {
        (0..self.horizon)
            .find(|&t| index < self.offset(t + 1))
            .expect("index within the measure")
    }

    pub fn index_of(&self, context: &[usize]) -> Result<usize> {
        if context.len() >= self.horizon {
            return Err(GameError::ShapeMismatch(format!(
                "context of length {} at horizon {}",
                context.len(),
                self.horizon
            )));
        }
        let mut code = 0;
        for &x in context {
            if x >= self.d {
                return Err(GameError::ShapeMismatch(format!("token {x} outside vocabulary {}", self.d)));
            }
            code = code * self.d + x;
        }
        Ok(self.offset(context.len()) + code)
    }

    pub fn context_of(&self, index: usize) -> Vec<usize> {
        let t = self.depth_of(index);
        let mut code = index - self.offset(t);
        let mut ctx = vec![0; t];
        for k in (0..t).rev() {
            ctx[k] = code % self.d;
            code /= self.d;
        }
        ctx
    }

    /// Index of the first child of `index`, or `None` at the last depth.
    pub fn first_child(&self, index: usize) -> Option<usize> {
        let t = self.depth_of(index);
        (t + 1 < self.horizon).then(|| self.offset(t + 1) + (index - self.offset(t)) * self.d)
    }

    /// Probability of reaching each node when tokens are drawn from `self`.
    pub fn path_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        w[0] = 1.0;
        for c in 0..self.len() {
            if let Some(first) = self.first_child(c) {
                for i in 0..self.d {
                    w[first + i] = w[c] * self.nodes[c][i];
                }
            }
        }
        w
    }

    fn check_same_shape(&self, other: &ToyMeasure) -> Result<()> {
        if self.d != other.d || self.horizon != other.horizon {
            return Err(GameError::ShapeMismatch(format!(
                "(d, T) = ({}, {}) vs ({}, {})",
                self.d, self.horizon, other.d, other.horizon
            )));
        }
        Ok(())
    }

    /// Writes one `{"context": [...], "probs": [...]}` line per node.
    pub fn write_lines<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, probs) in self.nodes.iter().enumerate() {
            let line = NodeLine {
                context: self.context_of(i),
                probs: probs.clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads the line format back. Every context must appear exactly once.
    pub fn read_lines<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| GameError::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: NodeLine = serde_json::from_str(&line)
                .map_err(|e| GameError::Parse(format!("line {}: {e}", n + 1)))?;
            lines.push(rec);
        }
        let first = lines.first().ok_or(GameError::EmptyInput)?;
        let d = first.probs.len();
        let horizon = lines.iter().map(|l| l.context.len()).max().unwrap_or(0) + 1;
        let total = node_count(d, horizon);
        let mut nodes: Vec<Option<Vec<f64>>> = vec![None; total];
        let shape = ToyMeasure {
            d,
            horizon,
            nodes: Vec::new(),
        };
        for l in lines {
            let i = shape.index_of(&l.context)?;
            if nodes[i].replace(l.probs).is_some() {
                return Err(GameError::ShapeMismatch(format!("context {:?} appears twice", l.context)));
            }
        }
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                n.ok_or_else(|| GameError::ShapeMismatch(format!("context {:?} missing", shape.context_of(i))))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_nodes(d, horizon, nodes)
    }
}

fn node_term(q: &[f64], p: &[f64], obj: &Objective) -> f64 {
    let fvals: Vec<f64> = p.iter().map(|&x| obj.value(x)).collect();
    dot_with_zero_convention(q, &fvals)
}

/// `E_Q log P(X_1..X_T)`, as the `Q`-weighted sum of per-node terms
/// `q·ln p`. Unreached nodes contribute nothing, even when `-inf`.
pub fn eval_objective(q: &ToyMeasure, p: &ToyMeasure) -> Result<f64> {
    eval_objective_with(q, p, &Objective::log())
}

/// The per-node decomposition with a general objective `f` in place of `ln`.
pub fn eval_objective_with(q: &ToyMeasure, p: &ToyMeasure, obj: &Objective) -> Result<f64> {
    q.check_same_shape(p)?;
    let w = q.path_weights();
    let terms: Vec<f64> = (0..q.len())
        .filter(|&c| w[c] > 0.0)
        .map(|c| w[c] * node_term(&q.nodes[c], &p.nodes[c], obj))
        .collect();
    Ok(stable_sum(&terms))
}

/// Exhaustive sum over all `d^T` complete sequences of
/// `Q(x) · sum_t f(p(x_t | x_<t))`. Independent of the per-node
/// decomposition and used to check it.
pub fn leaf_sum_value(q: &ToyMeasure, p: &ToyMeasure, obj: &Objective) -> Result<f64> {
    q.check_same_shape(p)?;
    let (d, t_max) = (q.d, q.horizon);
    let leaves = d.pow(t_max as u32);
    let mut terms = Vec::with_capacity(leaves);
    let mut seq = vec![0usize; t_max];
    for code in 0..leaves {
        let mut c = code;
        for k in (0..t_max).rev() {
            seq[k] = c % d;
            c /= d;
        }
        let mut weight = 1.0;
        let mut score = 0.0;
        for t in 0..t_max {
            let node = q.index_of(&seq[..t])?;
            weight *= q.nodes[node][seq[t]];
            if weight == 0.0 {
                break;
            }
            score += obj.value(p.nodes[node][seq[t]]);
        }
        if weight > 0.0 {
            terms.push(weight * score);
        }
    }
    Ok(terms.iter().sum())
}

fn node_prob_vector(p: &ToyMeasure, c: usize) -> Result<ProbVector> {
    ProbVector::from_probs(&p.nodes[c]).map_err(|e| e.in_record(format!("{:?}", p.context_of(c))))
}

/// Solves the one-step game independently at every node.
pub fn local_mechanism(phat: &ToyMeasure, eps: f64, obj: &Objective, mode: SolveMode) -> Result<ToyMeasure> {
    let mut nodes = Vec::with_capacity(phat.len());
    for c in 0..phat.len() {
        let ctx = || format!("{:?}", phat.context_of(c));
        let pv = node_prob_vector(phat, c)?;
        if mode == SolveMode::Exact && !(eps < pv.max_prob()) {
            return Err(GameError::AssumptionViolated(format!(
                "eps = {eps} is not below the largest probability {}",
                pv.max_prob()
            ))
            .in_record(ctx()));
        }
        let sol = solve(&pv, eps, obj, mode).map_err(|e| e.in_record(ctx()))?;
        nodes.push(pv.scatter(&sol.q));
    }
    ToyMeasure::from_nodes(phat.d, phat.horizon, nodes)
}

/// Outcome of the adversary's per-node best response to a fixed strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTrace {
    /// `L^T(Q, P*)`, possibly `-inf`.
    pub value: f64,
    /// One-step value at each node, in dense order.
    pub per_node_values: Vec<f64>,
    pub strategy: ToyMeasure,
    pub adversary: ToyMeasure,
    /// First reachable context where the adversary drives the value to `-inf`.
    pub neg_inf_context: Option<Vec<usize>>,
}

/// Per node, the adversary's closed-form minimizer within the ball around
/// `phat`, assembled into `P*`.
pub fn adversary_best_response(
    q: &ToyMeasure,
    phat: &ToyMeasure,
    eps: f64,
    obj: &Objective,
) -> Result<GameTrace> {
    q.check_same_shape(phat)?;
    let mut per_node = Vec::with_capacity(q.len());
    let mut adv_nodes = Vec::with_capacity(q.len());
    for c in 0..q.len() {
        let pv = node_prob_vector(phat, c)?;
        let (aligned, dropped) = pv.gather(&q.nodes[c])?;
        if dropped > 0.0 {
            // Mass on a token the model rules out: the adversary keeps it at
            // zero.
            let value = if obj.diverges_at_zero() {
                f64::NEG_INFINITY
            } else {
                node_term(&q.nodes[c], &phat.nodes[c], obj)
            };
            per_node.push(value);
            adv_nodes.push(phat.nodes[c].clone());
            continue;
        }
        let case = classify_assumption(obj, &pv, eps);
        let out = inner_min(&aligned, &pv, eps, obj, &case)
            .map_err(|e| e.in_record(format!("{:?}", q.context_of(c))))?;
        let witness = out
            .witness
            .as_ref()
            .or(out.zeroing_witness.as_ref())
            .expect("every outcome carries a witness");
        per_node.push(out.value);
        adv_nodes.push(pv.scatter(witness));
    }
    let w = q.path_weights();
    let neg_inf_context = (0..q.len())
        .find(|&c| w[c] > 0.0 && per_node[c] == f64::NEG_INFINITY)
        .map(|c| q.context_of(c));
    let terms: Vec<f64> = (0..q.len())
        .filter(|&c| w[c] > 0.0)
        .map(|c| w[c] * per_node[c])
        .collect();
    Ok(GameTrace {
        value: stable_sum(&terms),
        per_node_values: per_node,
        strategy: q.clone(),
        adversary: ToyMeasure {
            d: q.d,
            horizon: q.horizon,
            nodes: adv_nodes,
        },
        neg_inf_context,
    })
}

/// Result of [`dp_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct DpResult {
    /// Best value found by backward induction over grid strategies.
    pub value: f64,
    pub strategy: ToyMeasure,
    /// Continuation value at every node.
    pub node_values: Vec<f64>,
    /// Bound on how far the true optimum can exceed `value`.
    pub slack: f64,
    pub grid_step: f64,
}

/// Default grid step for the dynamic-programming oracle.
pub fn default_grid_step(d: usize) -> f64 {
    if d <= 2 {
        0.02
    } else {
        0.05
    }
}

/// Backward induction over simplex-grid strategies. Each node maximizes the
/// closed-form inner minimum plus the children's continuation values; the
/// node's own one-step optimum (exact when it exists, and the first-order
/// rule) is added to the candidates so the result never falls below the
/// locally optimal mechanism.
pub fn dp_oracle(phat: &ToyMeasure, eps: f64, obj: &Objective, grid_step: Option<f64>) -> Result<DpResult> {
    let d = phat.d;
    if d > MAX_GRID_DIM || phat.horizon > MAX_DP_HORIZON {
        return Err(GameError::TooLarge(format!(
            "dynamic programming needs d <= {MAX_GRID_DIM} and T <= {MAX_DP_HORIZON}, got d = {d}, T = {}",
            phat.horizon
        )));
    }
    let step = grid_step.unwrap_or_else(|| default_grid_step(d));
    let grid = GridSpec::new(step, d)?;
    let mut grid_points = Vec::with_capacity(grid.len());
    grid.for_each(|q| grid_points.push(q.to_vec()));

    let n = phat.len();
    let mut value = vec![0.0; n];
    let mut slack = vec![0.0; n];
    let mut strategy = vec![Vec::new(); n];
    for c in (0..n).rev() {
        let pv = node_prob_vector(phat, c)?;
        let case = classify_assumption(obj, &pv, eps);
        let children = phat.first_child(c);
        let cont = |q: &[f64]| -> f64 {
            match children {
                Some(first) => {
                    let terms: Vec<f64> = (0..d)
                        .filter(|&i| q[i] > 0.0)
                        .map(|i| q[i] * value[first + i])
                        .collect();
                    stable_sum(&terms)
                }
                None => 0.0,
            }
        };
        let mut candidates: Vec<Vec<f64>> = Vec::new();
        if let Ok(sol) = optimal_q(&pv, eps, obj) {
            candidates.push(pv.scatter(&sol.q));
        }
        if let Ok(sol) = relaxed_q(&pv, eps, obj, PowerThreshold::Consistent) {
            candidates.push(pv.scatter(&sol.q));
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for q in grid_points.iter().chain(candidates.iter()) {
            let (aligned, dropped) = pv.gather(q)?;
            let one_step = if dropped > 0.0 {
                if obj.diverges_at_zero() {
                    f64::NEG_INFINITY
                } else {
                    node_term(q, &phat.nodes[c], obj)
                }
            } else {
                inner_min(&aligned, &pv, eps, obj, &case)?.value
            };
            let total = one_step + cont(q);
            if best.as_ref().map_or(true, |b| total > b.0) {
                best = Some((total, q.clone()));
            }
        }
        let (v, q) = best.expect("grid is never empty");
        value[c] = v;
        strategy[c] = q;

        // Moving q by l1 distance d·step changes the one-step value by at
        // most that times the largest |f| at the transfer vertices, and the
        // continuation by that times the largest |child value|.
        let lip_inner = pv
            .probs()
            .iter()
            .flat_map(|&x| [x - eps, x, x + eps])
            .filter(|&y| y > 0.0)
            .map(|y| obj.value(y.min(1.0)).abs())
            .fold(0.0, f64::max);
        let (lip_cont, child_slack) = match children {
            Some(first) => (
                (0..d).map(|i| value[first + i].abs()).fold(0.0, f64::max),
                (0..d).map(|i| slack[first + i]).fold(0.0, f64::max),
            ),
            None => (0.0, 0.0),
        };
        slack[c] = d as f64 * step * (lip_inner + lip_cont) + child_slack;
    }
    Ok(DpResult {
        value: value[0],
        strategy: ToyMeasure::from_nodes(d, phat.horizon, strategy)?,
        node_values: value,
        slack: slack[0],
        grid_step: step,
    })
}

/// Worst adversarial values found by [`foresight_harness`], one per
/// mechanism, plus how many measures were tried.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForesightReport {
    pub samples: usize,
    pub local_min: f64,
    pub nucleus_min: f64,
    pub greedy_min: f64,
    pub local_wins: usize,
}

fn per_node_sampler(phat: &ToyMeasure, cfg: &SamplerConfig) -> Result<ToyMeasure> {
    let nodes = (0..phat.len())
        .map(|c| {
            let pv = node_prob_vector(phat, c)?;
            let tr = truncate(cfg, &pv);
            let mut q = vec![0.0; phat.d];
            for (&id, &m) in tr.support_vocab_ids.iter().zip(&tr.masses) {
                q[id] = m;
            }
            Ok(q)
        })
        .collect::<Result<Vec<_>>>()?;
    ToyMeasure::from_nodes(phat.d, phat.horizon, nodes)
}

/// Copies the subtree under the root's worst child (by local-mechanism
/// value) over all its siblings. This loosely follows the idea of shifting
/// future structure towards the hardest continuation; it is a search
/// heuristic, not a construction with guarantees.
fn reroot_worst_child(phat: &ToyMeasure, trace: &GameTrace) -> Option<ToyMeasure> {
    let first = phat.first_child(0)?;
    let d = phat.d;
    let worst = (0..d)
        .min_by(|&a, &b| trace.per_node_values[first + a].total_cmp(&trace.per_node_values[first + b]))?;
    let mut nodes = phat.nodes.clone();
    // Pairs (source, target) are copied level by level down the subtree.
    let mut frontier: Vec<(usize, usize)> = (0..d).map(|i| (first + worst, first + i)).collect();
    while let Some((src, dst)) = frontier.pop() {
        nodes[dst] = phat.nodes[src].clone();
        if let (Some(sc), Some(tc)) = (phat.first_child(src), phat.first_child(dst)) {
            frontier.extend((0..d).map(|i| (sc + i, tc + i)));
        }
    }
    ToyMeasure::from_nodes(d, phat.horizon, nodes).ok()
}

/// Samples random measures, adds a re-rooted variant of each, and records
/// the worst adversarial value of the local mechanism and of per-node
/// nucleus and greedy decoding. Findings only: nothing here is asserted.
pub fn foresight_harness(
    d: usize,
    horizon: usize,
    eps: f64,
    nucleus_p: f64,
    samples: usize,
    seed: u64,
) -> Result<ForesightReport> {
    let log = Objective::log();
    let nucleus = SamplerConfig::nucleus(nucleus_p)?;
    let greedy = SamplerConfig::greedy();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ForesightReport {
        samples: 0,
        local_min: f64::INFINITY,
        nucleus_min: f64::INFINITY,
        greedy_min: f64::INFINITY,
        local_wins: 0,
    };
    for _ in 0..samples {
        let base = ToyMeasure::random(d, horizon, &mut rng)?;
        let mut instances = vec![base.clone()];
        let local = local_mechanism(&base, eps, &log, SolveMode::Relaxed)?;
        let trace = adversary_best_response(&local, &base, eps, &log)?;
        if let Some(r) = reroot_worst_child(&base, &trace) {
            instances.push(r);
        }
        for phat in instances {
            let local = local_mechanism(&phat, eps, &log, SolveMode::Relaxed)?;
            let lv = adversary_best_response(&local, &phat, eps, &log)?.value;
            let nv = adversary_best_response(&per_node_sampler(&phat, &nucleus)?, &phat, eps, &log)?.value;
            let gv = adversary_best_response(&per_node_sampler(&phat, &greedy)?, &phat, eps, &log)?.value;
            report.samples += 1;
            report.local_min = report.local_min.min(lv);
            report.nucleus_min = report.nucleus_min.min(nv);
            report.greedy_min = report.greedy_min.min(gv);
            if lv >= nv.max(gv) {
                report.local_wins += 1;
            }
        }
    }
    Ok(report)
}
