//! Utility maximisation under a FaiRR floor, over a top-`depth` window.
//!
//! Both DCG and FaiRR are sums of per-(document, position) terms, so relaxing the
//! fairness constraint with a multiplier `lambda >= 0` leaves a linear assignment
//! problem with benefit `gain/log2(pos+1) + lambda * neutrality/pos`. The multiplier
//! is bisected on `[0, lambda_max]`; the best feasible assignment seen is kept. When
//! the Lagrangian dual bound does not certify that assignment, a depth-first branch
//! and bound with the same relaxation as its bound closes the remaining gap (within a
//! node budget, which small windows never reach).

use std::collections::HashMap;

use crate::candidates::{QueryCandidates, Ranking};
use crate::error::{Error, Result};
use crate::metrics::ideal_fairr_at_k;

use super::assignment::solve_min;

pub const DEFAULT_DEPTH: usize = 50;
pub const BISECTION_STEPS: usize = 64;
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;
const LAMBDA_MAX_FACTOR: f64 = 1e6;
const NODE_BUDGET: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintConfig {
    alpha_fairness: f64,
    depth: usize,
}

impl ConstraintConfig {
    pub fn new(alpha_fairness: f64, depth: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha_fairness) {
            return Err(Error::invalid(format!(
                "nFaiRR floor must lie in [0, 1], got {alpha_fairness}"
            )));
        }
        if depth == 0 {
            return Err(Error::invalid("re-rank depth must be >= 1"));
        }
        Ok(ConstraintConfig {
            alpha_fairness,
            depth,
        })
    }

    pub fn alpha_fairness(&self) -> f64 {
        self.alpha_fairness
    }

    pub fn depth(&self) -> usize {
        self.depth
    }
}

/// One solved Lagrangian subproblem on the bisection path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaIterate {
    pub lambda: f64,
    pub utility: f64,
    pub fairr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedOutcome {
    pub ranking: Ranking,
    /// Whether the window order meets the FaiRR floor.
    pub feasible: bool,
    /// Whether the returned order is certified optimal among feasible orders.
    pub proven_optimal: bool,
    /// Multiplier of the returned subproblem solution (0 when unconstrained).
    pub lambda: f64,
    /// Windowed DCG under the gains used.
    pub utility: f64,
    /// Windowed FaiRR@depth.
    pub fairr: f64,
    /// Required FaiRR@depth.
    pub target: f64,
    /// Subproblems solved, in solve order.
    pub trace: Vec<LambdaIterate>,
}

/// Mean scores of the top-`depth` documents shifted so the window minimum is 0.
pub fn score_gains(candidates: &QueryCandidates, depth: usize) -> HashMap<String, f64> {
    let order = candidates.original_order();
    let window = &order[..depth.min(order.len())];
    let cands = candidates.candidates();
    let min = window
        .iter()
        .map(|&i| cands[i].mu)
        .fold(f64::INFINITY, f64::min);
    window
        .iter()
        .map(|&i| (cands[i].doc_id.clone(), cands[i].mu - min))
        .collect()
}

/// [`constrained_rerank_with_gains`] using [`score_gains`] as the utility proxy.
pub fn constrained_rerank(
    candidates: &QueryCandidates,
    cfg: &ConstraintConfig,
) -> Result<ConstrainedOutcome> {
    let gains = score_gains(candidates, cfg.depth);
    constrained_rerank_with_gains(candidates, cfg, &gains)
}

pub fn constrained_rerank_with_gains(
    candidates: &QueryCandidates,
    cfg: &ConstraintConfig,
    gains: &HashMap<String, f64>,
) -> Result<ConstrainedOutcome> {
    let order = candidates.original_order();
    let depth = cfg.depth.min(order.len());
    let (window, tail) = order.split_at(depth);
    let cands = candidates.candidates();

    let mut gain = Vec::with_capacity(depth);
    let mut neutrality = Vec::with_capacity(depth);
    for &i in window {
        let g = gains
            .get(&cands[i].doc_id)
            .copied()
            .ok_or_else(|| Error::MissingScore {
                query_id: candidates.query_id().to_string(),
                doc_id: cands[i].doc_id.clone(),
            })?;
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::invalid(format!(
                "gain of {} must be finite and >= 0, got {g}",
                cands[i].doc_id
            )));
        }
        gain.push(g);
        neutrality.push(candidates.neutrality_at(i)?);
    }

    // the floor is relative to the best FaiRR@depth over the whole pool, so a window
    // short on neutral documents can be infeasible
    let pool: Vec<f64> = (0..cands.len())
        .map(|i| candidates.neutrality_at(i))
        .collect::<Result<_>>()?;
    let target = cfg.alpha_fairness * ideal_fairr_at_k(&pool, depth);
    let problem = Window::new(gain, neutrality, target);
    let solution = problem.solve();

    let ids = solution
        .order
        .iter()
        .map(|&w| window[w])
        .chain(tail.iter().copied())
        .map(|i| cands[i].doc_id.clone());
    Ok(ConstrainedOutcome {
        ranking: Ranking::from_order(candidates.query_id(), ids),
        feasible: solution.feasible,
        proven_optimal: solution.proven_optimal,
        lambda: solution.lambda,
        utility: problem.utility(&solution.order),
        fairr: problem.fairr(&solution.order),
        target: problem.target,
        trace: solution.trace,
    })
}

struct Window {
    gain: Vec<f64>,
    neutrality: Vec<f64>,
    /// `1 / log2(pos + 1)` for 1-based positions.
    utility_discount: Vec<f64>,
    /// `1 / pos`.
    fairness_discount: Vec<f64>,
    target: f64,
}

struct Solution {
    /// `order[pos]` = window index placed at `pos`.
    order: Vec<usize>,
    feasible: bool,
    proven_optimal: bool,
    lambda: f64,
    trace: Vec<LambdaIterate>,
}

impl Window {
    fn new(gain: Vec<f64>, neutrality: Vec<f64>, target: f64) -> Self {
        let n = gain.len();
        Window {
            gain,
            neutrality,
            utility_discount: (1..=n).map(|p| 1.0 / ((p + 1) as f64).log2()).collect(),
            fairness_discount: (1..=n).map(|p| 1.0 / p as f64).collect(),
            target,
        }
    }

    fn len(&self) -> usize {
        self.gain.len()
    }

    fn utility(&self, order: &[usize]) -> f64 {
        order
            .iter()
            .zip(&self.utility_discount)
            .map(|(&d, w)| self.gain[d] * w)
            .sum()
    }

    fn fairr(&self, order: &[usize]) -> f64 {
        order
            .iter()
            .zip(&self.fairness_discount)
            .map(|(&d, w)| self.neutrality[d] * w)
            .sum()
    }

    fn is_feasible(&self, order: &[usize]) -> bool {
        self.fairr(order) >= self.target - FEASIBILITY_TOLERANCE
    }

    fn benefit(&self, doc: usize, pos: usize, lambda: f64) -> f64 {
        self.gain[doc] * self.utility_discount[pos]
            + lambda * self.neutrality[doc] * self.fairness_discount[pos]
    }

    /// Exact solution of the Lagrangian subproblem at `lambda`.
    fn assign(&self, lambda: f64) -> Vec<usize> {
        let n = self.len();
        if lambda == 0.0 {
            // sorting by gain is optimal and keeps ties in original order
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| self.gain[b].total_cmp(&self.gain[a]).then(a.cmp(&b)));
            return order;
        }
        let doc_to_pos = solve_min(n, |d, p| -self.benefit(d, p, lambda));
        let mut order = vec![0; n];
        for (d, p) in doc_to_pos.into_iter().enumerate() {
            order[p] = d;
        }
        order
    }

    fn iterate(&self, lambda: f64, trace: &mut Vec<LambdaIterate>) -> Vec<usize> {
        let order = self.assign(lambda);
        trace.push(LambdaIterate {
            lambda,
            utility: self.utility(&order),
            fairr: self.fairr(&order),
        });
        order
    }

    /// `max_order [U + lambda (F - target)]`, an upper bound on the constrained optimum.
    fn dual_value(&self, it: &LambdaIterate) -> f64 {
        it.utility + it.lambda * (it.fairr - self.target)
    }

    fn solve(&self) -> Solution {
        let mut trace = Vec::new();
        let unconstrained = self.iterate(0.0, &mut trace);
        if self.is_feasible(&unconstrained) {
            return Solution {
                order: unconstrained,
                feasible: true,
                proven_optimal: true,
                lambda: 0.0,
                trace,
            };
        }

        let max_gain = self.gain.iter().copied().fold(0.0, f64::max);
        let lambda_max = LAMBDA_MAX_FACTOR * if max_gain > 0.0 { max_gain } else { 1.0 };
        let fairest = self.iterate(lambda_max, &mut trace);
        if !self.is_feasible(&fairest) {
            return Solution {
                order: fairest,
                feasible: false,
                proven_optimal: false,
                lambda: lambda_max,
                trace,
            };
        }

        let (mut lo, mut hi) = (0.0, lambda_max);
        let mut best = (self.utility(&fairest), fairest, lambda_max);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let order = self.iterate(mid, &mut trace);
            if self.is_feasible(&order) {
                hi = mid;
                let u = self.utility(&order);
                if u > best.0 {
                    best = (u, order, mid);
                }
            } else {
                lo = mid;
            }
        }

        let (bound, bound_lambda) = trace
            .iter()
            .map(|it| (self.dual_value(it), it.lambda))
            .fold(
                (f64::INFINITY, hi),
                |acc, x| if x.0 < acc.0 { x } else { acc },
            );
        let (mut best_utility, mut best_order, lambda) = best;
        let mut proven_optimal = best_utility >= bound - FEASIBILITY_TOLERANCE;
        if !proven_optimal {
            let mut search = BranchAndBound::new(self, bound_lambda, best_utility);
            proven_optimal = search.run();
            if let Some(order) = search.incumbent {
                best_utility = search.incumbent_utility;
                best_order = order;
            }
        }
        debug_assert!(best_utility.is_finite());
        Solution {
            order: best_order,
            feasible: true,
            proven_optimal,
            lambda,
            trace,
        }
    }
}

/// Depth-first search over position-by-position placements, bounded by the Lagrangian
/// relaxation of the remaining subproblem at a fixed multiplier.
struct BranchAndBound<'a> {
    window: &'a Window,
    lambda: f64,
    incumbent: Option<Vec<usize>>,
    incumbent_utility: f64,
    nodes: usize,
    exhausted: bool,
}

impl<'a> BranchAndBound<'a> {
    fn new(window: &'a Window, lambda: f64, incumbent_utility: f64) -> Self {
        BranchAndBound {
            window,
            lambda,
            incumbent: None,
            incumbent_utility,
            nodes: 0,
            exhausted: false,
        }
    }

    /// Returns whether the search completed (so the incumbent is optimal).
    fn run(&mut self) -> bool {
        let n = self.window.len();
        let mut prefix = Vec::with_capacity(n);
        let mut used = vec![false; n];
        self.visit(&mut prefix, &mut used, 0.0, 0.0);
        !self.exhausted
    }

    fn visit(&mut self, prefix: &mut Vec<usize>, used: &mut [bool], utility: f64, fairr: f64) {
        let w = self.window;
        let n = w.len();
        let pos = prefix.len();
        if pos == n {
            if fairr >= w.target - FEASIBILITY_TOLERANCE && utility > self.incumbent_utility {
                self.incumbent_utility = utility;
                self.incumbent = Some(prefix.clone());
            }
            return;
        }
        if self.nodes >= NODE_BUDGET {
            self.exhausted = true;
            return;
        }
        self.nodes += 1;

        let remaining: Vec<usize> = (0..n).filter(|&d| !used[d]).collect();

        // fairness reachable by placing the remaining docs in neutrality order
        let mut neut: Vec<f64> = remaining.iter().map(|&d| w.neutrality[d]).collect();
        neut.sort_unstable_by(|a, b| b.total_cmp(a));
        let best_fairr = fairr
            + neut
                .iter()
                .zip(&w.fairness_discount[pos..])
                .map(|(x, d)| x * d)
                .sum::<f64>();
        if best_fairr < w.target - FEASIBILITY_TOLERANCE {
            return;
        }

        let m = remaining.len();
        let doc_to_slot = solve_min(m, |i, j| -w.benefit(remaining[i], pos + j, self.lambda));
        let relaxed: f64 = doc_to_slot
            .iter()
            .enumerate()
            .map(|(i, &j)| w.benefit(remaining[i], pos + j, self.lambda))
            .sum();
        let bound = utility
            + self.lambda * (fairr - w.target)
            + relaxed
            + self.lambda * FEASIBILITY_TOLERANCE;
        if bound <= self.incumbent_utility + 1e-12 * (1.0 + self.incumbent_utility.abs()) {
            return;
        }

        // most promising child first: whatever the relaxation puts at this position
        let mut children = remaining.clone();
        let first = doc_to_slot
            .iter()
            .position(|&j| j == 0)
            .map(|i| remaining[i]);
        children.sort_by(|&a, &b| {
            let ka = (Some(a) != first, -w.benefit(a, pos, self.lambda));
            let kb = (Some(b) != first, -w.benefit(b, pos, self.lambda));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
        });
        for d in children {
            used[d] = true;
            prefix.push(d);
            self.visit(
                prefix,
                used,
                utility + w.gain[d] * w.utility_discount[pos],
                fairr + w.neutrality[d] * w.fairness_discount[pos],
            );
            prefix.pop();
            used[d] = false;
            if self.exhausted {
                return;
            }
        }
    }
}
