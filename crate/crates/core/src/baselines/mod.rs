//! Post-processing comparison methods.

mod assignment;
mod constrained;
mod fastar;

pub use assignment::hungarian_assign;
pub use constrained::{
    constrained_rerank, constrained_rerank_with_gains, score_gains, ConstrainedOutcome,
    ConstraintConfig, LambdaIterate, BISECTION_STEPS, DEFAULT_DEPTH, FEASIBILITY_TOLERANCE,
};
pub use fastar::{compute_m_table, fastar_rerank, MTable, DEFAULT_SIGNIFICANCE};

use crate::candidates::{rank_by_values, QueryCandidates, Ranking};

/// Orders documents by their mean score.
pub fn unfair_rank(candidates: &QueryCandidates) -> Ranking {
    let mus: Vec<f64> = candidates.candidates().iter().map(|c| c.mu).collect();
    rank_by_values(candidates, &mus)
}
