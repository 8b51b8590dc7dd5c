//! Post hoc fair re-ranking driven by the predictive uncertainty of ranking scores.
//!
//! The crate is organised around a handful of per-query operations:
//!
//! * [`candidates`]: shared value types, group assignment and the canonical sort.
//! * [`uncertainty`]: last-layer Laplace approximation with a diagonal Fisher and
//!   Monte Carlo predictive moments.
//! * [`rerank`]: the uncertainty-bounded score adjustment with intra-group clamping,
//!   and its constant-shift ablation.
//! * [`baselines`]: UNFAIR, FA*IR prefix constraints and a constrained utility
//!   maximiser solved by Lagrangian relaxation over exact assignments.
//! * [`metrics`]: nDCG, FaiRR / nFaiRR, paired t-tests and interval-overlap counts.
//! * [`io`], [`synth`], [`sweep`]: file formats, synthetic fixtures and the
//!   alpha-sweep experiment driver used by the `pufr` binary.

pub mod baselines;
pub mod candidates;
pub mod error;
pub mod io;
pub mod metrics;
pub mod rerank;
pub mod sweep;
pub mod synth;
pub mod uncertainty;

pub use candidates::{
    assign_groups, rank_by_score, GroupLabel, NeutralityScore, QueryCandidates, RankedDoc, Ranking,
    ScoredCandidate, DEFAULT_PROTECTED_THRESHOLD,
};
pub use error::{Error, Result};
