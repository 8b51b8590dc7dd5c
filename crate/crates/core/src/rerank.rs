//! Uncertainty-bounded score adjustment.
//!
//! Protected documents are pushed up and non-protected documents pushed down by
//! `alpha * sigma`, each within its own confidence interval. Adjusted scores are
//! clamped so that no document overtakes a same-group document that originally
//! ranked above it:
//!
//! * protected, visited by decreasing `mu`: capped by the minimum adjusted score of
//!   every higher-ranked protected document;
//! * non-protected, visited by increasing `mu`: floored by the maximum adjusted score
//!   of every lower-ranked non-protected document.
//!
//! The final order comes from [`rank_by_score`](crate::rank_by_score)'s rule, so the
//! exact ties that clamping creates resolve to the original order.

use std::collections::HashMap;

use crate::candidates::{rank_by_values, GroupLabel, QueryCandidates, Ranking};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PufrConfig {
    alpha_protected: f64,
    alpha_nonprotected: f64,
}

impl PufrConfig {
    /// Same `alpha` for both groups.
    pub fn new(alpha: f64) -> Result<Self> {
        Self::per_group(alpha, alpha)
    }

    pub fn per_group(alpha_protected: f64, alpha_nonprotected: f64) -> Result<Self> {
        for (name, a) in [
            ("alpha_protected", alpha_protected),
            ("alpha_nonprotected", alpha_nonprotected),
        ] {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {a}"
                )));
            }
        }
        Ok(PufrConfig {
            alpha_protected,
            alpha_nonprotected,
        })
    }

    pub fn alpha_protected(&self) -> f64 {
        self.alpha_protected
    }

    pub fn alpha_nonprotected(&self) -> f64 {
        self.alpha_nonprotected
    }
}

/// Adjusted scores, aligned with the candidates of the query they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedScores {
    doc_ids: Vec<String>,
    scores: Vec<f64>,
}

impl AdjustedScores {
    pub fn get(&self, doc_id: &str) -> Option<f64> {
        self.doc_ids
            .iter()
            .position(|d| d == doc_id)
            .map(|i| self.scores[i])
    }

    /// Scores in candidate order.
    pub fn values(&self) -> &[f64] {
        &self.scores
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.doc_ids
            .iter()
            .map(String::as_str)
            .zip(self.scores.iter().copied())
    }

    pub fn to_map(&self) -> HashMap<String, f64> {
        self.doc_ids
            .iter()
            .cloned()
            .zip(self.scores.iter().copied())
            .collect()
    }
}

pub fn adjust_scores(candidates: &QueryCandidates, cfg: &PufrConfig) -> Result<AdjustedScores> {
    let sigmas = candidates.sigmas()?;
    adjust_with_sigmas(candidates, &sigmas, cfg)
}

fn adjust_with_sigmas(
    candidates: &QueryCandidates,
    sigmas: &[f64],
    cfg: &PufrConfig,
) -> Result<AdjustedScores> {
    let groups = candidates.groups()?;
    let cands = candidates.candidates();
    let order = candidates.original_order();
    let mut scores: Vec<f64> = cands.iter().map(|c| c.mu).collect();

    if cfg.alpha_protected > 0.0 {
        let mut cap = f64::INFINITY;
        for &i in order
            .iter()
            .filter(|&&i| groups[i] == GroupLabel::Protected)
        {
            let raw = cands[i].mu + cfg.alpha_protected * sigmas[i];
            cap = cap.min(raw);
            scores[i] = cap;
        }
    }
    if cfg.alpha_nonprotected > 0.0 {
        let mut floor = f64::NEG_INFINITY;
        for &i in order
            .iter()
            .rev()
            .filter(|&&i| groups[i] == GroupLabel::NonProtected)
        {
            let raw = cands[i].mu - cfg.alpha_nonprotected * sigmas[i];
            floor = floor.max(raw);
            scores[i] = floor;
        }
    }

    Ok(AdjustedScores {
        doc_ids: cands.iter().map(|c| c.doc_id.clone()).collect(),
        scores,
    })
}

/// Re-ranks one query by its uncertainty-adjusted scores.
pub fn pufr_rerank(candidates: &QueryCandidates, cfg: &PufrConfig) -> Result<Ranking> {
    let adjusted = adjust_scores(candidates, cfg)?;
    Ok(rank_by_values(candidates, adjusted.values()))
}

/// Mean sigma over every (query, candidate) pair of the corpus.
pub fn compute_sigma_mean(corpus: &[QueryCandidates]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for q in corpus {
        for s in q.sigmas()? {
            sum += s;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid(
            "cannot compute sigma mean of an empty corpus",
        ));
    }
    Ok(sum / count as f64)
}

/// Ablation: the same adjustment and clamping, with every sigma replaced by `sigma_mean`.
pub fn uniform_rerank(
    candidates: &QueryCandidates,
    sigma_mean: f64,
    cfg: &PufrConfig,
) -> Result<Ranking> {
    if !(sigma_mean.is_finite() && sigma_mean >= 0.0) {
        return Err(Error::invalid(format!(
            "sigma_mean must be >= 0, got {sigma_mean}"
        )));
    }
    let sigmas = vec![sigma_mean; candidates.len()];
    let adjusted = adjust_with_sigmas(candidates, &sigmas, cfg)?;
    Ok(rank_by_values(candidates, adjusted.values()))
}
