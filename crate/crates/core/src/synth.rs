//! Synthetic corpora with a controllable score bias against the protected group.
//!
//! Each document gets a latent relevance `r ~ N(0, 1)`. Its mean score is a noisy
//! copy of `r` (correlation `relevance_correlation`), non-protected documents receive
//! an extra bump of up to `bias_strength * mu_spread`, and the document is relevant
//! (grade 1) iff `r > relevance_threshold`. Sigma can be made informative about the
//! bump (`sigma_bias_coupling`) or grow with rank (`sigma_rank_slope`), and the bump can
//! be made to land on less neutral documents (`neutrality_bias_coupling`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::candidates::{
    assign_groups, NeutralityScore, QueryCandidates, ScoredCandidate, DEFAULT_PROTECTED_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::metrics::RelevanceJudgments;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_queries: usize,
    pub n_candidates: usize,
    pub mu_mean: f64,
    pub mu_spread: f64,
    /// Sigma floor shared by every document.
    pub sigma_base: f64,
    /// Scale of the half-normal noise added to sigma.
    pub sigma_spread: f64,
    /// Extra sigma per unit of bias bump.
    pub sigma_bias_coupling: f64,
    /// Extra sigma at the bottom of the list (linear in rank, 0 at the top).
    pub sigma_rank_slope: f64,
    pub protected_fraction: f64,
    pub relevance_correlation: f64,
    pub relevance_threshold: f64,
    pub bias_strength: f64,
    /// Share of non-protected documents that receive a bump at all.
    pub biased_fraction: f64,
    /// In [0, 1]: how strongly a non-protected document's bump lowers its neutrality.
    pub neutrality_bias_coupling: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_queries: 100,
            n_candidates: 50,
            mu_mean: 0.0,
            mu_spread: 1.0,
            sigma_base: 0.2,
            sigma_spread: 0.2,
            sigma_bias_coupling: 0.0,
            sigma_rank_slope: 0.0,
            protected_fraction: 0.3,
            relevance_correlation: 0.7,
            relevance_threshold: 1.0,
            bias_strength: 0.0,
            biased_fraction: 1.0,
            neutrality_bias_coupling: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_queries == 0 || self.n_candidates == 0 {
            return Err(Error::invalid(
                "synthetic corpus needs >= 1 query and >= 1 candidate",
            ));
        }
        for (name, v) in [
            ("protected_fraction", self.protected_fraction),
            ("relevance_correlation", self.relevance_correlation),
            ("neutrality_bias_coupling", self.neutrality_bias_coupling),
            ("biased_fraction", self.biased_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        for (name, v) in [
            ("mu_spread", self.mu_spread),
            ("sigma_base", self.sigma_base),
            ("sigma_spread", self.sigma_spread),
            ("sigma_bias_coupling", self.sigma_bias_coupling),
            ("sigma_rank_slope", self.sigma_rank_slope),
            ("bias_strength", self.bias_strength),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !self.mu_mean.is_finite() || !self.relevance_threshold.is_finite() {
            return Err(Error::invalid(
                "mu_mean and relevance_threshold must be finite",
            ));
        }
        Ok(())
    }
}

/// Generates a corpus with mu, sigma, neutrality and groups (threshold 1.0) filled in,
/// plus binary relevance labels (only relevant pairs are listed).
pub fn generate_synthetic(
    cfg: &SyntheticConfig,
) -> Result<(Vec<QueryCandidates>, RelevanceJudgments)> {
    cfg.validate()?;
    let width = cfg.n_queries.to_string().len();
    let queries = (0..cfg.n_queries)
        .into_par_iter()
        .map(|q| generate_query(cfg, q, width))
        .collect::<Result<Vec<_>>>()?;

    let mut judgments = RelevanceJudgments::new();
    let mut corpus = Vec::with_capacity(queries.len());
    for (query, relevant) in queries {
        for doc in relevant {
            judgments.insert(query.query_id(), &doc, 1)?;
        }
        corpus.push(query);
    }
    Ok((corpus, judgments))
}

fn generate_query(
    cfg: &SyntheticConfig,
    q: usize,
    width: usize,
) -> Result<(QueryCandidates, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(q as u64);
    let rho = cfg.relevance_correlation;
    let noise_weight = (1.0 - rho * rho).sqrt();
    let query_id = format!("q{q:0width$}");

    let mut relevant = Vec::new();
    let mut candidates = Vec::with_capacity(cfg.n_candidates);
    for i in 0..cfg.n_candidates {
        let latent: f64 = rng.sample(StandardNormal);
        let noise: f64 = rng.sample(StandardNormal);
        let sigma_noise: f64 = rng.sample(StandardNormal);
        let protected = rng.random::<f64>() < cfg.protected_fraction;
        let share: f64 = rng.random();
        let biased = rng.random::<f64>() < cfg.biased_fraction;
        let bump_share = if protected || !biased { 0.0 } else { share };
        let bump = cfg.bias_strength * cfg.mu_spread * bump_share;
        let neutrality = if protected {
            1.0
        } else {
            rng.random::<f64>() * (1.0 - cfg.neutrality_bias_coupling * bump_share)
        };

        let mu = cfg.mu_mean + cfg.mu_spread * (rho * latent + noise_weight * noise) + bump;
        let sigma =
            cfg.sigma_base + cfg.sigma_spread * sigma_noise.abs() + cfg.sigma_bias_coupling * bump;
        let doc_id = format!("{query_id}d{i}");
        if latent > cfg.relevance_threshold {
            relevant.push(doc_id.clone());
        }
        candidates.push(
            ScoredCandidate::new(doc_id, mu)
                .with_sigma(sigma)
                .with_neutrality(NeutralityScore::new(neutrality)?),
        );
    }

    let query = QueryCandidates::from_candidates(query_id, candidates)?;
    let n = query.len();
    let query = if cfg.sigma_rank_slope > 0.0 && n > 1 {
        query.try_map(|_, mut c| {
            let depth = (c.original_rank - 1) as f64 / (n - 1) as f64;
            c.sigma = c.sigma.map(|s| s + cfg.sigma_rank_slope * depth);
            Ok(c)
        })?
    } else {
        query
    };
    Ok((assign_groups(query, DEFAULT_PROTECTED_THRESHOLD)?, relevant))
}
