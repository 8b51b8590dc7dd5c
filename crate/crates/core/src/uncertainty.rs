//! Last-layer Laplace approximation for a linear scoring head.
//!
//! The posterior over the final layer weights is `N(theta_map, diag(F)^-1)`, where
//! `F` is the empirical diagonal Fisher estimated once from calibration gradients.
//! Predictive moments of a candidate's score come from Monte Carlo samples of the
//! last layer; [`analytic_predictive`] gives the exact linear-Gaussian answer and is
//! used to validate the sampling path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::candidates::{QueryCandidates, ScoredCandidate};
use crate::error::{Error, Result};

pub const DEFAULT_DAMPING: f64 = 1e-3;
pub const DEFAULT_MC_SAMPLES: usize = 1000;

/// Penultimate representation of one query-document pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {v}")));
        }
        Ok(FeatureVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Empirical Fisher diagonal plus a damping (prior precision) term.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalFisher {
    raw: Vec<f64>,
    damping: f64,
    damped: Vec<f64>,
}

impl DiagonalFisher {
    /// `raw` is the undamped diagonal; every `raw[j] + damping` must be positive.
    pub fn new(raw: Vec<f64>, damping: f64) -> Result<Self> {
        if !(damping.is_finite() && damping >= 0.0) {
            return Err(Error::invalid(format!(
                "damping must be >= 0, got {damping}"
            )));
        }
        let damped: Vec<f64> = raw.iter().map(|r| r + damping).collect();
        for (j, (&r, &f)) in raw.iter().zip(&damped).enumerate() {
            if r.is_nan() || r < 0.0 {
                return Err(Error::invalid(format!(
                    "fisher entry {j} must be >= 0, got {r}"
                )));
            }
            if f.is_nan() || f <= 0.0 {
                return Err(Error::invalid(format!(
                    "fisher entry {j} is {f} after damping; increase damping"
                )));
            }
        }
        Ok(DiagonalFisher {
            raw,
            damping,
            damped,
        })
    }

    /// Damped diagonal (the posterior precision).
    pub fn values(&self) -> &[f64] {
        &self.damped
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }
}

/// Mean of squared per-example gradients, plus `damping`.
///
/// Fails on an empty collection, inconsistent dimensions, or a zero entry left after
/// damping.
pub fn estimate_diagonal_fisher(
    per_example_gradients: &[Vec<f64>],
    damping: f64,
) -> Result<DiagonalFisher> {
    let first = per_example_gradients
        .first()
        .ok_or_else(|| Error::invalid("no gradients supplied for the Fisher estimate"))?;
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    for g in per_example_gradients {
        if g.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: g.len(),
            });
        }
        for (a, x) in acc.iter_mut().zip(g) {
            *a += x * x;
        }
    }
    let n = per_example_gradients.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    DiagonalFisher::new(acc, damping)
}

/// Gradient of the unit-variance Gaussian negative log likelihood of a linear score,
/// `(theta . h - target) * h`.
pub fn gaussian_nll_gradient(
    theta: &[f64],
    feature: &FeatureVector,
    target: f64,
) -> Result<Vec<f64>> {
    check_dim(theta.len(), feature.dim())?;
    let residual = dot(theta, feature.values()) - target;
    Ok(feature.values().iter().map(|h| residual * h).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LastLayerPosterior {
    theta_map: Vec<f64>,
    fisher: DiagonalFisher,
}

impl LastLayerPosterior {
    pub fn new(theta_map: Vec<f64>, fisher: DiagonalFisher) -> Result<Self> {
        check_dim(theta_map.len(), fisher.values().len())?;
        if let Some(v) = theta_map.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("theta_map entry {v}")));
        }
        Ok(LastLayerPosterior { theta_map, fisher })
    }

    pub fn from_gradients(
        theta_map: Vec<f64>,
        per_example_gradients: &[Vec<f64>],
        damping: f64,
    ) -> Result<Self> {
        let fisher = estimate_diagonal_fisher(per_example_gradients, damping)?;
        Self::new(theta_map, fisher)
    }

    pub fn theta_map(&self) -> &[f64] {
        &self.theta_map
    }

    pub fn fisher(&self) -> &DiagonalFisher {
        &self.fisher
    }

    /// Damped Fisher diagonal.
    pub fn fisher_diag(&self) -> &[f64] {
        self.fisher.values()
    }

    pub fn damping(&self) -> f64 {
        self.fisher.damping()
    }

    pub fn dim(&self) -> usize {
        self.theta_map.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    n_samples: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64) -> Result<Self> {
        if n_samples < 2 {
            return Err(Error::invalid(format!(
                "Monte Carlo sample size must be >= 2, got {n_samples}"
            )));
        }
        Ok(McConfig { n_samples, seed })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_samples: DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

/// Draws `n_samples` last-layer weight vectors from the diagonal Gaussian posterior.
pub fn sample_last_layers(posterior: &LastLayerPosterior, cfg: &McConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scales: Vec<f64> = posterior
        .fisher_diag()
        .iter()
        .map(|f| 1.0 / f.sqrt())
        .collect();
    (0..cfg.n_samples)
        .map(|_| {
            posterior
                .theta_map
                .iter()
                .zip(&scales)
                .map(|(m, s)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + s * z
                })
                .collect()
        })
        .collect()
}

/// Mean and (population) standard deviation of the sampled scores `theta_t . h`.
pub fn predictive_moments(
    samples: &[Vec<f64>],
    feature: &FeatureVector,
) -> Result<PredictiveDistribution> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    let scores = samples
        .iter()
        .map(|theta| {
            check_dim(theta.len(), feature.dim())?;
            Ok(dot(theta, feature.values()))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = scores.len() as f64;
    let mu = scores.iter().sum::<f64>() / n;
    // E[s^2] - E[s]^2, evaluated in centred form to avoid cancellation.
    let var = scores.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / n;
    Ok(PredictiveDistribution {
        mu,
        sigma: var.max(0.0).sqrt(),
    })
}

/// Exact predictive moments of a linear score under the diagonal Gaussian posterior.
pub fn analytic_predictive(
    posterior: &LastLayerPosterior,
    feature: &FeatureVector,
) -> Result<PredictiveDistribution> {
    check_dim(posterior.dim(), feature.dim())?;
    let h = feature.values();
    let mu = dot(&posterior.theta_map, h);
    let var: f64 = h
        .iter()
        .zip(posterior.fisher_diag())
        .map(|(x, f)| x * x / f)
        .sum();
    Ok(PredictiveDistribution {
        mu,
        sigma: var.sqrt(),
    })
}

/// Fills `(mu, sigma)` for every candidate of one query.
///
/// One set of weight samples is drawn per query, seeded with `cfg.seed ^ hash(query_id)`,
/// and shared by all of its candidates. Original ranks follow the new `mu` values.
pub fn score_query(
    posterior: &LastLayerPosterior,
    query_id: &str,
    features: &[(String, FeatureVector)],
    cfg: &McConfig,
) -> Result<QueryCandidates> {
    let query_cfg = McConfig {
        n_samples: cfg.n_samples,
        seed: cfg.seed ^ query_seed(query_id),
    };
    let samples = sample_last_layers(posterior, &query_cfg);
    let candidates = features
        .iter()
        .map(|(doc_id, h)| {
            let pd = predictive_moments(&samples, h)?;
            Ok(ScoredCandidate::new(doc_id.clone(), pd.mu).with_sigma(pd.sigma))
        })
        .collect::<Result<Vec<_>>>()?;
    QueryCandidates::from_candidates(query_id, candidates)
}

/// [`score_query`] over many queries in parallel; output order follows input order.
pub fn score_queries(
    posterior: &LastLayerPosterior,
    queries: &[(String, Vec<(String, FeatureVector)>)],
    cfg: &McConfig,
) -> Result<Vec<QueryCandidates>> {
    queries
        .par_iter()
        .map(|(qid, feats)| score_query(posterior, qid, feats, cfg))
        .collect()
}

/// FNV-1a, stable across platforms and runs.
fn query_seed(query_id: &str) -> u64 {
    query_id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
