//! Per-query value types shared by every re-ranker, plus the canonical sort.
//!
//! All re-rankers produce a [`Ranking`] through the same ordering rule: effective
//! score descending, ties broken by ascending `original_rank`. The original rank is
//! fixed once at ingestion (mean score descending, then doc id), so two methods that
//! produce equal scores always produce equal orders.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};

/// Neutrality of a document at or above which it belongs to the protected group.
pub const DEFAULT_PROTECTED_THRESHOLD: f64 = 1.0;

/// Degree in `[0, 1]` to which a document is free of the targeted bias (1 = neutral).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NeutralityScore(f64);

impl NeutralityScore {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(NeutralityScore(value))
        } else {
            Err(Error::NeutralityOutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for NeutralityScore {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        NeutralityScore::new(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupLabel {
    Protected,
    NonProtected,
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::Protected => f.write_str("protected"),
            GroupLabel::NonProtected => f.write_str("non-protected"),
        }
    }
}

/// One query-document pair.
///
/// `sigma`, `neutrality` and `group` are optional because they arrive from separate
/// files (or are computed later); operations that need them report which document
/// lacks them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub doc_id: String,
    pub mu: f64,
    pub sigma: Option<f64>,
    pub neutrality: Option<NeutralityScore>,
    pub group: Option<GroupLabel>,
    /// 1-based rank under `mu` descending.
    pub original_rank: usize,
}

impl ScoredCandidate {
    pub fn new(doc_id: impl Into<String>, mu: f64) -> Self {
        ScoredCandidate {
            doc_id: doc_id.into(),
            mu,
            sigma: None,
            neutrality: None,
            group: None,
            original_rank: 0,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_neutrality(mut self, neutrality: NeutralityScore) -> Self {
        self.neutrality = Some(neutrality);
        self
    }

    pub fn with_group(mut self, group: GroupLabel) -> Self {
        self.group = Some(group);
        self
    }
}

/// A query and its candidate set.
///
/// Invariants: at least one candidate, unique doc ids, and `original_rank` values
/// forming a permutation of `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryCandidates {
    query_id: String,
    candidates: Vec<ScoredCandidate>,
}

impl QueryCandidates {
    /// Builds a query from candidates whose `original_rank` is already set.
    pub fn new(query_id: impl Into<String>, candidates: Vec<ScoredCandidate>) -> Result<Self> {
        let query = QueryCandidates {
            query_id: query_id.into(),
            candidates,
        };
        query.validate()?;
        Ok(query)
    }

    /// Builds a query and assigns `original_rank` from `mu` (descending, doc id ascending).
    pub fn from_candidates(
        query_id: impl Into<String>,
        candidates: Vec<ScoredCandidate>,
    ) -> Result<Self> {
        let mut query = QueryCandidates {
            query_id: query_id.into(),
            candidates,
        };
        query.recompute_original_ranks();
        query.validate()?;
        Ok(query)
    }

    /// Builds a query from `(doc_id, mu)` pairs.
    pub fn from_scores<I, S>(query_id: impl Into<String>, scores: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let candidates = scores
            .into_iter()
            .map(|(doc, mu)| ScoredCandidate::new(doc, mu))
            .collect();
        Self::from_candidates(query_id, candidates)
    }

    fn validate(&self) -> Result<()> {
        let n = self.candidates.len();
        if n == 0 {
            return Err(Error::EmptyQuery(self.query_id.clone()));
        }
        let mut seen = HashSet::with_capacity(n);
        let mut ranks = vec![false; n];
        for c in &self.candidates {
            if !seen.insert(c.doc_id.as_str()) {
                return Err(Error::DuplicateDocument {
                    query_id: self.query_id.clone(),
                    doc_id: c.doc_id.clone(),
                });
            }
            if !c.mu.is_finite() {
                return Err(Error::NonFinite(format!(
                    "query {}: mu of {}",
                    self.query_id, c.doc_id
                )));
            }
            if let Some(s) = c.sigma {
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::invalid(format!(
                        "query {}: sigma of {} must be finite and >= 0, got {s}",
                        self.query_id, c.doc_id
                    )));
                }
            }
            if c.original_rank == 0 || c.original_rank > n || ranks[c.original_rank - 1] {
                return Err(Error::invalid(format!(
                    "query {}: original ranks are not a permutation of 1..={n}",
                    self.query_id
                )));
            }
            ranks[c.original_rank - 1] = true;
        }
        Ok(())
    }

    /// Reassigns `original_rank` from the current `mu` values.
    pub fn recompute_original_ranks(&mut self) {
        let mut order: Vec<usize> = (0..self.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (&self.candidates[a], &self.candidates[b]);
            cb.mu
                .total_cmp(&ca.mu)
                .then_with(|| ca.doc_id.cmp(&cb.doc_id))
        });
        for (pos, idx) in order.into_iter().enumerate() {
            self.candidates[idx].original_rank = pos + 1;
        }
    }

    /// Applies `f` to every candidate and re-validates the result.
    pub fn try_map<F>(self, mut f: F) -> Result<Self>
    where
        F: FnMut(&str, ScoredCandidate) -> Result<ScoredCandidate>,
    {
        let QueryCandidates {
            query_id,
            candidates,
        } = self;
        let candidates = candidates
            .into_iter()
            .map(|c| f(&query_id, c))
            .collect::<Result<Vec<_>>>()?;
        QueryCandidates::new(query_id, candidates)
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn candidates(&self) -> &[ScoredCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&ScoredCandidate> {
        self.candidates.iter().find(|c| c.doc_id == doc_id)
    }

    /// Candidate indices in original-rank order.
    pub fn original_order(&self) -> Vec<usize> {
        let mut order = vec![0; self.candidates.len()];
        for (idx, c) in self.candidates.iter().enumerate() {
            order[c.original_rank - 1] = idx;
        }
        order
    }

    pub(crate) fn sigma_at(&self, idx: usize) -> Result<f64> {
        let c = &self.candidates[idx];
        c.sigma.ok_or_else(|| Error::MissingSigma {
            query_id: self.query_id.clone(),
            doc_id: c.doc_id.clone(),
        })
    }

    pub(crate) fn neutrality_at(&self, idx: usize) -> Result<f64> {
        let c = &self.candidates[idx];
        c.neutrality
            .map(NeutralityScore::value)
            .ok_or_else(|| Error::MissingNeutrality {
                query_id: self.query_id.clone(),
                doc_id: c.doc_id.clone(),
            })
    }

    pub(crate) fn group_at(&self, idx: usize) -> Result<GroupLabel> {
        let c = &self.candidates[idx];
        c.group.ok_or_else(|| Error::UnassignedGroup {
            query_id: self.query_id.clone(),
            doc_id: c.doc_id.clone(),
        })
    }

    pub(crate) fn neutralities(&self) -> Result<Vec<f64>> {
        (0..self.len()).map(|i| self.neutrality_at(i)).collect()
    }

    pub(crate) fn groups(&self) -> Result<Vec<GroupLabel>> {
        (0..self.len()).map(|i| self.group_at(i)).collect()
    }

    pub(crate) fn sigmas(&self) -> Result<Vec<f64>> {
        (0..self.len()).map(|i| self.sigma_at(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
}

/// An ordered list of documents with the effective scores that produced the order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query_id: String,
    pub entries: Vec<RankedDoc>,
}

impl Ranking {
    /// Builds a ranking from an explicit order, using `n - position` as the effective
    /// score so the entries stay strictly score-sorted.
    pub fn from_order<I, S>(query_id: impl Into<String>, doc_ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let ids: Vec<String> = doc_ids.into_iter().map(Into::into).collect();
        let n = ids.len();
        let entries = ids
            .into_iter()
            .enumerate()
            .map(|(pos, doc_id)| RankedDoc {
                doc_id,
                score: (n - pos) as f64,
            })
            .collect();
        Ranking {
            query_id: query_id.into(),
            entries,
        }
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Labels each candidate Protected iff its neutrality is at least `protected_threshold`.
pub fn assign_groups(
    candidates: QueryCandidates,
    protected_threshold: f64,
) -> Result<QueryCandidates> {
    validate_threshold(protected_threshold)?;
    candidates.try_map(|query_id, mut c| {
        let n = c.neutrality.ok_or_else(|| Error::MissingNeutrality {
            query_id: query_id.to_string(),
            doc_id: c.doc_id.clone(),
        })?;
        c.group = Some(if n.value() >= protected_threshold {
            GroupLabel::Protected
        } else {
            GroupLabel::NonProtected
        });
        Ok(c)
    })
}

pub fn validate_threshold(protected_threshold: f64) -> Result<()> {
    if protected_threshold > 0.0 && protected_threshold <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "protected threshold must lie in (0, 1], got {protected_threshold}"
        )))
    }
}

/// Sorts candidates by `scores` descending, ties by ascending original rank.
pub fn rank_by_score(
    candidates: &QueryCandidates,
    scores: &HashMap<String, f64>,
) -> Result<Ranking> {
    let values = candidates
        .candidates()
        .iter()
        .map(|c| {
            scores
                .get(&c.doc_id)
                .copied()
                .ok_or_else(|| Error::MissingScore {
                    query_id: candidates.query_id().to_string(),
                    doc_id: c.doc_id.clone(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_by_values(candidates, &values))
}

/// Same rule as [`rank_by_score`], with scores aligned to `candidates.candidates()`.
pub(crate) fn rank_by_values(candidates: &QueryCandidates, values: &[f64]) -> Ranking {
    debug_assert_eq!(values.len(), candidates.len());
    let cands = candidates.candidates();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| {
        compare_scored(
            values[a],
            cands[a].original_rank,
            values[b],
            cands[b].original_rank,
        )
    });
    Ranking {
        query_id: candidates.query_id().to_string(),
        entries: order
            .into_iter()
            .map(|i| RankedDoc {
                doc_id: cands[i].doc_id.clone(),
                score: values[i],
            })
            .collect(),
    }
}

fn compare_scored(score_a: f64, rank_a: usize, score_b: f64, rank_b: usize) -> Ordering {
    score_b.total_cmp(&score_a).then(rank_a.cmp(&rank_b))
}
