//! Utility, fairness and significance measures.

use std::collections::{BTreeMap, HashMap};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::candidates::{QueryCandidates, Ranking};
use crate::error::{Error, Result};

/// Graded relevance labels; unjudged pairs have grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelevanceJudgments {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl RelevanceJudgments {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a grade; a repeated pair must carry the same grade.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Result<()> {
        let docs = self.grades.entry(query_id.to_string()).or_default();
        match docs.get(doc_id) {
            Some(&g) if g != grade => Err(Error::invalid(format!(
                "conflicting grades {g} and {grade} for ({query_id}, {doc_id})"
            ))),
            _ => {
                docs.insert(doc_id.to_string(), grade);
                Ok(())
            }
        }
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|d| d.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query_grades(&self, query_id: &str) -> impl Iterator<Item = u32> + '_ {
        self.grades
            .get(query_id)
            .into_iter()
            .flat_map(|d| d.values().copied())
    }

    pub fn contains_query(&self, query_id: &str) -> bool {
        self.grades.contains_key(query_id)
    }

    /// All `(query, doc, grade)` triples in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.grades
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |(d, &g)| (q.as_str(), d.as_str(), g)))
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

/// Linear-gain nDCG@k; the ideal ordering uses every judged grade of the query.
/// Returns 0 when the ideal DCG is 0.
pub fn ndcg_at_k(ranking: &Ranking, judgments: &RelevanceJudgments, k: usize) -> f64 {
    assert!(k >= 1, "cutoff must be >= 1");
    let dcg: f64 = ranking
        .doc_ids()
        .take(k)
        .enumerate()
        .map(|(i, d)| f64::from(judgments.grade(&ranking.query_id, d)) / discount(i + 1))
        .sum();
    let mut ideal: Vec<u32> = judgments.query_grades(&ranking.query_id).collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| f64::from(g) / discount(i + 1))
        .sum();
    if idcg > 0.0 {
        dcg / idcg
    } else {
        0.0
    }
}

/// Rank-discounted sum of neutrality over the top `k` positions.
pub fn fairr_at_k(ranking: &Ranking, neutrality: &HashMap<String, f64>, k: usize) -> Result<f64> {
    ranking
        .doc_ids()
        .take(k)
        .enumerate()
        .map(|(i, d)| {
            neutrality
                .get(d)
                .map(|n| n / (i + 1) as f64)
                .ok_or_else(|| Error::MissingNeutrality {
                    query_id: ranking.query_id.clone(),
                    doc_id: d.to_string(),
                })
        })
        .sum()
}

/// Best attainable FaiRR@k: neutralities placed in descending order.
pub fn ideal_fairr_at_k(neutralities: &[f64], k: usize) -> f64 {
    let mut sorted = neutralities.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    sorted
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, n)| n / (i + 1) as f64)
        .sum()
}

/// FaiRR@k normalised by the ideal of the query's candidate pool; 1 when that ideal is 0.
pub fn nfairr_at_k(ranking: &Ranking, candidates: &QueryCandidates, k: usize) -> Result<f64> {
    let neutralities = candidates.neutralities()?;
    let map: HashMap<String, f64> = candidates
        .candidates()
        .iter()
        .map(|c| c.doc_id.clone())
        .zip(neutralities.iter().copied())
        .collect();
    let fairr = fairr_at_k(ranking, &map, k)?;
    let ideal = ideal_fairr_at_k(&neutralities, k);
    Ok(if ideal > 0.0 { fairr / ideal } else { 1.0 })
}

/// Per-query values of one metric and their arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_query: BTreeMap<String, f64>,
    pub mean: f64,
}

impl MetricReport {
    pub fn from_values(per_query: BTreeMap<String, f64>) -> Self {
        let mean = if per_query.is_empty() {
            0.0
        } else {
            per_query.values().sum::<f64>() / per_query.len() as f64
        };
        MetricReport { per_query, mean }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Two-tailed paired t-test on per-query values.
///
/// Differences with zero variance give `p = 0` (or `t = 0, p = 1` when they are all 0).
pub fn paired_t_test(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Result<TTestResult> {
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        return Err(Error::invalid("paired t-test needs identical query sets"));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "paired t-test needs >= 2 queries, got {n}"
        )));
    }
    let diffs: Vec<f64> = a.values().zip(b.values()).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;

    if var == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult {
                t_statistic: 0.0,
                degrees_of_freedom: df,
                p_value: 1.0,
            }
        } else {
            TTestResult {
                t_statistic: mean.signum() * f64::INFINITY,
                degrees_of_freedom: df,
                p_value: 0.0,
            }
        });
    }

    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::invalid(format!("student t: {e}")))?;
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
    })
}

/// For the document at each mean-score rank, how many other documents have an
/// overlapping `[mu - alpha*sigma, mu + alpha*sigma]` interval (closed intervals).
pub fn intersection_counts(candidates: &QueryCandidates, alpha: f64) -> Result<Vec<usize>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!(
            "interval width alpha must be > 0, got {alpha}"
        )));
    }
    let sigmas = candidates.sigmas()?;
    let cands = candidates.candidates();
    let intervals: Vec<(f64, f64)> = candidates
        .original_order()
        .into_iter()
        .map(|i| {
            (
                cands[i].mu - alpha * sigmas[i],
                cands[i].mu + alpha * sigmas[i],
            )
        })
        .collect();
    Ok(intervals
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            intervals
                .iter()
                .enumerate()
                .filter(|&(j, &(lo2, hi2))| j != i && lo.max(lo2) <= hi.min(hi2))
                .count()
        })
        .collect())
}

/// Median intersection count per rank over all queries that populate that rank
/// (lower-middle element for even counts).
pub fn median_intersections(corpus: &[QueryCandidates], alpha: f64) -> Result<Vec<f64>> {
    let mut by_rank: Vec<Vec<usize>> = Vec::new();
    for q in corpus {
        for (rank, c) in intersection_counts(q, alpha)?.into_iter().enumerate() {
            if by_rank.len() <= rank {
                by_rank.resize_with(rank + 1, Vec::new);
            }
            by_rank[rank].push(c);
        }
    }
    Ok(by_rank
        .into_iter()
        .map(|mut counts| {
            counts.sort_unstable();
            counts[(counts.len() - 1) / 2] as f64
        })
        .collect())
}
