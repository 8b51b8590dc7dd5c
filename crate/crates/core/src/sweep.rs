//! Alpha-sweep driver: re-rank every query per (method, alpha), time the re-rank
//! call, evaluate the cutoffs, and test against a reference method.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::baselines::{
    compute_m_table, constrained_rerank, fastar_rerank, unfair_rank, ConstraintConfig, MTable,
    DEFAULT_DEPTH, DEFAULT_SIGNIFICANCE,
};
use crate::candidates::{QueryCandidates, Ranking};
use crate::error::{Error, Result};
use crate::metrics::{
    median_intersections, ndcg_at_k, nfairr_at_k, paired_t_test, RelevanceJudgments, TTestResult,
};
use crate::rerank::{compute_sigma_mean, pufr_rerank, uniform_rerank, PufrConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pufr,
    Uniform,
    Unfair,
    Fastar,
    Constrained,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Pufr,
        Method::Uniform,
        Method::Unfair,
        Method::Fastar,
        Method::Constrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pufr => "pufr",
            Method::Uniform => "uniform",
            Method::Unfair => "unfair",
            Method::Fastar => "fastar",
            Method::Constrained => "constrained",
        }
    }

    pub fn needs_sigma(self) -> bool {
        matches!(self, Method::Pufr | Method::Uniform)
    }

    pub fn needs_groups(self) -> bool {
        matches!(self, Method::Pufr | Method::Uniform | Method::Fastar)
    }

    /// Method the paired t-tests compare against.
    pub fn default_reference(self) -> Method {
        match self {
            Method::Uniform => Method::Pufr,
            _ => Method::Unfair,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown method `{s}` (expected one of pufr, uniform, unfair, fastar, constrained)"
                ))
            })
    }
}

/// Corpus-level state shared by the re-rankers.
#[derive(Debug, Clone)]
pub struct RerankContext {
    sigma_mean: Option<f64>,
    max_len: usize,
    pub depth: usize,
    pub significance: f64,
}

impl RerankContext {
    pub fn new(corpus: &[QueryCandidates]) -> Self {
        RerankContext {
            sigma_mean: compute_sigma_mean(corpus).ok(),
            max_len: corpus.iter().map(QueryCandidates::len).max().unwrap_or(1),
            depth: DEFAULT_DEPTH,
            significance: DEFAULT_SIGNIFICANCE,
        }
    }
}

/// One method at one alpha, ready to re-rank queries.
#[derive(Debug, Clone)]
pub enum Reranker {
    Pufr(PufrConfig),
    Uniform { sigma_mean: f64, cfg: PufrConfig },
    Unfair,
    Fastar(MTable),
    Constrained(ConstraintConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerankOutput {
    pub ranking: Ranking,
    /// Set when the constrained optimiser could not meet its floor.
    pub infeasible: bool,
}

impl Reranker {
    pub fn new(method: Method, alpha: f64, ctx: &RerankContext) -> Result<Self> {
        Ok(match method {
            Method::Pufr => Reranker::Pufr(PufrConfig::new(alpha)?),
            Method::Uniform => Reranker::Uniform {
                sigma_mean: ctx.sigma_mean.ok_or_else(|| {
                    Error::invalid("uniform re-ranking needs sigma for every candidate")
                })?,
                cfg: PufrConfig::new(alpha)?,
            },
            Method::Unfair => Reranker::Unfair,
            Method::Fastar => {
                Reranker::Fastar(compute_m_table(ctx.max_len, alpha, ctx.significance)?)
            }
            Method::Constrained => Reranker::Constrained(ConstraintConfig::new(alpha, ctx.depth)?),
        })
    }

    pub fn rerank(&self, q: &QueryCandidates) -> Result<RerankOutput> {
        let ranking = match self {
            Reranker::Pufr(cfg) => pufr_rerank(q, cfg)?,
            Reranker::Uniform { sigma_mean, cfg } => uniform_rerank(q, *sigma_mean, cfg)?,
            Reranker::Unfair => unfair_rank(q),
            Reranker::Fastar(table) => fastar_rerank(q, table)?,
            Reranker::Constrained(cfg) => {
                let out = constrained_rerank(q, cfg)?;
                return Ok(RerankOutput {
                    ranking: out.ranking,
                    infeasible: !out.feasible,
                });
            }
        };
        Ok(RerankOutput {
            ranking,
            infeasible: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub method: Method,
    pub alpha_grid: Vec<f64>,
    pub cutoffs_utility: Vec<usize>,
    pub cutoffs_fairness: Vec<usize>,
    /// Window for the constrained optimiser.
    pub depth: usize,
    pub significance: f64,
    /// Overrides [`Method::default_reference`].
    pub reference: Option<Method>,
}

impl SweepConfig {
    pub fn new(method: Method, alpha_grid: Vec<f64>) -> Self {
        SweepConfig {
            method,
            alpha_grid,
            cutoffs_utility: vec![10, 100],
            cutoffs_fairness: vec![10, 50],
            depth: DEFAULT_DEPTH,
            significance: DEFAULT_SIGNIFICANCE,
            reference: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() {
            return Err(Error::invalid("alpha grid is empty"));
        }
        if self.alpha_grid.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("alpha grid contains a non-finite value"));
        }
        if self.alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("alpha grid must be strictly increasing"));
        }
        if self.cutoffs_utility.is_empty() || self.cutoffs_fairness.is_empty() {
            return Err(Error::invalid("cutoff lists must be non-empty"));
        }
        if self
            .cutoffs_utility
            .iter()
            .chain(&self.cutoffs_fairness)
            .any(|&k| k == 0)
        {
            return Err(Error::invalid("cutoffs must be >= 1"));
        }
        Ok(())
    }

    fn utility_cutoffs(&self) -> Vec<usize> {
        sorted_unique(&self.cutoffs_utility)
    }

    fn fairness_cutoffs(&self) -> Vec<usize> {
        sorted_unique(&self.cutoffs_fairness)
    }
}

fn sorted_unique(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Per-query evaluation of one (method, alpha).
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub ndcg: BTreeMap<usize, BTreeMap<String, f64>>,
    pub nfairr: BTreeMap<usize, BTreeMap<String, f64>>,
    pub rerank_seconds: BTreeMap<String, f64>,
    pub infeasible_queries: Vec<String>,
}

impl Evaluation {
    fn mean(values: &BTreeMap<String, f64>) -> f64 {
        if values.is_empty() {
            0.0
        } else {
            values.values().sum::<f64>() / values.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricTest {
    pub metric: String,
    pub result: TTestResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRecord {
    pub method: Method,
    pub alpha: f64,
    pub ndcg: Vec<(usize, f64)>,
    pub nfairr: Vec<(usize, f64)>,
    pub mean_rerank_seconds: f64,
    pub reference: Method,
    /// One test per metric column, in column order.
    pub tests: Vec<MetricTest>,
    pub infeasible_queries: usize,
}

impl TradeoffRecord {
    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ndcg.iter().find(|(c, _)| *c == k).map(|&(_, v)| v)
    }

    pub fn nfairr_at(&self, k: usize) -> Option<f64> {
        self.nfairr.iter().find(|(c, _)| *c == k).map(|&(_, v)| v)
    }

    /// Test reported in the CSV: the first fairness column.
    pub fn headline_test(&self) -> Option<&MetricTest> {
        let name = format!("nfairr{}", self.nfairr.first()?.0);
        self.tests.iter().find(|t| t.metric == name)
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<TradeoffRecord>,
    pub evaluations: Vec<Evaluation>,
}

/// Re-ranks and evaluates every query with `reranker`; only the re-rank call is timed.
pub fn evaluate(
    corpus: &[QueryCandidates],
    judgments: &RelevanceJudgments,
    reranker: &Reranker,
    cutoffs_utility: &[usize],
    cutoffs_fairness: &[usize],
) -> Result<Evaluation> {
    struct QueryResult {
        qid: String,
        seconds: f64,
        infeasible: bool,
        ndcg: Vec<f64>,
        nfairr: Vec<f64>,
    }

    let per_query = corpus
        .par_iter()
        .map(|q| {
            let start = Instant::now();
            let out = reranker.rerank(q)?;
            let seconds = start.elapsed().as_secs_f64();
            Ok(QueryResult {
                qid: q.query_id().to_string(),
                seconds,
                infeasible: out.infeasible,
                ndcg: cutoffs_utility
                    .iter()
                    .map(|&k| ndcg_at_k(&out.ranking, judgments, k))
                    .collect(),
                nfairr: cutoffs_fairness
                    .iter()
                    .map(|&k| nfairr_at_k(&out.ranking, q, k))
                    .collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut eval = Evaluation {
        ndcg: cutoffs_utility
            .iter()
            .map(|&k| (k, BTreeMap::new()))
            .collect(),
        nfairr: cutoffs_fairness
            .iter()
            .map(|&k| (k, BTreeMap::new()))
            .collect(),
        rerank_seconds: BTreeMap::new(),
        infeasible_queries: Vec::new(),
    };
    for r in per_query {
        for (k, v) in cutoffs_utility.iter().zip(r.ndcg) {
            eval.ndcg.get_mut(k).unwrap().insert(r.qid.clone(), v);
        }
        for (k, v) in cutoffs_fairness.iter().zip(r.nfairr) {
            eval.nfairr.get_mut(k).unwrap().insert(r.qid.clone(), v);
        }
        if r.infeasible {
            eval.infeasible_queries.push(r.qid.clone());
        }
        eval.rerank_seconds.insert(r.qid, r.seconds);
    }
    Ok(eval)
}

fn check_inputs(corpus: &[QueryCandidates], methods: &[Method]) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::invalid("corpus is empty"));
    }
    let sigma = methods.iter().any(|m| m.needs_sigma());
    let groups = methods.iter().any(|m| m.needs_groups());
    for q in corpus {
        q.neutralities()?;
        if sigma {
            q.sigmas()?;
        }
        if groups {
            q.groups()?;
        }
    }
    Ok(())
}

/// Runs one method over the alpha grid. `unfair` ignores alpha and yields one record
/// (at the first grid value).
pub fn run_sweep(
    corpus: &[QueryCandidates],
    judgments: &RelevanceJudgments,
    cfg: &SweepConfig,
) -> Result<SweepOutput> {
    cfg.validate()?;
    let reference = cfg
        .reference
        .unwrap_or_else(|| cfg.method.default_reference());
    check_inputs(corpus, &[cfg.method, reference])?;

    let mut ctx = RerankContext::new(corpus);
    ctx.depth = cfg.depth;
    ctx.significance = cfg.significance;
    let utility = cfg.utility_cutoffs();
    let fairness = cfg.fairness_cutoffs();

    let alphas: &[f64] = if cfg.method == Method::Unfair {
        &cfg.alpha_grid[..1]
    } else {
        &cfg.alpha_grid
    };

    let mut fixed_reference = None;
    let mut records = Vec::with_capacity(alphas.len());
    let mut evaluations = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let eval = evaluate(
            corpus,
            judgments,
            &Reranker::new(cfg.method, alpha, &ctx)?,
            &utility,
            &fairness,
        )?;

        // alpha-free references are evaluated once
        let reference_eval = if matches!(reference, Method::Unfair) {
            if fixed_reference.is_none() {
                fixed_reference = Some(evaluate(
                    corpus,
                    judgments,
                    &Reranker::Unfair,
                    &utility,
                    &fairness,
                )?);
            }
            fixed_reference.clone().unwrap()
        } else {
            evaluate(
                corpus,
                judgments,
                &Reranker::new(reference, alpha, &ctx)?,
                &utility,
                &fairness,
            )?
        };

        let mut tests = Vec::new();
        for (&k, values) in &eval.ndcg {
            tests.push(MetricTest {
                metric: format!("ndcg_cut_{k}"),
                result: t_test_or_null(values, &reference_eval.ndcg[&k])?,
            });
        }
        for (&k, values) in &eval.nfairr {
            tests.push(MetricTest {
                metric: format!("nfairr{k}"),
                result: t_test_or_null(values, &reference_eval.nfairr[&k])?,
            });
        }

        records.push(TradeoffRecord {
            method: cfg.method,
            alpha,
            ndcg: eval
                .ndcg
                .iter()
                .map(|(&k, v)| (k, Evaluation::mean(v)))
                .collect(),
            nfairr: eval
                .nfairr
                .iter()
                .map(|(&k, v)| (k, Evaluation::mean(v)))
                .collect(),
            mean_rerank_seconds: Evaluation::mean(&eval.rerank_seconds),
            reference,
            tests,
            infeasible_queries: eval.infeasible_queries.len(),
        });
        evaluations.push(eval);
    }
    Ok(SweepOutput {
        records,
        evaluations,
    })
}

/// A single-query corpus has no variance to test; report a null result.
fn t_test_or_null(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> Result<TTestResult> {
    if a.len() < 2 {
        return Ok(TTestResult {
            t_statistic: f64::NAN,
            degrees_of_freedom: 0,
            p_value: f64::NAN,
        });
    }
    paired_t_test(a, b)
}

/// CSV header: `method,alpha,ndcg_cut_*,nfairr*,rerank_time_s,t_stat,p_value`.
pub fn csv_header(utility: &[usize], fairness: &[usize]) -> Vec<String> {
    let mut h = vec!["method".to_string(), "alpha".to_string()];
    h.extend(
        sorted_unique(utility)
            .iter()
            .map(|k| format!("ndcg_cut_{k}")),
    );
    h.extend(sorted_unique(fairness).iter().map(|k| format!("nfairr{k}")));
    h.extend(["rerank_time_s", "t_stat", "p_value"].map(String::from));
    h
}

/// Writes the trade-off table; all records must share the same cutoffs.
pub fn format_tradeoff_csv(records: &[TradeoffRecord]) -> Result<String> {
    let Some(first) = records.first() else {
        return Ok(String::new());
    };
    let utility: Vec<usize> = first.ndcg.iter().map(|&(k, _)| k).collect();
    let fairness: Vec<usize> = first.nfairr.iter().map(|&(k, _)| k).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header(&utility, &fairness))?;
    for r in records {
        let cuts_u: Vec<usize> = r.ndcg.iter().map(|&(k, _)| k).collect();
        let cuts_f: Vec<usize> = r.nfairr.iter().map(|&(k, _)| k).collect();
        if cuts_u != utility || cuts_f != fairness {
            return Err(Error::invalid("records in one CSV must share cutoffs"));
        }
        let mut row = vec![r.method.to_string(), r.alpha.to_string()];
        row.extend(r.ndcg.iter().map(|(_, v)| v.to_string()));
        row.extend(r.nfairr.iter().map(|(_, v)| v.to_string()));
        row.push(r.mean_rerank_seconds.to_string());
        let (t, p) = r.headline_test().map_or((f64::NAN, f64::NAN), |m| {
            (m.result.t_statistic, m.result.p_value)
        });
        row.push(t.to_string());
        row.push(p.to_string());
        w.write_record(row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Highest nFaiRR at the largest fairness cutoff among records whose nDCG at the
/// largest utility cutoff is at least `ndcg_floor` (first record wins ties).
pub fn select_best(records: &[TradeoffRecord], ndcg_floor: f64) -> Option<&TradeoffRecord> {
    let mut best: Option<(&TradeoffRecord, f64)> = None;
    for r in records {
        let (Some(&(_, ndcg)), Some(&(_, fair))) = (r.ndcg.last(), r.nfairr.last()) else {
            continue;
        };
        if ndcg >= ndcg_floor && best.is_none_or(|(_, f)| fair > f) {
            best = Some((r, fair));
        }
    }
    best.map(|(r, _)| r)
}

/// Median interval-overlap counts per rank, one column per alpha.
pub fn report_interval_analysis(corpus: &[QueryCandidates], alphas: &[f64]) -> Result<String> {
    if alphas.is_empty() {
        return Err(Error::invalid("no interval widths given"));
    }
    let columns = alphas
        .iter()
        .map(|&a| median_intersections(corpus, a))
        .collect::<Result<Vec<_>>>()?;
    let rows = columns.iter().map(Vec::len).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rank".to_string()];
    header.extend(alphas.iter().map(|a| format!("alpha_{a}")));
    w.write_record(&header)?;
    for r in 0..rows {
        let mut row = vec![(r + 1).to_string()];
        row.extend(
            columns
                .iter()
                .map(|c| c.get(r).map_or(String::new(), f64::to_string)),
        );
        w.write_record(&row)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// `query_id,value` CSV of one metric.
pub fn format_per_query_csv(values: &BTreeMap<String, f64>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["query_id", "value"])?;
    for (q, v) in values {
        w.write_record([q.as_str(), &v.to_string()])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_per_query_csv(path: &Path) -> Result<BTreeMap<String, f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if rec.len() != 2 {
            return Err(parse_err(format!(
                "expected 2 columns, found {}",
                rec.len()
            )));
        }
        let v: f64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid value `{}`", &rec[1])))?;
        if out.insert(rec[0].trim().to_string(), v).is_some() {
            return Err(parse_err(format!("duplicate query {}", &rec[0])));
        }
    }
    Ok(out)
}
