//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero on any failure.

// `ensure!(a >= b, ..)` is meant to fail on NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

use std::collections::HashMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use pufr::baselines::{
    compute_m_table, constrained_rerank, fastar_rerank, unfair_rank, ConstraintConfig,
    FEASIBILITY_TOLERANCE,
};
use pufr::io::{read_fixture, write_fixture, FixturePaths};
use pufr::metrics::{
    fairr_at_k, ideal_fairr_at_k, median_intersections, ndcg_at_k, nfairr_at_k, paired_t_test,
    RelevanceJudgments,
};
use pufr::rerank::{compute_sigma_mean, pufr_rerank, uniform_rerank, PufrConfig};
use pufr::synth::{generate_synthetic, SyntheticConfig};
use pufr::uncertainty::{
    analytic_predictive, predictive_moments, sample_last_layers, DiagonalFisher, FeatureVector,
    LastLayerPosterior, McConfig,
};
use pufr::{
    assign_groups, GroupLabel, NeutralityScore, QueryCandidates, Ranking, ScoredCandidate,
    DEFAULT_PROTECTED_THRESHOLD,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("identity at alpha = 0", identity_at_zero),
        ("intra-group order preserved", intra_group_preservation),
        ("nFaiRR@10 monotone in alpha", fairness_monotonicity),
        ("brute-force oracle equivalence", oracle_equivalence),
        ("Laplace predictive variance", laplace_correctness),
        ("metric fidelity", metric_fidelity),
        ("interval-analysis shape", interval_analysis),
        ("re-rank time ordering", runtime_ordering),
        ("trade-off dominance over uniform sigma", tradeoff_dominance),
        ("parser round-trip", parser_round_trip),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name} ({detail}; {secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {detail} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ids(r: &Ranking) -> Vec<&str> {
    r.doc_ids().collect()
}

/// Random query: some exactly-neutral (protected) documents, occasional mu ties and
/// zero sigmas.
fn random_query(rng: &mut ChaCha8Rng, qid: &str, n: usize) -> QueryCandidates {
    let cands = (0..n)
        .map(|i| {
            let mu = if rng.random_bool(0.1) {
                rng.random_range(0..3) as f64
            } else {
                rng.sample::<f64, _>(StandardNormal) * 2.0
            };
            let sigma = if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random_range(0.0..1.5)
            };
            let neutrality = if rng.random_bool(0.35) {
                1.0
            } else {
                rng.random::<f64>()
            };
            ScoredCandidate::new(format!("d{i}"), mu)
                .with_sigma(sigma)
                .with_neutrality(NeutralityScore::new(neutrality).unwrap())
        })
        .collect();
    let q = QueryCandidates::from_candidates(qid, cands).unwrap();
    assign_groups(q, DEFAULT_PROTECTED_THRESHOLD).unwrap()
}

fn random_corpus(seed: u64, queries: usize, max_docs: usize) -> Vec<QueryCandidates> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..queries)
        .map(|i| {
            let n = rng.random_range(1..=max_docs);
            random_query(&mut rng, &format!("q{i}"), n)
        })
        .collect()
}

const SWEEP_ALPHAS: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

// 1 ---------------------------------------------------------------------------

fn identity_at_zero() -> Outcome {
    let (corpus, _) = generate_synthetic(&SyntheticConfig {
        n_queries: 200,
        bias_strength: 1.0,
        seed: 1,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let cfg = PufrConfig::new(0.0).unwrap();
    let start = Instant::now();
    let reranked: Vec<Ranking> = corpus
        .iter()
        .map(|q| pufr_rerank(q, &cfg).unwrap())
        .collect();
    let secs = start.elapsed().as_secs_f64();
    for (q, r) in corpus.iter().zip(&reranked) {
        ensure!(
            ids(r) == ids(&unfair_rank(q)),
            "query {} differs from unfair",
            q.query_id()
        );
    }
    ensure!(secs < 1.0, "took {secs:.3}s");
    Ok(format!("200 queries identical, rerank {:.4}s", secs))
}

// 2 ---------------------------------------------------------------------------

fn group_sequence<'a>(q: &QueryCandidates, r: &'a Ranking, g: GroupLabel) -> Vec<&'a str> {
    r.doc_ids()
        .filter(|d| q.get(d).unwrap().group == Some(g))
        .collect()
}

fn intra_group_preservation() -> Outcome {
    let corpus = random_corpus(2, 1000, 50);
    let sigma_mean = compute_sigma_mean(&corpus).unwrap();
    let start = Instant::now();
    let inversions: usize = corpus
        .iter()
        .map(|q| {
            let base = unfair_rank(q);
            let mut bad = 0;
            for &alpha in &SWEEP_ALPHAS {
                let cfg = PufrConfig::new(alpha).unwrap();
                for r in [
                    pufr_rerank(q, &cfg).unwrap(),
                    uniform_rerank(q, sigma_mean, &cfg).unwrap(),
                ] {
                    for g in [GroupLabel::Protected, GroupLabel::NonProtected] {
                        if group_sequence(q, &r, g) != group_sequence(q, &base, g) {
                            bad += 1;
                        }
                    }
                }
            }
            bad
        })
        .sum();
    let secs = start.elapsed().as_secs_f64();
    ensure!(
        inversions == 0,
        "{inversions} (query, alpha, method, group) sequences reordered"
    );
    ensure!(secs < 10.0, "took {secs:.2}s");
    Ok(format!(
        "1000 queries x 5 alphas x {{pufr, uniform}}, 0 inversions, {secs:.2}s"
    ))
}

// 3 ---------------------------------------------------------------------------

fn fairness_monotonicity() -> Outcome {
    let corpus = random_corpus(2, 1000, 50);
    let sigma_mean = compute_sigma_mean(&corpus).unwrap();
    let grid: Vec<f64> = std::iter::once(0.0).chain(SWEEP_ALPHAS).collect();
    for q in &corpus {
        for uniform in [false, true] {
            let mut prev = f64::NEG_INFINITY;
            for &alpha in &grid {
                let cfg = PufrConfig::new(alpha).unwrap();
                let r = if uniform {
                    uniform_rerank(q, sigma_mean, &cfg).unwrap()
                } else {
                    pufr_rerank(q, &cfg).unwrap()
                };
                let v = nfairr_at_k(&r, q, 10).unwrap();
                ensure!(
                    v >= prev,
                    "{} {}: nFaiRR@10 fell from {prev} to {v} at alpha {alpha}",
                    if uniform { "uniform" } else { "pufr" },
                    q.query_id()
                );
                prev = v;
            }
        }
    }
    Ok("1000 queries, alphas 0..8, pufr and uniform".into())
}

// 4 ---------------------------------------------------------------------------

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(v: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
        if k == v.len() {
            out.push(v.clone());
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            go(v, k + 1, out);
            v.swap(k, i);
        }
    }
    let mut out = Vec::new();
    go(&mut (0..n).collect(), 0, &mut out);
    out
}

fn discount(pos: usize) -> f64 {
    1.0 / ((pos + 2) as f64).log2()
}

/// Direct reading of the clamping inequalities: a protected document's score is the
/// smallest upper bound among protected documents ranked at or above it; a
/// non-protected one's is the largest lower bound among those ranked at or below it.
fn clamped_order(q: &QueryCandidates, alpha: f64) -> Vec<String> {
    let c = q.candidates();
    let score = |i: usize| -> f64 {
        let me = &c[i];
        if me.group == Some(GroupLabel::Protected) {
            c.iter()
                .filter(|o| {
                    o.group == Some(GroupLabel::Protected) && o.original_rank <= me.original_rank
                })
                .map(|o| o.mu + alpha * o.sigma.unwrap())
                .fold(f64::INFINITY, f64::min)
        } else {
            c.iter()
                .filter(|o| {
                    o.group == Some(GroupLabel::NonProtected) && o.original_rank >= me.original_rank
                })
                .map(|o| o.mu - alpha * o.sigma.unwrap())
                .fold(f64::NEG_INFINITY, f64::max)
        }
    };
    let scores: Vec<f64> = (0..c.len()).map(score).collect();
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then(c[a].original_rank.cmp(&c[b].original_rank))
    });
    idx.into_iter().map(|i| c[i].doc_id.clone()).collect()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut fastar_checked, mut constrained_feasible) = (0, 0);
    for qi in 0..500 {
        let n = rng.random_range(1..=6);
        let q = random_query(&mut rng, &format!("q{qi}"), n);
        let c = q.candidates();
        let perms = permutations(n);

        // pufr
        let alpha = rng.random_range(0.0..4.0);
        let got: Vec<String> = pufr_rerank(&q, &PufrConfig::new(alpha).unwrap())
            .unwrap()
            .doc_ids()
            .map(String::from)
            .collect();
        ensure!(
            got == clamped_order(&q, alpha),
            "{}: pufr at alpha {alpha} differs from oracle",
            q.query_id()
        );

        // fa*ir: prefix constraints and exhaustive utility
        let p = rng.random_range(0.0..1.0);
        let table = compute_m_table(n, p, 0.1).unwrap();
        let protected: Vec<bool> = c
            .iter()
            .map(|x| x.group == Some(GroupLabel::Protected))
            .collect();
        let total_p = protected.iter().filter(|&&b| b).count();
        let meets = |order: &[usize]| {
            let mut seen = 0;
            order.iter().enumerate().all(|(k, &i)| {
                seen += usize::from(protected[i]);
                seen >= table.required_at(k + 1).unwrap().min(total_p)
            })
        };
        let utility = |order: &[usize]| -> f64 {
            order
                .iter()
                .enumerate()
                .map(|(k, &i)| c[i].mu * discount(k))
                .sum()
        };
        let index: HashMap<&str, usize> = c
            .iter()
            .enumerate()
            .map(|(i, x)| (x.doc_id.as_str(), i))
            .collect();
        let fr = fastar_rerank(&q, &table).unwrap();
        let fa_order: Vec<usize> = fr.doc_ids().map(|d| index[d]).collect();
        ensure!(
            meets(&fa_order),
            "{}: fa*ir violates a prefix constraint",
            q.query_id()
        );
        let best = perms
            .iter()
            .filter(|o| meets(o))
            .map(|o| utility(o))
            .fold(f64::NEG_INFINITY, f64::max);
        ensure!(
            (utility(&fa_order) - best).abs() <= 1e-9,
            "{}: fa*ir utility {} vs exhaustive {best}",
            q.query_id(),
            utility(&fa_order)
        );
        fastar_checked += 1;

        // constrained: exhaustive search over the window
        let depth = rng.random_range(1..=n);
        let af = rng.random_range(0.0..=1.0);
        let out = constrained_rerank(&q, &ConstraintConfig::new(af, depth).unwrap()).unwrap();
        let window: Vec<usize> = q.original_order()[..depth].to_vec();
        let min_mu = window
            .iter()
            .map(|&i| c[i].mu)
            .fold(f64::INFINITY, f64::min);
        let all_neutral: Vec<f64> = c.iter().map(|x| x.neutrality.unwrap().value()).collect();
        let target = af * ideal_fairr_at_k(&all_neutral, depth);
        let mut best: Option<f64> = None;
        for perm in permutations(depth) {
            let fair: f64 = perm
                .iter()
                .enumerate()
                .map(|(k, &w)| all_neutral[window[w]] / (k + 1) as f64)
                .sum();
            if fair >= target - FEASIBILITY_TOLERANCE {
                let u: f64 = perm
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| (c[window[w]].mu - min_mu) * discount(k))
                    .sum();
                best = Some(best.map_or(u, |b: f64| b.max(u)));
            }
        }
        if out.feasible {
            let best = best.ok_or(format!(
                "{}: reported feasible, exhaustive finds none",
                q.query_id()
            ))?;
            ensure!(
                (out.utility - best).abs() <= 1e-9,
                "{}: constrained utility {} vs exhaustive {best}",
                q.query_id(),
                out.utility
            );
            constrained_feasible += 1;
        } else {
            ensure!(
                best.is_none(),
                "{}: reported infeasible but a feasible order exists",
                q.query_id()
            );
        }
    }
    Ok(format!(
        "500 queries; pufr exact, fa*ir {fastar_checked} optimal, constrained {constrained_feasible} feasible optimal"
    ))
}

// 5 ---------------------------------------------------------------------------

fn laplace_correctness() -> Outcome {
    let sizes = [1_000usize, 10_000, 100_000];
    // per posterior: relative variance error at each N
    let errors: Vec<Vec<f64>> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + i);
            let d = rng.random_range(1..=16);
            let theta: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..10.0)).collect();
            let h: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let post =
                LastLayerPosterior::new(theta, DiagonalFisher::new(raw, 1e-3).unwrap()).unwrap();
            let h = FeatureVector::new(h).unwrap();
            let exact = analytic_predictive(&post, &h).unwrap().sigma.powi(2);
            sizes
                .iter()
                .enumerate()
                .map(|(j, &n)| {
                    let samples =
                        sample_last_layers(&post, &McConfig::new(n, i * 10 + j as u64).unwrap());
                    let mc = predictive_moments(&samples, &h).unwrap().sigma.powi(2);
                    (mc - exact).abs() / exact
                })
                .collect()
        })
        .collect();
    let worst = |j: usize| errors.iter().map(|e| e[j]).fold(0.0, f64::max);
    let mean = |j: usize| errors.iter().map(|e| e[j]).sum::<f64>() / errors.len() as f64;
    let (w4, w5) = (worst(1), worst(2));
    // least-squares slope of log(mean error) on log N
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = (0..sizes.len()).map(|j| mean(j).ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    ensure!(w4 <= 0.05, "worst relative error at N=1e4 is {w4:.4}");
    ensure!(w5 <= 0.016, "worst relative error at N=1e5 is {w5:.4}");
    ensure!((slope + 0.5).abs() <= 0.1, "log-log slope {slope:.3}");
    Ok(format!(
        "worst err N=1e4 {w4:.4}, N=1e5 {w5:.4}, slope {slope:.3}"
    ))
}

// 6 ---------------------------------------------------------------------------

fn neutral_query(values: &[f64]) -> QueryCandidates {
    QueryCandidates::from_candidates(
        "q",
        values
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                ScoredCandidate::new(format!("d{i}"), -(i as f64))
                    .with_neutrality(NeutralityScore::new(n).unwrap())
            })
            .collect(),
    )
    .unwrap()
}

fn metric_fidelity() -> Outcome {
    let tol = 1e-12;
    let mut j = RelevanceJudgments::new();
    j.insert("q", "a", 1).unwrap();
    j.insert("q", "b", 0).unwrap();
    let v = ndcg_at_k(&Ranking::from_order("q", ["a", "b"]), &j, 2);
    ensure!((v - 1.0).abs() < tol, "ndcg [1,0] = {v}");
    let v = ndcg_at_k(&Ranking::from_order("q", ["b", "a"]), &j, 2);
    ensure!((v - 1.0 / 3f64.log2()).abs() < tol, "ndcg [0,1] = {v}");
    let mut zero = RelevanceJudgments::new();
    zero.insert("q", "a", 0).unwrap();
    ensure!(
        ndcg_at_k(&Ranking::from_order("q", ["a"]), &zero, 1) == 0.0,
        "all-zero ndcg"
    );

    let order3 = Ranking::from_order("q", ["d0", "d1", "d2"]);
    let map = |q: &QueryCandidates| -> HashMap<String, f64> {
        q.candidates()
            .iter()
            .map(|c| (c.doc_id.clone(), c.neutrality.unwrap().value()))
            .collect()
    };
    let v = fairr_at_k(&order3, &map(&neutral_query(&[1.0, 0.5, 0.0])), 3).unwrap();
    ensure!((v - 1.25).abs() < tol, "fairr = {v}");
    ensure!(
        fairr_at_k(&order3, &map(&neutral_query(&[0.0, 0.0, 0.0])), 3).unwrap() == 0.0,
        "zero fairr"
    );
    ensure!(
        fairr_at_k(&order3, &map(&neutral_query(&[0.7, 0.1, 0.2])), 1).unwrap() == 0.7,
        "k=1 fairr"
    );

    ensure!(
        (ideal_fairr_at_k(&[1.0, 0.5, 0.0], 3) - 1.25).abs() < tol,
        "ideal fairr"
    );
    let h4: f64 = 1.0 + 0.5 + 1.0 / 3.0 + 0.25;
    ensure!(
        (ideal_fairr_at_k(&[0.6; 6], 4) - 0.6 * h4).abs() < tol,
        "c * H_k"
    );
    ensure!(
        (ideal_fairr_at_k(&[0.3], 5) - 0.3).abs() < tol,
        "single candidate"
    );

    let q = neutral_query(&[0.0, 0.5, 1.0]);
    let best = Ranking::from_order("q", ["d2", "d1", "d0"]);
    ensure!(
        (nfairr_at_k(&best, &q, 3).unwrap() - 1.0).abs() < tol,
        "nfairr of ideal order"
    );
    let v = nfairr_at_k(&order3, &q, 3).unwrap();
    ensure!((v - (0.25 + 1.0 / 3.0) / 1.25).abs() < tol, "nfairr = {v}");

    let per_query = |v: &[f64]| {
        v.iter()
            .enumerate()
            .map(|(i, &x)| (format!("q{i}"), x))
            .collect()
    };
    let t = paired_t_test(&per_query(&[1.0, 2.0, 3.0]), &per_query(&[0.0, 0.0, 0.0])).unwrap();
    // df = 2 survival function in closed form
    let oracle = 1.0 - t.t_statistic / (t.t_statistic.powi(2) + 2.0).sqrt();
    ensure!(
        (t.t_statistic - 12f64.sqrt()).abs() < 1e-12,
        "t = {}",
        t.t_statistic
    );
    ensure!(
        (t.p_value - oracle).abs() < 1e-3,
        "p = {} vs oracle {oracle}",
        t.p_value
    );
    ensure!((t.p_value - 0.0742).abs() < 1e-3, "p = {}", t.p_value);
    Ok(format!(
        "nDCG/FaiRR/nFaiRR examples to 1e-12, p = {:.4}",
        t.p_value
    ))
}

// 7 ---------------------------------------------------------------------------

fn interval_analysis() -> Outcome {
    let (corpus, _) = generate_synthetic(&SyntheticConfig {
        n_queries: 200,
        n_candidates: 50,
        sigma_base: 0.3,
        sigma_spread: 0.1,
        sigma_rank_slope: 1.0,
        seed: 7,
        ..Default::default()
    })
    .unwrap();
    let one = median_intersections(&corpus, 1.0).unwrap();
    let two = median_intersections(&corpus, 2.0).unwrap();
    for (r, (a, b)) in one.iter().zip(&two).enumerate() {
        ensure!(
            b >= a,
            "rank {}: alpha=2 median {b} < alpha=1 median {a}",
            r + 1
        );
    }
    for (r, a) in one.iter().take(10).enumerate() {
        ensure!(
            *a > 0.0,
            "rank {} has zero median overlaps at alpha=1",
            r + 1
        );
    }
    Ok(format!(
        "top-10 medians alpha=1 {:?}, alpha=2 {:?}",
        &one[..10],
        &two[..10]
    ))
}

// 8 ---------------------------------------------------------------------------

fn runtime_ordering() -> Outcome {
    let (corpus, _) = generate_synthetic(&SyntheticConfig {
        n_queries: 30,
        n_candidates: 50,
        bias_strength: 1.0,
        seed: 8,
        ..Default::default()
    })
    .unwrap();
    let pufr_cfg = PufrConfig::new(1.0).unwrap();
    let con_cfg = ConstraintConfig::new(0.9, 50).unwrap();
    let time = |f: &dyn Fn(&QueryCandidates)| -> f64 {
        let start = Instant::now();
        for q in &corpus {
            f(q);
        }
        start.elapsed().as_secs_f64() / corpus.len() as f64
    };
    // warm up once
    let _ = pufr_rerank(&corpus[0], &pufr_cfg);
    let p = time(&|q| {
        std::hint::black_box(pufr_rerank(q, &pufr_cfg).unwrap());
    });
    let c = time(&|q| {
        std::hint::black_box(constrained_rerank(q, &con_cfg).unwrap());
    });
    ensure!(
        c >= 4.0 * p,
        "pufr {p:.2e}s vs constrained {c:.2e}s per query"
    );
    Ok(format!(
        "pufr {p:.2e}s, constrained {c:.2e}s per query (x{:.0})",
        c / p
    ))
}

// 9 ---------------------------------------------------------------------------

struct Row {
    method: String,
    alpha: f64,
    ndcg10: f64,
    nfairr10: f64,
}

fn read_tradeoff_csv(path: &Path) -> Result<Vec<Row>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or(format!("missing column {name}"))
    };
    let (m, a, n, f) = (
        col("method")?,
        col("alpha")?,
        col("ndcg_cut_10")?,
        col("nfairr10")?,
    );
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| e.to_string())?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|e| e.to_string());
            Ok(Row {
                method: rec[m].to_string(),
                alpha: num(a)?,
                ndcg10: num(n)?,
                nfairr10: num(f)?,
            })
        })
        .collect()
}

fn tradeoff_dominance() -> Outcome {
    // a third of the non-protected documents carry an inflated score; by construction
    // those (and only those) get a larger sigma, and they are the less neutral ones
    let (corpus, qrels) = generate_synthetic(&SyntheticConfig {
        n_queries: 1000,
        n_candidates: 50,
        bias_strength: 2.0,
        biased_fraction: 0.3,
        sigma_bias_coupling: 1.0,
        neutrality_bias_coupling: 1.0,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let paths = FixturePaths::in_dir(dir.path());
    write_fixture(&paths, &corpus, &qrels, "fixture").map_err(|e| e.to_string())?;
    let grid: Vec<String> = (0..=160).map(|i| format!("{}", i as f64 * 0.025)).collect();
    let csv_path = dir.path().join("tradeoff.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_pufr"))
        .args([
            "sweep",
            "--method",
            "pufr,uniform",
            "--alpha-grid",
            &grid.join(","),
        ])
        .arg("--run")
        .arg(&paths.run)
        .arg("--sigma")
        .arg(&paths.sigma)
        .arg("--neutrality")
        .arg(&paths.neutrality)
        .arg("--qrels")
        .arg(&paths.qrels)
        .arg("--output")
        .arg(&csv_path)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "sweep failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let rows = read_tradeoff_csv(&csv_path)?;
    let pufr: Vec<&Row> = rows.iter().filter(|r| r.method == "pufr").collect();
    let uniform: Vec<&Row> = rows
        .iter()
        .filter(|r| r.method == "uniform" && r.alpha > 0.0)
        .collect();
    // nDCG@10 rises then falls with alpha, so an nDCG level is usually reached on both
    // sides of the peak; the grid search keeps the fairest pufr row within tolerance
    let mut matched = 0;
    let mut worst_gap = f64::INFINITY;
    for u in &uniform {
        let Some(p) = pufr
            .iter()
            .filter(|p| (p.ndcg10 - u.ndcg10).abs() <= 0.005)
            .max_by(|a, b| a.nfairr10.total_cmp(&b.nfairr10))
        else {
            continue;
        };
        matched += 1;
        worst_gap = worst_gap.min(p.nfairr10 - u.nfairr10);
        ensure!(
            p.nfairr10 >= u.nfairr10,
            "uniform alpha {} (nDCG@10 {:.4}, nFaiRR@10 {:.4}) beats pufr alpha {} (nDCG@10 {:.4}, nFaiRR@10 {:.4})",
            u.alpha,
            u.ndcg10,
            u.nfairr10,
            p.alpha,
            p.ndcg10,
            p.nfairr10
        );
    }
    ensure!(
        matched > 0,
        "no uniform row has a pufr row within 0.005 nDCG@10"
    );
    Ok(format!(
        "{matched}/{} uniform rows matched, smallest nFaiRR@10 margin {worst_gap:.4}",
        uniform.len()
    ))
}

// 10 --------------------------------------------------------------------------

fn parser_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    for i in 0..50 {
        let cfg = SyntheticConfig {
            n_queries: rng.random_range(1..=20),
            n_candidates: rng.random_range(1..=40),
            mu_mean: rng.random_range(-5.0..5.0),
            mu_spread: rng.random_range(0.1..5.0),
            protected_fraction: rng.random_range(0.0..=1.0),
            bias_strength: rng.random_range(0.0..2.0),
            seed: rng.random(),
            ..Default::default()
        };
        let (corpus, qrels) = generate_synthetic(&cfg).map_err(|e| e.to_string())?;
        let first = FixturePaths::in_dir(&root.path().join(format!("{i}a")));
        let second = FixturePaths::in_dir(&root.path().join(format!("{i}b")));
        write_fixture(&first, &corpus, &qrels, "rt").map_err(|e| e.to_string())?;
        let (back, back_qrels) =
            read_fixture(&first, DEFAULT_PROTECTED_THRESHOLD).map_err(|e| e.to_string())?;
        write_fixture(&second, &back, &back_qrels, "rt").map_err(|e| e.to_string())?;
        for (a, b) in [
            (&first.run, &second.run),
            (&first.sigma, &second.sigma),
            (&first.neutrality, &second.neutrality),
            (&first.qrels, &second.qrels),
        ] {
            let (x, y) = (fs::read(a).unwrap(), fs::read(b).unwrap());
            ensure!(
                x == y,
                "fixture {i}: {} differs after round trip",
                a.file_name().unwrap().to_string_lossy()
            );
        }
    }
    Ok("50 fixtures x 4 files byte-identical".into())
}
