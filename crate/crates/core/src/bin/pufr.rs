use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use pufr::baselines::DEFAULT_DEPTH;
use pufr::io::{
    attach_neutrality, attach_sigma, format_rankings, format_run, format_sigma,
    parse_features_file, parse_neutrality_file, parse_posterior_file, parse_qrels_file,
    parse_run_file, parse_sigma_file, sigma_map, write_fixture, write_text, FixturePaths,
    DEFAULT_RUN_TAG,
};
use pufr::metrics::paired_t_test;
use pufr::sweep::{
    format_per_query_csv, format_tradeoff_csv, parse_per_query_csv, report_interval_analysis,
    run_sweep, select_best, Method, RerankContext, Reranker, SweepConfig,
};
use pufr::synth::{generate_synthetic, SyntheticConfig};
use pufr::uncertainty::{score_queries, McConfig, DEFAULT_MC_SAMPLES};
use pufr::{QueryCandidates, DEFAULT_PROTECTED_THRESHOLD};

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;

/// Uncertainty-aware fair re-ranking.
#[derive(Debug, Parser)]
#[command(name = "pufr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Re-rank a run file with one method at one alpha.
    Rerank(RerankArgs),
    /// Evaluate methods over an alpha grid and write the trade-off CSV.
    Sweep(SweepArgs),
    /// Median interval-overlap counts per rank.
    Intervals(IntervalArgs),
    /// Score candidates with a Laplace last-layer posterior (writes run.txt and sigma.txt).
    Laplace(LaplaceArgs),
    /// Generate a synthetic fixture (run, sigma, neutrality and qrels files).
    Synth(SynthArgs),
    /// Paired t-test between two per-query CSV files.
    Ttest(TtestArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// TREC run file (`qid Q0 docid rank score tag`).
    #[arg(long)]
    run: PathBuf,
    /// `qid docid sigma` lines.
    #[arg(long)]
    sigma: Option<PathBuf>,
    /// `docid neutrality` lines.
    #[arg(long)]
    neutrality: Option<PathBuf>,
    /// Documents with neutrality >= this are protected.
    #[arg(long, default_value_t = DEFAULT_PROTECTED_THRESHOLD)]
    protected_threshold: f64,
}

impl CorpusArgs {
    fn load(&self) -> pufr::Result<Vec<QueryCandidates>> {
        let mut corpus = parse_run_file(&self.run)?;
        if let Some(path) = &self.sigma {
            corpus = attach_sigma(corpus, &parse_sigma_file(path)?)?;
        }
        if let Some(path) = &self.neutrality {
            corpus = attach_neutrality(
                corpus,
                &parse_neutrality_file(path)?,
                self.protected_threshold,
            )?;
        }
        info!(
            "loaded {} queries from {}",
            corpus.len(),
            self.run.display()
        );
        Ok(corpus)
    }
}

#[derive(Debug, Args)]
struct RerankArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "pufr")]
    method: Method,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Window of the constrained optimiser.
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    #[arg(long, default_value = DEFAULT_RUN_TAG)]
    tag: String,
    /// Output run file (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    qrels: PathBuf,
    /// One or more methods, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "pufr")]
    method: Vec<Method>,
    /// Strictly increasing alphas, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4,8")]
    alpha_grid: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    depth: usize,
    /// Report the fairest row whose deepest nDCG is at least this.
    #[arg(long)]
    ndcg_floor: Option<f64>,
    /// Trade-off CSV (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write `query_id,value` CSVs per method, alpha and metric.
    #[arg(long)]
    per_query_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IntervalArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    sigma: PathBuf,
    /// Interval half-widths in units of sigma, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    alpha_grid: Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LaplaceArgs {
    /// `qid docid f1 f2 ...` lines.
    #[arg(long)]
    features: PathBuf,
    /// Posterior file with `theta`, `fisher` and optional `damping` lines.
    #[arg(long)]
    posterior: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = DEFAULT_RUN_TAG)]
    tag: String,
    /// Directory for run.txt and sigma.txt.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    queries: usize,
    #[arg(long, default_value_t = 50)]
    candidates: usize,
    /// Score bump given to non-protected documents, in units of the score spread.
    #[arg(long, default_value_t = 0.0)]
    bias: f64,
    #[arg(long, default_value_t = 0.3)]
    protected_fraction: f64,
    /// Share of non-protected documents that receive the bump.
    #[arg(long, default_value_t = 1.0)]
    biased_fraction: f64,
    /// Extra sigma per unit of bias bump.
    #[arg(long, default_value_t = 0.0)]
    sigma_bias_coupling: f64,
    /// How strongly the bump lowers a non-protected document's neutrality (0..1).
    #[arg(long, default_value_t = 0.0)]
    neutrality_bias_coupling: f64,
    /// Extra sigma at the bottom of each list.
    #[arg(long, default_value_t = 0.0)]
    sigma_rank_slope: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fixture directory.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct TtestArgs {
    /// `query_id,value` CSV of the treatment.
    a: PathBuf,
    /// `query_id,value` CSV of the reference.
    b: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Infeasible) => ExitCode::from(EXIT_INFEASIBLE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

enum Status {
    Done,
    Infeasible,
}

fn run(command: Command) -> pufr::Result<Status> {
    match command {
        Command::Rerank(a) => rerank(a),
        Command::Sweep(a) => sweep(a),
        Command::Intervals(a) => intervals(a),
        Command::Laplace(a) => laplace(a),
        Command::Synth(a) => synth(a),
        Command::Ttest(a) => ttest(a),
    }
}

fn emit(output: Option<&Path>, text: &str) -> pufr::Result<()> {
    match output {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn rerank(a: RerankArgs) -> pufr::Result<Status> {
    let corpus = a.corpus.load()?;
    let mut ctx = RerankContext::new(&corpus);
    ctx.depth = a.depth;
    let reranker = Reranker::new(a.method, a.alpha, &ctx)?;
    let mut rankings = Vec::with_capacity(corpus.len());
    let mut infeasible = Vec::new();
    for q in &corpus {
        let out = reranker.rerank(q)?;
        if out.infeasible {
            infeasible.push(q.query_id().to_string());
        }
        rankings.push(out.ranking);
    }
    emit(a.output.as_deref(), &format_rankings(&rankings, &a.tag))?;
    Ok(report_infeasible(&infeasible))
}

fn report_infeasible(queries: &[String]) -> Status {
    if queries.is_empty() {
        Status::Done
    } else {
        warn!(
            "fairness floor unreachable for {} queries (first: {})",
            queries.len(),
            queries[0]
        );
        Status::Infeasible
    }
}

fn sweep(a: SweepArgs) -> pufr::Result<Status> {
    let corpus = a.corpus.load()?;
    let qrels = parse_qrels_file(&a.qrels)?;
    // reject a bad (method, alpha) pair before any method runs
    let mut ctx = RerankContext::new(&corpus);
    ctx.depth = a.depth;
    for &method in &a.method {
        for &alpha in &a.alpha_grid {
            Reranker::new(method, alpha, &ctx)?;
        }
    }
    let mut records = Vec::new();
    let mut infeasible = Vec::new();
    for &method in &a.method {
        let mut cfg = SweepConfig::new(method, a.alpha_grid.clone());
        cfg.depth = a.depth;
        let out = run_sweep(&corpus, &qrels, &cfg)?;
        if let Some(dir) = &a.per_query_dir {
            for (rec, eval) in out.records.iter().zip(&out.evaluations) {
                let metrics = eval
                    .ndcg
                    .iter()
                    .map(|(k, v)| (format!("ndcg_cut_{k}"), v))
                    .chain(eval.nfairr.iter().map(|(k, v)| (format!("nfairr{k}"), v)));
                for (name, values) in metrics {
                    let file = dir.join(format!("{}_{}_{name}.csv", rec.method, rec.alpha));
                    write_text(&file, &format_per_query_csv(values)?)?;
                }
            }
        }
        for (rec, eval) in out.records.iter().zip(&out.evaluations) {
            infeasible.extend(
                eval.infeasible_queries
                    .iter()
                    .map(|q| format!("{q} ({} {})", rec.method, rec.alpha)),
            );
        }
        records.extend(out.records);
    }
    emit(a.output.as_deref(), &format_tradeoff_csv(&records)?)?;
    if let Some(floor) = a.ndcg_floor {
        match select_best(&records, floor) {
            Some(r) => eprintln!("selected: method={} alpha={}", r.method, r.alpha),
            None => eprintln!("selected: none (no row reaches nDCG floor {floor})"),
        }
    }
    Ok(report_infeasible(&infeasible))
}

fn intervals(a: IntervalArgs) -> pufr::Result<Status> {
    let corpus = attach_sigma(parse_run_file(&a.run)?, &parse_sigma_file(&a.sigma)?)?;
    emit(
        a.output.as_deref(),
        &report_interval_analysis(&corpus, &a.alpha_grid)?,
    )?;
    Ok(Status::Done)
}

fn laplace(a: LaplaceArgs) -> pufr::Result<Status> {
    let features = parse_features_file(&a.features)?;
    let posterior = parse_posterior_file(&a.posterior)?;
    let corpus = score_queries(&posterior, &features, &McConfig::new(a.samples, a.seed)?)?;
    write_text(&a.output.join("run.txt"), &format_run(&corpus, &a.tag))?;
    write_text(
        &a.output.join("sigma.txt"),
        &format_sigma(&sigma_map(&corpus)),
    )?;
    info!(
        "scored {} queries into {}",
        corpus.len(),
        a.output.display()
    );
    Ok(Status::Done)
}

fn synth(a: SynthArgs) -> pufr::Result<Status> {
    let cfg = SyntheticConfig {
        n_queries: a.queries,
        n_candidates: a.candidates,
        bias_strength: a.bias,
        protected_fraction: a.protected_fraction,
        biased_fraction: a.biased_fraction,
        sigma_bias_coupling: a.sigma_bias_coupling,
        sigma_rank_slope: a.sigma_rank_slope,
        neutrality_bias_coupling: a.neutrality_bias_coupling,
        seed: a.seed,
        ..Default::default()
    };
    let (corpus, qrels) = generate_synthetic(&cfg)?;
    fs::create_dir_all(&a.output).map_err(|source| pufr::Error::Io {
        path: a.output.clone(),
        source,
    })?;
    write_fixture(
        &FixturePaths::in_dir(&a.output),
        &corpus,
        &qrels,
        DEFAULT_RUN_TAG,
    )?;
    Ok(Status::Done)
}

fn ttest(a: TtestArgs) -> pufr::Result<Status> {
    let r = paired_t_test(&parse_per_query_csv(&a.a)?, &parse_per_query_csv(&a.b)?)?;
    println!(
        "t={} df={} p={}",
        r.t_statistic, r.degrees_of_freedom, r.p_value
    );
    Ok(Status::Done)
}
