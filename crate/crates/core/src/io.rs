//! Whitespace-separated text formats.
//!
//! | file       | columns                              |
//! |------------|--------------------------------------|
//! | run        | `query_id Q0 doc_id rank score tag`  |
//! | sigma      | `query_id doc_id sigma`              |
//! | neutrality | `doc_id neutrality`                  |
//! | qrels      | `query_id 0 doc_id grade`            |
//! | features   | `query_id doc_id v1 ... vd`          |
//! | posterior  | `theta d v1..vd` / `fisher d v1..vd` / optional `damping x` |
//!
//! Every parser skips blank lines and lines starting with `#`. Formatters emit a
//! canonical order, so formatting a parsed file reproduces it byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::candidates::{assign_groups, NeutralityScore, QueryCandidates, Ranking};
use crate::error::{Error, Result};
use crate::metrics::RelevanceJudgments;
use crate::uncertainty::{DiagonalFisher, FeatureVector, LastLayerPosterior};

pub type SigmaMap = BTreeMap<(String, String), f64>;
pub type NeutralityMap = BTreeMap<String, NeutralityScore>;
pub type FeatureSet = Vec<(String, Vec<(String, FeatureVector)>)>;

pub const DEFAULT_RUN_TAG: &str = "pufr";

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

/// Non-empty, non-comment lines split into fields, with 1-based line numbers.
fn data_lines<'a>(text: &'a str, path: &'a Path) -> Lines<'a> {
    Lines {
        path,
        inner: text.lines().enumerate(),
    }
}

impl<'a> Iterator for Lines<'a> {
    type Item = (usize, Vec<&'a str>);

    fn next(&mut self) -> Option<Self::Item> {
        for (i, line) in self.inner.by_ref() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            return Some((i + 1, trimmed.split_whitespace().collect()));
        }
        None
    }
}

impl Lines<'_> {
    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            message: message.into(),
        }
    }

    fn expect_columns(&self, line: usize, fields: &[&str], n: usize) -> Result<()> {
        if fields.len() == n {
            Ok(())
        } else {
            Err(self.error(
                line,
                format!("expected {n} columns, found {}", fields.len()),
            ))
        }
    }

    fn float(&self, line: usize, field: &str, what: &str) -> Result<f64> {
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(line, format!("invalid {what} `{field}`"))),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    fs::write(path, text).map_err(io_err)
}

fn inline() -> PathBuf {
    PathBuf::from("<input>")
}

// ---------------------------------------------------------------------------
// run files

pub fn parse_run_file(path: &Path) -> Result<Vec<QueryCandidates>> {
    parse_run(&read(path)?, path)
}

pub fn parse_run_str(text: &str) -> Result<Vec<QueryCandidates>> {
    parse_run(text, &inline())
}

/// Groups lines by query (in order of first appearance); original ranks come from the
/// scores, not from the rank column.
fn parse_run(text: &str, path: &Path) -> Result<Vec<QueryCandidates>> {
    let mut lines = data_lines(text, path);
    let mut queries: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashMap<(String, String), usize> = HashMap::new();
    while let Some((no, fields)) = lines.next() {
        lines.expect_columns(no, &fields, 6)?;
        let (qid, doc) = (fields[0], fields[2]);
        fields[3]
            .parse::<usize>()
            .map_err(|_| lines.error(no, format!("invalid rank `{}`", fields[3])))?;
        let score = lines.float(no, fields[4], "score")?;
        if let Some(first) = seen.insert((qid.to_string(), doc.to_string()), no) {
            return Err(lines.error(
                no,
                format!("duplicate document {doc} for query {qid} (first on line {first})"),
            ));
        }
        let slot = *index.entry(qid.to_string()).or_insert_with(|| {
            queries.push((qid.to_string(), Vec::new()));
            queries.len() - 1
        });
        queries[slot].1.push((doc.to_string(), score));
    }
    if queries.is_empty() {
        log::warn!("run file {} contains no records", path.display());
    }
    queries
        .into_iter()
        .map(|(qid, docs)| QueryCandidates::from_scores(qid, docs))
        .collect()
}

/// Run lines for candidate sets: original rank and mean score.
pub fn format_run(corpus: &[QueryCandidates], tag: &str) -> String {
    let mut out = String::new();
    for q in corpus {
        let cands = q.candidates();
        for i in q.original_order() {
            let c = &cands[i];
            let _ = writeln!(
                out,
                "{} Q0 {} {} {} {tag}",
                q.query_id(),
                c.doc_id,
                c.original_rank,
                c.mu
            );
        }
    }
    out
}

/// Run lines for re-ranked output: list position and effective score.
pub fn format_rankings(rankings: &[Ranking], tag: &str) -> String {
    let mut out = String::new();
    for r in rankings {
        for (pos, e) in r.entries.iter().enumerate() {
            let _ = writeln!(
                out,
                "{} Q0 {} {} {} {tag}",
                r.query_id,
                e.doc_id,
                pos + 1,
                e.score
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------
// sigma files

pub fn parse_sigma_file(path: &Path) -> Result<SigmaMap> {
    parse_sigma(&read(path)?, path)
}

pub fn parse_sigma_str(text: &str) -> Result<SigmaMap> {
    parse_sigma(text, &inline())
}

fn parse_sigma(text: &str, path: &Path) -> Result<SigmaMap> {
    let mut lines = data_lines(text, path);
    let mut out = SigmaMap::new();
    while let Some((no, fields)) = lines.next() {
        lines.expect_columns(no, &fields, 3)?;
        let sigma = lines.float(no, fields[2], "sigma")?;
        if sigma < 0.0 {
            return Err(lines.error(no, format!("sigma must be >= 0, got {sigma}")));
        }
        let key = (fields[0].to_string(), fields[1].to_string());
        if out.insert(key, sigma).is_some() {
            return Err(lines.error(
                no,
                format!("duplicate sigma for ({}, {})", fields[0], fields[1]),
            ));
        }
    }
    Ok(out)
}

pub fn format_sigma(sigmas: &SigmaMap) -> String {
    let mut out = String::new();
    for ((q, d), s) in sigmas {
        let _ = writeln!(out, "{q} {d} {s}");
    }
    out
}

/// Collects the sigmas present in a corpus.
pub fn sigma_map(corpus: &[QueryCandidates]) -> SigmaMap {
    corpus
        .iter()
        .flat_map(|q| {
            q.candidates().iter().filter_map(move |c| {
                c.sigma
                    .map(|s| ((q.query_id().to_string(), c.doc_id.clone()), s))
            })
        })
        .collect()
}

/// Fills sigma for every candidate; a candidate without an entry is an error naming the pair.
pub fn attach_sigma(
    corpus: Vec<QueryCandidates>,
    sigmas: &SigmaMap,
) -> Result<Vec<QueryCandidates>> {
    corpus
        .into_iter()
        .map(|q| {
            q.try_map(|qid, mut c| {
                let key = (qid.to_string(), c.doc_id.clone());
                c.sigma = Some(*sigmas.get(&key).ok_or_else(|| Error::MissingSigma {
                    query_id: key.0.clone(),
                    doc_id: key.1.clone(),
                })?);
                Ok(c)
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// neutrality files

pub fn parse_neutrality_file(path: &Path) -> Result<NeutralityMap> {
    parse_neutrality(&read(path)?, path)
}

pub fn parse_neutrality_str(text: &str) -> Result<NeutralityMap> {
    parse_neutrality(text, &inline())
}

fn parse_neutrality(text: &str, path: &Path) -> Result<NeutralityMap> {
    let mut lines = data_lines(text, path);
    let mut out = NeutralityMap::new();
    while let Some((no, fields)) = lines.next() {
        lines.expect_columns(no, &fields, 2)?;
        let value = lines.float(no, fields[1], "neutrality")?;
        let score = NeutralityScore::new(value).map_err(|e| lines.error(no, e.to_string()))?;
        match out.get(fields[0]) {
            Some(prev) if *prev != score => {
                return Err(lines.error(
                    no,
                    format!(
                        "conflicting neutrality for {}: {} vs {value}",
                        fields[0],
                        prev.value()
                    ),
                ))
            }
            _ => {
                out.insert(fields[0].to_string(), score);
            }
        }
    }
    Ok(out)
}

pub fn format_neutrality(neutrality: &NeutralityMap) -> String {
    let mut out = String::new();
    for (d, n) in neutrality {
        let _ = writeln!(out, "{d} {}", n.value());
    }
    out
}

/// Collects the neutrality scores present in a corpus (doc ids are global).
pub fn neutrality_map(corpus: &[QueryCandidates]) -> NeutralityMap {
    corpus
        .iter()
        .flat_map(|q| q.candidates().iter())
        .filter_map(|c| c.neutrality.map(|n| (c.doc_id.clone(), n)))
        .collect()
}

/// Fills neutrality for every candidate and assigns groups at `protected_threshold`.
pub fn attach_neutrality(
    corpus: Vec<QueryCandidates>,
    neutrality: &NeutralityMap,
    protected_threshold: f64,
) -> Result<Vec<QueryCandidates>> {
    corpus
        .into_iter()
        .map(|q| {
            let q =
                q.try_map(|qid, mut c| {
                    c.neutrality = Some(*neutrality.get(&c.doc_id).ok_or_else(|| {
                        Error::MissingNeutrality {
                            query_id: qid.to_string(),
                            doc_id: c.doc_id.clone(),
                        }
                    })?);
                    Ok(c)
                })?;
            assign_groups(q, protected_threshold)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// qrels

pub fn parse_qrels_file(path: &Path) -> Result<RelevanceJudgments> {
    parse_qrels(&read(path)?, path)
}

pub fn parse_qrels_str(text: &str) -> Result<RelevanceJudgments> {
    parse_qrels(text, &inline())
}

fn parse_qrels(text: &str, path: &Path) -> Result<RelevanceJudgments> {
    let mut lines = data_lines(text, path);
    let mut out = RelevanceJudgments::new();
    while let Some((no, fields)) = lines.next() {
        lines.expect_columns(no, &fields, 4)?;
        let grade: i64 = fields[3]
            .parse()
            .map_err(|_| lines.error(no, format!("invalid grade `{}`", fields[3])))?;
        let grade = u32::try_from(grade)
            .map_err(|_| lines.error(no, format!("grade must be >= 0, got {grade}")))?;
        out.insert(fields[0], fields[2], grade)
            .map_err(|e| lines.error(no, e.to_string()))?;
    }
    Ok(out)
}

pub fn format_qrels(judgments: &RelevanceJudgments) -> String {
    let mut out = String::new();
    for (q, d, g) in judgments.iter() {
        let _ = writeln!(out, "{q} 0 {d} {g}");
    }
    out
}

// ---------------------------------------------------------------------------
// features and posterior

pub fn parse_features_file(path: &Path) -> Result<FeatureSet> {
    parse_features(&read(path)?, path)
}

pub fn parse_features_str(text: &str) -> Result<FeatureSet> {
    parse_features(text, &inline())
}

fn parse_features(text: &str, path: &Path) -> Result<FeatureSet> {
    let mut lines = data_lines(text, path);
    let mut out: FeatureSet = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut dim = None;
    while let Some((no, fields)) = lines.next() {
        if fields.len() < 3 {
            return Err(lines.error(no, "expected `query_id doc_id v1 ... vd`"));
        }
        let d = fields.len() - 2;
        if *dim.get_or_insert(d) != d {
            return Err(lines.error(
                no,
                format!(
                    "feature dimension {d} differs from earlier lines ({})",
                    dim.unwrap()
                ),
            ));
        }
        let values = fields[2..]
            .iter()
            .map(|f| lines.float(no, f, "feature value"))
            .collect::<Result<Vec<_>>>()?;
        let slot = *index.entry(fields[0].to_string()).or_insert_with(|| {
            out.push((fields[0].to_string(), Vec::new()));
            out.len() - 1
        });
        let docs = &mut out[slot].1;
        if docs.iter().any(|(doc, _)| doc == fields[1]) {
            return Err(lines.error(
                no,
                format!("duplicate document {} for query {}", fields[1], fields[0]),
            ));
        }
        docs.push((fields[1].to_string(), FeatureVector::new(values)?));
    }
    Ok(out)
}

pub fn format_features(features: &FeatureSet) -> String {
    let mut out = String::new();
    for (q, docs) in features {
        for (d, h) in docs {
            let _ = write!(out, "{q} {d}");
            for v in h.values() {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_posterior_file(path: &Path) -> Result<LastLayerPosterior> {
    parse_posterior(&read(path)?, path)
}

pub fn parse_posterior_str(text: &str) -> Result<LastLayerPosterior> {
    parse_posterior(text, &inline())
}

fn parse_posterior(text: &str, path: &Path) -> Result<LastLayerPosterior> {
    let mut lines = data_lines(text, path);
    let mut theta = None;
    let mut fisher = None;
    let mut damping = 0.0;
    let mut last = 0;
    while let Some((no, fields)) = lines.next() {
        last = no;
        match fields[0] {
            "theta" | "fisher" => {
                let d: usize = fields
                    .get(1)
                    .and_then(|d| d.parse().ok())
                    .ok_or_else(|| lines.error(no, "expected a dimension after the keyword"))?;
                lines.expect_columns(no, &fields, d + 2)?;
                let values = fields[2..]
                    .iter()
                    .map(|f| lines.float(no, f, "value"))
                    .collect::<Result<Vec<_>>>()?;
                if fields[0] == "theta" {
                    theta = Some(values);
                } else {
                    fisher = Some(values);
                }
            }
            "damping" => {
                lines.expect_columns(no, &fields, 2)?;
                damping = lines.float(no, fields[1], "damping")?;
            }
            other => return Err(lines.error(no, format!("unknown posterior line `{other}`"))),
        }
    }
    let theta = theta.ok_or_else(|| lines.error(last, "missing `theta` line"))?;
    let fisher = fisher.ok_or_else(|| lines.error(last, "missing `fisher` line"))?;
    let fisher =
        DiagonalFisher::new(fisher, damping).map_err(|e| lines.error(last, e.to_string()))?;
    LastLayerPosterior::new(theta, fisher).map_err(|e| lines.error(last, e.to_string()))
}

/// Writes the undamped Fisher diagonal and the damping separately.
pub fn format_posterior(posterior: &LastLayerPosterior) -> String {
    let mut out = String::new();
    let row = |out: &mut String, key: &str, values: &[f64]| {
        let _ = write!(out, "{key} {}", values.len());
        for v in values {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    };
    row(&mut out, "theta", posterior.theta_map());
    row(&mut out, "fisher", posterior.fisher().raw());
    let _ = writeln!(out, "damping {}", posterior.damping());
    out
}

// ---------------------------------------------------------------------------
// fixtures

/// A complete on-disk corpus: run, sigma, neutrality and qrels files in one directory.
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub run: PathBuf,
    pub sigma: PathBuf,
    pub neutrality: PathBuf,
    pub qrels: PathBuf,
}

impl FixturePaths {
    pub fn in_dir(dir: &Path) -> Self {
        FixturePaths {
            run: dir.join("run.txt"),
            sigma: dir.join("sigma.txt"),
            neutrality: dir.join("neutrality.txt"),
            qrels: dir.join("qrels.txt"),
        }
    }
}

pub fn write_fixture(
    paths: &FixturePaths,
    corpus: &[QueryCandidates],
    judgments: &RelevanceJudgments,
    tag: &str,
) -> Result<()> {
    write_text(&paths.run, &format_run(corpus, tag))?;
    write_text(&paths.sigma, &format_sigma(&sigma_map(corpus)))?;
    write_text(
        &paths.neutrality,
        &format_neutrality(&neutrality_map(corpus)),
    )?;
    write_text(&paths.qrels, &format_qrels(judgments))
}

/// Loads and joins a fixture; groups are assigned at `protected_threshold`.
pub fn read_fixture(
    paths: &FixturePaths,
    protected_threshold: f64,
) -> Result<(Vec<QueryCandidates>, RelevanceJudgments)> {
    let corpus = parse_run_file(&paths.run)?;
    let corpus = attach_sigma(corpus, &parse_sigma_file(&paths.sigma)?)?;
    let corpus = attach_neutrality(
        corpus,
        &parse_neutrality_file(&paths.neutrality)?,
        protected_threshold,
    )?;
    Ok((corpus, parse_qrels_file(&paths.qrels)?))
}
