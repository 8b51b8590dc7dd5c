//! FA*IR: ranked group fairness through per-prefix minimum protected counts.

use statrs::distribution::{Binomial, DiscreteCDF};

use crate::candidates::{GroupLabel, QueryCandidates, Ranking};
use crate::error::{Error, Result};

pub const DEFAULT_SIGNIFICANCE: f64 = 0.1;

/// Minimum number of protected documents in every top-k prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct MTable {
    p: f64,
    significance: f64,
    /// `required[k - 1]` is the minimum for the top-`k` prefix.
    required: Vec<usize>,
}

impl MTable {
    /// Wraps an explicit table, checking `required[k] <= k` and unit steps.
    pub fn from_required(p: f64, significance: f64, required: Vec<usize>) -> Result<Self> {
        validate_params(p, significance)?;
        let mut prev = 0usize;
        for (i, &m) in required.iter().enumerate() {
            let k = i + 1;
            if m > k {
                return Err(Error::invalid(format!(
                    "m-table entry {m} exceeds prefix length {k}"
                )));
            }
            if m < prev || m - prev > 1 {
                return Err(Error::invalid(format!(
                    "m-table must grow by 0 or 1 per rank (k = {k}: {prev} -> {m})"
                )));
            }
            prev = m;
        }
        Ok(MTable {
            p,
            significance,
            required,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn significance(&self) -> f64 {
        self.significance
    }

    pub fn k_max(&self) -> usize {
        self.required.len()
    }

    /// Requirement for the top-`k` prefix (`k >= 1`).
    pub fn required_at(&self, k: usize) -> Option<usize> {
        k.checked_sub(1).and_then(|i| self.required.get(i)).copied()
    }

    pub fn required(&self) -> &[usize] {
        &self.required
    }
}

fn validate_params(p: f64, significance: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!(
            "protected proportion p must lie in [0, 1], got {p}"
        )));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::invalid(format!(
            "significance must lie in (0, 1), got {significance}"
        )));
    }
    Ok(())
}

/// `required[k]` = smallest `m` with `BinomialCDF(m; k, p) >= significance`.
pub fn compute_m_table(k_max: usize, p: f64, significance: f64) -> Result<MTable> {
    validate_params(p, significance)?;
    if k_max == 0 {
        return Err(Error::invalid("m-table needs k_max >= 1"));
    }
    let mut required = Vec::with_capacity(k_max);
    let mut m = 0u64;
    for k in 1..=k_max as u64 {
        let dist = Binomial::new(p, k).map_err(|e| Error::invalid(format!("binomial: {e}")))?;
        // the quantile never decreases in k, so resume from the previous answer
        while m < k && dist.cdf(m) < significance {
            m += 1;
        }
        required.push(m as usize);
    }
    MTable::from_required(p, significance, required)
}

/// Greedy merge of the protected and non-protected queues (each in mean-score order).
///
/// At every prefix the protected head is taken when the prefix would otherwise fall
/// short of `min(required[k], |protected|)`, or when it scores higher than the
/// non-protected head; equal scores fall back to the original rank.
pub fn fastar_rerank(candidates: &QueryCandidates, table: &MTable) -> Result<Ranking> {
    let n = candidates.len();
    if table.k_max() < n {
        return Err(Error::invalid(format!(
            "m-table covers {} ranks but query {} has {n} candidates",
            table.k_max(),
            candidates.query_id()
        )));
    }
    let groups = candidates.groups()?;
    let cands = candidates.candidates();
    let (protected, other): (Vec<usize>, Vec<usize>) = candidates
        .original_order()
        .into_iter()
        .partition(|&i| groups[i] == GroupLabel::Protected);
    let total_protected = protected.len();

    let (mut pi, mut ni) = (0usize, 0usize);
    let mut order = Vec::with_capacity(n);
    for k in 1..=n {
        let need = table.required[k - 1].min(total_protected);
        let take_protected = match (protected.get(pi), other.get(ni)) {
            (Some(_), None) => true,
            (None, _) => false,
            (Some(&p), Some(&o)) => {
                pi < need || {
                    let (cp, co) = (&cands[p], &cands[o]);
                    cp.mu > co.mu || (cp.mu == co.mu && cp.original_rank < co.original_rank)
                }
            }
        };
        if take_protected {
            order.push(protected[pi]);
            pi += 1;
        } else {
            order.push(other[ni]);
            ni += 1;
        }
    }
    Ok(Ranking::from_order(
        candidates.query_id(),
        order.into_iter().map(|i| cands[i].doc_id.clone()),
    ))
}
