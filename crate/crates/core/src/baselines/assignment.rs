//! Dense Hungarian method for the square assignment problem.

use crate::error::{Error, Result};

/// Returns `perm` with `perm[row] = column` maximising `sum benefit[row][perm[row]]`.
///
/// O(n^3) shortest augmenting path with row/column potentials.
pub fn hungarian_assign(benefit: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = benefit.len();
    for (i, row) in benefit.iter().enumerate() {
        if row.len() != n {
            return Err(Error::invalid(format!(
                "assignment matrix must be square: row {i} has {} columns, expected {n}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "assignment benefit {v} in row {i}"
            )));
        }
    }
    Ok(solve_min(n, |i, j| -benefit[i][j]))
}

/// Minimum-cost assignment over an implicit `n x n` cost function.
pub(crate) fn solve_min(n: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    // 1-based rows/columns; column 0 is the virtual start of each augmenting path.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    perm
}
