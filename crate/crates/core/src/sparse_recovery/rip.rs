use itertools::Itertools;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{binomial, RecoveryError, Result, COMBINATORIAL_BUDGET};
use crate::linalg::{hermitian_eigen, CMatrix, C64};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RipMode {
    Exhaustive,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub k: usize,
    /// Largest `|sigma^2 - 1|` over the checked submatrices. Exact over the
    /// family in exhaustive mode, a lower bound on the RIP constant otherwise.
    pub delta_lower: f64,
    pub mode: RipMode,
    /// Number of (support, row subset) pairs examined.
    pub supports_checked: u64,
    pub tau: f64,
}

/// Deviation of the Gram matrix spectrum from 1.
fn isometry_defect(gram: &CMatrix) -> Result<f64> {
    let values = hermitian_eigen(gram)?.values;
    let top = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let snap = |v: f64| {
        if v.abs() <= values.len() as f64 * f64::EPSILON * top {
            0.0
        } else {
            v
        }
    };
    let lo = snap(values[0]);
    let hi = snap(values[values.len() - 1]);
    Ok((1.0 - lo).max(hi - 1.0))
}

pub fn check_rip(
    a: &CMatrix,
    k: usize,
    mode: RipMode,
    samples: usize,
    seed: u64,
) -> Result<RipReport> {
    check_errip(a, k, 0.0, mode, samples, seed)
}

/// RIP constant at sparsity `k` of every submatrix keeping
/// `floor((1 - tau) rows)` rows.
pub fn check_errip(
    a: &CMatrix,
    k: usize,
    tau: f64,
    mode: RipMode,
    samples: usize,
    seed: u64,
) -> Result<RipReport> {
    let (rows, cols) = (a.rows(), a.cols());
    if k == 0 || k > cols {
        return Err(RecoveryError::InvalidParameter(format!(
            "sparsity {k} must lie in 1..={cols}"
        )));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(RecoveryError::InvalidParameter(format!(
            "tau = {tau} outside [0, 1)"
        )));
    }
    let keep = ((1.0 - tau) * rows as f64 + 1e-9).floor() as usize;
    let deleted = rows - keep;
    let mut delta: f64 = 0.0;
    let mut checked: u64 = 0;
    match mode {
        RipMode::Exhaustive => {
            let count = binomial(cols, k).saturating_mul(binomial(rows, deleted));
            if count > COMBINATORIAL_BUDGET {
                return Err(RecoveryError::BudgetExceeded {
                    count,
                    budget: COMBINATORIAL_BUDGET,
                });
            }
            for support in (0..cols).combinations(k) {
                let sub = a.select_columns(&support);
                let full = sub.gram();
                for removed in (0..rows).combinations(deleted) {
                    let g = without_rows(&full, &sub, &removed);
                    delta = delta.max(isometry_defect(&g)?);
                    checked += 1;
                }
            }
        }
        RipMode::Sampled => {
            if samples == 0 {
                return Err(RecoveryError::InvalidParameter(
                    "sampled mode needs at least one sample".into(),
                ));
            }
            let mut rng = rng::stream(seed, Stream::Sampling, 0);
            for _ in 0..samples {
                let mut support = sample(&mut rng, cols, k).into_vec();
                support.sort_unstable();
                let removed = sample(&mut rng, rows, deleted).into_vec();
                let sub = a.select_columns(&support);
                let g = without_rows(&sub.gram(), &sub, &removed);
                delta = delta.max(isometry_defect(&g)?);
                checked += 1;
            }
        }
    }
    Ok(RipReport {
        k,
        delta_lower: delta,
        mode,
        supports_checked: checked,
        tau,
    })
}

/// `full` minus the Gram contributions of the given rows of `sub`.
fn without_rows(full: &CMatrix, sub: &CMatrix, removed: &[usize]) -> CMatrix {
    if removed.is_empty() {
        return full.clone();
    }
    let k = sub.cols();
    CMatrix::from_fn(k, k, |i, j| {
        full[(i, j)]
            - removed
                .iter()
                .map(|&r| sub[(r, i)].conj() * sub[(r, j)])
                .sum::<C64>()
    })
}
