use itertools::Itertools;

use super::{binomial, RecoveryError, Result, COMBINATORIAL_BUDGET};
use crate::linalg::{least_squares, norm, CMatrix, CVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub x: CVector,
    pub support: Vec<usize>,
    pub residual: f64,
}

/// Best `k`-sparse least-squares fit, found by enumerating every support.
///
/// The first support in lexicographic order wins ties.
pub fn sparse_oracle(a: &CMatrix, y: &CVector, k: usize) -> Result<OracleSolution> {
    let m = a.cols();
    if a.rows() != y.len() {
        return Err(RecoveryError::DimensionMismatch {
            expected: a.rows(),
            got: y.len(),
        });
    }
    if k > m {
        return Err(RecoveryError::InvalidParameter(format!(
            "sparsity {k} exceeds {m} columns"
        )));
    }
    let count = binomial(m, k);
    if count > COMBINATORIAL_BUDGET {
        return Err(RecoveryError::BudgetExceeded {
            count,
            budget: COMBINATORIAL_BUDGET,
        });
    }
    let mut best: Option<OracleSolution> = None;
    for support in (0..m).combinations(k) {
        let sub = a.select_columns(&support);
        let coeffs = least_squares(&sub, y)?;
        let fit = sub.matvec(coeffs.as_slice());
        let residual = norm(
            &fit.iter()
                .zip(y.as_slice())
                .map(|(f, v)| f - v)
                .collect::<Vec<_>>(),
        );
        if best.as_ref().is_none_or(|b| residual < b.residual) {
            let mut x = vec![C64::new(0.0, 0.0); m];
            for (&col, &c) in support.iter().zip(coeffs.iter()) {
                x[col] = c;
            }
            best = Some(OracleSolution {
                x: CVector::from_vec_unchecked(x),
                support,
                residual,
            });
        }
    }
    Ok(best.expect("at least one support"))
}
