//! l1 recovery from the phased vertex measurements, plus the brute-force
//! oracle and restricted-isometry checkers used to validate it.

mod bpdn;
mod oracle;
mod rip;

pub use bpdn::{
    solve_bpdn, solve_bpdn_with, BpdnOptions, BpdnProblem, BpdnSolution, MIN_ITERATION_CAP,
};
pub use oracle::{sparse_oracle, OracleSolution};
pub use rip::{check_errip, check_rip, RipMode, RipReport};

use thiserror::Error;

use crate::linalg::LinalgError;

/// Largest number of supports (times row subsets) an exhaustive search may visit.
pub const COMBINATORIAL_BUDGET: u128 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{count} combinations exceed the budget of {budget}; use a smaller instance or sampled mode")]
    BudgetExceeded { count: u128, budget: u128 },
    #[error("no convergence after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    NoConvergence {
        iterations: usize,
        primal: f64,
        dual: f64,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, RecoveryError>;

/// `sqrt(m / ((1 - tau) n_rows))`.
pub fn errip_scale(n_rows: usize, m: usize, tau: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&tau) {
        return Err(RecoveryError::InvalidParameter(format!(
            "tau = {tau} outside [0, 1)"
        )));
    }
    if n_rows == 0 {
        return Err(RecoveryError::InvalidParameter(
            "n_rows must be positive".into(),
        ));
    }
    Ok((m as f64 / ((1.0 - tau) * n_rows as f64)).sqrt())
}

/// `n choose k`, saturating at `u128::MAX`.
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}
