//! Statistical primitives: Kendall tau-b, one-sided Welch t and Mann–Whitney U
//! tests, chi-square goodness of fit, and a numerically stable softmax.

mod hypothesis;
mod kendall;
pub mod special;

pub(crate) use hypothesis::midranks;
pub use hypothesis::{
    chi_square_uniform, mann_whitney_one_sided, welch_t_one_sided, ChiSquareOutcome,
    MWU_EXACT_MAX_TOTAL,
};
pub use kendall::{kendall_tau, pair_counts, PairCounts};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// How a p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    NormalApprox,
    Welch,
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub method: Method,
}

/// Softmax with max subtraction.
pub fn softmax_row(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Input("softmax of an empty row".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("softmax input must be finite".into()));
    }
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// In-place variant for callers that have already validated their input.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}
