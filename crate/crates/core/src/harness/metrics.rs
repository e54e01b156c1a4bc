use crate::error::{Error, Result};
use crate::stats::midranks;
use serde::{Deserialize, Serialize};

/// A score for one model pair with its ground truth (`true` = same lineage).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub pair_id: String,
    pub score: f64,
    pub label: bool,
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn roc_auc(scores: &[LabeledScore]) -> Result<f64> {
    if scores.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::Metric("scores must be finite".into()));
    }
    let n_pos = scores.iter().filter(|s| s.label).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let (ranks, _) = midranks(&values);
    let rank_sum: f64 = ranks
        .iter()
        .zip(scores)
        .filter(|(_, s)| s.label)
        .map(|(r, _)| r)
        .sum();
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Largest gap between the empirical CDFs of two samples.
pub fn ks_statistic(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Metric(
            "KS statistic needs two nonempty samples".into(),
        ));
    }
    if pos.iter().chain(neg).any(|v| v.is_nan()) {
        return Err(Error::Metric("scores must not be NaN".into()));
    }
    let mut a = pos.to_vec();
    let mut b = neg.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut best) = (0usize, 0usize, 0.0f64);
    while i < a.len() || j < b.len() {
        // advance past every copy of the next smallest value in both samples
        let x = match (a.get(i), b.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    Ok(best)
}
