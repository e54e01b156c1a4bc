//! Kendall tau-b in O(n log n) (Knight's algorithm).

use crate::error::{Error, Result};
use std::cmp::Ordering;

/// Integer pair counts from which tau-b is formed.
///
/// `total` is n(n−1)/2, `x_ties` / `y_ties` count pairs tied in x (resp. y),
/// including pairs tied in both. `net` is concordant minus discordant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub total: u64,
    pub x_ties: u64,
    pub y_ties: u64,
    pub net: i64,
}

impl PairCounts {
    /// tau-b = (C − D) / sqrt((P − Tx)(P − Ty)).
    pub fn tau_b(&self) -> Result<f64> {
        let dx = self.total - self.x_ties;
        let dy = self.total - self.y_ties;
        if dx == 0 || dy == 0 {
            return Err(Error::UndefinedCorrelation(
                "all values tied in one argument".into(),
            ));
        }
        let tau = self.net as f64 / ((dx as f64) * (dy as f64)).sqrt();
        Ok(tau.clamp(-1.0, 1.0))
    }
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "kendall tau needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Input(
            "kendall tau needs at least 2 observations".into(),
        ));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::Input("NaN in kendall tau input".into()));
    }
    Ok(())
}

fn tie_pairs(sorted: impl Iterator<Item = bool>) -> u64 {
    // `sorted` yields, for each adjacent position, whether it equals its predecessor.
    let mut total = 0u64;
    let mut run = 1u64;
    for same in sorted {
        if same {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Pair counts via sort + merge-sort inversion counting.
pub fn pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    check(x, y)?;
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .unwrap_or(Ordering::Equal)
            .then(y[a].partial_cmp(&y[b]).unwrap_or(Ordering::Equal))
    });

    let x_ties = tie_pairs(idx.windows(2).map(|w| x[w[0]] == x[w[1]]));
    let joint_ties = tie_pairs(
        idx.windows(2)
            .map(|w| x[w[0]] == x[w[1]] && y[w[0]] == y[w[1]]),
    );

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let swaps = merge_count(&mut ys);
    let y_ties = tie_pairs(ys.windows(2).map(|w| w[0] == w[1]));

    let total = (n as u64) * (n as u64 - 1) / 2;
    let net = total as i64 - x_ties as i64 - y_ties as i64 + joint_ties as i64 - 2 * swaps as i64;
    Ok(PairCounts {
        total,
        x_ties,
        y_ties,
        net,
    })
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64]) -> u64 {
    let n = v.len();
    let mut buf = vec![0.0; n];
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            if mid < hi {
                let (mut i, mut j, mut k) = (lo, mid, lo);
                while i < mid && j < hi {
                    if v[j] < v[i] {
                        buf[k] = v[j];
                        swaps += (mid - i) as u64;
                        j += 1;
                    } else {
                        buf[k] = v[i];
                        i += 1;
                    }
                    k += 1;
                }
                buf[k..k + (mid - i)].copy_from_slice(&v[i..mid]);
                k += mid - i;
                buf[k..k + (hi - j)].copy_from_slice(&v[j..hi]);
                v[lo..hi].copy_from_slice(&buf[lo..hi]);
            }
            lo += 2 * width;
        }
        width *= 2;
    }
    swaps
}

/// Kendall tau-b between `x` and `y`.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    pair_counts(x, y)?.tau_b()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_examples() {
        assert_eq!(kendall_tau(&[1., 2., 3.], &[1., 2., 3.]).unwrap(), 1.0);
        assert_eq!(kendall_tau(&[1., 2., 3.], &[3., 2., 1.]).unwrap(), -1.0);
        // C = 5, D = 1 over 6 pairs
        let c = pair_counts(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap();
        assert_eq!(
            c,
            PairCounts {
                total: 6,
                x_ties: 0,
                y_ties: 0,
                net: 4
            }
        );
        assert!((c.tau_b().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            kendall_tau(&[1., 1., 1.], &[1., 2., 3.]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(kendall_tau(&[1.], &[1.]), Err(Error::Input(_))));
        assert!(matches!(
            kendall_tau(&[1., 2.], &[1.]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn ties_match_scipy_reference() {
        // C = 7, D = 1, one x-tie, one y-tie: 6 / sqrt(9 * 9)
        let c = pair_counts(&[1., 2., 2., 3., 4.], &[1., 3., 2., 2., 5.]).unwrap();
        assert_eq!(
            c,
            PairCounts {
                total: 10,
                x_ties: 1,
                y_ties: 1,
                net: 6
            }
        );
        assert!((c.tau_b().unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }
}
