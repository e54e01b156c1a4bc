//! One-sided two-sample tests and the chi-square goodness-of-fit test.

use super::special::{chi_square_sf, normal_sf, student_t_sf};
use super::{Method, TestOutcome};
use crate::error::{Error, Result};
use std::cmp::Ordering;

/// Pooled sample size up to which the Mann–Whitney p-value is exact.
pub const MWU_EXACT_MAX_TOTAL: usize = 12;

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

fn finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Input(format!("non-finite value in {name}")))
    }
}

/// Welch's unequal-variance t-test, H1: mean(a) > mean(b).
///
/// Degrees of freedom follow Welch–Satterthwaite. Fails when both samples have
/// zero variance, since the statistic is then undefined or infinite.
pub fn welch_t_one_sided(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Input(
            "welch t-test needs at least 2 values per sample".into(),
        ));
    }
    finite("a", a)?;
    finite("b", b)?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = va / na;
    let sb = vb / nb;
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return Err(Error::Degenerate(format!(
            "both samples have zero variance (means {ma} and {mb})"
        )));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TestOutcome {
        statistic: t,
        p_value: student_t_sf(t, df).clamp(0.0, 1.0),
        method: Method::Welch,
    })
}

/// Midranks of the pooled sample; also returns Σ(t³ − t) over tie groups.
pub(crate) fn midranks(pooled: &[f64]) -> (Vec<f64>, f64) {
    let n = pooled.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| pooled[i].partial_cmp(&pooled[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; n];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && pooled[idx[j]] == pooled[idx[i]] {
            j += 1;
        }
        // positions i..j share rank (i+1 + j) / 2
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = r;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    (ranks, tie_term)
}

/// Number of orderings of `n1` a's and `n2` b's with each value of U
/// (count of (a, b) pairs where a ranks above b).
pub(crate) fn mwu_null_counts(n1: usize, n2: usize) -> Vec<u64> {
    // table[i][j] is the distribution for i a's and j b's.
    let max_u = n1 * n2;
    let mut table: Vec<Vec<Vec<u64>>> = vec![vec![Vec::new(); n2 + 1]; n1 + 1];
    for i in 0..=n1 {
        for j in 0..=n2 {
            let mut dist = vec![0u64; i * j + 1];
            if i == 0 || j == 0 {
                dist[0] = 1;
            } else {
                // The largest element is either an a (beating all j b's) or a b.
                for (u, c) in table[i - 1][j].iter().enumerate() {
                    dist[u + j] += c;
                }
                for (u, c) in table[i][j - 1].iter().enumerate() {
                    dist[u] += c;
                }
            }
            table[i][j] = dist;
        }
    }
    let out = std::mem::take(&mut table[n1][n2]);
    debug_assert_eq!(out.len(), max_u + 1);
    out
}

/// Mann–Whitney U test, H1: a is stochastically greater than b.
///
/// U counts pairs (a_i, b_j) with a_i > b_j, ties counting one half. With no ties
/// and a pooled size of at most 12 the p-value P(U ≥ U_obs) is exact; otherwise
/// the normal approximation with tie and continuity corrections is used.
pub fn mann_whitney_one_sided(a: &[f64], b: &[f64]) -> Result<TestOutcome> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Input("mann-whitney needs non-empty samples".into()));
    }
    finite("a", a)?;
    finite("b", b)?;
    let (n1, n2) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, tie_term) = midranks(&pooled);
    let rank_sum: f64 = ranks[..n1].iter().sum();
    let u = rank_sum - (n1 * (n1 + 1)) as f64 / 2.0;

    let n = (n1 + n2) as f64;
    if tie_term == 0.0 && n1 + n2 <= MWU_EXACT_MAX_TOTAL {
        let counts = mwu_null_counts(n1, n2);
        let total: u64 = counts.iter().sum();
        let u_obs = u.round() as usize;
        let tail: u64 = counts[u_obs..].iter().sum();
        return Ok(TestOutcome {
            statistic: u,
            p_value: tail as f64 / total as f64,
            method: Method::Exact,
        });
    }

    let (f1, f2) = (n1 as f64, n2 as f64);
    let mu = f1 * f2 / 2.0;
    let var = f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p = if var <= 0.0 {
        // every value tied: no evidence in either direction
        1.0
    } else {
        normal_sf((u - mu - 0.5) / var.sqrt())
    };
    Ok(TestOutcome {
        statistic: u,
        p_value: p.clamp(0.0, 1.0),
        method: Method::NormalApprox,
    })
}

/// Result of [`chi_square_uniform`]. `underpowered` flags totals below five
/// expected counts per category; the test still runs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChiSquareOutcome {
    pub outcome: TestOutcome,
    pub underpowered: bool,
}

/// Pearson chi-square goodness-of-fit against the uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> Result<ChiSquareOutcome> {
    let k = counts.len();
    if k < 2 {
        return Err(Error::Input(
            "chi-square needs at least 2 categories".into(),
        ));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Input(
            "chi-square needs a positive total count".into(),
        ));
    }
    let expected = total as f64 / k as f64;
    let stat: f64 = counts
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    Ok(ChiSquareOutcome {
        outcome: TestOutcome {
            statistic: stat,
            p_value: chi_square_sf(stat, (k - 1) as f64).clamp(0.0, 1.0),
            method: Method::ChiSquare,
        },
        underpowered: (total as f64) < 5.0 * k as f64,
    })
}
