//! Brute-force oracles shared by the oracle tests and the acceptance suite.
#![allow(dead_code)]

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Kendall tau-b by visiting every pair; `None` when one side is constant.
pub fn brute_tau(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let (mut net, mut tx, mut ty, mut total) = (0i64, 0u64, 0u64, 0u64);
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 {
                tx += 1;
            }
            if dy == 0.0 {
                ty += 1;
            }
            if dx != 0.0 && dy != 0.0 {
                net += if (dx > 0.0) == (dy > 0.0) { 1 } else { -1 };
            }
        }
    }
    let (a, b) = (total - tx, total - ty);
    if a == 0 || b == 0 {
        return None;
    }
    Some((net as f64 / ((a as f64) * (b as f64)).sqrt()).clamp(-1.0, 1.0))
}

/// All ways of choosing `k` positions out of `n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Pairs (a, b) with a > b, ties counting one half.
pub fn u_stat(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            u += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    u
}

/// P(U ≥ U_obs) over every relabelling of the pooled sample.
pub fn mwu_by_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n1, n) = (a.len(), pooled.len());
    let u_obs = u_stat(a, b);
    let splits = combinations(n, n1);
    let hits = splits
        .iter()
        .filter(|idx| {
            let sa: Vec<f64> = idx.iter().map(|&i| pooled[i]).collect();
            let sb: Vec<f64> = (0..n)
                .filter(|i| !idx.contains(i))
                .map(|i| pooled[i])
                .collect();
            u_stat(&sa, &sb) >= u_obs
        })
        .count();
    hits as f64 / splits.len() as f64
}

/// Fraction of (positive, negative) pairs the positive wins, ties half.
pub fn auc_pairwise(pos: &[f64], neg: &[f64]) -> f64 {
    u_stat(pos, neg) / (pos.len() * neg.len()) as f64
}

/// Largest ECDF gap, evaluated at every observed value.
pub fn ks_pointwise(pos: &[f64], neg: &[f64]) -> f64 {
    let ecdf = |v: &[f64], x: f64| v.iter().filter(|&&s| s <= x).count() as f64 / v.len() as f64;
    pos.iter()
        .chain(neg)
        .map(|&x| (ecdf(pos, x) - ecdf(neg, x)).abs())
        .fold(0.0, f64::max)
}

pub fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random orthogonal matrix from Gram–Schmidt on Gaussian columns, row-major.
pub fn orthogonal(rng: &mut ChaCha8Rng, p: usize) -> Vec<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < p {
        let mut v = gaussian(rng, p);
        for c in &cols {
            let d: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    (0..p * p).map(|i| cols[i % p][i / p]).collect()
}

/// Row-major `n × p` times `p × r`.
pub fn matmul(a: &[f64], n: usize, p: usize, q: &[f64], r: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * r];
    for i in 0..n {
        for k in 0..p {
            let x = a[i * p + k];
            for j in 0..r {
                out[i * r + j] += x * q[k * r + j];
            }
        }
    }
    out
}
