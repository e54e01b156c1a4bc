//! Analytic gradients against central finite differences along random
//! directions, per tensor and for the whole parameter vector.

use super::train::loss_and_grads;
use super::*;
use crate::rng;

fn setup(arch: ArchFamily) -> (ModelParams, Vec<u32>, Vec<u32>) {
    let cfg = ModelConfig {
        arch_family: arch,
        n_layers: 2,
        n_heads: 2,
        d_model: 16,
        d_ff: 24,
        vocab_size: 23,
        max_seq_len: 8,
        ..ModelConfig::desk()
    };
    let mut p = init_model(&cfg, 5).unwrap();
    // larger weights and non-trivial gains/biases so every path carries signal
    let mut r = rng::substream(77, 0);
    for t in p.tensors.iter_mut() {
        for v in t.data.iter_mut() {
            *v = if t.shape.len() == 2 {
                *v * 10.0
            } else {
                1.0 + 0.3 * rng::standard_normal(&mut r) as f32
            };
        }
        if t.name.ends_with(".bq") || t.name.ends_with(".bk") || t.name.ends_with(".bv") {
            t.data.iter_mut().for_each(|v| *v -= 1.0);
        }
    }
    let (batch, seq) = (2, 5);
    let mut r = rng::substream(78, 0);
    let toks: Vec<u32> = (0..batch * seq + batch)
        .map(|_| (rng::standard_normal(&mut r).abs() * 7.0) as u32 % 23)
        .collect();
    (p, toks[..batch * seq].to_vec(), toks[batch..].to_vec())
}

fn loss_at(p: &ModelParams, x: &[u32], y: &[u32]) -> f64 {
    loss_and_grads(p, x, y, 2, 5).unwrap().0
}

/// Returns (analytic, numeric) directional derivatives.
fn directional(
    p: &ModelParams,
    x: &[u32],
    y: &[u32],
    grads: &[Vec<f32>],
    only: Option<usize>,
    seed: u64,
) -> (f64, f64) {
    let mut r = rng::substream(seed, 0);
    let dir: Vec<Vec<f32>> = p
        .tensors
        .iter()
        .enumerate()
        .map(|(i, t)| {
            t.data
                .iter()
                .map(|_| {
                    if only.is_none_or(|o| o == i) {
                        rng::standard_normal(&mut r) as f32
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let norm = dir
        .iter()
        .flatten()
        .map(|v| (*v as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    let analytic: f64 = grads
        .iter()
        .flatten()
        .zip(dir.iter().flatten())
        .map(|(g, d)| *g as f64 * *d as f64 / norm)
        .sum();
    let eps = 1e-2;
    let shifted = |sign: f64| {
        let mut q = p.clone();
        for (t, d) in q.tensors.iter_mut().zip(&dir) {
            for (v, dv) in t.data.iter_mut().zip(d) {
                *v += (sign * eps * *dv as f64 / norm) as f32;
            }
        }
        loss_at(&q, x, y)
    };
    (analytic, (shifted(1.0) - shifted(-1.0)) / (2.0 * eps))
}

fn check(arch: ArchFamily) {
    let (p, x, y) = setup(arch);
    let (_, grads) = loss_and_grads(&p, &x, &y, 2, 5).unwrap();
    let (a, n) = directional(&p, &x, &y, &grads, None, 1);
    assert!(
        (a - n).abs() <= 1e-3 + 1e-2 * n.abs(),
        "whole vector: analytic {a} numeric {n}"
    );
    for (i, t) in p.tensors.iter().enumerate() {
        let (a, n) = directional(&p, &x, &y, &grads, Some(i), 100 + i as u64);
        assert!(
            (a - n).abs() <= 1e-3 + 2e-2 * n.abs(),
            "{}: analytic {a} numeric {n}",
            t.name
        );
    }
}

#[test]
fn llama_gradients_match_finite_differences() {
    check(ArchFamily::LlamaStyle);
}

#[test]
fn qwen_gradients_match_finite_differences() {
    check(ArchFamily::QwenStyle);
}

#[test]
fn loss_matches_prefix_forward_passes() {
    // causal model: position t of a window sees exactly the prefix x[..=t]
    let (p, x, y) = setup(ArchFamily::LlamaStyle);
    let (loss, _) = loss_and_grads(&p, &x, &y, 2, 5).unwrap();
    let mut total = 0.0;
    for b in 0..2 {
        for t in 0..5 {
            let out = forward_tokens(&p, &x[b * 5..b * 5 + t + 1]).unwrap();
            let max = out.logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
            let lse = max
                + out
                    .logits
                    .iter()
                    .map(|&v| (v as f64 - max).exp())
                    .sum::<f64>()
                    .ln();
            total += lse - out.logits[y[b * 5 + t] as usize] as f64;
        }
    }
    assert!(
        (loss - total / 10.0).abs() < 1e-4,
        "{loss} vs {}",
        total / 10.0
    );
}
