//! Batched forward pass, with optional activation traces for backprop.
//!
//! Activations are `[rows, width]` row-major buffers where the rows of a batch
//! are `batch × seq` positions, sequence-major. Row `r` sits at position
//! `r % seq`.

use super::linalg::{gemm, Op};
use super::params::{LayerSlots, Layout, ModelParams};
use crate::error::{Error, Result};

pub(crate) struct Rope {
    half: usize,
    cos: Vec<f32>,
    sin: Vec<f32>,
}

impl Rope {
    pub(crate) fn new(params: &ModelParams) -> Self {
        let c = &params.config;
        let hd = c.head_dim();
        let half = hd / 2;
        let mut cos = Vec::with_capacity(c.max_seq_len * half);
        let mut sin = Vec::with_capacity(c.max_seq_len * half);
        for pos in 0..c.max_seq_len {
            for i in 0..half {
                let freq = c.rope_theta.powf(-((2 * i) as f64) / hd as f64);
                let angle = pos as f64 * freq;
                cos.push(angle.cos() as f32);
                sin.push(angle.sin() as f32);
            }
        }
        Rope { half, cos, sin }
    }

    /// Rotates each head's (i, i + hd/2) pairs by the position angle; the
    /// inverse rotation is the exact adjoint used in backprop.
    fn rotate(&self, x: &mut [f32], seq: usize, d: usize, inverse: bool) {
        let half = self.half;
        let hd = 2 * half;
        for (r, row) in x.chunks_exact_mut(d).enumerate() {
            let pos = r % seq;
            let cs = &self.cos[pos * half..(pos + 1) * half];
            let sn = &self.sin[pos * half..(pos + 1) * half];
            for head in row.chunks_exact_mut(hd) {
                let (a, b) = head.split_at_mut(half);
                for i in 0..half {
                    let (x1, x2) = (a[i], b[i]);
                    let s = if inverse { -sn[i] } else { sn[i] };
                    a[i] = x1 * cs[i] - x2 * s;
                    b[i] = x1 * s + x2 * cs[i];
                }
            }
        }
    }
}

fn rmsnorm(x: &[f32], g: &[f32], eps: f64, out: &mut [f32], rstd: &mut [f32]) {
    let d = g.len();
    for ((xr, yr), rs) in x
        .chunks_exact(d)
        .zip(out.chunks_exact_mut(d))
        .zip(rstd.iter_mut())
    {
        let ms = xr.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>() / d as f64;
        let r = (1.0 / (ms + eps).sqrt()) as f32;
        *rs = r;
        for ((y, &xv), &gv) in yr.iter_mut().zip(xr).zip(g) {
            *y = xv * r * gv;
        }
    }
}

/// Accumulates the input gradient into `dx` and the gain gradient into `dg`.
pub(crate) fn rmsnorm_backward(
    x: &[f32],
    g: &[f32],
    rstd: &[f32],
    dy: &[f32],
    dx: &mut [f32],
    dg: &mut [f32],
) {
    let d = g.len();
    for (((xr, dyr), dxr), &r) in x
        .chunks_exact(d)
        .zip(dy.chunks_exact(d))
        .zip(dx.chunks_exact_mut(d))
        .zip(rstd)
    {
        let mut dot = 0.0f64;
        for i in 0..d {
            dot += (dyr[i] * g[i]) as f64 * xr[i] as f64;
            dg[i] += dyr[i] * xr[i] * r;
        }
        let coef = (dot / d as f64) as f32 * r * r * r;
        for i in 0..d {
            dxr[i] += r * dyr[i] * g[i] - xr[i] * coef;
        }
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) struct Dims {
    pub batch: usize,
    pub seq: usize,
    pub d: usize,
    pub heads: usize,
}

impl Dims {
    fn rows(&self) -> usize {
        self.batch * self.seq
    }
    fn hd(&self) -> usize {
        self.d / self.heads
    }
}

/// Causal multi-head attention. Returns the concatenated head outputs and the
/// attention probabilities laid out `[batch, heads, seq, seq]`.
fn attention_forward(q: &[f32], k: &[f32], v: &[f32], dims: &Dims) -> (Vec<f32>, Vec<f32>) {
    let Dims {
        batch,
        seq,
        d,
        heads,
    } = *dims;
    let hd = dims.hd();
    let scale = 1.0 / (hd as f32).sqrt();
    let mut out = vec![0.0f32; dims.rows() * d];
    let mut probs = vec![0.0f32; batch * heads * seq * seq];
    let mut scores = vec![0.0f32; seq];
    for b in 0..batch {
        for h in 0..heads {
            let pbase = (b * heads + h) * seq * seq;
            for t in 0..seq {
                let qo = (b * seq + t) * d + h * hd;
                let qt = &q[qo..qo + hd];
                let mut max = f32::NEG_INFINITY;
                for (s, slot) in scores.iter_mut().enumerate().take(t + 1) {
                    let ko = (b * seq + s) * d + h * hd;
                    let dot: f32 = qt.iter().zip(&k[ko..ko + hd]).map(|(a, b)| a * b).sum();
                    *slot = dot * scale;
                    max = max.max(*slot);
                }
                let mut sum = 0.0f32;
                for sc in scores.iter_mut().take(t + 1) {
                    *sc = (*sc - max).exp();
                    sum += *sc;
                }
                let prow = &mut probs[pbase + t * seq..pbase + (t + 1) * seq];
                let ot = &mut out[qo..qo + hd];
                for s in 0..=t {
                    let p = scores[s] / sum;
                    prow[s] = p;
                    let vo = (b * seq + s) * d + h * hd;
                    for (o, &vv) in ot.iter_mut().zip(&v[vo..vo + hd]) {
                        *o += p * vv;
                    }
                }
            }
        }
    }
    (out, probs)
}

/// Returns (dq, dk, dv) for post-rotation q and k.
#[allow(clippy::type_complexity)]
pub(crate) fn attention_backward(
    q: &[f32],
    k: &[f32],
    v: &[f32],
    probs: &[f32],
    dout: &[f32],
    dims: &Dims,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let Dims {
        batch,
        seq,
        d,
        heads,
    } = *dims;
    let hd = dims.hd();
    let scale = 1.0 / (hd as f32).sqrt();
    let n = dims.rows() * d;
    let (mut dq, mut dk, mut dv) = (vec![0.0f32; n], vec![0.0f32; n], vec![0.0f32; n]);
    let mut dp = vec![0.0f32; seq];
    for b in 0..batch {
        for h in 0..heads {
            let pbase = (b * heads + h) * seq * seq;
            for t in 0..seq {
                let to = (b * seq + t) * d + h * hd;
                let prow = &probs[pbase + t * seq..pbase + (t + 1) * seq];
                let dot_t = &dout[to..to + hd];
                let mut acc = 0.0f32;
                for s in 0..=t {
                    let so = (b * seq + s) * d + h * hd;
                    let g: f32 = dot_t.iter().zip(&v[so..so + hd]).map(|(a, b)| a * b).sum();
                    dp[s] = g;
                    acc += prow[s] * g;
                    for (dvv, &o) in dv[so..so + hd].iter_mut().zip(dot_t) {
                        *dvv += prow[s] * o;
                    }
                }
                for s in 0..=t {
                    let ds = prow[s] * (dp[s] - acc) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let so = (b * seq + s) * d + h * hd;
                    for i in 0..hd {
                        dq[to + i] += ds * k[so + i];
                        dk[so + i] += ds * q[to + i];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Everything a block computed on the way forward.
pub(crate) struct LayerCache {
    pub x_in: Vec<f32>,
    pub rstd1: Vec<f32>,
    pub n1: Vec<f32>,
    pub q: Vec<f32>,
    pub k: Vec<f32>,
    pub v: Vec<f32>,
    pub probs: Vec<f32>,
    pub att: Vec<f32>,
    pub h: Vec<f32>,
    pub rstd2: Vec<f32>,
    pub n2: Vec<f32>,
    pub gate: Vec<f32>,
    pub up: Vec<f32>,
    pub act: Vec<f32>,
}

fn add_bias(x: &mut [f32], bias: &[f32]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

fn layer_forward(
    params: &ModelParams,
    slots: &LayerSlots,
    rope: &Rope,
    x_in: Vec<f32>,
    dims: &Dims,
) -> (Vec<f32>, LayerCache) {
    let c = &params.config;
    let t = &params.tensors;
    let (rows, d, ff) = (dims.rows(), dims.d, c.d_ff);

    let mut n1 = vec![0.0; rows * d];
    let mut rstd1 = vec![0.0; rows];
    rmsnorm(
        &x_in,
        &t[slots.attn_norm].data,
        c.norm_eps,
        &mut n1,
        &mut rstd1,
    );

    let mut q = vec![0.0; rows * d];
    let mut k = vec![0.0; rows * d];
    let mut v = vec![0.0; rows * d];
    gemm(
        rows,
        d,
        d,
        &n1,
        Op::N,
        &t[slots.wq].data,
        Op::N,
        &mut q,
        false,
    );
    gemm(
        rows,
        d,
        d,
        &n1,
        Op::N,
        &t[slots.wk].data,
        Op::N,
        &mut k,
        false,
    );
    gemm(
        rows,
        d,
        d,
        &n1,
        Op::N,
        &t[slots.wv].data,
        Op::N,
        &mut v,
        false,
    );
    if let Some([bq, bk, bv]) = slots.bias {
        add_bias(&mut q, &t[bq].data);
        add_bias(&mut k, &t[bk].data);
        add_bias(&mut v, &t[bv].data);
    }
    rope.rotate(&mut q, dims.seq, d, false);
    rope.rotate(&mut k, dims.seq, d, false);

    let (att, probs) = attention_forward(&q, &k, &v, dims);
    let mut h = x_in.clone();
    gemm(
        rows,
        d,
        d,
        &att,
        Op::N,
        &t[slots.wo].data,
        Op::N,
        &mut h,
        true,
    );

    let mut n2 = vec![0.0; rows * d];
    let mut rstd2 = vec![0.0; rows];
    rmsnorm(&h, &t[slots.ffn_norm].data, c.norm_eps, &mut n2, &mut rstd2);

    let mut gate = vec![0.0; rows * ff];
    let mut up = vec![0.0; rows * ff];
    gemm(
        rows,
        d,
        ff,
        &n2,
        Op::N,
        &t[slots.w_gate].data,
        Op::N,
        &mut gate,
        false,
    );
    gemm(
        rows,
        d,
        ff,
        &n2,
        Op::N,
        &t[slots.w_up].data,
        Op::N,
        &mut up,
        false,
    );
    let act: Vec<f32> = gate
        .iter()
        .zip(&up)
        .map(|(&g, &u)| g * sigmoid(g) * u)
        .collect();
    let mut out = h.clone();
    gemm(
        rows,
        ff,
        d,
        &act,
        Op::N,
        &t[slots.w_down].data,
        Op::N,
        &mut out,
        true,
    );

    let cache = LayerCache {
        x_in,
        rstd1,
        n1,
        q,
        k,
        v,
        probs,
        att,
        h,
        rstd2,
        n2,
        gate,
        up,
        act,
    };
    (out, cache)
}

/// Activations retained for the backward pass.
pub(crate) struct Trace {
    pub layers: Vec<LayerCache>,
    pub x_final: Vec<f32>,
    pub rstd_final: Vec<f32>,
}

/// Runs the block stack and the final norm over `x0`; returns the post-norm
/// hidden state of every row and, when `keep`, the trace.
pub(crate) fn run_stack(
    params: &ModelParams,
    layout: &Layout,
    rope: &Rope,
    x0: Vec<f32>,
    dims: &Dims,
    keep: bool,
) -> (Vec<f32>, Option<Trace>) {
    let mut x = x0;
    let mut caches = Vec::new();
    for slots in &layout.layers {
        let (next, cache) = layer_forward(params, slots, rope, x, dims);
        if keep {
            caches.push(cache);
        }
        x = next;
    }
    let rows = dims.rows();
    let mut hidden = vec![0.0; rows * dims.d];
    let mut rstd = vec![0.0; rows];
    rmsnorm(
        &x,
        &params.tensors[layout.final_norm].data,
        params.config.norm_eps,
        &mut hidden,
        &mut rstd,
    );
    let trace = keep.then_some(Trace {
        layers: caches,
        x_final: x,
        rstd_final: rstd,
    });
    (hidden, trace)
}

/// Back-propagates through one block given the gradient at its output.
/// Accumulates parameter gradients into `grads` and returns the input gradient.
pub(crate) fn layer_backward(
    params: &ModelParams,
    slots: &LayerSlots,
    rope: &Rope,
    cache: &LayerCache,
    dout: Vec<f32>,
    dims: &Dims,
    grads: &mut [Vec<f32>],
) -> Vec<f32> {
    let c = &params.config;
    let t = &params.tensors;
    let (rows, d, ff) = (dims.rows(), dims.d, c.d_ff);

    // MLP branch
    gemm(
        ff,
        rows,
        d,
        &cache.act,
        Op::T,
        &dout,
        Op::N,
        &mut grads[slots.w_down],
        true,
    );
    let mut dact = vec![0.0; rows * ff];
    gemm(
        rows,
        d,
        ff,
        &dout,
        Op::N,
        &t[slots.w_down].data,
        Op::T,
        &mut dact,
        false,
    );
    let mut dgate = vec![0.0; rows * ff];
    let mut dup = vec![0.0; rows * ff];
    for i in 0..rows * ff {
        let g = cache.gate[i];
        let s = sigmoid(g);
        let silu = g * s;
        dup[i] = dact[i] * silu;
        dgate[i] = dact[i] * cache.up[i] * s * (1.0 + g * (1.0 - s));
    }
    gemm(
        d,
        rows,
        ff,
        &cache.n2,
        Op::T,
        &dgate,
        Op::N,
        &mut grads[slots.w_gate],
        true,
    );
    gemm(
        d,
        rows,
        ff,
        &cache.n2,
        Op::T,
        &dup,
        Op::N,
        &mut grads[slots.w_up],
        true,
    );
    let mut dn2 = vec![0.0; rows * d];
    gemm(
        rows,
        ff,
        d,
        &dgate,
        Op::N,
        &t[slots.w_gate].data,
        Op::T,
        &mut dn2,
        false,
    );
    gemm(
        rows,
        ff,
        d,
        &dup,
        Op::N,
        &t[slots.w_up].data,
        Op::T,
        &mut dn2,
        true,
    );

    let mut dh = dout;
    {
        let (g2, dg2) = (&t[slots.ffn_norm].data, slots.ffn_norm);
        let mut dg = std::mem::take(&mut grads[dg2]);
        rmsnorm_backward(&cache.h, g2, &cache.rstd2, &dn2, &mut dh, &mut dg);
        grads[dg2] = dg;
    }

    // attention branch
    gemm(
        d,
        rows,
        d,
        &cache.att,
        Op::T,
        &dh,
        Op::N,
        &mut grads[slots.wo],
        true,
    );
    let mut datt = vec![0.0; rows * d];
    gemm(
        rows,
        d,
        d,
        &dh,
        Op::N,
        &t[slots.wo].data,
        Op::T,
        &mut datt,
        false,
    );
    let (mut dq, mut dk, dv) =
        attention_backward(&cache.q, &cache.k, &cache.v, &cache.probs, &datt, dims);
    rope.rotate(&mut dq, dims.seq, d, true);
    rope.rotate(&mut dk, dims.seq, d, true);
    if let Some([bq, bk, bv]) = slots.bias {
        for (slot, g) in [(bq, &dq), (bk, &dk), (bv, &dv)] {
            for row in g.chunks_exact(d) {
                for (acc, v) in grads[slot].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
    }
    gemm(
        d,
        rows,
        d,
        &cache.n1,
        Op::T,
        &dq,
        Op::N,
        &mut grads[slots.wq],
        true,
    );
    gemm(
        d,
        rows,
        d,
        &cache.n1,
        Op::T,
        &dk,
        Op::N,
        &mut grads[slots.wk],
        true,
    );
    gemm(
        d,
        rows,
        d,
        &cache.n1,
        Op::T,
        &dv,
        Op::N,
        &mut grads[slots.wv],
        true,
    );
    let mut dn1 = vec![0.0; rows * d];
    gemm(
        rows,
        d,
        d,
        &dq,
        Op::N,
        &t[slots.wq].data,
        Op::T,
        &mut dn1,
        false,
    );
    gemm(
        rows,
        d,
        d,
        &dk,
        Op::N,
        &t[slots.wk].data,
        Op::T,
        &mut dn1,
        true,
    );
    gemm(
        rows,
        d,
        d,
        &dv,
        Op::N,
        &t[slots.wv].data,
        Op::T,
        &mut dn1,
        true,
    );

    let mut dx = dh;
    let mut dg = std::mem::take(&mut grads[slots.attn_norm]);
    rmsnorm_backward(
        &cache.x_in,
        &t[slots.attn_norm].data,
        &cache.rstd1,
        &dn1,
        &mut dx,
        &mut dg,
    );
    grads[slots.attn_norm] = dg;
    dx
}

/// Last-position outputs of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Next-token logits, length `vocab_size`.
    pub logits: Vec<f32>,
    /// Post-final-norm hidden state, length `d_model`.
    pub hidden: Vec<f32>,
}

fn check_seq_len(params: &ModelParams, ell: usize) -> Result<()> {
    if ell == 0 || ell > params.config.max_seq_len {
        return Err(Error::Dimension(format!(
            "sequence length {ell} outside 1..={}",
            params.config.max_seq_len
        )));
    }
    Ok(())
}

/// Forward pass over `batch` embedding sequences of length `ell`, packed
/// `[batch, ell, d_model]`. Embedding lookup is bypassed.
pub fn forward_batch(
    params: &ModelParams,
    inputs: &[f32],
    batch: usize,
    ell: usize,
) -> Result<Vec<ForwardOutput>> {
    let d = params.config.d_model;
    check_seq_len(params, ell)?;
    if inputs.len() != batch * ell * d {
        return Err(Error::Dimension(format!(
            "expected {batch}×{ell}×{d} inputs, got {} values",
            inputs.len()
        )));
    }
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("probe contains non-finite values".into()));
    }
    if batch == 0 {
        return Ok(Vec::new());
    }
    let layout = params.layout();
    let rope = Rope::new(params);
    let dims = Dims {
        batch,
        seq: ell,
        d,
        heads: params.config.n_heads,
    };
    let (hidden, _) = run_stack(params, &layout, &rope, inputs.to_vec(), &dims, false);

    let vocab = params.config.vocab_size;
    let mut last = Vec::with_capacity(batch * d);
    for b in 0..batch {
        let r = (b * ell + ell - 1) * d;
        last.extend_from_slice(&hidden[r..r + d]);
    }
    let mut logits = vec![0.0; batch * vocab];
    gemm(
        batch,
        d,
        vocab,
        &last,
        Op::N,
        &params.tensors[layout.unembed].data,
        Op::N,
        &mut logits,
        false,
    );
    Ok(last
        .chunks_exact(d)
        .zip(logits.chunks_exact(vocab))
        .map(|(h, l)| ForwardOutput {
            logits: l.to_vec(),
            hidden: h.to_vec(),
        })
        .collect())
}

/// Forward pass on one `ell × d_model` probe, fed in place of token embeddings.
pub fn forward(params: &ModelParams, probe: &[f32]) -> Result<ForwardOutput> {
    let d = params.config.d_model;
    if probe.is_empty() || !probe.len().is_multiple_of(d) {
        return Err(Error::Dimension(format!(
            "probe of {} values is not a whole number of {d}-wide rows",
            probe.len()
        )));
    }
    let mut out = forward_batch(params, probe, 1, probe.len() / d)?;
    Ok(out.pop().expect("one output per sequence"))
}

/// Looks up token embeddings, `[ids.len(), d_model]`.
pub fn embed(params: &ModelParams, ids: &[u32]) -> Result<Vec<f32>> {
    let c = &params.config;
    let table = &params.tensors[params.layout().tok_embeddings].data;
    let mut out = Vec::with_capacity(ids.len() * c.d_model);
    for &id in ids {
        let id = id as usize;
        if id >= c.vocab_size {
            return Err(Error::Input(format!(
                "token id {id} outside vocabulary of {}",
                c.vocab_size
            )));
        }
        out.extend_from_slice(&table[id * c.d_model..(id + 1) * c.d_model]);
    }
    Ok(out)
}

/// Forward pass on a token sequence: `forward(params, embed(ids))`.
pub fn forward_tokens(params: &ModelParams, ids: &[u32]) -> Result<ForwardOutput> {
    forward(params, &embed(params, ids)?)
}

/// Batched [`forward_tokens`] over `batch` sequences of length `ell`.
pub fn forward_tokens_batch(
    params: &ModelParams,
    ids: &[u32],
    batch: usize,
    ell: usize,
) -> Result<Vec<ForwardOutput>> {
    if ids.len() != batch * ell {
        return Err(Error::Dimension(format!(
            "expected {batch}×{ell} token ids, got {}",
            ids.len()
        )));
    }
    forward_batch(params, &embed(params, ids)?, batch, ell)
}
