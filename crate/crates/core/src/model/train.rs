//! Next-token cross-entropy training with AdamW (or plain SGD), cosine decay
//! and global-norm gradient clipping.
//!
//! Training is single-threaded and fully deterministic: batch composition is a
//! pure function of `(corpus, data_order_seed, step)` and every reduction runs
//! in a fixed order.

use super::corpus::Corpus;
use super::forward::{layer_backward, rmsnorm_backward, run_stack, Dims, Rope};
use super::linalg::{gemm, Op};
use super::params::{ModelParams, Optimizer, TrainProvenance};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    /// Floor of the cosine schedule as a fraction of `learning_rate`.
    pub min_lr_ratio: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub seq_len: usize,
    /// Emit a checkpoint every this many steps (the final step is always emitted).
    pub checkpoint_every: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            optimizer: Optimizer::Adamw,
            learning_rate: 3e-4,
            min_lr_ratio: 0.1,
            warmup_steps: 50,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-8,
            grad_clip: 1.0,
            batch_size: 8,
            seq_len: 32,
            checkpoint_every: 500,
        }
    }
}

impl TrainHyper {
    pub fn tokens_per_step(&self) -> usize {
        self.batch_size * self.seq_len
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.seq_len == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config(
                "batch_size, seq_len and checkpoint_every must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return Err(Error::Config("min_lr_ratio must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Learning rate at 0-based `step` of a run of `total` steps.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let peak = self.learning_rate;
        if step < self.warmup_steps {
            return peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let floor = peak * self.min_lr_ratio;
        floor + (peak - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// A snapshot of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    /// Optimizer steps taken in this run when the snapshot was taken.
    pub step: usize,
    /// Loss of the batch consumed at this step; `None` only for the initial
    /// snapshot of a zero-step run.
    pub loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoints: Vec<Checkpoint>,
    /// Per-step training loss, measured before each update.
    pub losses: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_checkpoint(&self) -> &Checkpoint {
        self.checkpoints
            .last()
            .expect("a run always emits its initial checkpoint")
    }

    pub fn checkpoint_at(&self, step: usize) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.step == step)
    }
}

/// Fixed data order: non-overlapping windows of `seq_len + 1` tokens (sharing
/// one boundary token), shuffled by a stream keyed on the corpus id.
pub struct BatchPlan<'a> {
    corpus: &'a Corpus,
    seq_len: usize,
    batch_size: usize,
    order: Vec<usize>,
}

impl<'a> BatchPlan<'a> {
    pub fn new(
        corpus: &'a Corpus,
        seq_len: usize,
        batch_size: usize,
        data_order_seed: u64,
    ) -> Self {
        let windows = corpus.len().saturating_sub(1) / seq_len;
        let mut order: Vec<usize> = (0..windows).collect();
        order.shuffle(&mut rng::named_stream(data_order_seed, &corpus.id));
        BatchPlan {
            corpus,
            seq_len,
            batch_size,
            order,
        }
    }

    /// Number of full batches available.
    pub fn capacity(&self) -> usize {
        self.order.len() / self.batch_size
    }

    /// Inputs and shifted targets for `step`, each `[batch, seq_len]`.
    pub fn batch(&self, step: usize) -> Result<(Vec<u32>, Vec<u32>)> {
        if step >= self.capacity() {
            return Err(Error::Data(format!(
                "corpus {} exhausted at step {step} ({} batches available)",
                self.corpus.id,
                self.capacity()
            )));
        }
        let l = self.seq_len;
        let mut inputs = Vec::with_capacity(self.batch_size * l);
        let mut targets = Vec::with_capacity(self.batch_size * l);
        for &w in &self.order[step * self.batch_size..(step + 1) * self.batch_size] {
            let s = w * l;
            inputs.extend_from_slice(&self.corpus.tokens[s..s + l]);
            targets.extend_from_slice(&self.corpus.tokens[s + 1..s + l + 1]);
        }
        Ok((inputs, targets))
    }
}

/// Mean next-token cross-entropy of a batch and its parameter gradients.
pub(crate) fn loss_and_grads(
    params: &ModelParams,
    inputs: &[u32],
    targets: &[u32],
    batch: usize,
    seq: usize,
) -> Result<(f64, Vec<Vec<f32>>)> {
    let c = &params.config;
    let (d, vocab) = (c.d_model, c.vocab_size);
    let layout = params.layout();
    let rope = Rope::new(params);
    let dims = Dims {
        batch,
        seq,
        d,
        heads: c.n_heads,
    };
    let rows = batch * seq;

    let x0 = super::forward::embed(params, inputs)?;
    let (hidden, trace) = run_stack(params, &layout, &rope, x0, &dims, true);
    let trace = trace.expect("trace requested");

    let w_u = &params.tensors[layout.unembed].data;
    let mut logits = vec![0.0f32; rows * vocab];
    gemm(
        rows,
        d,
        vocab,
        &hidden,
        Op::N,
        w_u,
        Op::N,
        &mut logits,
        false,
    );

    // softmax cross-entropy; logits become dlogits in place
    let mut loss = 0.0f64;
    let inv_rows = 1.0 / rows as f32;
    for (row, &tgt) in logits.chunks_exact_mut(vocab).zip(targets) {
        let tgt = tgt as usize;
        if tgt >= vocab {
            return Err(Error::Data(format!(
                "target id {tgt} outside vocabulary of {vocab}"
            )));
        }
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f64;
        for v in row.iter() {
            sum += ((v - max) as f64).exp();
        }
        loss += sum.ln() - (row[tgt] - max) as f64;
        for v in row.iter_mut() {
            *v = (((*v - max) as f64).exp() / sum) as f32 * inv_rows;
        }
        row[tgt] -= inv_rows;
    }
    let loss = loss / rows as f64;

    let mut grads: Vec<Vec<f32>> = params
        .tensors
        .iter()
        .map(|t| vec![0.0; t.data.len()])
        .collect();
    gemm(
        d,
        rows,
        vocab,
        &hidden,
        Op::T,
        &logits,
        Op::N,
        &mut grads[layout.unembed],
        false,
    );
    let mut dhidden = vec![0.0f32; rows * d];
    gemm(
        rows,
        vocab,
        d,
        &logits,
        Op::N,
        w_u,
        Op::T,
        &mut dhidden,
        false,
    );

    let mut dx = vec![0.0f32; rows * d];
    {
        let mut dg = std::mem::take(&mut grads[layout.final_norm]);
        rmsnorm_backward(
            &trace.x_final,
            &params.tensors[layout.final_norm].data,
            &trace.rstd_final,
            &dhidden,
            &mut dx,
            &mut dg,
        );
        grads[layout.final_norm] = dg;
    }
    for (slots, cache) in layout.layers.iter().zip(&trace.layers).rev() {
        dx = layer_backward(params, slots, &rope, cache, dx, &dims, &mut grads);
    }
    let demb = &mut grads[layout.tok_embeddings];
    for (row, &id) in dx.chunks_exact(d).zip(inputs) {
        let id = id as usize;
        for (g, v) in demb[id * d..(id + 1) * d].iter_mut().zip(row) {
            *g += v;
        }
    }
    Ok((loss, grads))
}

struct AdamState {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

/// Trains `params` for `steps` optimizer steps on `corpus`.
///
/// Checkpoints are emitted at step 0, every `hyper.checkpoint_every` steps and
/// at the final step. Fails up front if the corpus cannot supply
/// `steps × tokens_per_step` tokens, and aborts with the step number if the
/// loss turns non-finite.
pub fn train(
    params: &ModelParams,
    corpus: &Corpus,
    steps: usize,
    data_order_seed: u64,
    hyper: &TrainHyper,
) -> Result<TrainOutcome> {
    params.validate()?;
    hyper.validate()?;
    let c = &params.config;
    if hyper.seq_len > c.max_seq_len {
        return Err(Error::Config(format!(
            "training seq_len {} exceeds max_seq_len {}",
            hyper.seq_len, c.max_seq_len
        )));
    }
    if let Some(t) = corpus.max_token() {
        if t as usize >= c.vocab_size {
            return Err(Error::Data(format!(
                "corpus {} contains token {t} outside vocabulary of {}",
                corpus.id, c.vocab_size
            )));
        }
    }
    let plan = BatchPlan::new(corpus, hyper.seq_len, hyper.batch_size, data_order_seed);
    if plan.capacity() < steps {
        return Err(Error::Data(format!(
            "corpus {} supplies {} batches of {} tokens, {steps} requested",
            corpus.id,
            plan.capacity(),
            hyper.tokens_per_step()
        )));
    }

    let mut current = params.clone();
    let provenance = |step: usize| TrainProvenance {
        corpus_id: corpus.id.clone(),
        data_order_seed,
        steps: step,
        tokens_seen: step * hyper.tokens_per_step(),
        optimizer: hyper.optimizer,
        learning_rate: hyper.learning_rate,
    };
    let decays: Vec<bool> = current.tensors.iter().map(|t| t.shape.len() == 2).collect();
    let mut adam = AdamState {
        m: current
            .tensors
            .iter()
            .map(|t| vec![0.0; t.data.len()])
            .collect(),
        v: current
            .tensors
            .iter()
            .map(|t| vec![0.0; t.data.len()])
            .collect(),
    };

    let mut checkpoints = Vec::new();
    let mut losses = Vec::with_capacity(steps);
    if steps == 0 {
        checkpoints.push(Checkpoint {
            params: current,
            step: 0,
            loss: None,
        });
        return Ok(TrainOutcome {
            checkpoints,
            losses,
        });
    }

    for step in 0..steps {
        let (inputs, targets) = plan.batch(step)?;
        let (loss, mut grads) =
            loss_and_grads(&current, &inputs, &targets, hyper.batch_size, hyper.seq_len)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        losses.push(loss);
        if step == 0 {
            checkpoints.push(Checkpoint {
                params: current.clone(),
                step: 0,
                loss: Some(loss),
            });
        }

        let norm = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::Divergence {
                step,
                loss: f64::NAN,
            });
        }
        if hyper.grad_clip > 0.0 && norm > hyper.grad_clip {
            let s = (hyper.grad_clip / norm) as f32;
            grads
                .iter_mut()
                .flat_map(|g| g.iter_mut())
                .for_each(|v| *v *= s);
        }

        let lr = hyper.lr_at(step, steps);
        match hyper.optimizer {
            Optimizer::Adamw => {
                let t = (step + 1) as i32;
                let bc1 = 1.0 - hyper.beta1.powi(t);
                let bc2 = 1.0 - hyper.beta2.powi(t);
                let (b1, b2) = (hyper.beta1 as f32, hyper.beta2 as f32);
                for (i, tensor) in current.tensors.iter_mut().enumerate() {
                    let wd = if decays[i] {
                        (lr * hyper.weight_decay) as f32
                    } else {
                        0.0
                    };
                    let step_size = (lr / bc1) as f32;
                    let inv_bc2 = (1.0 / bc2) as f32;
                    let eps = hyper.adam_eps as f32;
                    let (m, v) = (&mut adam.m[i], &mut adam.v[i]);
                    for (j, w) in tensor.data.iter_mut().enumerate() {
                        let g = grads[i][j];
                        m[j] = b1 * m[j] + (1.0 - b1) * g;
                        v[j] = b2 * v[j] + (1.0 - b2) * g * g;
                        let denom = (v[j] * inv_bc2).sqrt() + eps;
                        *w -= step_size * m[j] / denom + wd * *w;
                    }
                }
            }
            Optimizer::Sgd => {
                for (i, tensor) in current.tensors.iter_mut().enumerate() {
                    let wd = if decays[i] {
                        (lr * hyper.weight_decay) as f32
                    } else {
                        0.0
                    };
                    for (w, g) in tensor.data.iter_mut().zip(&grads[i]) {
                        *w -= lr as f32 * g + wd * *w;
                    }
                }
            }
        }

        let done = step + 1;
        if done % hyper.checkpoint_every == 0 || done == steps {
            current.train_fingerprint = Some(provenance(done));
            checkpoints.push(Checkpoint {
                params: current.clone(),
                step: done,
                loss: Some(loss),
            });
        }
    }
    Ok(TrainOutcome {
        checkpoints,
        losses,
    })
}
