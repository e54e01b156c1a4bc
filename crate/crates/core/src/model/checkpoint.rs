//! SPCK checkpoint files.
//!
//! Layout (little-endian): magic `SPCK`, version `u32`, config (arch `u8`,
//! six counts as `u32`, rope_theta and norm_eps as `f64`, init scheme `u8`),
//! init seed `u64`,
//! step `u64`, optional loss (`u8` flag + `f64`), optional training provenance
//! (`u8` flag + fields), tensor count `u32`, then per tensor: name (`u32`
//! length, then UTF-8 bytes), rank `u32`, dims as `u64`, and binary32 data in
//! row-major order.

use super::params::{ModelParams, Optimizer, Tensor, TrainProvenance};
use super::train::Checkpoint;
use super::{ArchFamily, InitScheme, ModelConfig};
use crate::binfmt::*;
use crate::error::{Error, Result};
use byteorder::{LittleEndian as LE, WriteBytesExt};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SPCK";
pub const VERSION: u32 = 1;

fn count(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} = {v} does not fit in u32")))
}

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<()> {
    let p = &ckpt.params;
    let c = &p.config;
    write_header(w, MAGIC, VERSION)?;
    w.write_u8(match c.arch_family {
        ArchFamily::LlamaStyle => 0,
        ArchFamily::QwenStyle => 1,
    })?;
    for (v, what) in [
        (c.n_layers, "n_layers"),
        (c.n_heads, "n_heads"),
        (c.d_model, "d_model"),
        (c.d_ff, "d_ff"),
        (c.vocab_size, "vocab_size"),
        (c.max_seq_len, "max_seq_len"),
    ] {
        w.write_u32::<LE>(count(v, what)?)?;
    }
    w.write_f64::<LE>(c.rope_theta)?;
    w.write_f64::<LE>(c.norm_eps)?;
    w.write_u8(match c.init_scheme {
        InitScheme::Fixed => 0,
        InitScheme::WidthMatched => 1,
    })?;
    w.write_u64::<LE>(p.init_seed)?;
    w.write_u64::<LE>(ckpt.step as u64)?;
    match ckpt.loss {
        Some(l) => {
            w.write_u8(1)?;
            w.write_f64::<LE>(l)?;
        }
        None => w.write_u8(0)?,
    }
    match &p.train_fingerprint {
        Some(t) => {
            w.write_u8(1)?;
            write_str(w, &t.corpus_id)?;
            w.write_u64::<LE>(t.data_order_seed)?;
            w.write_u64::<LE>(t.steps as u64)?;
            w.write_u64::<LE>(t.tokens_seen as u64)?;
            w.write_u8(match t.optimizer {
                Optimizer::Adamw => 0,
                Optimizer::Sgd => 1,
            })?;
            w.write_f64::<LE>(t.learning_rate)?;
        }
        None => w.write_u8(0)?,
    }
    w.write_u32::<LE>(count(p.tensors.len(), "tensor count")?)?;
    for t in &p.tensors {
        write_str(w, &t.name)?;
        w.write_u32::<LE>(count(t.shape.len(), "rank")?)?;
        for &dim in &t.shape {
            w.write_u64::<LE>(dim as u64)?;
        }
        write_f32s(w, &t.data)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    read_header(r, MAGIC, VERSION)?;
    let arch_family = match read_u8(r, "arch")? {
        0 => ArchFamily::LlamaStyle,
        1 => ArchFamily::QwenStyle,
        other => return Err(Error::Format(format!("unknown architecture code {other}"))),
    };
    let mut counts = [0usize; 6];
    for c in counts.iter_mut() {
        *c = read_u32(r, "config")? as usize;
    }
    let config = ModelConfig {
        arch_family,
        n_layers: counts[0],
        n_heads: counts[1],
        d_model: counts[2],
        d_ff: counts[3],
        vocab_size: counts[4],
        max_seq_len: counts[5],
        rope_theta: read_f64(r, "rope_theta")?,
        norm_eps: read_f64(r, "norm_eps")?,
        init_scheme: match read_u8(r, "init scheme")? {
            0 => InitScheme::Fixed,
            1 => InitScheme::WidthMatched,
            other => return Err(Error::Format(format!("unknown init scheme code {other}"))),
        },
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("invalid config in checkpoint: {e}")))?;
    let init_seed = read_u64(r, "init_seed")?;
    let step = read_usize(r, "step")?;
    let loss = match read_u8(r, "loss flag")? {
        0 => None,
        1 => Some(read_f64(r, "loss")?),
        other => return Err(Error::Format(format!("bad loss flag {other}"))),
    };
    let train_fingerprint = match read_u8(r, "provenance flag")? {
        0 => None,
        1 => Some(TrainProvenance {
            corpus_id: read_str(r, "corpus id")?,
            data_order_seed: read_u64(r, "data_order_seed")?,
            steps: read_usize(r, "steps")?,
            tokens_seen: read_usize(r, "tokens_seen")?,
            optimizer: match read_u8(r, "optimizer")? {
                0 => Optimizer::Adamw,
                1 => Optimizer::Sgd,
                other => return Err(Error::Format(format!("unknown optimizer code {other}"))),
            },
            learning_rate: read_f64(r, "learning_rate")?,
        }),
        other => return Err(Error::Format(format!("bad provenance flag {other}"))),
    };
    let n = read_u32(r, "tensor count")? as usize;
    let expected = super::params::tensor_specs(&config);
    if n != expected.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {n} tensors, config implies {}",
            expected.len()
        )));
    }
    let mut tensors = Vec::with_capacity(n);
    for (name, shape, _) in expected {
        let got_name = read_str(r, "tensor name")?;
        let rank = read_u32(r, "rank")? as usize;
        let mut got_shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            got_shape.push(read_usize(r, "dim")?);
        }
        if got_name != name || got_shape != shape {
            return Err(Error::Format(format!(
                "tensor {got_name} {got_shape:?} does not match expected {name} {shape:?}"
            )));
        }
        let numel = shape.iter().product();
        let data = read_f32s(r, numel, &name)?;
        tensors.push(Tensor { name, shape, data });
    }
    expect_end(r)?;
    Ok(Checkpoint {
        params: ModelParams {
            config,
            init_seed,
            tensors,
            train_fingerprint,
        },
        step,
        loss,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, ckpt)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut r)
}

pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, ckpt)?;
    Ok(buf)
}
