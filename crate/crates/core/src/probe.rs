//! Random embedding-space probes and their SPRB file format.
//!
//! Probe `i` is drawn from its own substream `(probe_seed, i)`, so generation
//! parallelizes across probes and any prefix of a larger set equals the
//! smaller set built with the same seed.

use crate::binfmt::*;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng;
use byteorder::{LittleEndian as LE, WriteBytesExt};
use rand::Rng;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SPRB";
pub const VERSION: u32 = 1;

pub const DEFAULT_N: usize = 2000;
pub const DEFAULT_LEN: usize = 128;
/// Element standard deviation, matching the embedding init scale.
pub const DEFAULT_SCALE: f32 = 0.02;

/// `n` pseudo-token sequences, each an `ell × d` matrix, stored row-major as
/// `[n, ell, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSet {
    pub n: usize,
    pub ell: usize,
    pub d: usize,
    pub probe_seed: u64,
    pub scale: f32,
    pub data: Vec<f32>,
}

impl ProbeSet {
    pub fn probe(&self, i: usize) -> &[f32] {
        let len = self.ell * self.d;
        &self.data[i * len..(i + 1) * len]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.ell == 0 || self.d == 0 {
            return Err(Error::Config(
                "probe set dimensions must be positive".into(),
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "probe scale must be positive, got {}",
                self.scale
            )));
        }
        if self.data.len() != self.n * self.ell * self.d {
            return Err(Error::Dimension(format!(
                "probe data has {} values, expected {}×{}×{}",
                self.data.len(),
                self.n,
                self.ell,
                self.d
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("probe data contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Draws `n` probes of i.i.d. N(0, scale²) elements.
pub fn generate_probes(
    n: usize,
    ell: usize,
    d: usize,
    probe_seed: u64,
    scale: f32,
) -> Result<ProbeSet> {
    generate_probes_with(n, ell, d, probe_seed, scale, Execution::default())
}

pub fn generate_probes_with(
    n: usize,
    ell: usize,
    d: usize,
    probe_seed: u64,
    scale: f32,
    exec: Execution,
) -> Result<ProbeSet> {
    if n == 0 || ell == 0 || d == 0 {
        return Err(Error::Config(format!(
            "probe dimensions must be positive, got n={n} ell={ell} d={d}"
        )));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Config(format!(
            "probe scale must be positive, got {scale}"
        )));
    }
    let len = ell * d;
    let mut data = vec![0.0f32; n * len];
    exec.for_each_chunk_mut(&mut data, len, |i, chunk| {
        let mut r = rng::substream(probe_seed, i as u64);
        for v in chunk.iter_mut() {
            *v = (rng::standard_normal(&mut r) * scale as f64) as f32;
        }
    });
    Ok(ProbeSet {
        n,
        ell,
        d,
        probe_seed,
        scale,
        data,
    })
}

/// Uniform random token sequences, `[n, ell]` row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenProbes {
    pub n: usize,
    pub ell: usize,
    pub vocab_size: usize,
    pub probe_seed: u64,
    pub ids: Vec<u32>,
}

impl TokenProbes {
    pub fn sequence(&self, i: usize) -> &[u32] {
        &self.ids[i * self.ell..(i + 1) * self.ell]
    }
}

pub fn sample_token_probes(
    n: usize,
    ell: usize,
    vocab_size: usize,
    probe_seed: u64,
) -> Result<TokenProbes> {
    if vocab_size < 2 {
        return Err(Error::Config(format!(
            "vocab_size must be at least 2, got {vocab_size}"
        )));
    }
    if vocab_size > u32::MAX as usize {
        return Err(Error::Config("vocab_size exceeds the u32 id range".into()));
    }
    if n == 0 || ell == 0 {
        return Err(Error::Config(
            "token probe dimensions must be positive".into(),
        ));
    }
    let mut ids = vec![0u32; n * ell];
    Execution::default().for_each_chunk_mut(&mut ids, ell, |i, row| {
        let mut r = rng::substream(probe_seed, i as u64);
        for v in row.iter_mut() {
            *v = r.gen_range(0..vocab_size as u32);
        }
    });
    Ok(TokenProbes {
        n,
        ell,
        vocab_size,
        probe_seed,
        ids,
    })
}

pub fn write_probes<W: Write>(w: &mut W, p: &ProbeSet) -> Result<()> {
    p.validate()?;
    write_header(w, MAGIC, VERSION)?;
    for v in [p.n, p.ell, p.d] {
        w.write_u64::<LE>(v as u64)?;
    }
    w.write_u64::<LE>(p.probe_seed)?;
    w.write_f32::<LE>(p.scale)?;
    write_f32s(w, &p.data)
}

pub fn read_probes<R: Read>(r: &mut R) -> Result<ProbeSet> {
    read_header(r, MAGIC, VERSION)?;
    let n = read_usize(r, "n")?;
    let ell = read_usize(r, "ell")?;
    let d = read_usize(r, "d")?;
    let probe_seed = read_u64(r, "probe_seed")?;
    let scale = f32::from_bits(read_u32(r, "scale")?);
    let total = n
        .checked_mul(ell)
        .and_then(|v| v.checked_mul(d))
        .ok_or_else(|| Error::Format("probe dimensions overflow".into()))?;
    let data = read_f32s(r, total, "probe data")?;
    expect_end(r)?;
    let p = ProbeSet {
        n,
        ell,
        d,
        probe_seed,
        scale,
        data,
    };
    p.validate()
        .map_err(|e| Error::Format(format!("invalid probe file: {e}")))?;
    Ok(p)
}

pub fn save_probes(path: &Path, p: &ProbeSet) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_probes(&mut w, p)?;
    w.flush()?;
    Ok(())
}

pub fn load_probes(path: &Path) -> Result<ProbeSet> {
    read_probes(&mut BufReader::new(std::fs::File::open(path)?))
}
