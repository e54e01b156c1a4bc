//! Model outputs on a probe set and the SPOT file format.

use crate::binfmt::*;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{forward_batch, forward_tokens_batch, ForwardOutput, ModelParams};
use crate::probe::{ProbeSet, TokenProbes};
use byteorder::{LittleEndian as LE, WriteBytesExt};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"SPOT";
pub const VERSION: u32 = 1;

/// Probes evaluated per forward call when collecting outputs.
const COLLECT_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Next-token logits at the last position (width = vocabulary size).
    Logits,
    /// Post-final-norm hidden state at the last position (width = d_model).
    Hidden,
}

impl OutputKind {
    pub const ALL: [OutputKind; 2] = [OutputKind::Logits, OutputKind::Hidden];

    pub fn code(self) -> u8 {
        match self {
            OutputKind::Logits => 0,
            OutputKind::Hidden => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(OutputKind::Logits),
            1 => Ok(OutputKind::Hidden),
            other => Err(Error::Format(format!("unknown output kind code {other}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OutputKind::Logits => "logits",
            OutputKind::Hidden => "hidden",
        }
    }
}

impl std::str::FromStr for OutputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logits" => Ok(OutputKind::Logits),
            "hidden" => Ok(OutputKind::Hidden),
            other => Err(Error::Config(format!(
                "unknown output kind {other:?} (expected logits or hidden)"
            ))),
        }
    }
}

impl std::fmt::Display for OutputKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `n × d_out` outputs of one model on one probe set, row-major.
///
/// Values are kept in binary32 so that a matrix read back from a SPOT file is
/// identical to the one that was written.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMatrix {
    pub kind: OutputKind,
    pub n: usize,
    pub d_out: usize,
    pub probe_seed: u64,
    pub values: Vec<f32>,
}

impl OutputMatrix {
    pub fn new(
        kind: OutputKind,
        n: usize,
        d_out: usize,
        probe_seed: u64,
        values: Vec<f32>,
    ) -> Result<Self> {
        let m = OutputMatrix {
            kind,
            n,
            d_out,
            probe_seed,
            values,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d_out..(i + 1) * self.d_out]
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d_out == 0 {
            return Err(Error::Dimension(
                "output matrix needs n ≥ 1 and d_out ≥ 1".into(),
            ));
        }
        if self.values.len() != self.n * self.d_out {
            return Err(Error::Dimension(format!(
                "output matrix holds {} values, expected {}×{}",
                self.values.len(),
                self.n,
                self.d_out
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input(
                "output matrix contains non-finite values".into(),
            ));
        }
        Ok(())
    }
}

fn assemble(
    kind: OutputKind,
    width: usize,
    probe_seed: u64,
    outs: Vec<Vec<ForwardOutput>>,
) -> Result<OutputMatrix> {
    let n: usize = outs.iter().map(Vec::len).sum();
    let mut values = Vec::with_capacity(n * width);
    for o in outs.iter().flatten() {
        values.extend_from_slice(match kind {
            OutputKind::Logits => &o.logits,
            OutputKind::Hidden => &o.hidden,
        });
    }
    OutputMatrix::new(kind, n, width, probe_seed, values)
}

/// Runs every probe through the model and keeps both output kinds.
pub fn collect_both(
    params: &ModelParams,
    probes: &ProbeSet,
    exec: Execution,
) -> Result<[OutputMatrix; 2]> {
    if probes.d != params.config.d_model {
        return Err(Error::Dimension(format!(
            "probe width {} does not match d_model {}",
            probes.d, params.config.d_model
        )));
    }
    let per = probes.ell * probes.d;
    let chunks = probes.n.div_ceil(COLLECT_CHUNK);
    let outs = exec.try_map(chunks, |c| {
        let lo = c * COLLECT_CHUNK;
        let hi = (lo + COLLECT_CHUNK).min(probes.n);
        forward_batch(
            params,
            &probes.data[lo * per..hi * per],
            hi - lo,
            probes.ell,
        )
    })?;
    let c = &params.config;
    Ok([
        assemble(
            OutputKind::Logits,
            c.vocab_size,
            probes.probe_seed,
            outs.clone(),
        )?,
        assemble(OutputKind::Hidden, c.d_model, probes.probe_seed, outs)?,
    ])
}

/// `g(X)`: outputs of one kind for all probes.
pub fn collect_outputs(
    params: &ModelParams,
    probes: &ProbeSet,
    kind: OutputKind,
    exec: Execution,
) -> Result<OutputMatrix> {
    let [logits, hidden] = collect_both(params, probes, exec)?;
    Ok(match kind {
        OutputKind::Logits => logits,
        OutputKind::Hidden => hidden,
    })
}

/// Outputs on token-id probes (embedding lookup instead of raw embeddings).
pub fn collect_token_outputs(
    params: &ModelParams,
    probes: &TokenProbes,
    kind: OutputKind,
    exec: Execution,
) -> Result<OutputMatrix> {
    let ell = probes.ell;
    let chunks = probes.n.div_ceil(COLLECT_CHUNK);
    let outs = exec.try_map(chunks, |c| {
        let lo = c * COLLECT_CHUNK;
        let hi = (lo + COLLECT_CHUNK).min(probes.n);
        forward_tokens_batch(params, &probes.ids[lo * ell..hi * ell], hi - lo, ell)
    })?;
    assemble(
        kind,
        params.config.output_width(kind),
        probes.probe_seed,
        outs,
    )
}

pub fn write_outputs<W: Write>(w: &mut W, m: &OutputMatrix) -> Result<()> {
    m.validate()?;
    write_header(w, MAGIC, VERSION)?;
    w.write_u8(m.kind.code())?;
    w.write_u64::<LE>(m.n as u64)?;
    w.write_u64::<LE>(m.d_out as u64)?;
    w.write_u64::<LE>(m.probe_seed)?;
    write_f32s(w, &m.values)
}

pub fn read_outputs<R: Read>(r: &mut R) -> Result<OutputMatrix> {
    read_header(r, MAGIC, VERSION)?;
    let kind = OutputKind::from_code(read_u8(r, "kind")?)?;
    let n = read_usize(r, "n")?;
    let d_out = read_usize(r, "d_out")?;
    let probe_seed = read_u64(r, "probe_seed")?;
    let total = n
        .checked_mul(d_out)
        .ok_or_else(|| Error::Format("output dimensions overflow".into()))?;
    let values = read_f32s(r, total, "output values")?;
    expect_end(r)?;
    OutputMatrix::new(kind, n, d_out, probe_seed, values)
        .map_err(|e| Error::Format(format!("invalid output file: {e}")))
}

pub fn save_outputs(path: &Path, m: &OutputMatrix) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write_outputs(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_outputs(path: &Path) -> Result<OutputMatrix> {
    read_outputs(&mut BufReader::new(std::fs::File::open(path)?))
}
