//! Weight- and representation-similarity baselines: PCS (parameter cosine),
//! Intrinsic (layerwise attention std profiles) and REEF (linear CKA).

use crate::error::{Error, Result};
use crate::fingerprint::{OutputKind, OutputMatrix};
use crate::model::ModelParams;
use serde::{Deserialize, Serialize};

/// Similarity at or above which a baseline calls two models related.
pub const THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Pcs,
    Intrinsic,
    Reef,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub method: BaselineMethod,
    pub value: f64,
    pub decision: bool,
}

impl SimilarityScore {
    pub fn new(method: BaselineMethod, value: f64) -> Self {
        SimilarityScore {
            method,
            value,
            decision: value >= THRESHOLD,
        }
    }
}

/// Cosine similarity of the flattened parameter vectors.
pub fn pcs(a: &ModelParams, b: &ModelParams) -> Result<SimilarityScore> {
    if !a.same_architecture(b) {
        return Err(Error::Comparability(
            "PCS needs identical architectures".into(),
        ));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (ta, tb) in a.tensors.iter().zip(&b.tensors) {
        for (&x, &y) in ta.data.iter().zip(&tb.data) {
            let (x, y) = (x as f64, y as f64);
            dot += x * y;
            na += x * x;
            nb += y * y;
        }
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate(
            "PCS of an all-zero parameter vector".into(),
        ));
    }
    let value = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Ok(SimilarityScore::new(BaselineMethod::Pcs, value))
}

/// Per-layer population standard deviation of the concatenated query, key,
/// value and output projection weights.
pub fn intrinsic_profile(a: &ModelParams) -> Vec<f64> {
    a.layout()
        .layers
        .iter()
        .map(|slots| {
            let parts = [slots.wq, slots.wk, slots.wv, slots.wo].map(|i| &a.tensors[i].data);
            let n: usize = parts.iter().map(|p| p.len()).sum();
            let mean = parts
                .iter()
                .flat_map(|p| p.iter())
                .map(|&v| v as f64)
                .sum::<f64>()
                / n as f64;
            let var = parts
                .iter()
                .flat_map(|p| p.iter())
                .map(|&v| (v as f64 - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            var.sqrt()
        })
        .collect()
}

/// Pearson correlation of two equal-length samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation(
            "Pearson correlation needs two points".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant profile".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn intrinsic_similarity(a: &ModelParams, b: &ModelParams) -> Result<SimilarityScore> {
    if a.config.n_layers != b.config.n_layers {
        return Err(Error::Comparability(format!(
            "layer counts differ: {} vs {}",
            a.config.n_layers, b.config.n_layers
        )));
    }
    let value = pearson(&intrinsic_profile(a), &intrinsic_profile(b))?;
    Ok(SimilarityScore::new(BaselineMethod::Intrinsic, value))
}

/// `n × p` feature matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n: usize,
    pub p: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * p || p == 0 {
            return Err(Error::Dimension(format!(
                "{} values do not form a {n}×{p} matrix",
                data.len()
            )));
        }
        Ok(FeatureMatrix { n, p, data })
    }

    /// Hidden-state outputs as REEF features.
    pub fn from_outputs(out: &OutputMatrix) -> Result<Self> {
        if out.kind != OutputKind::Hidden {
            return Err(Error::Comparability(
                "REEF features are hidden states".into(),
            ));
        }
        Self::new(
            out.n,
            out.d_out,
            out.values.iter().map(|&v| v as f64).collect(),
        )
    }

    fn centered(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.p];
        for row in self.data.chunks_exact(self.p) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= self.n as f64);
        let mut c = self.data.clone();
        for row in c.chunks_exact_mut(self.p) {
            row.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
        c
    }
}

/// `‖Aᵀ B‖²_F` for row-major `n × p` and `n × q` matrices.
fn cross_frobenius_sq(a: &[f64], p: usize, b: &[f64], q: usize) -> f64 {
    let mut m = vec![0.0f64; p * q];
    for (ra, rb) in a.chunks_exact(p).zip(b.chunks_exact(q)) {
        for (i, &x) in ra.iter().enumerate() {
            if x != 0.0 {
                for (acc, &y) in m[i * q..(i + 1) * q].iter_mut().zip(rb) {
                    *acc += x * y;
                }
            }
        }
    }
    m.iter().map(|v| v * v).sum()
}

/// Linear CKA between two representations of the same `n` samples.
pub fn reef_cka(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<SimilarityScore> {
    if a.n != b.n {
        return Err(Error::Dimension(format!(
            "sample counts differ: {} vs {}",
            a.n, b.n
        )));
    }
    if a.n < 2 {
        return Err(Error::Input("CKA needs at least two samples".into()));
    }
    let (xa, xb) = (a.centered(), b.centered());
    let ab = cross_frobenius_sq(&xa, a.p, &xb, b.p);
    let aa = cross_frobenius_sq(&xa, a.p, &xa, a.p).sqrt();
    let bb = cross_frobenius_sq(&xb, b.p, &xb, b.p).sqrt();
    if aa == 0.0 || bb == 0.0 {
        return Err(Error::Degenerate("CKA of zero-variance features".into()));
    }
    Ok(SimilarityScore::new(
        BaselineMethod::Reef,
        (ab / (aa * bb)).clamp(0.0, 1.0),
    ))
}
