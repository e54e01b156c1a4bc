//! Identity indices, restricted-softmax rank correlations and the lineage test.

use super::output::{OutputKind, OutputMatrix};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng;
use crate::stats::{self, mann_whitney_one_sided, welch_t_one_sided};
use serde::{Deserialize, Serialize};

/// Smallest usable intersection of two identity-index sets.
pub const K_MIN: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.01;
pub const DEFAULT_TRIALS: usize = 10;

/// Default fingerprint size for an output width.
///
/// At least 5% of the width and at least 32, raised further so that two
/// unrelated models share about `3·k_min` indices by chance (expected overlap
/// is `m²/d_out`). Without that floor, unrelated pairs almost never reach
/// `k_min` and end up inconclusive instead of rejected.
pub fn default_m(d_out: usize) -> usize {
    let chance = (3.0 * K_MIN as f64 * d_out as f64).sqrt().ceil() as usize;
    (d_out / 20).max(32).max(chance).min(d_out)
}

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols + j])
            .collect()
    }
}

/// The `m` coordinates with the smallest mean output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityIndexSet {
    /// Strictly increasing.
    pub indices: Vec<usize>,
    pub m: usize,
    pub source_kind: OutputKind,
    pub d_out: usize,
}

/// Taus of matched columns. `index_map[j]` is the coordinate behind `taus[j]`;
/// columns whose tau is undefined (a constant side) are listed in `excluded`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSample {
    pub taus: Vec<f64>,
    pub k: usize,
    pub index_map: Vec<usize>,
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WelchTOneSided,
    MannWhitneyUOneSided,
}

impl TestKind {
    pub const ALL: [TestKind; 2] = [TestKind::WelchTOneSided, TestKind::MannWhitneyUOneSided];

    pub fn short_name(self) -> &'static str {
        match self {
            TestKind::WelchTOneSided => "t",
            TestKind::MannWhitneyUOneSided => "u",
        }
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t" | "welch" | "welch_t_one_sided" => Ok(TestKind::WelchTOneSided),
            "u" | "mwu" | "mann_whitney" | "mann_whitney_u_one_sided" => {
                Ok(TestKind::MannWhitneyUOneSided)
            }
            other => Err(Error::Config(format!(
                "unknown test {other:?} (expected t or u)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Fingerprint size; `None` selects [`default_m`] for the output width.
    pub m: Option<usize>,
    pub alpha: f64,
    pub trials: usize,
    pub test: TestKind,
    pub base_null_seed: u64,
    pub k_min: usize,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            m: None,
            alpha: DEFAULT_ALPHA,
            trials: DEFAULT_TRIALS,
            test: TestKind::WelchTOneSided,
            base_null_seed: 0,
            k_min: K_MIN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSeeds {
    pub probe_seed: u64,
    pub base_null_seed: u64,
    pub null_seeds: Vec<u64>,
}

/// Outcome of one lineage test; its fields are enough to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub test: TestKind,
    pub alpha: f64,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub p_values: Vec<f64>,
    pub p_mean: f64,
    pub same_lineage: bool,
    pub seeds: ReportSeeds,
    /// Intersection coordinates dropped because a column was constant.
    pub excluded_columns: usize,
}

impl DetectionReport {
    /// The configuration this report was produced with.
    pub fn config(&self) -> DetectionConfig {
        DetectionConfig {
            m: Some(self.m),
            alpha: self.alpha,
            trials: self.p_values.len(),
            test: self.test,
            base_null_seed: self.seeds.base_null_seed,
            k_min: K_MIN,
        }
    }

    /// Re-runs the detection on the same outputs from the recorded seeds.
    pub fn replay(&self, out_f: &OutputMatrix, out_fp: &OutputMatrix) -> Result<DetectionReport> {
        if out_f.probe_seed != self.seeds.probe_seed {
            return Err(Error::Protocol(format!(
                "report was produced with probe seed {}, outputs carry {}",
                self.seeds.probe_seed, out_f.probe_seed
            )));
        }
        run_detection(out_f, out_fp, &self.config())
    }

    pub fn score(&self) -> f64 {
        1.0 - self.p_mean
    }
}

pub fn mean_output(out: &OutputMatrix) -> Vec<f64> {
    let mut mean = vec![0.0f64; out.d_out];
    for i in 0..out.n {
        for (m, &v) in mean.iter_mut().zip(out.row(i)) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= out.n as f64);
    mean
}

/// Coordinates of the `m` smallest entries of `mean`, ties to the lower index.
pub fn identity_indices(mean: &[f64], m: usize, kind: OutputKind) -> Result<IdentityIndexSet> {
    if m == 0 || m > mean.len() {
        return Err(Error::Config(format!(
            "m = {m} outside [1, {}]",
            mean.len()
        )));
    }
    if mean.iter().any(|v| v.is_nan()) {
        return Err(Error::Input("mean output contains NaN".into()));
    }
    let mut order: Vec<usize> = (0..mean.len()).collect();
    order.sort_by(|&a, &b| mean[a].total_cmp(&mean[b]).then(a.cmp(&b)));
    let mut indices = order[..m].to_vec();
    indices.sort_unstable();
    Ok(IdentityIndexSet {
        indices,
        m,
        source_kind: kind,
        d_out: mean.len(),
    })
}

pub fn intersect(a: &IdentityIndexSet, b: &IdentityIndexSet) -> Result<Vec<usize>> {
    if a.source_kind != b.source_kind || a.d_out != b.d_out {
        return Err(Error::Comparability(format!(
            "cannot intersect {} indices over {} with {} indices over {}",
            a.source_kind, a.d_out, b.source_kind, b.d_out
        )));
    }
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.indices.len() && j < b.indices.len() {
        match a.indices[i].cmp(&b.indices[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a.indices[i]);
                i += 1;
                j += 1;
            }
        }
    }
    Ok(out)
}

/// Row-wise softmax over the coordinates in `t`, computed in `f64`.
pub fn restrict_softmax(out: &OutputMatrix, t: &[usize]) -> Result<Matrix> {
    if t.is_empty() {
        return Err(Error::Inconclusive { k: 0, k_min: K_MIN });
    }
    if let Some(&bad) = t.iter().find(|&&c| c >= out.d_out) {
        return Err(Error::Dimension(format!(
            "coordinate {bad} outside output width {}",
            out.d_out
        )));
    }
    let k = t.len();
    let mut data = Vec::with_capacity(out.n * k);
    for i in 0..out.n {
        let row = out.row(i);
        let start = data.len();
        data.extend(t.iter().map(|&c| row[c] as f64));
        stats::softmax_in_place(&mut data[start..]);
    }
    Ok(Matrix {
        rows: out.n,
        cols: k,
        data,
    })
}

/// Per-column tau-b, `None` where a column is constant on either side.
fn raw_column_taus(a: &Matrix, b: &Matrix, exec: Execution) -> Result<Vec<Option<f64>>> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::Comparability(format!(
            "matrix shapes differ: {}×{} vs {}×{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if a.rows < 2 {
        return Err(Error::Input("column taus need at least two rows".into()));
    }
    exec.try_map(a.cols, |j| {
        match stats::kendall_tau(&a.column(j), &b.column(j)) {
            Ok(t) => Ok(Some(t)),
            Err(Error::UndefinedCorrelation(_)) => Ok(None),
            Err(e) => Err(e),
        }
    })
}

fn sample_from(raw: Vec<Option<f64>>, coords: &[usize]) -> CorrelationSample {
    let mut taus = Vec::with_capacity(raw.len());
    let mut index_map = Vec::with_capacity(raw.len());
    let mut excluded = Vec::new();
    for (t, &c) in raw.into_iter().zip(coords) {
        match t {
            Some(t) => {
                taus.push(t);
                index_map.push(c);
            }
            None => excluded.push(c),
        }
    }
    CorrelationSample {
        k: taus.len(),
        taus,
        index_map,
        excluded,
    }
}

/// Kendall tau-b between matching columns of two probability matrices.
/// Column `j` is reported as coordinate `j`.
pub fn column_taus(p_f: &Matrix, p_fp: &Matrix) -> Result<CorrelationSample> {
    column_taus_with(p_f, p_fp, Execution::default())
}

pub fn column_taus_with(p_f: &Matrix, p_fp: &Matrix, exec: Execution) -> Result<CorrelationSample> {
    let raw = raw_column_taus(p_f, p_fp, exec)?;
    let coords: Vec<usize> = (0..p_f.cols).collect();
    Ok(sample_from(raw, &coords))
}

fn gaussian_softmax(n: usize, k: usize, seed: u64, stream: u64) -> Matrix {
    let mut r = rng::substream(seed, stream);
    let mut data: Vec<f64> = (0..n * k).map(|_| rng::standard_normal(&mut r)).collect();
    data.chunks_exact_mut(k).for_each(stats::softmax_in_place);
    Matrix {
        rows: n,
        cols: k,
        data,
    }
}

fn raw_null_taus(n: usize, k: usize, null_seed: u64, exec: Execution) -> Result<Vec<Option<f64>>> {
    if n < 2 || k == 0 {
        return Err(Error::Config(format!(
            "null baseline needs n ≥ 2 and k ≥ 1, got n={n} k={k}"
        )));
    }
    let a = gaussian_softmax(n, k, null_seed, 1);
    let b = gaussian_softmax(n, k, null_seed, 2);
    raw_column_taus(&a, &b, exec)
}

/// Column taus of two independent row-softmaxed `n × k` Gaussian matrices.
pub fn null_taus(n: usize, k: usize, null_seed: u64) -> Result<CorrelationSample> {
    let raw = raw_null_taus(n, k, null_seed, Execution::default())?;
    let coords: Vec<usize> = (0..k).collect();
    Ok(sample_from(raw, &coords))
}

fn check_comparable(out_f: &OutputMatrix, out_fp: &OutputMatrix) -> Result<()> {
    if out_f.probe_seed != out_fp.probe_seed {
        return Err(Error::Protocol(format!(
            "models were probed with different X (probe seeds {} and {})",
            out_f.probe_seed, out_fp.probe_seed
        )));
    }
    if out_f.kind != out_fp.kind || out_f.d_out != out_fp.d_out {
        return Err(Error::Comparability(format!(
            "{} outputs of width {} vs {} outputs of width {}",
            out_f.kind, out_f.d_out, out_fp.kind, out_fp.d_out
        )));
    }
    if out_f.n != out_fp.n {
        return Err(Error::Protocol(format!(
            "probe counts differ ({} vs {}) under the same probe seed",
            out_f.n, out_fp.n
        )));
    }
    Ok(())
}

/// Identity-index intersection and the observed column taus of two models.
pub struct Observation {
    pub index_f: IdentityIndexSet,
    pub index_fp: IdentityIndexSet,
    pub intersection: Vec<usize>,
    /// One entry per intersection coordinate.
    pub raw_taus: Vec<Option<f64>>,
}

impl Observation {
    pub fn sample(&self) -> CorrelationSample {
        sample_from(self.raw_taus.clone(), &self.intersection)
    }
}

pub fn observe(
    out_f: &OutputMatrix,
    out_fp: &OutputMatrix,
    m: usize,
    exec: Execution,
) -> Result<Observation> {
    check_comparable(out_f, out_fp)?;
    let index_f = identity_indices(&mean_output(out_f), m, out_f.kind)?;
    let index_fp = identity_indices(&mean_output(out_fp), m, out_fp.kind)?;
    let intersection = intersect(&index_f, &index_fp)?;
    let raw_taus = if intersection.is_empty() || out_f.n < 2 {
        vec![None; intersection.len()]
    } else {
        let p_f = restrict_softmax(out_f, &intersection)?;
        let p_fp = restrict_softmax(out_fp, &intersection)?;
        raw_column_taus(&p_f, &p_fp, exec)?
    };
    Ok(Observation {
        index_f,
        index_fp,
        intersection,
        raw_taus,
    })
}

/// Lineage test between a base model's outputs `out_f` and a suspect's `out_fp`.
pub fn run_detection(
    out_f: &OutputMatrix,
    out_fp: &OutputMatrix,
    cfg: &DetectionConfig,
) -> Result<DetectionReport> {
    run_detection_with(out_f, out_fp, cfg, Execution::default())
}

pub fn run_detection_with(
    out_f: &OutputMatrix,
    out_fp: &OutputMatrix,
    cfg: &DetectionConfig,
    exec: Execution,
) -> Result<DetectionReport> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha must lie in (0, 1), got {}",
            cfg.alpha
        )));
    }
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if out_f.n < 2 {
        return Err(Error::Input("detection needs at least two probes".into()));
    }
    check_comparable(out_f, out_fp)?;
    let m = cfg.m.unwrap_or_else(|| default_m(out_f.d_out));
    let obs = observe(out_f, out_fp, m, exec)?;
    let k = obs.intersection.len();
    let k_min = cfg.k_min.max(2);
    if k < k_min {
        return Err(Error::Inconclusive { k, k_min });
    }
    let keep: Vec<usize> = (0..k).filter(|&j| obs.raw_taus[j].is_some()).collect();
    if keep.len() < k_min {
        return Err(Error::Inconclusive {
            k: keep.len(),
            k_min,
        });
    }
    let observed: Vec<f64> = keep.iter().map(|&j| obs.raw_taus[j].unwrap()).collect();

    let null_seeds: Vec<u64> = (0..cfg.trials as u64)
        .map(|t| cfg.base_null_seed.wrapping_add(t))
        .collect();
    let n = out_f.n;
    // trials run in parallel; column taus inside each trial stay sequential
    let p_values = exec.try_map(cfg.trials, |t| {
        let raw = raw_null_taus(n, k, null_seeds[t], Execution::Sequential)?;
        let null: Vec<f64> = keep.iter().filter_map(|&j| raw[j]).collect();
        let outcome = match cfg.test {
            TestKind::WelchTOneSided => welch_t_one_sided(&observed, &null)?,
            TestKind::MannWhitneyUOneSided => mann_whitney_one_sided(&observed, &null)?,
        };
        Ok::<f64, Error>(outcome.p_value)
    })?;
    let p_mean = p_values.iter().sum::<f64>() / p_values.len() as f64;
    Ok(DetectionReport {
        test: cfg.test,
        alpha: cfg.alpha,
        m,
        k,
        n,
        p_values,
        p_mean,
        same_lineage: p_mean < cfg.alpha,
        seeds: ReportSeeds {
            probe_seed: out_f.probe_seed,
            base_null_seed: cfg.base_null_seed,
            null_seeds,
        },
        excluded_columns: k - keep.len(),
    })
}

/// `s = 1 − p`.
pub fn score_from_p(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Input(format!("p-value {p} outside [0, 1]")));
    }
    Ok(1.0 - p)
}

/// For each index set, the mean column tau between the restricted softmax of
/// two models' outputs over that set.
pub fn persistence_probe(
    out_init: &OutputMatrix,
    out_ckpt: &OutputMatrix,
    index_sets: &[IdentityIndexSet],
) -> Result<Vec<f64>> {
    check_comparable(out_init, out_ckpt)?;
    index_sets
        .iter()
        .map(|set| {
            if set.source_kind != out_init.kind || set.d_out != out_init.d_out {
                return Err(Error::Comparability(format!(
                    "index set over {} {} does not fit {} outputs of width {}",
                    set.d_out, set.source_kind, out_init.kind, out_init.d_out
                )));
            }
            let a = restrict_softmax(out_init, &set.indices)?;
            let b = restrict_softmax(out_ckpt, &set.indices)?;
            let s = column_taus(&a, &b)?;
            if s.taus.is_empty() {
                return Err(Error::Degenerate(
                    "every column of the index set is constant".into(),
                ));
            }
            Ok(s.taus.iter().sum::<f64>() / s.taus.len() as f64)
        })
        .collect()
}

/// Mean null tau over `k` columns for `reps` independent null draws.
pub fn persistence_null(
    n: usize,
    k: usize,
    base_seed: u64,
    reps: usize,
    exec: Execution,
) -> Result<Vec<f64>> {
    exec.try_map(reps, |r| {
        let raw = raw_null_taus(
            n,
            k,
            base_seed.wrapping_add(r as u64),
            Execution::Sequential,
        )?;
        let taus: Vec<f64> = raw.into_iter().flatten().collect();
        Ok(taus.iter().sum::<f64>() / taus.len().max(1) as f64)
    })
}

/// Empirical `q`-quantile (nearest rank, `q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::Input(
            "quantile needs a nonempty sample and q in [0, 1]".into(),
        ));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Ok(v[rank - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(kind: OutputKind, n: usize, d: usize, seed: u64, values: Vec<f32>) -> OutputMatrix {
        OutputMatrix::new(kind, n, d, seed, values).unwrap()
    }

    #[test]
    fn mean_examples() {
        let m = mat(OutputKind::Logits, 3, 2, 0, vec![1., 4., 2., 5., 3., 6.]);
        assert_eq!(mean_output(&m), vec![2.0, 5.0]);
        let m = mat(OutputKind::Logits, 2, 2, 0, vec![1., -3., -1., 3.]);
        assert_eq!(mean_output(&m), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_index_examples() {
        let s = identity_indices(&[0.9, 0.1, 0.5, 0.2], 2, OutputKind::Logits).unwrap();
        assert_eq!(s.indices, vec![1, 3]);
        let s = identity_indices(&[0.1, 0.1, 0.5], 1, OutputKind::Logits).unwrap();
        assert_eq!(s.indices, vec![0]);
        let s = identity_indices(&[3.0, 1.0, 2.0], 3, OutputKind::Logits).unwrap();
        assert_eq!(s.indices, vec![0, 1, 2]);
        assert!(matches!(
            identity_indices(&[1.0], 2, OutputKind::Logits),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            identity_indices(&[1.0], 0, OutputKind::Logits),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn intersect_examples() {
        let set = |v: Vec<usize>, kind| IdentityIndexSet {
            m: v.len(),
            indices: v,
            source_kind: kind,
            d_out: 10,
        };
        let l = OutputKind::Logits;
        assert_eq!(
            intersect(&set(vec![1, 3, 5], l), &set(vec![3, 5, 7], l)).unwrap(),
            vec![3, 5]
        );
        assert!(intersect(&set(vec![1], l), &set(vec![2], l))
            .unwrap()
            .is_empty());
        assert_eq!(
            intersect(&set(vec![2, 4], l), &set(vec![2, 4], l)).unwrap(),
            vec![2, 4]
        );
        assert!(matches!(
            intersect(&set(vec![1], l), &set(vec![1], OutputKind::Hidden)),
            Err(Error::Comparability(_))
        ));
    }

    #[test]
    fn restrict_softmax_examples() {
        let m = mat(
            OutputKind::Logits,
            2,
            3,
            0,
            vec![0.0, 9.0, 0.0, std::f32::consts::LN_2, 9.0, 0.0],
        );
        let p = restrict_softmax(&m, &[0, 2]).unwrap();
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert!((p.row(1)[0] - 2.0 / 3.0).abs() < 1e-7);
        assert!(matches!(
            restrict_softmax(&m, &[]),
            Err(Error::Inconclusive { k: 0, .. })
        ));
    }

    #[test]
    fn column_tau_extremes_and_constant_columns() {
        let a = Matrix {
            rows: 3,
            cols: 2,
            data: vec![1., 5., 2., 5., 3., 5.],
        };
        let rev = Matrix {
            rows: 3,
            cols: 2,
            data: vec![3., 1., 2., 2., 1., 3.],
        };
        let s = column_taus(&a, &a).unwrap();
        assert_eq!(s.taus, vec![1.0]);
        assert_eq!(s.excluded, vec![1]);
        let s = column_taus(&a, &rev).unwrap();
        assert_eq!(s.taus, vec![-1.0]);
    }

    #[test]
    fn null_is_deterministic() {
        assert_eq!(null_taus(50, 7, 3).unwrap(), null_taus(50, 7, 3).unwrap());
        // a one-column softmax is identically 1, so its tau is undefined
        let one = null_taus(20, 1, 0).unwrap();
        assert_eq!((one.k, one.excluded.clone()), (0, vec![0]));
        let two = null_taus(20, 2, 0).unwrap();
        assert_eq!(two.k, 2);
        assert!(two.taus.iter().all(|t| t.abs() <= 1.0));
    }

    #[test]
    fn protocol_and_comparability_errors() {
        let a = mat(OutputKind::Logits, 2, 2, 1, vec![0.; 4]);
        let b = mat(OutputKind::Logits, 2, 2, 2, vec![0.; 4]);
        let c = mat(OutputKind::Hidden, 2, 2, 1, vec![0.; 4]);
        let cfg = DetectionConfig::default();
        assert!(matches!(
            run_detection(&a, &b, &cfg),
            Err(Error::Protocol(_))
        ));
        assert!(matches!(
            run_detection(&a, &c, &cfg),
            Err(Error::Comparability(_))
        ));
    }

    #[test]
    fn score_examples() {
        assert_eq!(score_from_p(0.0).unwrap(), 1.0);
        assert_eq!(score_from_p(1.0).unwrap(), 0.0);
        assert_eq!(score_from_p(0.25).unwrap(), 0.75);
        assert!(score_from_p(1.5).is_err());
    }

    #[test]
    fn default_m_values() {
        assert_eq!(default_m(512), 124);
        assert_eq!(default_m(128), 62);
        assert_eq!(default_m(20), 20);
        assert_eq!(default_m(100_000), 5000);
    }

    #[test]
    fn quantile_nearest_rank() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&v, 0.99).unwrap(), 5.0);
    }
}
