use proptest::prelude::*;
use seedprints::fingerprint::{
    column_taus, run_detection, DetectionConfig, Matrix, OutputKind, OutputMatrix, TestKind,
};
use seedprints::harness::{ks_statistic, roc_auc, LabeledScore};
use seedprints::stats::{kendall_tau, mann_whitney_one_sided, welch_t_one_sided};

fn distinct_pairs(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..max).prop_flat_map(|n| {
        (
            prop::collection::vec(-1e3..1e3f64, n),
            prop::collection::vec(-1e3..1e3f64, n),
        )
    })
}

fn sample(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, 2..max)
}

fn labeled() -> impl Strategy<Value = Vec<LabeledScore>> {
    prop::collection::vec((-10i32..10, any::<bool>()), 2..40).prop_map(|v| {
        let mut s: Vec<LabeledScore> = v
            .into_iter()
            .enumerate()
            .map(|(i, (score, label))| LabeledScore {
                pair_id: i.to_string(),
                score: score as f64 * 0.5,
                label,
            })
            .collect();
        s[0].label = true;
        s[1].label = false;
        s
    })
}

fn split(s: &[LabeledScore]) -> (Vec<f64>, Vec<f64>) {
    (
        s.iter().filter(|x| x.label).map(|x| x.score).collect(),
        s.iter().filter(|x| !x.label).map(|x| x.score).collect(),
    )
}

/// Strictly increasing map that keeps distinct values distinct.
fn monotone(x: f64) -> f64 {
    x.powi(3) + 2.0 * x + 7.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn kendall_is_symmetric((x, y) in distinct_pairs(60)) {
        match (kendall_tau(&x, &y), kendall_tau(&y, &x)) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(a.is_err() && b.is_err()),
        }
    }

    #[test]
    fn kendall_ignores_monotone_maps((x, y) in distinct_pairs(60)) {
        let mx: Vec<f64> = x.iter().map(|&v| monotone(v / 100.0)).collect();
        let my: Vec<f64> = y.iter().map(|&v| (v / 1e3).exp()).collect();
        if let (Ok(a), Ok(b)) = (kendall_tau(&x, &y), kendall_tau(&mx, &my)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kendall_in_unit_interval((x, y) in distinct_pairs(60)) {
        if let Ok(t) = kendall_tau(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&t));
        }
    }

    #[test]
    fn welch_tails_are_complementary(a in sample(30), b in sample(30)) {
        let ab = welch_t_one_sided(&a, &b).unwrap();
        let ba = welch_t_one_sided(&b, &a).unwrap();
        prop_assert!((ab.p_value + ba.p_value - 1.0).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn mann_whitney_p_in_unit_interval(a in sample(20), b in sample(20)) {
        let r = mann_whitney_one_sided(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!(r.statistic >= 0.0 && r.statistic <= (a.len() * b.len()) as f64);
    }

    #[test]
    fn auc_flips_with_labels(s in labeled()) {
        let flipped: Vec<LabeledScore> =
            s.iter().map(|x| LabeledScore { label: !x.label, ..x.clone() }).collect();
        let a = roc_auc(&s).unwrap();
        let b = roc_auc(&flipped).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_and_ks_ignore_monotone_maps(s in labeled()) {
        let mapped: Vec<LabeledScore> =
            s.iter().map(|x| LabeledScore { score: monotone(x.score), ..x.clone() }).collect();
        prop_assert_eq!(roc_auc(&s).unwrap(), roc_auc(&mapped).unwrap());
        let (p, n) = split(&s);
        let (mp, mn) = split(&mapped);
        prop_assert_eq!(ks_statistic(&p, &n).unwrap(), ks_statistic(&mp, &mn).unwrap());
    }

    #[test]
    fn ks_is_symmetric_and_bounded(s in labeled()) {
        let (p, n) = split(&s);
        let a = ks_statistic(&p, &n).unwrap();
        prop_assert_eq!(a, ks_statistic(&n, &p).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

fn gaussian_outputs(seed: u64, n: usize, d: usize) -> Vec<f32> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n * d)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Swapping base and suspect only changes which model's identity set is
    /// listed first; the intersection, the taus and the p-values agree.
    #[test]
    fn detection_is_symmetric(seed in 0u64..1000, shared in 0.0f32..1.0, test_u in any::<bool>()) {
        let (n, d) = (120, 80);
        let base = gaussian_outputs(seed, n, d);
        let noise = gaussian_outputs(seed + 7919, n, d);
        let other: Vec<f32> = base.iter().zip(&noise).map(|(a, b)| shared * a + (1.0 - shared) * b).collect();
        let f = OutputMatrix::new(OutputKind::Hidden, n, d, 3, base).unwrap();
        let g = OutputMatrix::new(OutputKind::Hidden, n, d, 3, other).unwrap();
        let test = if test_u { TestKind::MannWhitneyUOneSided } else { TestKind::WelchTOneSided };
        let cfg = DetectionConfig { m: Some(40), trials: 3, test, ..DetectionConfig::default() };
        match (run_detection(&f, &g, &cfg), run_detection(&g, &f, &cfg)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.k, b.k);
                prop_assert_eq!(a.p_values, b.p_values);
                prop_assert_eq!(a.same_lineage, b.same_lineage);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            (a, b) => prop_assert!(false, "asymmetric outcome: {:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    /// Adding a constant to a whole row leaves its softmax unchanged, so the
    /// suspect is indistinguishable from the base.
    #[test]
    fn detection_ignores_row_shifts(seed in 0u64..1000, bump in 0.0f32..0.5) {
        let (n, d) = (100, 60);
        let base = gaussian_outputs(seed, n, d);
        let f = OutputMatrix::new(OutputKind::Logits, n, d, 9, base.clone()).unwrap();
        let shifted: Vec<f32> = base.iter().enumerate().map(|(i, v)| v + bump * (i / d) as f32).collect();
        let g = OutputMatrix::new(OutputKind::Logits, n, d, 9, shifted).unwrap();
        let cfg = DetectionConfig { m: Some(30), trials: 2, ..DetectionConfig::default() };
        let a = run_detection(&f, &f, &cfg).unwrap();
        let b = run_detection(&f, &g, &cfg).unwrap();
        prop_assert_eq!(a.k, b.k);
        prop_assert!(b.same_lineage);
        prop_assert!(b.p_mean < 1e-10);
    }

    /// A strictly increasing map applied to each restricted column of the
    /// suspect, a different map per column, leaves every tau unchanged.
    #[test]
    fn column_taus_ignore_rank_preserving_perturbations(seed in 0u64..1000, k in 1usize..20) {
        let n = 80;
        let a: Vec<f64> = gaussian_outputs(seed, n, k).into_iter().map(f64::from).collect();
        let b: Vec<f64> = gaussian_outputs(seed + 1, n, k).into_iter().map(f64::from).collect();
        let pf = Matrix { rows: n, cols: k, data: a };
        let pfp = Matrix { rows: n, cols: k, data: b };
        let bent = Matrix {
            rows: n,
            cols: k,
            data: pfp
                .data
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let j = (i % k) as f64;
                    (v * (1.0 + j)).exp() + j * v.powi(3)
                })
                .collect(),
        };
        let before = column_taus(&pf, &pfp).unwrap();
        let after = column_taus(&pf, &bent).unwrap();
        prop_assert_eq!(before.k, after.k);
        for (x, y) in before.taus.iter().zip(&after.taus) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
