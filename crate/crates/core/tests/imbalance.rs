use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sedet_core::eval::{balanced_partition, balanced_resample_eval};
use sedet_core::windowing::class_weights;

fn labels(n_eng: usize, n_sed: usize, seed: u64) -> Vec<u8> {
    let mut v = vec![0u8; n_eng];
    v.extend(std::iter::repeat_n(1u8, n_sed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..v.len()).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    v
}

proptest! {
    #[test]
    fn weighted_class_mass_is_equal(n_eng in 1usize..5000, n_sed in 1usize..5000) {
        let w = class_weights(&labels(n_eng, n_sed, 0)).unwrap();
        let m0 = w[0] * n_eng as f64;
        let m1 = w[1] * n_sed as f64;
        let half = (n_eng + n_sed) as f64 / 2.0;
        prop_assert!((m0 - half).abs() <= half * f64::EPSILON, "{m0} vs {half}");
        prop_assert!((m1 - half).abs() <= half * f64::EPSILON, "{m1} vs {half}");
    }
}

#[test]
fn class_mass_is_exact_for_representable_weights() {
    for (n_eng, n_sed) in [(90, 10), (3, 1), (1, 1), (96, 32), (7, 7)] {
        let w = class_weights(&labels(n_eng, n_sed, 1)).unwrap();
        if [w[0] * (2 * n_eng) as f64, w[1] * (2 * n_sed) as f64] == [(n_eng + n_sed) as f64; 2] {
            assert_eq!(w[0] * n_eng as f64, w[1] * n_sed as f64, "{n_eng}/{n_sed}");
        }
    }
    assert_eq!(class_weights(&labels(3, 1, 2)).unwrap(), [2.0 / 3.0, 2.0]);
}

#[test]
fn ninety_ten_fold_gives_nine_disjoint_resamples() {
    for seed in 0..20 {
        let y = labels(900, 100, seed);
        let part = balanced_partition(&y, seed).unwrap();
        assert_eq!(part.len(), 900 / 100);
        assert!(!part.flagged);
        let mut seen = BTreeSet::new();
        for s in &part.subsets {
            assert_eq!(s.len(), 100);
            assert!(s.iter().all(|&i| y[i] == 0));
            for &i in s {
                assert!(seen.insert(i), "engaged window {i} reused");
            }
        }
        assert_eq!(part.minority.len(), 100);
        assert!(part.minority.iter().all(|&i| y[i] == 1));
    }
    let part = balanced_partition(&labels(95, 10, 3), 3).unwrap();
    assert_eq!(part.len(), 9);
}

#[test]
fn constant_classifier_is_at_chance() {
    for seed in 0..10 {
        let y = labels(900, 100, seed);
        for c in [0.1, 0.9] {
            let r = balanced_resample_eval(&vec![c; y.len()], &y, seed).unwrap();
            assert!((r.accuracy - 0.5).abs() <= 0.02, "{c}: {}", r.accuracy);
            assert_eq!(r.auc, 0.5);
        }
        // Random scores unrelated to the label.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..y.len()).map(|_| rng.random()).collect();
        let r = balanced_resample_eval(&noise, &y, seed).unwrap();
        assert!((r.accuracy - 0.5).abs() <= 0.1, "{}", r.accuracy);
    }
}
