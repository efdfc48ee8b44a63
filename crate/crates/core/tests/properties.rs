mod common;

use proptest::prelude::*;
use rpo::experiments::{base_new_split, harmonic_mean, mean, sample_std, SeedResult};
use rpo::rpo::class_probabilities;

fn argmax(xs: &[f64]) -> usize {
    common::contracts::argmax(xs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn harmonic_mean_bounds(b in 0.0f64..=1.0, n in 0.0f64..=1.0) {
        let h = harmonic_mean(b, n).unwrap();
        prop_assert!(h <= (b + n) / 2.0 + 1e-15);
        prop_assert!(h <= 2.0 * b.min(n) + 1e-15);
        prop_assert!(h >= 0.0);
    }

    #[test]
    fn harmonic_mean_of_equal_pair(x in 0.0f64..=1.0) {
        prop_assert!((harmonic_mean(x, x).unwrap() - x).abs() <= 1e-15);
    }

    #[test]
    fn harmonic_mean_zero_annihilates(x in 0.0f64..=1.0) {
        prop_assert_eq!(harmonic_mean(x, 0.0).unwrap(), 0.0);
        prop_assert_eq!(harmonic_mean(0.0, x).unwrap(), 0.0);
    }

    #[test]
    fn seed_result_is_internally_consistent(b in 0.0f64..=1.0, n in 0.0f64..=1.0) {
        let r = SeedResult::new(1, b, n).unwrap();
        prop_assert_eq!(r.harmonic_mean, harmonic_mean(b, n).unwrap());
    }
}

proptest! {
    #[test]
    fn split_partitions_sorted_names(
        names in prop::collection::hash_set("[a-z]{1,6}", 2..20),
        seed in any::<u64>(),
    ) {
        let names: Vec<String> = names.into_iter().collect();
        let (base, novel) = base_new_split(&names).unwrap();
        prop_assert_eq!(base.len(), names.len().div_ceil(2));
        prop_assert_eq!(base.len() + novel.len(), names.len());
        let mut joined = base.clone();
        joined.extend(novel.iter().cloned());
        let mut sorted = names.clone();
        sorted.sort();
        prop_assert_eq!(&joined, &sorted);

        // Any permutation of the input gives the same split.
        let mut shuffled = names.clone();
        let len = shuffled.len();
        for i in 0..len {
            shuffled.swap(i, (seed as usize).wrapping_add(i * 7) % len);
        }
        prop_assert_eq!(base_new_split(&shuffled).unwrap(), (base, novel));
    }

    #[test]
    fn probabilities_normalize_and_keep_argmax(
        sims in prop::collection::vec(-1.0f64..1.0, 1..40),
        tau in prop::sample::select(vec![0.01, 0.07, 1.0, 10.0]),
    ) {
        let p = class_probabilities(&sims, tau).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert_eq!(argmax(&p), argmax(&sims));
    }

    #[test]
    fn constant_sequence_has_zero_std(x in -10.0f64..10.0, n in 1usize..20) {
        let xs = vec![x; n];
        prop_assert_eq!(sample_std(&xs), 0.0);
        prop_assert!((mean(&xs) - x).abs() <= 1e-12 * x.abs().max(1.0));
    }
}

#[test]
fn metric_examples() {
    common::contracts::metric_reproduction().unwrap();
    assert_eq!(harmonic_mean(0.8, 0.0).unwrap(), 0.0);
}

#[test]
fn split_of_one_class_is_rejected() {
    assert!(base_new_split(&["ba".to_string()]).is_err());
}

#[test]
fn class_probabilities_reject_bad_temperature() {
    assert!(class_probabilities(&[0.1, 0.2], 0.0).is_err());
    assert!(class_probabilities(&[0.1, 0.2], -1.0).is_err());
}
