use creens_core::metrics::{accuracy, mcnemar, rmse, wilcoxon_signed_rank};
use proptest::prelude::*;

fn paired_labels() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..30).prop_flat_map(|n| (prop::collection::vec(1u8..=5, n), prop::collection::vec(1u8..=5, n)))
}

proptest! {
    #[test]
    fn fixing_a_wrong_prediction_never_hurts((pred, truth) in paired_labels()) {
        if let Some(i) = pred.iter().zip(&truth).position(|(p, t)| p != t) {
            let mut fixed = pred.clone();
            fixed[i] = truth[i];
            prop_assert!(accuracy(&fixed, &truth).unwrap() >= accuracy(&pred, &truth).unwrap());
            prop_assert!(rmse(&fixed, &truth).unwrap() <= rmse(&pred, &truth).unwrap());
        }
    }

    #[test]
    fn mcnemar_is_symmetric(a in prop::collection::vec(any::<bool>(), 0..40), seed in any::<u64>()) {
        let mut rng = creens_core::rng::SplitMix64::new(seed);
        let b: Vec<bool> = a.iter().map(|_| rng.below(2) == 1).collect();
        let ab = mcnemar(&a, &b).unwrap();
        let ba = mcnemar(&b, &a).unwrap();
        prop_assert_eq!(ab.statistic, ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn wilcoxon_is_symmetric(a in prop::collection::vec(0u8..5, 1..60), b in prop::collection::vec(0u8..5, 1..60)) {
        let n = a.len().min(b.len());
        let ea: Vec<f64> = a[..n].iter().map(|&x| f64::from(x)).collect();
        let eb: Vec<f64> = b[..n].iter().map(|&x| f64::from(x)).collect();
        let ab = wilcoxon_signed_rank(&ea, &eb).unwrap();
        let ba = wilcoxon_signed_rank(&eb, &ea).unwrap();
        prop_assert_eq!(ab.statistic, ba.statistic);
        prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }
}
