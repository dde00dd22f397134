use dfd_core::raster::DepthMap;
use dfd_core::uncertainty::{aggregate, mean_error};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_stack(seed: u64, k: usize, w: usize, h: usize) -> Vec<DepthMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|_| DepthMap::from_fn(w, h, |_, _| rng.gen_range(0.5..10.0)))
        .collect()
}

/// Two-pass mean then population variance.
fn two_pass(stack: &[DepthMap], i: usize) -> (f64, f64) {
    let k = stack.len() as f64;
    let mean = stack.iter().map(|m| m.data()[i]).sum::<f64>() / k;
    let var = stack.iter().map(|m| (m.data()[i] - mean).powi(2)).sum::<f64>() / k;
    (mean, var)
}

#[test]
fn fifty_samples_match_two_pass_oracle() {
    for seed in 0..5 {
        let stack = random_stack(seed, 50, 16, 12);
        let agg = aggregate(&stack).unwrap();
        assert_eq!(agg.samples, 50);
        for i in 0..16 * 12 {
            let (m, v) = two_pass(&stack, i);
            assert!((agg.mean.data()[i] - m).abs() <= 1e-12);
            assert!((agg.variance.data()[i] - v).abs() <= 1e-12);
        }
    }
}

#[test]
fn duplicated_stack_has_zero_variance() {
    let one = random_stack(9, 1, 10, 10).remove(0);
    let agg = aggregate(&vec![one.clone(); 50]).unwrap();
    assert!(agg.variance.data().iter().all(|v| *v == 0.0));
    let err = mean_error(&agg.mean, &one, None).unwrap();
    assert!(err.data().iter().all(|v| v.abs() <= 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shift_moves_mean_only(seed in any::<u64>(), c in -5.0..5.0f64) {
        let stack = random_stack(seed, 12, 6, 5);
        let shifted: Vec<DepthMap> = stack.iter().map(|m| m.map(|v| v + c)).collect();
        let (a, b) = (aggregate(&stack).unwrap(), aggregate(&shifted).unwrap());
        for i in 0..30 {
            prop_assert!((b.mean.data()[i] - a.mean.data()[i] - c).abs() <= 1e-12);
            prop_assert!((b.variance.data()[i] - a.variance.data()[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn scale_multiplies_mean_and_variance(seed in any::<u64>(), s in 0.1..4.0f64) {
        let stack = random_stack(seed, 12, 6, 5);
        let scaled: Vec<DepthMap> = stack.iter().map(|m| m.map(|v| v * s)).collect();
        let (a, b) = (aggregate(&stack).unwrap(), aggregate(&scaled).unwrap());
        for i in 0..30 {
            prop_assert!((b.mean.data()[i] - s * a.mean.data()[i]).abs() <= 1e-12 * (1.0 + b.mean.data()[i]));
            let want = s * s * a.variance.data()[i];
            prop_assert!((b.variance.data()[i] - want).abs() <= 1e-12 * (1.0 + want));
        }
    }

    #[test]
    fn variance_is_non_negative(seed in any::<u64>(), k in 1usize..60) {
        let agg = aggregate(&random_stack(seed, k, 4, 4)).unwrap();
        prop_assert!(agg.variance.data().iter().all(|v| *v >= 0.0));
    }
}
