use proptest::prelude::*;
use snnf_core::encoders::{
    decode_weighted_phase, encode_hybrid, encode_ttfs, encode_weighted_phase, ttfs_step, TemporalScheme,
};
use snnf_core::tensor::Tensor;

fn sweep() -> Tensor {
    Tensor::from_vec((0..=256).map(|j| j as f64 / 256.0).collect())
}

#[test]
fn ttfs_sweep_single_spike_and_monotone() {
    for steps in [1, 2, 4, 6, 8, 16] {
        let x = sweep();
        let train = encode_ttfs(&x, steps).unwrap();
        let n = x.numel();
        let mut last = usize::MAX;
        for p in 0..n {
            let fired: Vec<usize> = (0..steps).filter(|&t| train.data()[t * n + p] == 1.0).collect();
            assert!(fired.len() <= 1);
            assert_eq!(fired.is_empty(), x.data()[p] == 0.0);
            if let Some(&t) = fired.first() {
                assert!(t <= last, "brighter pixel fired later at T={steps}");
                last = t;
            }
        }
    }
}

#[test]
fn weighted_phase_sweep_decodes_within_resolution() {
    for period in [4usize, 8] {
        let x = Tensor::from_vec((0..256).map(|j| j as f64 / 256.0).collect());
        let decoded = decode_weighted_phase(&encode_weighted_phase(&x, period, period).unwrap(), period).unwrap();
        let bound = 0.5f64.powi(period as i32);
        for (a, b) in x.data().iter().zip(decoded.data()) {
            assert!((a - b).abs() < bound && b <= a, "K={period}: {a} decoded to {b}");
        }
    }
}

#[test]
fn weighted_phase_saturates_at_one() {
    let x = Tensor::from_vec(vec![1.0]);
    let d = decode_weighted_phase(&encode_weighted_phase(&x, 4, 4).unwrap(), 4).unwrap();
    assert_eq!(d.data(), &[1.0 - 1.0 / 16.0]);
}

proptest! {
    #[test]
    fn ttfs_brighter_fires_no_later(a in 0.0f64..=1.0, b in 0.0f64..=1.0, steps in 1usize..20) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if let (Some(tl), Some(th)) = (ttfs_step(lo, steps), ttfs_step(hi, steps)) {
            prop_assert!(th <= tl);
        }
        if hi > 0.0 {
            prop_assert!(ttfs_step(hi, steps).is_some());
        }
    }

    #[test]
    fn hybrid_splits_direct_and_temporal(pixels in prop::collection::vec(0.0f64..=1.0, 12), steps in 1usize..8) {
        let image = Tensor::new(vec![1, 3, 4], pixels).unwrap();
        let h = encode_hybrid(&image, steps, TemporalScheme::Ttfs, 4).unwrap();
        prop_assert_eq!(&h.direct_image, &image);
        prop_assert_eq!(h.temporal_train.shape()[0], steps - 1);
        prop_assert!(h.temporal_train.is_binary());
    }

    #[test]
    fn weighted_phase_repeats_every_period(pixels in prop::collection::vec(0.0f64..=1.0, 5), k in 1usize..6, reps in 1usize..4) {
        let image = Tensor::from_vec(pixels);
        let train = encode_weighted_phase(&image, k * reps, k).unwrap();
        let n = image.numel();
        for t in k..k * reps {
            prop_assert_eq!(&train.data()[t * n..(t + 1) * n], &train.data()[(t - k) * n..(t - k + 1) * n]);
        }
    }
}
