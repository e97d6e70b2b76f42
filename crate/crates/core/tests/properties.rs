//! Property checks on invariants that hold for every input.

use madi::augment::{overlay, random_shift};
use madi::envs::reward_visual;
use madi::harness::welch_t_test;
use madi::nets::{ema_update, ParamSet};
use madi::par::Exec;
use madi::rng::RngStream;
use madi::tensor::Tensor;
use madi::types::Frame;
use proptest::prelude::*;

fn tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = RngStream::new(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.uniform()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_only_moves_values_within_a_plane(seed in any::<u64>(), radius in 0usize..4) {
        let obs = tensor(&[2, 6, 16, 16], seed);
        let out = random_shift(Exec::Sequential, &obs, radius, &mut RngStream::new(seed ^ 1)).unwrap();
        prop_assert_eq!(out.shape(), obs.shape());
        for (src, dst) in obs.data().chunks(256).zip(out.data().chunks(256)) {
            prop_assert!(dst.iter().all(|v| src.contains(v)));
        }
    }

    #[test]
    fn overlay_stays_between_its_inputs(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let obs = tensor(&[2, 3, 16, 16], seed);
        let images = tensor(&[2, 3, 16, 16], seed ^ 2);
        let out = overlay(&obs, &images, alpha).unwrap();
        for ((&o, &i), &y) in obs.data().iter().zip(images.data()).zip(out.data()) {
            prop_assert!(y >= o.min(i) - 1e-12 && y <= o.max(i) + 1e-12);
        }
    }

    #[test]
    fn ema_lands_between_target_and_online(seed in any::<u64>(), tau in 0.0f64..=1.0) {
        let mut online = ParamSet::new();
        online.insert("w", tensor(&[5, 3], seed));
        let mut target = ParamSet::new();
        target.insert("w", tensor(&[5, 3], seed ^ 3));
        let before = target.clone();
        ema_update(&online, &mut target, tau).unwrap();
        let (o, b, t) = (online.get("w").data(), before.get("w").data(), target.get("w").data());
        for i in 0..o.len() {
            prop_assert!(t[i] >= o[i].min(b[i]) - 1e-12 && t[i] <= o[i].max(b[i]) + 1e-12);
        }
    }

    #[test]
    fn welch_is_symmetric_and_p_is_a_probability(
        a in prop::collection::vec(-10.0f64..10.0, 2..12),
        b in prop::collection::vec(-10.0f64..10.0, 2..12),
    ) {
        let (ab, ba) = (welch_t_test(&a, &b), welch_t_test(&b, &a));
        if let (Ok(ab), Ok(ba)) = (ab, ba) {
            prop_assert!((0.0..=1.0).contains(&ab.p));
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
            prop_assert!((ab.t + ba.t).abs() < 1e-9 * ab.t.abs().max(1.0));
        }
    }

    #[test]
    fn visual_reward_respects_its_clip(pixels in prop::collection::vec(any::<u8>(), 16 * 16 * 3)) {
        let frame = Frame::new(16, 16, pixels).unwrap();
        let r = reward_visual(&frame, 4.0, 0.0, 4.0);
        prop_assert!((0.0..=4.0).contains(&r));
    }
}
