use proptest::prelude::*;
use surrogate_core::checkpoint::{Checkpoint, CheckpointMeta};
use surrogate_core::degrade::{bicubic_resample, pseudo_real_degrade, quantize, taps, Direction, PseudoReal};
use surrogate_core::loss::{adversarial_loss, discriminator_loss};
use surrogate_core::models::{instantiate, Arch};
use surrogate_core::ops::{avg_down, nearest_up};
use surrogate_core::Tensor;

fn image(max_side: usize) -> impl Strategy<Value = Tensor> {
    (1..=3usize, 1..=max_side, 1..=max_side).prop_flat_map(|(c, h, w)| {
        proptest::collection::vec(0.0f32..=1.0, c * h * w)
            .prop_map(move |v| Tensor::from_vec([1, c, h, w], v).unwrap())
    })
}

proptest! {
    #[test]
    fn resampling_taps_sum_to_one(n_in in 1usize..64, n_out in 1usize..64) {
        for t in taps(n_in, n_out) {
            let s: f64 = t.weight.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bicubic_keeps_constants(v in 0.0f32..=1.0, f in prop_oneof![Just(2usize), Just(4)], up in any::<bool>()) {
        let x = Tensor::full([1, 3, 8, 12], v);
        let dir = if up { Direction::Up } else { Direction::Down };
        let y = bicubic_resample(&x, f, dir).unwrap();
        prop_assert!(y.data().iter().all(|&a| (a - v).abs() < 1e-6));
    }

    #[test]
    fn average_undoes_nearest_upsampling(x in image(6), f in 1usize..4) {
        let back = avg_down(&nearest_up(&x, f).unwrap(), f).unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn quantization_is_idempotent(x in image(8)) {
        let q = quantize(&x);
        prop_assert!(quantize(&q).bit_eq(&q));
    }

    #[test]
    fn noiseless_pseudo_real_keeps_constants(v in 0.0f32..=1.0, sigma in 0.0f64..2.0, seed in any::<u64>()) {
        let p = PseudoReal { blur_sigma: sigma, factor: 4, noise_sigma: 0.0, quantize: false };
        let y = pseudo_real_degrade(&Tensor::full([1, 3, 16, 16], v), &p, seed).unwrap();
        prop_assert!(y.data().iter().all(|&a| (a - v).abs() < 1e-5));
    }

    #[test]
    fn gan_losses_stay_finite(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        prop_assert!(adversarial_loss(a).is_finite());
        prop_assert!(discriminator_loss(a, b).is_finite());
    }

    #[test]
    fn checkpoint_decoding_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
        let _ = Checkpoint::decode(&bytes);
    }

    #[test]
    fn truncated_checkpoints_are_rejected(seed in any::<u64>(), cut in 0.0f64..1.0) {
        let net = instantiate(Arch::SrSmall { blocks: 1, features: 4, scale: 2 }, seed).unwrap();
        let bytes = Checkpoint::from_network(&net, CheckpointMeta::default()).encode();
        let keep = (cut * bytes.len() as f64) as usize;
        prop_assert!(Checkpoint::decode(&bytes[..keep]).is_err());
    }
}
