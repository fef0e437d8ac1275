//! Brute-force scalar references for the convolution and resampling kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use surrogate_core::degrade::{bicubic_resample, pseudo_real_degrade, Direction, PseudoReal};
use surrogate_core::ops::{conv2d, Padding};
use surrogate_core::Tensor;

#[path = "support/reference.rs"]
mod reference;
use reference::{bicubic_reference, conv_reference};

fn random(shape: [usize; 4], r: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

#[test]
fn conv2d_matches_direct_summation() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for case in 0..24 {
        let k = [1, 3, 5][case % 3];
        let stride = 1 + (case / 3) % 2;
        let padding = if (case / 6) % 2 == 0 { Padding::Zero } else { Padding::Reflect };
        let (c_in, c_out) = (1 + case % 4, 1 + (case * 7) % 5);
        let (h, w) = (k.max(3) + case % 5, k.max(3) + (case * 3) % 7);
        let n = 1 + case % 2;
        let x = random([n, c_in, h, w], &mut r);
        let wt = random([c_out, c_in, k, k], &mut r);
        let b = random([c_out, 1, 1, 1], &mut r);
        let got = conv2d(&x, &wt, &b, stride, padding).unwrap();
        let want = conv_reference(&x, &wt, &b, stride, padding);
        assert_eq!(got.shape(), want.shape(), "case {case}");
        for (a, e) in got.data().iter().zip(want.data()) {
            assert!((a - e).abs() < 1e-5, "case {case}: {a} vs {e}");
        }
    }
}

fn assert_close(got: &Tensor, want: &Tensor, tol: f32) {
    assert_eq!(got.shape(), want.shape());
    for (i, (a, e)) in got.data().iter().zip(want.data()).enumerate() {
        assert!((a - e).abs() < tol, "element {i}: {a} vs {e}");
    }
}

#[test]
fn bicubic_downsample_of_a_ramp_matches_scalar_reference() {
    let ramp = Tensor::from_fn([1, 1, 8, 32], |[_, _, _, x]| x as f32 / 31.0);
    for f in [2, 4] {
        let got = bicubic_resample(&ramp, f, Direction::Down).unwrap();
        assert_close(&got, &bicubic_reference(&ramp, 8 / f, 32 / f), 1e-5);
    }
}

#[test]
fn bicubic_matches_scalar_reference_in_two_dimensions() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::from_fn([2, 3, 16, 12], |_| r.random_range(0.0..1.0));
    for f in [2, 4] {
        let down = bicubic_resample(&x, f, Direction::Down).unwrap();
        assert_close(&down, &bicubic_reference(&x, 16 / f, 12 / f), 1e-5);
        let up = bicubic_resample(&x, f, Direction::Up).unwrap();
        assert_close(&up, &bicubic_reference(&x, 16 * f, 12 * f), 1e-5);
    }
}

/// FNV-1a over the little-endian bytes of every element.
fn fingerprint(t: &Tensor) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in t.data() {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[test]
fn pseudo_real_output_is_frozen() {
    let ramp = Tensor::from_fn([1, 3, 16, 16], |[_, c, y, x]| ((x + 2 * y + 5 * c) % 32) as f32 / 31.0);
    let out = pseudo_real_degrade(&ramp, &PseudoReal::default(), 42).unwrap();
    assert_eq!(out.shape(), [1, 3, 4, 4]);
    let bytes: Vec<u8> = out.data().iter().map(|&v| (v * 255.0).round() as u8).collect();
    assert_eq!(bytes, GOLDEN_BYTES);
    assert_eq!(fingerprint(&out), GOLDEN_FINGERPRINT);
}

const GOLDEN_BYTES: [u8; 48] = [
    45, 78, 107, 139, 104, 133, 166, 197, 176, 193, 179, 115, 205, 111, 57, 62, 86, 115, 149, 177, 145, 178, 192, 163,
    196, 167, 92, 58, 83, 56, 70, 100, 125, 160, 192, 202, 185, 199, 148, 80, 144, 72, 62, 85, 58, 81, 115, 145,
];
const GOLDEN_FINGERPRINT: u64 = 0xb957_0536_582b_cfb7;
