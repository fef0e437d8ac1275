//! Seed derivation. Every random stream in the crate is a ChaCha generator
//! keyed by a 64-bit seed derived from the master seed and a stream label, so
//! results never depend on call order or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed, e.g. `seed_i = derive(master, i)`.
#[inline]
pub fn derive(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Derive a child seed from a string label (FNV-1a over the bytes).
pub fn derive_str(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    derive(seed, h)
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

// Stream labels used by the training loops.
pub(crate) const STREAM_BATCH: u64 = 1;
pub(crate) const STREAM_CLEAN: u64 = 2;
pub(crate) const STREAM_INIT_G: u64 = 3;
pub(crate) const STREAM_INIT_D: u64 = 4;
pub(crate) const STREAM_STAGE: u64 = 5;
