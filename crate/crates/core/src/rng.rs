//! Deterministic RNG streams: every randomized routine draws from a
//! ChaCha stream keyed by (seed, purpose, stream id), so per-user work
//! is order-independent and reproducible bit-for-bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const PURPOSE_RANKING_NEG: u64 = 1;
pub(crate) const PURPOSE_LOO_NEG: u64 = 2;
pub(crate) const PURPOSE_PUBLIC_SPLIT: u64 = 3;
pub(crate) const PURPOSE_SYNTH_GLOBAL: u64 = 4;
pub(crate) const PURPOSE_SYNTH_USER: u64 = 5;
pub(crate) const PURPOSE_LDP: u64 = 6;
pub(crate) const PURPOSE_BLURME: u64 = 7;
pub(crate) const PURPOSE_INIT: u64 = 8;
pub(crate) const PURPOSE_BATCH: u64 = 9;
pub(crate) const PURPOSE_ATTACK: u64 = 10;
pub(crate) const PURPOSE_KMEANS: u64 = 11;

pub(crate) fn stream_rng(seed: u64, purpose: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}
