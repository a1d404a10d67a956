//! Independent random streams addressed by `(seed, replicate, stream)`.
//!
//! Each stream is a ChaCha20 keystream: the key is expanded from `seed` and
//! the 64-bit stream id packs the replicate index with a small stream tag,
//! so no two `(replicate, stream)` pairs share output and the draws do not
//! depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Bits of the ChaCha stream id reserved for the per-replicate tag.
const TAG_BITS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Stream {
    Covariates = 0,
    Response = 1,
    Trials = 2,
}

pub fn stream_rng(seed: u64, replicate: u64, stream: Stream) -> ChaCha20Rng {
    assert!(replicate < 1 << (64 - TAG_BITS), "replicate index out of range");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((replicate << TAG_BITS) | stream as u64);
    rng
}
