//! Seed/stream derivation for reproducible, independent random streams.
//!
//! Every random object in the crate is drawn from a ChaCha8 generator keyed
//! by `(seed, domain)` and positioned on `stream_id`. ChaCha is counter based,
//! so distinct stream ids give independent sequences under one key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const DOMAIN_PROJECTION: u64 = 0x5052_4f4a;
pub(crate) const DOMAIN_WEIGHTED: u64 = 0x5750_524a;
pub(crate) const DOMAIN_LSH: u64 = 0x4c53_4848;
pub(crate) const DOMAIN_DSLSH: u64 = 0x4453_4c53;
pub(crate) const DOMAIN_FALLBACK: u64 = 0x4641_4c4c;
pub(crate) const DOMAIN_EVAL: u64 = 0x4556_414c;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Returns the generator for `(seed, domain, stream_id)`.
pub fn stream(seed: u64, domain: u64, stream_id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut h = mix64(seed ^ mix64(domain));
    for chunk in key.chunks_mut(8) {
        h = mix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream_id);
    rng
}
