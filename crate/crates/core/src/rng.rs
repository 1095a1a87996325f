//! Deterministic RNG stream derivation.
//!
//! Every stochastic computation takes a `u64` seed plus a stream of tags
//! identifying the work item (permutation index, walk index, round index, ...).
//! Sub-streams derived this way are independent of scheduling, so parallel and
//! sequential execution produce bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed from a root seed and a tag path.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut s = mix(seed);
    for &t in tags {
        s = mix(s ^ mix(t));
    }
    s
}

/// Derives an RNG from a root seed and a tag path.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}
