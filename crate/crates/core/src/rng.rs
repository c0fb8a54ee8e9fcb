//! Deterministic RNG stream derivation.
//!
//! Every stochastic operation takes an explicit stream handle. Streams
//! are keyed by (run seed, config id, epoch) so results are independent
//! of worker count and iteration order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// splitmix64 finalizer; good avalanche for key mixing.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a stream from a run seed and up to three sub-keys.
pub fn stream(run_seed: u64, keys: &[u64]) -> Stream {
    let mut s = mix(run_seed);
    for &k in keys {
        s = mix(s ^ mix(k));
    }
    ChaCha8Rng::seed_from_u64(s)
}

/// Stream for one configuration in one epoch.
pub fn config_stream(run_seed: u64, config_id: u64, epoch: u64) -> Stream {
    stream(run_seed, &[config_id, epoch])
}
