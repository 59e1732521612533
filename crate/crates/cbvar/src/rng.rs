//! Deterministic random-number plumbing.
//!
//! All stochastic code draws from ChaCha generators keyed by an explicit
//! seed plus a stream index. Work units (posterior draws, study
//! replications) each get their own stream, so results are identical no
//! matter how the work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Derive a child seed from a master seed and a path of indices
/// (e.g. [dgp, replication]) using splitmix64 steps. Stable across
/// platforms and releases.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = master;
    for &part in path {
        state = splitmix64(state ^ part.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    splitmix64(state)
}

/// Generator for one work unit: same seed, distinct stream per unit.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
