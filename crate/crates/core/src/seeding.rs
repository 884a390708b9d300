//! Deterministic random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by a 64-bit
//! seed and a stream id, so adding or removing draws in one place never shifts
//! another stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids at or above this value belong to the policy; arm `a` uses id `a`.
pub const POLICY_STREAM_BASE: u64 = 1 << 40;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds indices into a base seed, e.g. `(base, point, trial)`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
