//! Counter-based stream derivation.
//!
//! Every chain, disorder sample and replica draws from its own ChaCha stream,
//! keyed by the user seed and a pair of counters, so results do not depend on
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream for `(seed, a, b)`; distinct counter pairs never share state.
pub fn stream(seed: u64, a: u64, b: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((a << 32) ^ b);
    rng
}

/// Mixes an arbitrary tag into a seed (splitmix64 finalizer).
pub fn mix(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, 1, 2).random();
        let b: u64 = stream(7, 1, 2).random();
        let c: u64 = stream(7, 2, 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
