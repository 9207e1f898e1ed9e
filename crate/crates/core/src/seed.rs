//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a parent
//! seed mixed with a stream tag and an index, so that work split across
//! threads draws the same numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `parent`, a stream tag and an index into a child seed.
pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(parent) ^ stream) ^ index)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used with [`derive_seed`].
pub mod stream {
    pub const FRAME: u64 = 0x6672_616d;
    pub const INIT: u64 = 0x696e_6974;
    pub const EPOCH: u64 = 0x6570_6f63;
    pub const LOCATION: u64 = 0x6c6f_6361;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_index_and_stream() {
        let a = derive_seed(7, stream::FRAME, 0);
        let b = derive_seed(7, stream::FRAME, 1);
        let c = derive_seed(7, stream::INIT, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, stream::FRAME, 0));
    }
}
