//! Deterministic seed derivation.
//!
//! Every randomized stage derives an independent child seed from its parent
//! seed and a (stream, index) pair, so replicate b's randomness never depends
//! on how many replicates run, in what order, or on how many threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; full-period mixing of a 64-bit state.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `stream`, element `index`, under `seed`.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index)
}

/// Deterministic RNG for a derived seed.
pub fn rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, index))
}

/// Named streams so independent stages cannot collide.
pub mod stream {
    pub const PAM_RESTART: u64 = 1;
    pub const STABILITY_REPLICATE: u64 = 2;
    pub const CV_FOLDS: u64 = 3;
    pub const BOOTSTRAP_REPLICATE: u64 = 4;
    pub const SYNTH: u64 = 5;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_is_stable_and_spread() {
        let a = derive(42, 1, 0);
        let b = derive(42, 1, 1);
        let c = derive(42, 2, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive(42, 1, 0));
    }

    #[test]
    fn rng_streams_are_independent_of_index_order() {
        use rand::RngCore;
        let mut r5 = rng(7, 2, 5);
        let first = r5.next_u64();
        // Drawing replicate 3 first must not change replicate 5.
        let mut r3 = rng(7, 2, 3);
        let _ = r3.next_u64();
        let mut r5b = rng(7, 2, 5);
        assert_eq!(first, r5b.next_u64());
    }
}
