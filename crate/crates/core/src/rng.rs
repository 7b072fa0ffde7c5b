//! Seed derivation and per-row random substreams.
//!
//! Every sampler draws row `i` from its own ChaCha8 stream `(seed, i)`, so the
//! output does not depend on how rows are scheduled across threads. Derived
//! seeds use the SplitMix64 finalizer; the scheme is part of the reproducibility
//! contract and must not change.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `seed` together with an ordered list of indices.
pub fn derive_seed(seed: u64, indices: &[u64]) -> u64 {
    indices
        .iter()
        .fold(splitmix64(seed), |h, &k| splitmix64(h ^ splitmix64(k)))
}

/// Seed of replication `replication` at grid point `grid_index`.
pub fn trial_seed(base_seed: u64, grid_index: usize, replication: usize) -> u64 {
    derive_seed(base_seed, &[grid_index as u64, replication as u64])
}

/// Independent generator for `row` under `seed`.
pub fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Sub-seeds for the three components of a dataset draw.
pub(crate) mod purpose {
    pub const SIGNAL: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const RADII: u64 = 3;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = trial_seed(42, 0, 0);
        assert_eq!(a, trial_seed(42, 0, 0));
        assert_ne!(a, trial_seed(42, 0, 1));
        assert_ne!(a, trial_seed(42, 1, 0));
        assert_ne!(trial_seed(42, 1, 0), trial_seed(42, 0, 1));
        assert_ne!(a, trial_seed(43, 0, 0));
    }

    #[test]
    fn row_streams_differ() {
        let x: u64 = row_rng(5, 0).random();
        let y: u64 = row_rng(5, 1).random();
        let z: u64 = row_rng(5, 0).random();
        assert_ne!(x, y);
        assert_eq!(x, z);
    }
}
