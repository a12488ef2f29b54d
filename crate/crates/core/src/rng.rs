//! Deterministic randomness: a splittable counter scheme on top of ChaCha8.
//!
//! Every random object in the library is a pure function of (master seed,
//! purpose, index). Seeds are derived by two rounds of the SplitMix64 mixer,
//! so distinct purposes and indices yield statistically independent streams,
//! and the same master seed reproduces every artifact bit for bit regardless
//! of thread count or evaluation order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tag: whole-tree growth (one stream per node).
pub const PURPOSE_TREE: u64 = 1;
/// Purpose tag: spine sampling (one stream per spine).
pub const PURPOSE_SPINE: u64 = 2;
/// Purpose tag: independent Monte Carlo trials.
pub const PURPOSE_TRIAL: u64 = 3;
/// Purpose tag: percolation retention coins.
pub const PURPOSE_PERCOLATION: u64 = 4;

/// Weyl increment used by SplitMix64.
const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective 64-bit mixer with full avalanche.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for stream `index` of the given purpose.
pub fn derive_seed(master: u64, purpose: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master.wrapping_add(purpose.wrapping_mul(GAMMA))).wrapping_add(index.wrapping_mul(GAMMA)))
}

/// Opens the ChaCha8 stream for a derived seed.
pub fn stream(master: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, purpose, index))
}
