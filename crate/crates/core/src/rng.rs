//! Seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Derives an independent seed for sweep cell `index` from the master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the combined input
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one detector of one run; each detector draws from its own stream.
pub fn detector_rng(seed: u64, detector: usize) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(detector as u64);
    rng
}
