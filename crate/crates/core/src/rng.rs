//! Seed derivation. Every random consumer gets its own stream keyed by a
//! base seed and a path of integers, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const TAG_BETA: u64 = 0xB37A;
pub const TAG_MIXTURE: u64 = 0x313E;
pub const TAG_TRAIN: u64 = 0x7EA1;
pub const TAG_TEST: u64 = 0x7E57;
pub const TAG_ORACLE: u64 = 0x0AC1;
pub const TAG_METHOD: u64 = 0x3E7D;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(base: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, path))
}

/// Stable 64-bit FNV-1a hash for string keys such as method labels.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}
