//! Deterministic seed derivation for independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a parent seed with a stream index. Distinct indices give
/// statistically independent child seeds; the map is a pure function.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

/// Named sub-streams of one replication.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Stream {
    Weights = 1,
    Noise = 2,
    Sampler = 3,
}

pub fn stream_seed(parent: u64, stream: Stream) -> u64 {
    derive_seed(parent, stream as u64)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
