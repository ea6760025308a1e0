//! Seed derivation. Every random stream in a run is a pure function of the
//! root seed, the round index and a stream id, so clients can be evaluated
//! in any order (or in parallel) and a run replays bit-identically.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

/// Stream ids used by the orchestration.
pub mod stream {
    pub const CLIENT_SAMPLING: u64 = 1;
    pub const FAKES: u64 = 2;
    pub const AGGREGATION_NOISE: u64 = 3;
    pub const GENERATOR: u64 = 4;
    pub const METRICS: u64 = 5;
    pub const INIT: u64 = 6;
    pub const PARTITION: u64 = 7;
    pub const EXTRACTOR: u64 = 8;
    pub const AUTOENCODER: u64 = 9;
    pub const SAMPLE_GRID: u64 = 10;
    /// Client streams are `CLIENT_BASE + client index`.
    pub const CLIENT_BASE: u64 = 1 << 20;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based split of `root` by `(round, stream)`.
pub fn derive_seed(root: u64, round: u64, stream: u64) -> u64 {
    splitmix64(root ^ splitmix64(round.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ splitmix64(stream)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(root: u64, round: u64, stream: u64) -> Rng {
    rng_from(derive_seed(root, round, stream))
}

pub fn standard_normals(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
