//! Seeded random streams.
//!
//! Every stochastic component takes a `ChaCha8Rng` derived from a user seed and
//! a stream id, so that work split across threads draws from the same numbers
//! as a serial run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type UplRng = ChaCha8Rng;

/// Stream ids reserved for the pipeline. Perturbation `k` uses `SER_BASE + k`.
pub mod stream {
    pub const TRAIN: u64 = 1;
    pub const SPLIT: u64 = 2;
    /// Source of the per-iteration perturbation seeds.
    pub const SER_SEED: u64 = 3;
    pub const SER_BASE: u64 = 1 << 32;
}

pub fn seeded(seed: u64) -> UplRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child stream of `seed`.
pub fn child(seed: u64, stream: u64) -> UplRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
