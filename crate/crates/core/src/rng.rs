//! Seeded randomness.
//!
//! Every stochastic routine takes an explicit `u64` seed and draws from
//! ChaCha8 (`rand_chacha::ChaCha8Rng`), which produces the same stream on every
//! platform. Independent per-item streams (one per user, one per sweep cell)
//! are derived with [`stream`] so parallel runs stay reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `id` of the generator family keyed by `seed`.
pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
