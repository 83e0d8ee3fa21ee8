//! Reproducible random streams.
//!
//! ChaCha is a counter-based generator: a `(key, stream, position)` triple
//! fully determines its output, so every replication gets its own
//! non-overlapping stream derived from the run seed and the replication
//! index, independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes within one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    /// Brownian increments.
    Noise = 0,
    /// Auxiliary uniforms (bridge corrections, reflection minima).
    Aux = 1,
}

const LANES: u64 = 4;

/// Generator for `(seed, replication, lane)`.
pub fn stream(seed: u64, replication: u64, lane: Lane) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication * LANES + lane as u64);
    rng
}
