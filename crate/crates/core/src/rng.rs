//! Seeded random streams.
//!
//! Everything stochastic in the crate draws from [`SeededRng`], a ChaCha8
//! stream, so that results are reproducible across platforms for a fixed
//! seed.

use rand::SeedableRng;

pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task (e.g. one volume in a cohort).
pub fn derive(seed: u64, stream: u64) -> SeededRng {
    let mut rng = SeededRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
