//! Seeded, counter-style random streams.
//!
//! Every consumer derives its generator from `(seed, domain, index)`, so the
//! values drawn for a given index never depend on scheduling order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream domains, kept apart so a replication seed never collides with a
/// bootstrap draw index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Bootstrap = 1,
    Replication = 2,
}

/// Generator for index `index` inside `domain`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((domain as u64) << 56));
    rng.set_stream(index);
    rng
}

/// Child seed for index `index` inside `domain`.
pub fn child_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    stream(seed, domain, index).next_u64()
}
