//! Seeded random streams.
//!
//! Every experiment takes one root seed. Replica `r` of experiment point `k`
//! (for instance the `k`-th dispersal range of a sweep) draws from the
//! ChaCha8 stream
//!
//! ```text
//! key    = ChaCha8Rng::seed_from_u64(root_seed)
//! stream = (k << 32) | r
//! ```
//!
//! ChaCha streams with distinct stream ids are independent, so replicas never
//! share state, and any single replica can be regenerated from
//! `(root_seed, k, r)` alone. Point `k = 0` is the plain replica stream used by
//! single-point experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Largest replica index representable in the low half of a stream id.
pub const MAX_REPLICAS: u64 = u32::MAX as u64;

pub fn stream_id(point: u32, replica: u64) -> u64 {
    assert!(replica <= MAX_REPLICAS, "replica index {replica} does not fit in 32 bits");
    (u64::from(point) << 32) | replica
}

/// Random stream for replica `replica` of experiment point `point`.
pub fn replica_rng(seed: u64, point: u32, replica: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(point, replica));
    rng
}
