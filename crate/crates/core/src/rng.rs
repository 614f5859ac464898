//! Deterministic random substreams.
//!
//! Every stochastic draw in the simulator comes from a `ChaCha8Rng` keyed by
//! `(seed, stream, a, b)`, typically `(seed, stream, slot, du)`. Consumers never
//! share a generator across workers, so parallel execution order cannot change
//! results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Logical purpose of a substream. The discriminant is mixed into the key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Topology = 1,
    UePlacement = 2,
    LargeScale = 3,
    Requests = 4,
    Arrivals = 5,
    FastFading = 6,
    Agent = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the generator for `(seed, stream, a, b)`.
pub fn substream(seed: u64, stream: Stream, a: u64, b: u64) -> SimRng {
    let mut key = splitmix64(seed);
    key = splitmix64(key ^ stream as u64);
    key = splitmix64(key ^ a);
    key = splitmix64(key ^ b.rotate_left(32));
    ChaCha8Rng::seed_from_u64(key)
}
