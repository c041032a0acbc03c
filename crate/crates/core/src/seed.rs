//! Counter-based seed derivation.
//!
//! Every random object in the crate (a Monte Carlo trajectory, a simulation
//! trial, a dataset) draws from its own `ChaCha8Rng` whose seed is a pure
//! function of a base seed, a stream tag and an index. Results therefore do
//! not depend on thread scheduling or on how work is chunked.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent consumers of one base seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    XiTrajectory = 1,
    ThetaTrajectory = 2,
    Dataset = 3,
    Dynamics = 4,
    OnePass = 5,
    Prediction = 6,
    Driver = 7,
    Gp = 8,
    Quadrature = 9,
    Replicate = 10,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the `index`-th draw of `stream` under `base`.
pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream as u64)).wrapping_add(index))
}

pub fn rng_for(base: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
