//! Seeded random streams.
//!
//! Every consumer derives its generator from the experiment seed and a
//! stream number, so results never depend on scheduling.

use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_PERTURB: u64 = 1;
pub const STREAM_CONE_AXES: u64 = 2;
pub const STREAM_CENTERS: u64 = 3;
pub const STREAM_FK: u64 = 4;
pub const STREAM_CSJ: u64 = 5;
pub const STREAM_FAMILY: u64 = 6;
pub const STREAM_METRIC: u64 = 7;
pub const STREAM_UJS: u64 = 8;
pub const STREAM_PATHS: u64 = 1 << 32;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `k` distinct indices out of `0..n`, sorted. Returns all of them when `k >= n`.
pub fn subset(n: usize, k: usize, seed: u64, stream_id: u64) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = stream(seed, stream_id);
    let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}
