//! Deterministic random streams.
//!
//! Every consumer of randomness takes an explicit stream derived from a
//! master seed and a stream index, so parallel work can be split without
//! changing results.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream reserved for drawing frozen background rows.
pub const STREAM_BACKGROUND: u64 = u64::MAX;
/// Stream reserved for permutation draws.
pub const STREAM_PERMUTATIONS: u64 = u64::MAX - 1;
/// Stream reserved for choosing which data points a global run visits.
pub const STREAM_POINT_SELECTION: u64 = u64::MAX - 2;
/// Stream reserved for train/test/validation shuffles.
pub const STREAM_SPLIT: u64 = u64::MAX - 3;
/// Stream reserved for weight initialisation and minibatch order.
pub const STREAM_TRAINING: u64 = u64::MAX - 4;

pub fn stream(master_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// A child seed for sub-task `index` of a run seeded with `master_seed`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    stream(master_seed, index).next_u64()
}
