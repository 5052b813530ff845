//! Deterministic random streams. Every stochastic sample draws from its own
//! ChaCha stream keyed by `(seed, index)`, so results do not depend on how
//! samples are spread across workers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

/// The stream for sample `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> SampleRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A child seed for job `index`, e.g. one point of a sweep.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(index);
    rng.next_u64()
}
