//! Seeded random streams.
//!
//! Every run derives independent ChaCha streams from one integer seed so that
//! consuming randomness in one place (say, perturbation initialization) never
//! shifts the draws seen by another (dropout masks).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Stream identifiers for [`stream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Dropout = 2,
    Perturb = 3,
    Noise = 4,
    Synth = 5,
}

pub fn stream(seed: u64, which: Stream) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
