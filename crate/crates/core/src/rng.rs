//! Seeded random streams.
//!
//! All randomness goes through ChaCha8, a counter-based stream cipher
//! generator whose output is identical on every platform. Independent
//! consumers (initialization, shuffling, splitting, scene synthesis) draw
//! from distinct stream ids of the same seed so that changing how much one
//! consumer draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Split = 3,
    Scene = 4,
    GradCheck = 5,
}

pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
