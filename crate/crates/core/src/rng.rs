//! Root-seed splitting. Each subsystem draws from its own ChaCha stream of the
//! root seed, so adding draws in one subsystem never shifts another's.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Controller = 2,
    Trainer = 3,
    Bank = 4,
    Surrogate = 5,
    Augment = 6,
    Selection = 7,
}

pub fn stream_rng(root: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream as u64);
    rng
}

/// A derived 64-bit seed for APIs that take one.
pub fn stream_seed(root: u64, stream: Stream) -> u64 {
    stream_rng(root, stream).next_u64()
}
