//! Seeded random streams.
//!
//! Every experiment owns one master seed. Components draw from independent
//! ChaCha streams selected by a fixed offset, so adding draws in one
//! component never shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Fixed stream offsets, one per consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Instance = 1,
    GlobalChain = 2,
    LocalChain = 3,
    Requests = 4,
    Agent = 5,
    Initial = 6,
    Leaves = 7,
    Baselines = 8,
    Replay = 9,
    NetInit = 10,
    Sampling = 11,
}

/// Generator for stream `stream` of experiment seed `seed`.
pub fn stream(seed: u64, stream: Stream) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Generator for a sub-stream, e.g. one per leaf node.
pub fn substream(seed: u64, stream: Stream, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream as u64);
    rng
}
