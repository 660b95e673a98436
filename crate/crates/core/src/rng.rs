//! Keyed random substreams.
//!
//! Every random draw is taken from a ChaCha8 stream selected by
//! `(seed, iteration, block)`, so the values seen by one consumer never depend
//! on how many draws another consumer made.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of stream slots reserved per outer iteration.
pub const STREAMS_PER_ITERATION: u64 = 8;

/// Stream slot assignments within one outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Block {
    B1 = 0,
    B11 = 1,
    B12 = 2,
    B21 = 3,
    B22 = 4,
    Sga = 5,
    Solver = 6,
    Aux = 7,
}

pub fn substream(seed: u64, iteration: u64, block: Block) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration * STREAMS_PER_ITERATION + block as u64);
    rng
}
