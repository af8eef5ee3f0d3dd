//! Counter-based random streams keyed by `(seed, stream, position)`.
//!
//! Each draw builds a fresh ChaCha generator whose key mixes the seed and
//! the stream tag and whose stream id is the position, so skipping or
//! inserting frames never shifts any other frame's draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    FaultDelay = 1,
    ProviderJitter = 2,
}

pub fn counter_rng(seed: u64, stream: Stream, position: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(stream as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(position);
    rng
}
