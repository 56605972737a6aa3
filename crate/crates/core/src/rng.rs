//! Reproducible random streams.
//!
//! Every sampling call draws from its own ChaCha stream keyed by the run
//! seed and an `(epoch, layer, node)` triple, so results do not depend on
//! the order in which anchors are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub epoch: u32,
    pub layer: u8,
    pub node: u32,
}

impl StreamId {
    pub fn new(epoch: usize, layer: usize, node: usize) -> Self {
        StreamId {
            epoch: epoch as u32,
            layer: layer as u8,
            node: node as u32,
        }
    }

    fn packed(self) -> u64 {
        ((self.epoch as u64) << 40) | ((self.layer as u64) << 32) | self.node as u64
    }
}

pub fn stream_rng(seed: u64, id: StreamId) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.packed());
    rng
}
