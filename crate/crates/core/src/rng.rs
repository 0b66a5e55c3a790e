//! Seeded random streams, one per replication.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// A reproducible random stream identified by `(base_seed, stream_id)`.
///
/// Streams with the same base seed and different ids are independent
/// ChaCha20 streams; identical ids replay the same sequence bit for bit.
#[derive(Debug, Clone)]
pub struct RngStream {
    base_seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(base_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(base_seed);
        inner.set_stream(stream_id);
        Self {
            base_seed,
            stream_id,
            inner,
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
