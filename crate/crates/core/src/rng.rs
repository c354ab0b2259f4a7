//! Named random streams derived from one master seed.
//!
//! Every entity that consumes randomness owns its own stream, keyed by a
//! stable name. Adding a consumer never shifts the draws seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MasterSeed(pub u64);

impl MasterSeed {
    pub fn stream(&self, name: &str) -> Stream {
        let mut h = Sha256::new();
        h.update(self.0.to_le_bytes());
        h.update(b"/");
        h.update(name.as_bytes());
        let out = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&out[..32]);
        ChaCha8Rng::from_seed(seed)
    }
}
