//! Per-chain random streams derived from a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type ChainRng = ChaCha8Rng;

/// `sha256(master_le || index_le)`.
pub fn chain_seed(master: u64, index: u64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(index.to_le_bytes());
    hasher.finalize().into()
}

pub fn chain_rng(master: u64, index: u64) -> ChainRng {
    ChaCha8Rng::from_seed(chain_seed(master, index))
}
