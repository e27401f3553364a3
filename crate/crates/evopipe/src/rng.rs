//! Deterministic per-purpose random streams.
//!
//! Every source of randomness in a search run is a ChaCha8 stream derived
//! from `(master seed, purpose label, index)`. Streams are stateless with
//! respect to each other, so resuming from a checkpoint or reordering
//! independent work never perturbs replay: the same seed always yields the
//! same run in mock mode.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives an independent random stream from the master seed.
///
/// `purpose` names the consumer (`"init"`, `"reproduce"`, ...) and `index`
/// distinguishes repeated uses, typically the generation number.
pub fn derive_rng(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(purpose.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
