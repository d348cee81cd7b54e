//! Deterministic random streams.
//!
//! All randomness in the pipeline flows from one root seed. Each component
//! draws from its own named stream so that, say, adding an extra copula draw
//! can never perturb the network initialization.

use rand_chacha::ChaCha12Rng;
use rand_chacha::rand_core::SeedableRng;
use sha2::{Digest, Sha256};

/// Derives an independent RNG for `(root_seed, name, lane)`.
///
/// `lane` distinguishes parallelizable units (one lane per sampled sequence,
/// for example) without consuming state from a shared stream.
pub fn stream(root_seed: u64, name: &str, lane: u64) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(name.as_bytes());
    hasher.update([0x1f]);
    hasher.update(lane.to_le_bytes());
    let digest = hasher.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha12Rng::from_seed(seed)
}
