//! Reproducible per-replicate random streams.
//!
//! Every replicate gets its own ChaCha8 keystream: the key is the master seed
//! and the 64-bit stream id is the replicate index. Draws for replicate `i`
//! therefore never depend on how replicates are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ReplicateRng = ChaCha8Rng;

/// Stream for replicate `replicate_index` under `master_seed`.
pub fn derive_stream(master_seed: u64, replicate_index: u64) -> ReplicateRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate_index);
    rng.set_word_pos(0);
    rng
}
