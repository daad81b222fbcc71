//! Seeded random streams keyed by `(seed, task)`.
//!
//! Every independent unit of work draws from its own ChaCha stream, so the
//! numbers it sees do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn task_rng(seed: u64, task: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}
