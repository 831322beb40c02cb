//! Seeded random streams.
//!
//! Splitting rule: stream `(seed, id)` is ChaCha8 seeded from `seed` via
//! `seed_from_u64` with its 64-bit stream selector set to `id`. Independent
//! streams never overlap, so environments, injections and epochs can be
//! generated in any order (or concurrently) with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags keep unrelated consumers of one seed apart.
#[derive(Clone, Copy, Debug)]
pub enum Purpose {
    Environment = 1,
    Injection = 2,
    Shuffle = 3,
    Init = 4,
    GlobalScm = 5,
}

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Stream for item `index` of a given purpose.
pub fn purpose_stream(seed: u64, purpose: Purpose, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((purpose as u64) << 56));
    rng.set_stream(index);
    rng
}
