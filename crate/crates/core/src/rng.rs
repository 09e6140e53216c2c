//! Seedable, splittable generator used by every stochastic routine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type PolicyRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> PolicyRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child generator on its own ChaCha stream. The parent
/// advances by one draw so successive splits differ.
pub fn split(parent: &mut PolicyRng) -> PolicyRng {
    let seed: [u8; 32] = parent.gen();
    let mut child = ChaCha8Rng::from_seed(seed);
    child.set_stream(parent.get_stream().wrapping_add(1));
    child
}
