//! Counter-based random streams: one ChaCha stream per (seed, index).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Independent stream for sample `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `count` standard normals from stream `index`; the m-th value belongs to mode m.
pub fn normals(seed: u64, index: u64, count: usize) -> Vec<f64> {
    let mut rng = stream(seed, index);
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Derive a sub-seed so that different purposes never share streams.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(purpose.wrapping_add(1 << 40));
    rng.gen()
}
