//! Fixtures shared by the benchmarks.

use fuzzformer::{ModelConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(lo..hi)).collect(),
    )
    .expect("shape matches data")
}

/// Desk-sized model: `N=60, H=30, D_h=16`, two heads, `C=4`.
pub fn desk_model() -> ModelConfig {
    ModelConfig {
        hidden: 16,
        heads: 2,
        rules: 4,
        ..ModelConfig::default()
    }
}
