//! Shared fixtures for the benchmarks.

use idal_core::data::random_matrix;
use idal_core::{generate_shift_pair, Dataset, ShiftSpec, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded `(source, target)` feature batches of shape `b×d`.
pub fn feature_pair(b: usize, d: usize, seed: u64) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (
        random_matrix(b, d, -1.0, 1.0, &mut rng),
        random_matrix(b, d, -0.5, 1.5, &mut rng),
    )
}

/// A small synthetic shift pair for step benchmarks.
pub fn small_domains(n: usize) -> (Dataset, Dataset) {
    let spec = ShiftSpec {
        n_source: n,
        n_target: n,
        ..ShiftSpec::default()
    };
    generate_shift_pair(&spec).expect("default spec is valid")
}
