//! Shared inputs for the benchmarks.

use absa_core::data::synth;
use absa_core::{Matrix, Rng, Sample};

/// A `rows × cols` matrix of U(−1, 1) draws.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = Rng::new(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| r.uniform(-1.0, 1.0)).collect()).expect("finite")
}

/// Two-aspect reviews, two samples each.
pub fn pair_samples(reviews: usize) -> Vec<Sample> {
    synth::opposite_pair_corpus(reviews, &Rng::new(0))
}
