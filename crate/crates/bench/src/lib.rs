//! Shared fixtures for the benchmarks.

use cshc_core::synthetic::region_benchmark;
use cshc_core::{CorrectnessMatrix, Dataset};

/// Region benchmark of `n` rows with its pool's correctness matrix.
pub fn fixture(n: usize, seed: u64) -> (Dataset, CorrectnessMatrix) {
    let bench = region_benchmark(n, 0.95, 0.4, seed).expect("valid benchmark");
    let per_sample: Vec<Vec<usize>> = (0..n)
        .map(|i| bench.predictions.iter().map(|p| p[i]).collect())
        .collect();
    let cm =
        CorrectnessMatrix::from_predictions(per_sample, bench.dataset.labels().to_vec(), bench.dataset.n_classes())
            .expect("consistent predictions");
    (bench.dataset, cm)
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_shapes_agree() {
        let (ds, cm) = super::fixture(50, 1);
        assert_eq!(ds.n_samples(), cm.n_samples());
        assert_eq!(cm.n_classifiers(), 3);
    }
}
