//! Shared fixtures for the benchmarks.

use sbe_core::{generate, Dataset, GeneratorSpec};

/// Default blobs layout (10 features, 2 binned) with `n_rows` rows.
pub fn blobs(n_rows: usize) -> Dataset {
    generate(&GeneratorSpec { n_rows, seed: 1, ..Default::default() }).expect("valid generator spec")
}
