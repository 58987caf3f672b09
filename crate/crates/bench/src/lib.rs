//! Shared fixtures for the benchmarks.

use bombus_core::abc::ReferenceTable;
use bombus_core::mlkit::Matrix;
use bombus_core::model::{generate_table, BeeModel, BeeModelConfig};
use bombus_core::rng::rng_for;
use rand::Rng;

/// The default desk model.
pub fn desk_model() -> BeeModel {
    BeeModel::build(BeeModelConfig::default()).expect("default model builds")
}

/// A small bee-model reference table.
pub fn bee_table(rows: usize) -> ReferenceTable {
    generate_table(&desk_model(), rows, 1).expect("table simulates")
}

/// `n` rows of `d` uniform features with a noisy nonlinear response.
pub fn regression_data(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut g = rng_for(seed, &[]);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| g.random_range(0.0..1.0)).collect()).collect();
    let y = rows
        .iter()
        .map(|r| (3.0 * r[0]).sin() + r[1 % d] * r[2 % d] + 0.1 * g.random_range(-1.0..1.0))
        .collect();
    (Matrix::from_rows(&rows), y)
}
