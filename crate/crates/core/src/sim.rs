//! Simulated benchmark objective and its auxiliary dataset.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledDataset;
use crate::error::DatasetError;

/// Default size of the auxiliary dataset.
pub const AUX_COUNT: usize = 100;

/// `sin(5 pi r) exp(-5 (r - 1/2)^2)` with `r = |x|`, on `[-1, 1]^2`.
/// Minima of `-exp(-0.2)` lie on the rings `r = 0.3` and `r = 0.7`.
pub fn simulated_objective(x: &[f64]) -> Result<f64, DatasetError> {
    if x.len() != 2 || x.iter().any(|v| !(-1.0..=1.0).contains(v)) {
        return Err(DatasetError::OutOfDomain(x.to_vec()));
    }
    let r = libm::hypot(x[0], x[1]);
    Ok(libm::sin(5.0 * core::f64::consts::PI * r) * libm::exp(-5.0 * (r - 0.5) * (r - 0.5)))
}

/// `count` points uniform on `[-1, 1]^2` labelled by their Euclidean norm.
pub fn make_aux_dataset(count: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<(Vec<f64>, f64)> = (0..count)
        .map(|_| {
            let x = alloc::vec![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let y = libm::hypot(x[0], x[1]);
            (x, y)
        })
        .collect();
    LabeledDataset::from_rows(rows).expect("finite generated rows")
}
