//! Shared fixtures for the benchmarks.

use nalgebra::DMatrix;
use rankfeas::rng::{gaussian_direction, stream_rng};
use rankfeas::{generate_planted, Instance, MapKind};

/// The 30x30 smoke-scale instance used across benchmarks.
pub fn smoke_instance() -> (Instance, DMatrix<f64>) {
    let (inst, w) = generate_planted(30, 30, 5, MapKind::Dense { l: 40 }, 1).unwrap();
    let x = &w.x_star + 1e-2 * gaussian_direction(&mut stream_rng(2, 0), 30, 30);
    (inst, x)
}

/// Desk-scale masked instance for the distance benchmark.
pub fn masked_instance() -> (Instance, DMatrix<f64>, DMatrix<f64>) {
    let (inst, w) = generate_planted(8, 8, 2, MapKind::Mask { density: 0.6 }, 3).unwrap();
    let x = &w.x_star + 1e-2 * gaussian_direction(&mut stream_rng(4, 0), 8, 8);
    (inst, x, w.x_star)
}
