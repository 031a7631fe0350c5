#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vora_core::spectral::{SensorSet, SpectralGrid};

/// Three Gaussian-like channels with random peaks and widths, plus a small
/// positive ripple so that no two synthetic cameras share a subspace.
pub fn synthetic_camera(rng: &mut ChaCha8Rng, grid: SpectralGrid, label: &str) -> SensorSet {
    let centers = [
        rng.random_range(440.0..480.0),
        rng.random_range(520.0..560.0),
        rng.random_range(580.0..620.0),
    ];
    loop {
        let widths: Vec<f64> = (0..3).map(|_| rng.random_range(20.0..55.0)).collect();
        let ripple: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..0.05)).collect();
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let m = DMatrix::from_fn(grid.len(), 3, |i, j| {
            let wl = grid.wavelength(i);
            let z = (wl - centers[j]) / widths[j];
            (-0.5 * z * z).exp() + ripple[j] * (1.0 + (wl / 37.0 + phase).sin())
        });
        if let Ok(s) = SensorSet::new(grid, m, label) {
            if s.is_full_rank() {
                return s;
            }
        }
    }
}

/// Random `n × 3` sensor matrix with entries in `(0.01, 1)`.
pub fn random_sensor(rng: &mut ChaCha8Rng, n: usize, label: &str) -> SensorSet {
    let grid = SpectralGrid::new(400.0, 400.0 + 10.0 * (n - 1) as f64, 10.0).unwrap();
    loop {
        let m = DMatrix::from_fn(n, 3, |_, _| rng.random_range(0.01..1.0));
        let s = SensorSet::new(grid, m, label).unwrap();
        if s.is_full_rank() {
            return s;
        }
    }
}

pub fn random_invertible(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-2.0..2.0));
        let sv = a.clone().svd(false, false).singular_values;
        if sv.min() > 0.05 * sv.max() {
            return a;
        }
    }
}
