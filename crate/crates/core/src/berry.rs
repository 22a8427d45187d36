//! The Berry random wave in the plane: a stationary isotropic complex Gaussian
//! field with covariance `lambda / (2 pi) int cos(r cos a) da`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DiskPoint;
use crate::field::LocalFieldSample;
use crate::rng::{tag, Stream};

pub const MIN_WAVES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryKernel {
    pub lambda: f64,
    pub dimension: usize,
}

impl BerryKernel {
    pub fn new(lambda: f64) -> Self {
        BerryKernel { lambda, dimension: 2 }
    }

    /// Covariance at separation `r` by the periodic trapezoid rule, doubled until
    /// two successive values agree to 1e-13 (the rule is spectrally accurate here).
    pub fn kernel(&self, r: f64) -> f64 {
        let r = r.abs();
        let mean = |n: usize| {
            (0..n).map(|k| (r * (std::f64::consts::TAU * k as f64 / n as f64).cos()).cos()).sum::<f64>() / n as f64
        };
        let mut n = 64;
        let mut prev = mean(n);
        while n < 1 << 20 {
            n *= 2;
            let next = mean(n);
            if (next - prev).abs() < 1e-13 {
                return self.lambda * next;
            }
            prev = next;
        }
        self.lambda * prev
    }
}

/// One draw of `sum_j c_j e^{i xi_j . y}` with `xi_j` uniform on the circle and
/// `c_j` centered complex Gaussian, `E|c_j|^2 = lambda / n`. Draw `d` reads
/// stream `(BERRY, d)`.
pub fn sample_berry(k: &BerryKernel, n_waves: usize, seed: u64, draw: u64, grid: &[[f64; 2]]) -> Result<Vec<Complex64>> {
    if n_waves < MIN_WAVES {
        return Err(Error::Validation(format!("need at least {MIN_WAVES} waves, got {n_waves}")));
    }
    if !(k.lambda >= 0.0) {
        return Err(Error::Validation(format!("lambda must be nonnegative, got {}", k.lambda)));
    }
    let mut rng = Stream::tagged(seed, tag::BERRY, draw);
    let s = (k.lambda / (2.0 * n_waves as f64)).sqrt();
    let waves: Vec<(Complex64, [f64; 2])> = (0..n_waves)
        .map(|_| {
            let a = rng.uniform(0.0, std::f64::consts::TAU);
            let c = Complex64::new(rng.normal(), rng.normal()) * s;
            (c, [a.cos(), a.sin()])
        })
        .collect();
    Ok(grid
        .iter()
        .map(|y| waves.iter().map(|(c, xi)| c * Complex64::from_polar(1.0, xi[0] * y[0] + xi[1] * y[1])).sum())
        .collect())
}

/// Draws `0..n_draws` packaged like simulated fields, so the same estimators and
/// CSV writer apply.
pub fn berry_ensemble(
    k: &BerryKernel,
    n_waves: usize,
    seed: u64,
    n_draws: usize,
    grid: &[[f64; 2]],
) -> Result<Vec<LocalFieldSample>> {
    (0..n_draws as u64)
        .map(|d| {
            Ok(LocalFieldSample {
                x: DiskPoint::ORIGIN,
                omega_seed: d,
                grid: grid.to_vec(),
                values: sample_berry(k, n_waves, seed, d, grid)?,
                lift_count: n_waves,
                amplitude_sq_sum: k.lambda,
                t: 0.0,
                h: 0.0,
                delta: 0.0,
                empty: false,
            })
        })
        .collect()
}
