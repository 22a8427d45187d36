mod common;

use common::*;
use num_complex::Complex64;
use semiwave::berry::{berry_ensemble, BerryKernel};
use semiwave::field::{sample_ensemble, FieldVariant, LocalFieldSample, PhaseMode};
use semiwave::geometry::{DiskPoint, FrameChart};
use semiwave::rng::Stream;
use semiwave::stats::{
    complex_correlation, deviation_fraction, empirical_covariance, gaussianity, mean_phase, mean_phase_synthetic,
    normalized, phase_independence, write_covariance_csv, PairExcision,
};
use semiwave::wkb::{Excision, JobParams};

fn fixed(values: Vec<Complex64>, grid: Vec<[f64; 2]>, seed: u64) -> LocalFieldSample {
    LocalFieldSample {
        x: DiskPoint::ORIGIN,
        omega_seed: seed,
        grid,
        values,
        lift_count: 1,
        amplitude_sq_sum: 1.0,
        t: 1.0,
        h: 0.01,
        delta: 0.0,
        empty: false,
    }
}

fn two_points() -> Vec<[f64; 2]> {
    vec![[0.0, 0.0], [1.0, 0.5]]
}

#[test]
fn identical_fields_have_exact_covariance() {
    let v = vec![Complex64::new(0.3, -1.2), Complex64::new(-0.7, 0.4)];
    let ens: Vec<_> = (0..10).map(|s| fixed(v.clone(), two_points(), s)).collect();
    let g = two_points();
    let est = empirical_covariance(&ens, &[(g[0], g[1]), (g[1], g[0])]).unwrap();
    assert_eq!(est.estimates[0], v[0] * v[1].conj());
    assert_eq!(est.stderr[0], 0.0);
    assert_eq!(est.estimates[1], est.estimates[0].conj());
    assert!((est.separations[0] - 1.25f64.sqrt()).abs() < 1e-15);
}

#[test]
fn mismatched_grids_are_rejected() {
    let a = fixed(vec![Complex64::new(1.0, 0.0); 2], two_points(), 0);
    let b = fixed(vec![Complex64::new(1.0, 0.0); 2], vec![[0.0, 0.0], [1.0, 0.0]], 1);
    let g = two_points();
    assert!(matches!(empirical_covariance(&[a.clone(), b], &[(g[0], g[1])]), Err(semiwave::Error::Validation(_))));
    assert!(matches!(empirical_covariance(&[a.clone(), a.clone()], &[(g[0], [5.0, 5.0])]), Err(semiwave::Error::Validation(_))));
    assert!(empirical_covariance(&[a], &[(g[0], g[1])]).is_err());
}

#[test]
fn berry_covariance_is_recovered() {
    let k = BerryKernel::new(1.0);
    let grid: Vec<[f64; 2]> = (0..20).map(|i| [8.0 * i as f64 / 19.0, 0.0]).collect();
    let ens = berry_ensemble(&k, 64, 21, 10_000, &grid).unwrap();
    let pairs: Vec<_> = grid.iter().map(|y| ([0.0, 0.0], *y)).collect();
    let est = empirical_covariance(&ens, &pairs).unwrap();
    for ((r, e), s) in est.separations.iter().zip(&est.estimates).zip(&est.stderr) {
        assert!((e - k.kernel(*r)).norm() <= 3.0 * s, "r = {r}: {e} vs {}", k.kernel(*r));
    }
    let mut buf = Vec::new();
    write_covariance_csv(&mut buf, &est, Some(&k)).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("r,re,im,stderr,kernel_reference\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn berry_fields_are_gaussian() {
    let k = BerryKernel::new(1.0);
    let ens = berry_ensemble(&k, 64, 22, 10_000, &[[0.0, 0.0]]).unwrap();
    let g = gaussianity(&ens, [0.0, 0.0]).unwrap();
    assert!((g.fourth_moment_ratio - 2.0).abs() <= 0.15);
    assert!(g.ks_real.unwrap() < 0.02 && g.ks_imag.unwrap() < 0.02);
}

#[test]
fn constant_and_single_wave_fields_have_ratio_one() {
    let ens: Vec<_> = (0..100).map(|s| fixed(vec![Complex64::new(0.6, 0.8)], vec![[0.0, 0.0]], s)).collect();
    let g = gaussianity(&ens, [0.0, 0.0]).unwrap();
    assert_eq!(g.fourth_moment_ratio, 1.0);
    assert!(g.ks_real.is_none());

    let mut rng = Stream::new(3, 0);
    let ens: Vec<_> = (0..200)
        .map(|s| fixed(vec![Complex64::from_polar(0.7, rng.uniform(0.0, 6.3))], vec![[0.0, 0.0]], s))
        .collect();
    assert!((gaussianity(&ens, [0.0, 0.0]).unwrap().fourth_moment_ratio - 1.0).abs() < 1e-12);

    let zero: Vec<_> = (0..100).map(|s| fixed(vec![Complex64::new(0.0, 0.0)], vec![[0.0, 0.0]], s)).collect();
    assert!(matches!(gaussianity(&zero, [0.0, 0.0]), Err(semiwave::Error::DegenerateSample(_))));
    assert!(matches!(gaussianity(&ens[..99], [0.0, 0.0]), Err(semiwave::Error::Validation(_))));
}

#[test]
fn synthetic_phases_reproduce_the_exact_lift_covariance() {
    let job = job(0.01, large_state(), 4);
    let mut rng = Stream::new(4, 0);
    let x = loop {
        let x = job.surface.random_point(&mut rng);
        if job.lifts(&x).unwrap().len() >= 4 {
            break x;
        }
    };
    let grid = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 2.5], [-3.0, 1.0]];
    let ens = sample_ensemble(&job, &[x], 4000, 0.0, &grid, FieldVariant::Full, PhaseMode::Synthetic { seed: 9 }).unwrap();
    let profiles = job.lift_profiles(&x, &FrameChart::new(x, 0.0).unwrap(), Excision::None).unwrap();
    let pairs: Vec<_> = grid.iter().map(|y| (*y, grid[0])).collect();
    let est = empirical_covariance(&ens, &pairs).unwrap();
    for ((y, e), s) in grid.iter().zip(&est.estimates).zip(&est.stderr) {
        let m: Complex64 = profiles
            .iter()
            .map(|p| Complex64::from_polar(p.b0 * p.b0, p.xi[0] * y[0] + p.xi[1] * y[1]))
            .sum();
        assert!((e - m).norm() <= 3.0 * s.max(1e-15), "{y:?}: {e} vs {m}");
    }
}

#[test]
fn normalization_drops_empty_fields() {
    let mut a = fixed(vec![Complex64::new(2.0, 0.0)], vec![[0.0, 0.0]], 0);
    a.amplitude_sq_sum = 4.0;
    let mut b = a.clone();
    b.empty = true;
    let n = normalized(&[a, b]);
    assert_eq!(n.len(), 1);
    assert_eq!(n[0].values[0], Complex64::new(1.0, 0.0));
}

#[test]
fn mean_phase_is_one_without_perturbation() {
    let p = JobParams { delta: 0.0, ..params(0.01) };
    let job = job_with(p, small_state(), 5);
    let mut rng = Stream::new(5, 0);
    let x = loop {
        let x = job.surface.random_point(&mut rng);
        if !job.lifts(&x).unwrap().is_empty() {
            break x;
        }
    };
    let m = mean_phase(&job, &x, 100).unwrap();
    assert!((m.value - 1.0).abs() < 1e-12);
    assert!(m.stderr < 1e-12);
    assert!(matches!(phase_independence(&job, &x, &x, 100, PairExcision::Own), Err(semiwave::Error::DegenerateSample(_))));
    assert!(matches!(mean_phase(&job, &x, 99), Err(semiwave::Error::Validation(_))));
}

#[test]
fn synthetic_mean_phase_is_small() {
    for seed in 0..5 {
        let m = mean_phase_synthetic(400, seed).unwrap();
        assert!(m.value <= 3.0 / 20.0);
        assert!(m.stderr > 0.0);
    }
}

#[test]
fn a_point_is_fully_correlated_with_itself() {
    let job = job(0.01, small_state(), 6);
    let mut rng = Stream::new(6, 0);
    let x = loop {
        let x = job.surface.random_point(&mut rng);
        if !job.lifts(&x).unwrap().is_empty() {
            break x;
        }
    };
    let c = phase_independence(&job, &x, &x, 100, PairExcision::None).unwrap();
    assert!((c.magnitude - 1.0).abs() < 1e-12);
    let a = job.potential.omegas.iter().map(|w| Complex64::new(*w, 0.0)).collect::<Vec<_>>();
    let b: Vec<_> = a.iter().map(|v| v * Complex64::new(0.0, 2.0)).collect();
    assert!((complex_correlation(&a, &b).unwrap().magnitude - 1.0).abs() < 1e-12);
}

#[test]
fn reports_are_reproducible() {
    let job = job(0.01, small_state(), 7);
    let mut rng = Stream::new(7, 0);
    let x = loop {
        let x = job.surface.random_point(&mut rng);
        if !job.lifts(&x).unwrap().is_empty() {
            break x;
        }
    };
    let a = serde_json::to_string(&mean_phase(&job, &x, 120).unwrap()).unwrap();
    let b = serde_json::to_string(&mean_phase(&job, &x, 120).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn deviation_fraction_is_a_fraction() {
    assert_eq!(deviation_fraction(&[], 1.0, 0.1), 0.0);
    assert_eq!(deviation_fraction(&[0.0, 2.0], 1.0, 0.5), 1.0);
}
