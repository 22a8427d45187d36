//! Ensemble estimators: covariance, Gaussianity, mean phase and phase independence.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::berry::BerryKernel;
use crate::diagnostics::{approach_intervals, excision_set, ApproachIntervals};
use crate::error::{Error, Result};
use crate::field::LocalFieldSample;
use crate::geometry::{DiskPoint, FrameChart};
use crate::rng::{tag, Stream};
use crate::surface::Lift;
use crate::wkb::PropagationJob;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const MIN_GAUSSIANITY_SAMPLES: usize = 100;
pub const MIN_PHASE_DRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub separations: Vec<f64>,
    pub estimates: Vec<Complex64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub fourth_moment_ratio: f64,
    /// `None` when the marginal has zero variance and cannot be standardized.
    pub ks_real: Option<f64>,
    pub ks_imag: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPhase {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub word: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCorrelation {
    pub value: Complex64,
    pub magnitude: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Which times are dropped from the phase integrals in `phase_independence`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairExcision {
    /// Full phases `Theta`.
    None,
    /// Each point's own-lift excision set.
    Own,
    /// The own sets plus the close-approach times to the other point's lifts.
    Cross,
}

fn check_ensemble(samples: &[LocalFieldSample]) -> Result<()> {
    let first = samples.first().ok_or_else(|| Error::Validation("empty ensemble".into()))?;
    for s in samples {
        if s.values.len() != s.grid.len() {
            return Err(Error::Validation("sample values and grid differ in length".into()));
        }
        if s.grid != first.grid {
            return Err(Error::Validation("samples do not share a grid".into()));
        }
        if s.h != first.h || s.t != first.t || s.delta != first.delta {
            return Err(Error::Validation("samples do not share job parameters".into()));
        }
    }
    Ok(())
}

fn grid_index(grid: &[[f64; 2]], y: [f64; 2]) -> Result<usize> {
    grid.iter()
        .position(|g| *g == y)
        .ok_or_else(|| Error::Validation(format!("{y:?} is not a grid point")))
}

/// Fields divided by `sqrt(sum b_0^2)`; samples without lifts are dropped.
pub fn normalized(samples: &[LocalFieldSample]) -> Vec<LocalFieldSample> {
    samples
        .iter()
        .filter(|s| !s.empty && s.amplitude_sq_sum > 0.0)
        .map(|s| {
            let k = s.amplitude_sq_sum.sqrt();
            LocalFieldSample { values: s.values.iter().map(|v| v / k).collect(), ..s.clone() }
        })
        .collect()
}

/// Mean of `psi(y) conj psi(y')` over the ensemble for each pair, with
/// `stderr = sqrt(var re + var im) / sqrt(n)`.
pub fn empirical_covariance(samples: &[LocalFieldSample], pairs: &[([f64; 2], [f64; 2])]) -> Result<CovarianceEstimate> {
    check_ensemble(samples)?;
    if samples.len() < 2 {
        return Err(Error::Validation("covariance needs at least 2 samples".into()));
    }
    let grid = &samples[0].grid;
    let n = samples.len() as f64;
    let mut out = CovarianceEstimate {
        separations: Vec::with_capacity(pairs.len()),
        estimates: Vec::with_capacity(pairs.len()),
        stderr: Vec::with_capacity(pairs.len()),
        n_samples: samples.len(),
    };
    for &(y, y2) in pairs {
        let (i, j) = (grid_index(grid, y)?, grid_index(grid, y2)?);
        let prods: Vec<Complex64> = samples.iter().map(|s| s.values[i] * s.values[j].conj()).collect();
        let mean = shifted_mean(&prods);
        let var = prods.iter().map(|p| (p - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
        out.separations.push((y[0] - y2[0]).hypot(y[1] - y2[1]));
        out.estimates.push(mean);
        out.stderr.push((var / n).sqrt());
    }
    Ok(out)
}

/// Mean taken about the first value, so a constant sequence returns that value exactly.
fn shifted_mean(v: &[Complex64]) -> Complex64 {
    v[0] + v.iter().map(|p| p - v[0]).sum::<Complex64>() / v.len() as f64
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Kolmogorov-Smirnov distance of the standardized values to the normal law.
fn ks_standard_normal(xs: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mean = xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if !(var > 0.0) {
        return None;
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = xs.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(f64::total_cmp);
    Some(z.iter().enumerate().fold(0.0, |d, (i, &v)| {
        let f = normal_cdf(v);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    }))
}

/// Moments and marginal KS distances of `psi(probe)` over the ensemble.
pub fn gaussianity(samples: &[LocalFieldSample], probe: [f64; 2]) -> Result<GaussianityReport> {
    check_ensemble(samples)?;
    if samples.len() < MIN_GAUSSIANITY_SAMPLES {
        return Err(Error::Validation(format!(
            "gaussianity needs at least {MIN_GAUSSIANITY_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let i = grid_index(&samples[0].grid, probe)?;
    let vals: Vec<Complex64> = samples.iter().map(|s| s.values[i]).collect();
    let n = vals.len() as f64;
    let m2 = vals.iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
    if !(m2 > 0.0) {
        return Err(Error::DegenerateSample("the field vanishes at the probe in every sample".into()));
    }
    let m4 = vals.iter().map(|v| v.norm_sqr().powi(2)).sum::<f64>() / n;
    let re: Vec<f64> = vals.iter().map(|v| v.re).collect();
    let im: Vec<f64> = vals.iter().map(|v| v.im).collect();
    Ok(GaussianityReport {
        fourth_moment_ratio: m4 / (m2 * m2),
        ks_real: ks_standard_normal(&re),
        ks_imag: ks_standard_normal(&im),
        n: vals.len(),
    })
}

/// Standard deviation of `|mean|` over bootstrap resamples.
pub fn bootstrap_abs_mean_stderr(values: &[Complex64], seed: u64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mut rng = Stream::tagged(seed, tag::BOOTSTRAP, 0);
    let stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| ((0..n).map(|_| values[rng.index(n)]).sum::<Complex64>() / n as f64).norm())
        .collect();
    let m = stats.iter().sum::<f64>() / stats.len() as f64;
    (stats.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (stats.len() - 1) as f64).sqrt()
}

fn check_draws(n: usize) -> Result<()> {
    if n < MIN_PHASE_DRAWS {
        return Err(Error::Validation(format!("need at least {MIN_PHASE_DRAWS} weight draws, got {n}")));
    }
    Ok(())
}

/// The lift with the shortest word, ties broken lexicographically.
pub fn shortest_lift(lifts: &[Lift]) -> Option<&Lift> {
    lifts.iter().min_by(|a, b| (a.word.len(), &a.word).cmp(&(b.word.len(), &b.word)))
}

/// `e^{i Theta(x~) / h}` for weight draws `0..n` with the given times removed.
pub fn phase_draws(job: &PropagationJob, x: &DiskPoint, lift: &Lift, intervals: &[[f64; 2]], n: usize) -> Result<Vec<Complex64>> {
    let chart = FrameChart::new(*x, 0.0)?;
    let profile = job.lift_profile(lift, &chart, intervals)?;
    let p = &job.params;
    Ok((0..n as u64)
        .map(|d| {
            let omegas = job.potential.with_omega_draw(d).omegas;
            Complex64::from_polar(1.0, (profile.phi0 + p.delta * profile.theta_excised(&omegas)) / p.h)
        })
        .collect())
}

/// `|E_omega e^{i Theta^0(x~) / h}|` for the shortest lift of `x`, over draws `0..n`.
pub fn mean_phase(job: &PropagationJob, x: &DiskPoint, n_draws: usize) -> Result<MeanPhase> {
    check_draws(n_draws)?;
    let lifts = job.lifts(x)?;
    let lift = shortest_lift(&lifts).ok_or_else(|| Error::DegenerateSample("no lift reaches the point".into()))?;
    let intervals = excision_set(job, &lifts, job.excision_eps())?.intervals;
    let vals = phase_draws(job, x, lift, &intervals, n_draws)?;
    let mean = vals.iter().sum::<Complex64>() / n_draws as f64;
    Ok(MeanPhase {
        value: mean.norm(),
        stderr: bootstrap_abs_mean_stderr(&vals, job.potential.seed),
        n: n_draws,
        word: lift.word.clone(),
    })
}

/// `mean_phase` with the phases replaced by iid uniforms.
pub fn mean_phase_synthetic(n_draws: usize, seed: u64) -> Result<MeanPhase> {
    check_draws(n_draws)?;
    let mut rng = Stream::tagged(seed, tag::SYNTHETIC_PHASE, 0);
    let vals: Vec<Complex64> =
        (0..n_draws).map(|_| Complex64::from_polar(1.0, rng.uniform(0.0, std::f64::consts::TAU))).collect();
    let mean = vals.iter().sum::<Complex64>() / n_draws as f64;
    Ok(MeanPhase { value: mean.norm(), stderr: bootstrap_abs_mean_stderr(&vals, seed), n: n_draws, word: Vec::new() })
}

/// Complex Pearson correlation `E[(a - Ea) conj(b - Eb)] / sqrt(Var a Var b)`.
pub fn complex_correlation(a: &[Complex64], b: &[Complex64]) -> Result<PhaseCorrelation> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Validation("correlation needs two series of equal length >= 2".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<Complex64>() / n;
    let mb = b.iter().sum::<Complex64>() / n;
    let va = a.iter().map(|v| (v - ma).norm_sqr()).sum::<f64>() / n;
    let vb = b.iter().map(|v| (v - mb).norm_sqr()).sum::<f64>() / n;
    if !(va > 1e-24 && vb > 1e-24) {
        return Err(Error::DegenerateSample("a phase series has zero variance".into()));
    }
    let c = a.iter().zip(b).map(|(u, v)| (u - ma) * (v - mb).conj()).sum::<Complex64>() / n / (va * vb).sqrt();
    Ok(PhaseCorrelation { value: c, magnitude: c.norm(), stderr: 1.0 / n.sqrt(), n: a.len() })
}

/// Correlation across draws of the phases of the shortest lifts of `x` and `x2`.
pub fn phase_independence(
    job: &PropagationJob,
    x: &DiskPoint,
    x2: &DiskPoint,
    n_draws: usize,
    excision: PairExcision,
) -> Result<PhaseCorrelation> {
    check_draws(n_draws)?;
    let eps = job.excision_eps();
    let (la, lb) = (job.lifts(x)?, job.lifts(x2)?);
    let none = || Error::DegenerateSample("no lift reaches the point".into());
    let a = shortest_lift(&la).ok_or_else(none)?;
    let b = shortest_lift(&lb).ok_or_else(none)?;
    let (ia, ib) = match excision {
        PairExcision::None => (Vec::new(), Vec::new()),
        PairExcision::Own => (excision_set(job, &la, eps)?.intervals, excision_set(job, &lb, eps)?.intervals),
        PairExcision::Cross => {
            let mut ia = excision_set(job, &la, eps)?.intervals;
            let mut ib = excision_set(job, &lb, eps)?.intervals;
            ia.extend(approach_intervals(job, std::slice::from_ref(a), &lb, eps, false)?.remove(0).intervals);
            ib.extend(approach_intervals(job, std::slice::from_ref(b), &la, eps, false)?.remove(0).intervals);
            (ApproachIntervals::union(ia).intervals, ApproachIntervals::union(ib).intervals)
        }
    };
    let pa = phase_draws(job, x, a, &ia, n_draws)?;
    let pb = phase_draws(job, x2, b, &ib, n_draws)?;
    complex_correlation(&pa, &pb)
}

/// Fraction of `values` further than `eps` from `reference`.
pub fn deviation_fraction(values: &[f64], reference: f64, eps: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|v| (*v - reference).abs() > eps).count() as f64 / values.len() as f64
}

/// Grid average of `|psi|^2` per sample, for normalized fields.
pub fn spatial_energy(samples: &[LocalFieldSample]) -> Vec<f64> {
    samples
        .iter()
        .map(|s| s.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / s.values.len().max(1) as f64)
        .collect()
}

/// Rows `r, re, im, stderr, kernel_reference` (the last left empty without a kernel).
pub fn write_covariance_csv<W: Write>(out: W, est: &CovarianceEstimate, kernel: Option<&BerryKernel>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "re", "im", "stderr", "kernel_reference"])?;
    for ((r, e), s) in est.separations.iter().zip(&est.estimates).zip(&est.stderr) {
        let k = kernel.map(|k| k.kernel(*r).to_string()).unwrap_or_default();
        w.write_record(&[r.to_string(), e.re.to_string(), e.im.to_string(), s.to_string(), k])?;
    }
    w.flush()?;
    Ok(())
}

/// Largest `|estimate - kernel(r)|` over the separations.
pub fn max_kernel_deviation(est: &CovarianceEstimate, kernel: &BerryKernel) -> f64 {
    est.separations
        .iter()
        .zip(&est.estimates)
        .map(|(r, e)| (e - kernel.kernel(*r)).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        // midpoint quantiles of the normal law via bisection on the CDF
        let q: Vec<f64> = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                let (mut lo, mut hi) = (-10.0, 10.0);
                for _ in 0..100 {
                    let m = 0.5 * (lo + hi);
                    if normal_cdf(m) < p {
                        lo = m
                    } else {
                        hi = m
                    }
                }
                lo
            })
            .collect();
        assert!(ks_standard_normal(&q).unwrap() < 0.01);
        assert!(ks_standard_normal(&[1.0; 10]).is_none());
    }

    #[test]
    fn deviation_fraction_counts() {
        assert_eq!(deviation_fraction(&[1.0, 1.05, 1.5, 0.2], 1.0, 0.1), 0.5);
    }
}
