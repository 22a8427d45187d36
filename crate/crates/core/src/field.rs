//! The locally rescaled wave `psi(y) = psi_h(exp_x(h y))` as a finite sum of
//! plane waves, one per lift of `x`.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiskPoint, FrameChart};
use crate::rng::{tag, Stream};
use crate::wkb::{Excision, JobParams, LiftProfile, PropagationJob};

/// Grid points must stay within this many wavelength units of the origin.
pub const MAX_GRID_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldVariant {
    /// Phases `Theta = phi_0 + delta theta`.
    Full,
    /// Phases `Theta^0` with the own-lift close-approach times removed.
    Excised,
}

/// How the phase of each plane wave is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    Dynamic,
    /// `Theta / h` replaced by iid uniform phases drawn from `(SYNTHETIC_PHASE, draw)`.
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWave {
    pub amplitude: f64,
    /// Phase at `y = 0`.
    pub phase: f64,
    pub xi: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFieldSample {
    pub x: DiskPoint,
    pub omega_seed: u64,
    pub grid: Vec<[f64; 2]>,
    pub values: Vec<Complex64>,
    pub lift_count: usize,
    /// `sum b_0^2` over the lifts, the variance scale of the field.
    pub amplitude_sq_sum: f64,
    pub t: f64,
    pub h: f64,
    pub delta: f64,
    /// No lift reaches `x`; the values are all zero.
    pub empty: bool,
}

/// `sum_k a_k e^{i (phase_k + xi_k . y)}` at each grid point.
pub fn plane_wave_sum(waves: &[PlaneWave], grid: &[[f64; 2]]) -> Vec<Complex64> {
    grid.iter()
        .map(|y| {
            waves
                .iter()
                .map(|w| Complex64::from_polar(w.amplitude, w.phase + w.xi[0] * y[0] + w.xi[1] * y[1]))
                .sum()
        })
        .collect()
}

pub fn check_grid(grid: &[[f64; 2]]) -> Result<()> {
    for y in grid {
        let r = y[0].hypot(y[1]);
        if !(r <= MAX_GRID_RADIUS) {
            return Err(Error::Validation(format!(
                "grid point {y:?} is beyond radius {MAX_GRID_RADIUS}"
            )));
        }
    }
    Ok(())
}

/// Plane waves of the lifts for one weight vector.
pub fn waves_for_draw(
    profiles: &[LiftProfile],
    omegas: &[f64],
    params: &JobParams,
    variant: FieldVariant,
) -> Vec<PlaneWave> {
    profiles
        .iter()
        .map(|p| {
            let theta = match variant {
                FieldVariant::Full => p.theta(omegas),
                FieldVariant::Excised => p.theta_excised(omegas),
            };
            PlaneWave { amplitude: p.b0, phase: (p.phi0 + params.delta * theta) / params.h, xi: p.xi }
        })
        .collect()
}

fn excision_for(variant: FieldVariant) -> Excision {
    match variant {
        FieldVariant::Full => Excision::None,
        FieldVariant::Excised => Excision::OwnLifts,
    }
}

fn assemble(
    job: &PropagationJob,
    x: &DiskPoint,
    grid: &[[f64; 2]],
    profiles: &[LiftProfile],
    omegas: &[f64],
    omega_seed: u64,
    variant: FieldVariant,
    phases: PhaseMode,
    draw: u64,
) -> LocalFieldSample {
    let mut waves = waves_for_draw(profiles, omegas, &job.params, variant);
    if let PhaseMode::Synthetic { seed } = phases {
        let mut rng = Stream::tagged(seed, tag::SYNTHETIC_PHASE, draw);
        for w in &mut waves {
            w.phase = rng.uniform(0.0, std::f64::consts::TAU);
        }
    }
    LocalFieldSample {
        x: *x,
        omega_seed,
        grid: grid.to_vec(),
        values: plane_wave_sum(&waves, grid),
        lift_count: profiles.len(),
        amplitude_sq_sum: profiles.iter().map(|p| p.b0 * p.b0).sum(),
        t: job.t(),
        h: job.params.h,
        delta: job.params.delta,
        empty: profiles.is_empty(),
    }
}

/// The field at `exp_x(h (y_1 e_1 + y_2 e_2))` for the job's weights.
pub fn sample_field(
    job: &PropagationJob,
    x: &DiskPoint,
    chart: &FrameChart,
    grid: &[[f64; 2]],
    variant: FieldVariant,
) -> Result<LocalFieldSample> {
    check_grid(grid)?;
    let profiles = job.lift_profiles(x, chart, excision_for(variant))?;
    let pot = &job.potential;
    Ok(assemble(job, x, grid, &profiles, &pot.omegas, pot.omega_seed, variant, PhaseMode::Dynamic, 0))
}

/// Fields at every point for weight draws `0..n_draws` (draw `d` uses seed `seed ^ d`).
/// Charts are the standard frame rotated by `chart_angle`. Ordered by point, then draw.
pub fn sample_ensemble(
    job: &PropagationJob,
    points: &[DiskPoint],
    n_draws: usize,
    chart_angle: f64,
    grid: &[[f64; 2]],
    variant: FieldVariant,
    phases: PhaseMode,
) -> Result<Vec<LocalFieldSample>> {
    check_grid(grid)?;
    let draws: Vec<(u64, Vec<f64>)> = (0..n_draws as u64)
        .map(|d| {
            let p = job.potential.with_omega_draw(d);
            (p.omega_seed, p.omegas)
        })
        .collect();
    let per_point = points
        .par_iter()
        .map(|x| {
            let chart = FrameChart::new(*x, chart_angle)?;
            let profiles = job.lift_profiles(x, &chart, excision_for(variant))?;
            Ok(draws
                .iter()
                .enumerate()
                .map(|(d, (seed, omegas))| {
                    assemble(job, x, grid, &profiles, omegas, *seed, variant, phases, d as u64)
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

/// Job parameters written next to a field CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub params: JobParams,
    pub potential_seed: u64,
    pub variant: FieldVariant,
    pub n_samples: usize,
    pub config_hash: String,
}

/// Rows `x_u, x_v, seed, y1, y2, re, im`.
pub fn write_field_csv<W: Write>(out: W, samples: &[LocalFieldSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_u", "x_v", "seed", "y1", "y2", "re", "im"])?;
    for s in samples {
        for (y, v) in s.grid.iter().zip(&s.values) {
            w.write_record(&[
                s.x.u.to_string(),
                s.x.v.to_string(),
                s.omega_seed.to_string(),
                y[0].to_string(),
                y[1].to_string(),
                v.re.to_string(),
                v.im.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_files(dir: &Path, stem: &str, samples: &[LocalFieldSample], sidecar: &FieldSidecar) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_field_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?, samples)?;
    let json = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(dir.join(format!("{stem}.json")), json + "\n")?;
    Ok(())
}

/// Parses rows written by `write_field_csv` back into samples (one per `(x, seed)` run of rows).
pub fn read_field_csv<R: std::io::Read>(input: R) -> Result<Vec<(DiskPoint, u64, Vec<[f64; 2]>, Vec<Complex64>)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out: Vec<(DiskPoint, u64, Vec<[f64; 2]>, Vec<Complex64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Validation(format!("bad field CSV value in column {i}")))
        };
        let x = DiskPoint::new(f(0)?, f(1)?)?;
        let seed: u64 = rec
            .get(2)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Validation("bad seed in field CSV".into()))?;
        let (y, v) = ([f(3)?, f(4)?], Complex64::new(f(5)?, f(6)?));
        match out.last_mut() {
            Some(last) if last.0 == x && last.1 == seed => {
                last.2.push(y);
                last.3.push(v);
            }
            _ => out.push((x, seed, vec![y], vec![v])),
        }
    }
    Ok(out)
}
