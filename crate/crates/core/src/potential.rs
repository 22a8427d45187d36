//! The random perturbation `q_omega = sum_j omega_j chi(h^-beta dist(rho_j, .))`
//! on an `h^beta`-net of the surface (base case) or of its unit tangent bundle
//! (symbol case, with the Sasaki-type distance of `geometry::phase_distance`).

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance_c, flow_c, transport_direction, DiskPoint, MobiusMap, PhasePoint};
use crate::profile::Profile;
use crate::quad::simpson_doubling;
use crate::rng::{tag, Stream};
use crate::surface::{Surface, CIRCUMRADIUS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialCase {
    Base,
    Symbol,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OmegaDistribution {
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Degenerate law used in tests: every weight is 0.
    Zero,
}

impl Default for OmegaDistribution {
    fn default() -> Self {
        OmegaDistribution::Uniform { half_width: 3f64.sqrt() }
    }
}

impl OmegaDistribution {
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            OmegaDistribution::Uniform { half_width } => rng.uniform(-half_width, half_width),
            OmegaDistribution::Zero => 0.0,
        }
    }

    /// Almost-sure bound on `|omega|`.
    pub fn bound(&self) -> f64 {
        match *self {
            OmegaDistribution::Uniform { half_width } => half_width.abs(),
            OmegaDistribution::Zero => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            OmegaDistribution::Uniform { half_width } => half_width * half_width / 3.0,
            OmegaDistribution::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Center {
    pub point: DiskPoint,
    /// Direction for the symbol case.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dir: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy)]
struct Image {
    center: u32,
    z: Complex64,
    dir: Complex64,
}

/// Images of the centers near the octagon, bucketed on a Euclidean grid.
#[derive(Debug, Default)]
struct ImageIndex {
    width: f64,
    cell: f64,
    m: usize,
    cells: Vec<Vec<u32>>,
    images: Vec<Image>,
}

impl ImageIndex {
    fn new(width: f64) -> Self {
        let tau = (width / 2.0).tanh();
        let cell = (0.75 * tau).max(0.01);
        let m = (2.0 / cell).ceil() as usize;
        ImageIndex { width, cell, m, cells: vec![Vec::new(); m * m], images: Vec::new() }
    }

    fn slot(&self, x: f64) -> usize {
        (((x + 1.0) / self.cell).floor().max(0.0) as usize).min(self.m - 1)
    }

    fn insert(&mut self, surface: &Surface, center: u32, z: Complex64, dir: Complex64) {
        let reach = CIRCUMRADIUS + self.width + 1e-6;
        let zero = Complex64::new(0.0, 0.0);
        for g in &surface.neighbors {
            let w = g.map.apply_c(z);
            if distance_c(zero, w) <= reach {
                let d = dir * g.map.frame_rotation(z);
                let k = self.slot(w.im) * self.m + self.slot(w.re);
                self.cells[k].push(self.images.len() as u32);
                self.images.push(Image { center, z: w, dir: d });
            }
        }
    }

    /// Calls `f(image, base_distance)` for images within `width` of `z`.
    fn near<F: FnMut(&Image, f64)>(&self, z: Complex64, mut f: F) {
        let tau = (self.width / 2.0).tanh();
        let r2 = z.norm_sqr();
        let den = 1.0 - tau * tau * r2;
        let ec = z * ((1.0 - tau * tau) / den);
        let er = tau * (1.0 - r2) / den;
        let (x0, x1) = (self.slot(ec.re - er), self.slot(ec.re + er));
        let (y0, y1) = (self.slot(ec.im - er), self.slot(ec.im + er));
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                for &i in &self.cells[iy * self.m + ix] {
                    let img = &self.images[i as usize];
                    let d = distance_c(z, img.z);
                    if d < self.width {
                        f(img, d);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetParams {
    pub h: f64,
    pub beta: f64,
    pub case: PotentialCase,
    pub profile: Profile,
    pub distribution: OmegaDistribution,
    pub seed: u64,
}

impl NetParams {
    pub fn new(h: f64, beta: f64, case: PotentialCase, seed: u64) -> Self {
        NetParams {
            h,
            beta,
            case,
            profile: Profile::Polynomial,
            distribution: OmegaDistribution::default(),
            seed,
        }
    }

    pub fn with_profile(mut self, profile: Profile) -> Self {
        self.profile = profile;
        self
    }

    pub fn with_distribution(mut self, distribution: OmegaDistribution) -> Self {
        self.distribution = distribution;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomPotential {
    pub h: f64,
    pub beta: f64,
    pub case: PotentialCase,
    pub seed: u64,
    /// Seed of the weight stream; equals `seed` for the first draw.
    pub omega_seed: u64,
    pub profile: Profile,
    pub distribution: OmegaDistribution,
    pub centers: Vec<Center>,
    pub omegas: Vec<f64>,
    #[serde(skip)]
    index: Arc<ImageIndex>,
}

fn draw_omegas(dist: &OmegaDistribution, omega_seed: u64, n: usize) -> Vec<f64> {
    let mut rng = Stream::tagged(omega_seed, tag::OMEGA, 0);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Grid candidates inside the octagon, spaced at most `spacing` hyperbolically.
fn lattice_candidates(surface: &Surface, spacing: f64) -> Vec<Complex64> {
    let rmax = (CIRCUMRADIUS / 2.0).tanh();
    let step = spacing * (1.0 - rmax * rmax) / 2.0;
    let n = (rmax / step).ceil() as i64;
    let mut out = Vec::new();
    for iy in -n..=n {
        for ix in -n..=n {
            let z = Complex64::new(ix as f64 * step, iy as f64 * step);
            if z.norm() <= rmax && surface.in_domain(&DiskPoint::from_complex_unchecked(z), 0.0) {
                out.push(z);
            }
        }
    }
    out
}

/// Builds a maximal `h^beta`-separated net by greedy selection over a fine lattice
/// of candidates visited in a seeded random order.
///
/// Every lattice point ends within `h^beta` of a center, so the covering radius is
/// below `h^beta (1 + 1/8)` in the base case.
pub fn build_net(surface: &Surface, params: &NetParams) -> Result<RandomPotential> {
    let NetParams { h, beta, case, profile, distribution, seed } = params.clone();
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::Admissibility(format!("beta must lie in (0, 1/2), got {beta}")));
    }
    // h > 1 is allowed here so that a net coarser than the surface can be built.
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Admissibility(format!("h must be positive, got {h}")));
    }
    profile.validate()?;
    let width = h.powf(beta);
    let mut rng = Stream::tagged(seed, tag::NET_CANDIDATES, 0);
    let (points, n_angles) = match case {
        PotentialCase::Base => (lattice_candidates(surface, width / 8.0), 1usize),
        PotentialCase::Symbol => {
            let n_angles = (std::f64::consts::TAU / (width / 3.0)).ceil() as usize;
            (lattice_candidates(surface, width / 3.0), n_angles)
        }
    };
    let total = points.len() * n_angles;
    let mut order: Vec<u32> = (0..total as u32).collect();
    for i in (1..total).rev() {
        let j = rng.index(i + 1);
        order.swap(i, j);
    }
    let mut index = ImageIndex::new(width);
    let mut centers = Vec::new();
    for &k in &order {
        let (pi, ai) = (k as usize / n_angles, k as usize % n_angles);
        let z = points[pi];
        let dir = Complex64::from_polar(1.0, ai as f64 * std::f64::consts::TAU / n_angles as f64);
        let mut free = true;
        index.near(z, |img, d| {
            if !free {
                return;
            }
            let dist = match case {
                PotentialCase::Base => d,
                PotentialCase::Symbol => sasaki(img, z, dir, d),
            };
            if dist < width {
                free = false;
            }
        });
        if free {
            let c = centers.len() as u32;
            index.insert(surface, c, z, dir);
            centers.push(Center {
                point: DiskPoint::from_complex_unchecked(z),
                dir: (case == PotentialCase::Symbol).then_some([dir.re, dir.im]),
            });
        }
    }
    let omegas = draw_omegas(&distribution, seed, centers.len());
    Ok(RandomPotential {
        h,
        beta,
        case,
        seed,
        omega_seed: seed,
        profile,
        distribution,
        centers,
        omegas,
        index: Arc::new(index),
    })
}

fn sasaki(img: &Image, z: Complex64, dir: Complex64, base: f64) -> f64 {
    let moved = transport_direction(img.z, z, img.dir);
    let angle = (dir / moved).arg();
    (base * base + angle * angle).sqrt()
}

impl RandomPotential {
    /// A potential with explicitly placed centers (points of the octagon).
    pub fn from_centers(
        surface: &Surface,
        params: &NetParams,
        centers: Vec<Center>,
        omegas: Vec<f64>,
    ) -> Result<RandomPotential> {
        if omegas.len() != centers.len() {
            return Err(Error::Validation(format!(
                "{} weights for {} centers",
                omegas.len(),
                centers.len()
            )));
        }
        for c in &centers {
            c.point.check()?;
        }
        Ok(RandomPotential {
            h: params.h,
            beta: params.beta,
            case: params.case,
            seed: params.seed,
            omega_seed: params.seed,
            profile: params.profile,
            distribution: params.distribution,
            centers,
            omegas,
            index: Arc::new(ImageIndex::default()),
        }
        .reindex(surface))
    }

    pub fn width(&self) -> f64 {
        self.h.powf(self.beta)
    }

    /// Same net, weights redrawn from stream `seed ^ draw`.
    pub fn with_omega_draw(&self, draw: u64) -> RandomPotential {
        let omega_seed = self.seed ^ draw;
        RandomPotential {
            omega_seed,
            omegas: draw_omegas(&self.distribution, omega_seed, self.centers.len()),
            ..self.clone()
        }
    }

    pub fn with_constant_omegas(&self, value: f64) -> RandomPotential {
        RandomPotential { omegas: vec![value; self.centers.len()], ..self.clone() }
    }

    pub fn with_omegas(&self, omegas: Vec<f64>) -> Result<RandomPotential> {
        if omegas.len() != self.centers.len() {
            return Err(Error::Validation(format!(
                "{} weights for {} centers",
                omegas.len(),
                self.centers.len()
            )));
        }
        Ok(RandomPotential { omegas, ..self.clone() })
    }

    /// Rebuilds the image index after deserialization.
    pub fn reindex(mut self, surface: &Surface) -> RandomPotential {
        let mut index = ImageIndex::new(self.width());
        for (j, c) in self.centers.iter().enumerate() {
            let dir = c.dir.map_or(Complex64::new(1.0, 0.0), |d| Complex64::new(d[0], d[1]));
            index.insert(surface, j as u32, c.point.z(), dir);
        }
        self.index = Arc::new(index);
        self
    }

    /// Calls `f(j, q_j)` for every bump active at a point of the octagon.
    /// `dir` is ignored in the base case.
    pub fn for_each_bump_reduced<F: FnMut(usize, f64)>(&self, z: Complex64, dir: Complex64, mut f: F) {
        let width = self.index.width;
        match self.case {
            PotentialCase::Base => self.index.near(z, |img, d| {
                let v = self.profile.eval(d / width);
                if v != 0.0 {
                    f(img.center as usize, v);
                }
            }),
            PotentialCase::Symbol => self.index.near(z, |img, d| {
                let s = sasaki(img, z, dir, d) / width;
                if s < 1.0 {
                    let v = self.profile.eval(s);
                    if v != 0.0 {
                        f(img.center as usize, v);
                    }
                }
            }),
        }
    }

    fn reduce_phase(&self, surface: &Surface, rho: &PhasePoint, hint: &MobiusMap) -> Result<(Complex64, Complex64, MobiusMap)> {
        let zt = rho.base.z();
        let (z, g) = surface.reduce_c(zt, hint)?;
        let dir = rho.dir_c() * g.inverse().frame_rotation(zt);
        Ok((z, dir, g))
    }

    /// `q_omega` at a phase-space point of the cover.
    pub fn eval_q_phase(&self, surface: &Surface, at: &PhasePoint) -> Result<f64> {
        at.base.check()?;
        let (z, dir, _) = self.reduce_phase(surface, at, &MobiusMap::IDENTITY)?;
        let mut q = 0.0;
        self.for_each_bump_reduced(z, dir, |j, v| q += self.omegas[j] * v);
        Ok(q)
    }

    /// `q_omega` at a point of the cover (base case only).
    pub fn eval_q(&self, surface: &Surface, at: &DiskPoint) -> Result<f64> {
        if self.case == PotentialCase::Symbol {
            return Err(Error::Validation("the symbol case needs a phase-space point".into()));
        }
        self.eval_q_phase(surface, &PhasePoint { base: *at, dir: [1.0, 0.0] })
    }

    /// Number of bumps whose support contains the point.
    pub fn overlap_count(&self, surface: &Surface, at: &PhasePoint) -> Result<usize> {
        let (z, dir, _) = self.reduce_phase(surface, at, &MobiusMap::IDENTITY)?;
        let mut n = 0;
        self.for_each_bump_reduced(z, dir, |_, _| n += 1);
        Ok(n)
    }

    /// Distance from a point to the nearest center (base distance in the base case).
    pub fn nearest_center_distance(&self, surface: &Surface, at: &PhasePoint) -> Result<f64> {
        let (z, dir, _) = self.reduce_phase(surface, at, &MobiusMap::IDENTITY)?;
        let mut best = f64::INFINITY;
        self.index.near(z, |img, d| {
            let dist = match self.case {
                PotentialCase::Base => d,
                PotentialCase::Symbol => sasaki(img, z, dir, d),
            };
            best = best.min(dist);
        });
        Ok(best)
    }
}

/// The three parameter conditions on `(h, beta, delta, eps0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterConditions {
    /// `delta h^(-2 beta - eps0) <= 1`.
    pub small_perturbation: bool,
    /// `delta^2 h^(beta - 2) >= h^(-eps0)`.
    pub strong_randomization: bool,
    /// `delta h^(beta - 1) <= h^eps0`, required in the base case only.
    pub base_case_bound: Option<bool>,
}

impl ParameterConditions {
    pub fn evaluate(h: f64, beta: f64, delta: f64, eps0: f64, case: PotentialCase) -> Self {
        if delta == 0.0 {
            // The unperturbed flow: nothing to control.
            return ParameterConditions {
                small_perturbation: true,
                strong_randomization: true,
                base_case_bound: (case == PotentialCase::Base).then_some(true),
            };
        }
        // Compared in logarithms to avoid underflow for tiny h.
        let (lh, ld) = (h.ln(), delta.ln());
        ParameterConditions {
            small_perturbation: ld + (-2.0 * beta - eps0) * lh <= 1e-12,
            strong_randomization: 2.0 * ld + (beta - 2.0) * lh >= -eps0 * lh - 1e-12,
            base_case_bound: (case == PotentialCase::Base)
                .then(|| ld + (beta - 1.0) * lh <= eps0 * lh + 1e-12),
        }
    }

    pub fn all(&self) -> bool {
        self.small_perturbation && self.strong_randomization && self.base_case_bound.unwrap_or(true)
    }
}

/// Whether `delta = h^alpha` lies in the open region `1 - alpha < beta < min(alpha/2, 2 - 2 alpha)`.
pub fn in_admissible_region(alpha: f64, beta: f64) -> bool {
    beta > 0.0 && beta > 1.0 - alpha && beta < (alpha / 2.0).min(2.0 - 2.0 * alpha)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub overlap_max: usize,
    /// Measured `max_j ||q_j||_{C^k} h^(beta k)` for `k = 0..=3`.
    pub ck_ratios: Vec<f64>,
    /// Minimum over sampled geodesics of `sum_j int_0^T q_j(Phi^t rho) dt` with `omega = 1`.
    pub line_integral_min: f64,
    /// `line_integral_min / T`.
    pub line_integral_rate: f64,
    pub conditions: ParameterConditions,
    pub profile: String,
    pub h: f64,
    pub beta: f64,
    pub delta: f64,
    pub eps0: f64,
    pub horizon: f64,
    pub n_probes: usize,
    pub n_geodesics: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct AuditSizes {
    pub n_probes: usize,
    pub n_geodesics: usize,
    pub n_derivative_lines: usize,
    pub seed: u64,
}

impl Default for AuditSizes {
    fn default() -> Self {
        AuditSizes { n_probes: 10_000, n_geodesics: 50, n_derivative_lines: 200, seed: 0 }
    }
}

pub fn verify_hypotheses(
    surface: &Surface,
    p: &RandomPotential,
    delta: f64,
    eps0: f64,
    horizon: f64,
    sizes: AuditSizes,
) -> Result<AdmissibilityReport> {
    if !(horizon >= 1.0) {
        return Err(Error::Validation(format!("line-integral horizon must be at least 1, got {horizon}")));
    }
    let mut rng = Stream::tagged(sizes.seed, tag::PROBES, 0);
    let random_phase_point = |rng: &mut Stream| {
        let base = surface.random_point(rng);
        let a = rng.uniform(0.0, std::f64::consts::TAU);
        PhasePoint { base, dir: [a.cos(), a.sin()] }
    };

    let mut overlap_max = 0;
    for _ in 0..sizes.n_probes {
        let rho = random_phase_point(&mut rng);
        overlap_max = overlap_max.max(p.overlap_count(surface, &rho)?);
    }

    let ck_ratios = derivative_ratios(p, &mut rng, sizes.n_derivative_lines);

    let ones = p.with_constant_omegas(1.0);
    let width = p.width();
    let n0 = (8.0 * horizon / width).ceil() as usize;
    let mut line_integral_min = f64::INFINITY;
    for _ in 0..sizes.n_geodesics {
        let rho = random_phase_point(&mut rng);
        let (z0, d0) = (rho.base.z(), rho.dir_c());
        let mut hint = MobiusMap::IDENTITY;
        let mut failure = None;
        let integral = simpson_doubling(
            |s| {
                let (zt, dt) = flow_c(z0, d0, s);
                match surface.reduce_c(zt, &hint) {
                    Ok((z, g)) => {
                        hint = g;
                        let dir = dt * g.inverse().frame_rotation(zt);
                        let mut q = 0.0;
                        ones.for_each_bump_reduced(z, dir, |_, v| q += v);
                        q
                    }
                    Err(e) => {
                        failure = Some(e);
                        0.0
                    }
                }
            },
            0.0,
            horizon,
            n0.max(64),
            1e-6,
            1 << 22,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        line_integral_min = line_integral_min.min(integral.value);
    }

    Ok(AdmissibilityReport {
        overlap_max,
        ck_ratios,
        line_integral_min,
        line_integral_rate: line_integral_min / horizon,
        conditions: ParameterConditions::evaluate(p.h, p.beta, delta, eps0, p.case),
        profile: p.profile.describe(),
        h: p.h,
        beta: p.beta,
        delta,
        eps0,
        horizon,
        n_probes: sizes.n_probes,
        n_geodesics: sizes.n_geodesics,
    })
}

/// Finite-difference estimates of `max |d^k/ds^k q_j(gamma(s))| h^(beta k)` along
/// unit-speed geodesics passing near a center, for `k = 0..=3`.
fn derivative_ratios(p: &RandomPotential, rng: &mut Stream, n_lines: usize) -> Vec<f64> {
    let width = p.width();
    let eta = width / 64.0;
    let mut maxima = [0.0f64; 4];
    for _ in 0..n_lines.max(1) {
        let j = rng.index(p.centers.len());
        let c = p.centers[j];
        let cz = c.point.z();
        let cdir = c.dir.map_or(Complex64::new(1.0, 0.0), |d| Complex64::new(d[0], d[1]));
        // A geodesic through a random point of the bump, in a random direction.
        let offset = Complex64::from_polar(1.0, rng.uniform(0.0, std::f64::consts::TAU));
        let (start, _) = flow_c(cz, offset, rng.uniform(0.0, width));
        let dir = Complex64::from_polar(1.0, rng.uniform(0.0, std::f64::consts::TAU));
        let q = |s: f64| {
            let (z, d) = flow_c(start, dir, s);
            let base = distance_c(cz, z);
            let dist = match p.case {
                PotentialCase::Base => base,
                PotentialCase::Symbol => {
                    let moved = transport_direction(cz, z, cdir);
                    let a = (d / moved).arg();
                    (base * base + a * a).sqrt()
                }
            };
            p.profile.eval(dist / width)
        };
        let n = (4.0 * width / eta) as i64;
        for i in -n..=n {
            let s = i as f64 * eta;
            let f = [q(s - 1.5 * eta), q(s - 0.5 * eta), q(s + 0.5 * eta), q(s + 1.5 * eta)];
            let c0 = q(s);
            let d1 = (f[2] - f[1]) / eta;
            let d2 = (f[2] - 2.0 * c0 + f[1]) / (0.25 * eta * eta);
            let d3 = (f[3] - 3.0 * f[2] + 3.0 * f[1] - f[0]) / (eta * eta * eta);
            for (k, v) in [c0, d1, d2, d3].into_iter().enumerate() {
                maxima[k] = maxima[k].max(v.abs() * width.powi(k as i32));
            }
        }
    }
    maxima.to_vec()
}
