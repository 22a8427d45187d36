//! Leading-order WKB data along the unperturbed backward characteristics.
//!
//! For a lift `x~` the characteristic is `Phi^{-s}(x~, dB)`, a geodesic
//! running back towards the ideal point. Along it
//!
//! * `phi_{t,0}(x~) = B(x~) - t/2`,
//! * `theta_t(x~) = -int_0^t q_omega(Phi^{-s}(x~, dB)) ds`,
//! * `b_0(t, x~) = a_0(y^{-t} x~) e^{-t/2}`.
//!
//! `theta` is linear in the weights, so it is stored as one integral per bump
//! (`LiftProfile`) and evaluated for any weight draw by a dot product.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::geometry::{flow_c, hamiltonian_rk4, unit_covector, DiskPoint, FrameChart, MobiusMap, PhasePoint};
use crate::potential::{ParameterConditions, PotentialCase, RandomPotential};
use crate::lagrangian::LagrangianState;
use crate::surface::{enumerate_lifts, Lift, Surface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// `J^{-t} = e^{-t}` from `Laplacian B = 1`.
    Analytic,
    /// Central differences of the backward map, for cross-checks.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Bound on the error of `theta` for any admissible weight draw.
    pub tol: f64,
    pub min_intervals: usize,
    /// Initial intervals per bump width `h^beta` of trajectory.
    pub intervals_per_width: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { tol: 1e-10, min_intervals: 64, intervals_per_width: 8.0, max_intervals: 1 << 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobParams {
    pub h: f64,
    pub beta: f64,
    pub delta: f64,
    pub eps0: f64,
    pub t: f64,
    /// Largest allowed `t / log(1/h)`.
    pub horizon_const: f64,
    pub quadrature: QuadratureSettings,
    pub jacobian: JacobianMode,
    /// Exponent loss for the close-approach radius `h^(beta - eps)`; see `PropagationJob::excision_eps`.
    pub excision_eps: Option<f64>,
}

impl Default for JobParams {
    fn default() -> Self {
        JobParams {
            h: 0.01,
            beta: 0.3,
            delta: 0.01f64.powf(0.8),
            eps0: 0.05,
            t: 0.5 * 100f64.ln(),
            horizon_const: 0.5,
            quadrature: QuadratureSettings::default(),
            jacobian: JacobianMode::Analytic,
            excision_eps: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropagationJob {
    pub params: JobParams,
    pub surface: Arc<Surface>,
    pub potential: Arc<RandomPotential>,
    pub state: Arc<LagrangianState>,
}

/// Per-bump integrals of the profile along a piece of trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BumpIntegrals {
    /// `(center, integral)` sorted by center.
    pub entries: Vec<(u32, f64)>,
    /// Error bound on `sum_j omega_j entries_j` for weights within the distribution bound.
    pub error: f64,
    pub intervals: usize,
}

impl BumpIntegrals {
    pub fn dot(&self, omegas: &[f64]) -> f64 {
        self.entries.iter().map(|&(j, v)| omegas[j as usize] * v).sum()
    }

    fn merge(parts: &[BumpIntegrals]) -> BumpIntegrals {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for p in parts {
            for &(j, v) in &p.entries {
                *acc.entry(j).or_default() += v;
            }
        }
        BumpIntegrals {
            entries: acc.into_iter().collect(),
            error: parts.iter().map(|p| p.error).sum(),
            intervals: parts.iter().map(|p| p.intervals).sum(),
        }
    }
}

/// Effective WKB data of one lift for a particular weight draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftContribution {
    pub lift: MobiusMap,
    pub word: Vec<u8>,
    pub b0: f64,
    pub theta: f64,
    pub phi0: f64,
    pub xi: [f64; 2],
    pub theta_excised: f64,
}

/// Weight-independent WKB data of one lift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftProfile {
    pub lift: MobiusMap,
    pub word: Vec<u8>,
    pub point: DiskPoint,
    pub b0: f64,
    pub phi0: f64,
    pub xi: [f64; 2],
    pub full: BumpIntegrals,
    pub excised: BumpIntegrals,
    pub intervals: Vec<[f64; 2]>,
}

impl LiftProfile {
    pub fn theta(&self, omegas: &[f64]) -> f64 {
        -self.full.dot(omegas)
    }

    pub fn theta_excised(&self, omegas: &[f64]) -> f64 {
        -self.excised.dot(omegas)
    }

    pub fn contribution(&self, omegas: &[f64]) -> LiftContribution {
        LiftContribution {
            lift: self.lift,
            word: self.word.clone(),
            b0: self.b0,
            theta: self.theta(omegas),
            phi0: self.phi0,
            xi: self.xi,
            theta_excised: self.theta_excised(omegas),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Excision {
    None,
    /// Remove the close-approach times between distinct lifts of the same point.
    OwnLifts,
}

/// Checks that intervals lie in `[0, t]` and are pairwise disjoint; returns them sorted.
pub fn validate_intervals(intervals: &[[f64; 2]], t: f64) -> Result<Vec<[f64; 2]>> {
    let mut v = intervals.to_vec();
    for iv in &v {
        if !(iv[0] <= iv[1] && iv[0] >= -1e-12 && iv[1] <= t + 1e-12) {
            return Err(Error::Validation(format!("interval {iv:?} is not inside [0, {t}]")));
        }
    }
    v.sort_by(|a, b| a[0].total_cmp(&b[0]));
    for w in v.windows(2) {
        if w[1][0] < w[0][1] {
            return Err(Error::Validation(format!("intervals {:?} and {:?} overlap", w[0], w[1])));
        }
    }
    Ok(v.into_iter().map(|[a, b]| [a.max(0.0), b.min(t)]).collect())
}

impl PropagationJob {
    pub fn new(
        params: JobParams,
        surface: Arc<Surface>,
        potential: Arc<RandomPotential>,
        state: Arc<LagrangianState>,
    ) -> Result<Self> {
        let JobParams { h, beta, delta, eps0, t, horizon_const, quadrature, .. } = params;
        if !(beta > 0.0 && beta < 0.5) {
            return Err(Error::Admissibility(format!("beta must lie in (0, 1/2), got {beta}")));
        }
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::Validation(format!("h must lie in (0, 1], got {h}")));
        }
        if !(delta >= 0.0 && delta.is_finite() && eps0 > 0.0 && horizon_const > 0.0) {
            return Err(Error::Validation(format!(
                "need delta >= 0, eps0 > 0, horizon_const > 0; got {delta}, {eps0}, {horizon_const}"
            )));
        }
        if !(quadrature.tol > 0.0 && quadrature.min_intervals >= 2) {
            return Err(Error::Validation("quadrature needs tol > 0 and at least 2 intervals".into()));
        }
        if let Some(e) = params.excision_eps {
            if !(e > 0.0 && e < beta) {
                return Err(Error::Validation(format!("excision eps must lie in (0, beta), got {e}")));
            }
        }
        let cond = ParameterConditions::evaluate(h, beta, delta, eps0, potential.case);
        if !cond.all() {
            return Err(Error::Admissibility(format!(
                "(h, beta, delta, eps0) = ({h}, {beta}, {delta}, {eps0}) violates {cond:?}"
            )));
        }
        let horizon = horizon_const * (1.0 / h).ln();
        if !(t >= 0.0 && t <= horizon * (1.0 + 1e-12)) {
            return Err(Error::Admissibility(format!(
                "t = {t} is outside [0, {horizon}] = [0, horizon_const log(1/h)]"
            )));
        }
        if potential.h != h || potential.beta != beta {
            return Err(Error::Validation(format!(
                "potential built for (h, beta) = ({}, {}), job has ({h}, {beta})",
                potential.h, potential.beta
            )));
        }
        let need = Surface::lift_radius(t, &state);
        if need > surface.ball_radius {
            return Err(Error::HorizonTooLarge { required: need, max: surface.ball_radius });
        }
        Ok(PropagationJob { params, surface, potential, state })
    }

    pub fn t(&self) -> f64 {
        self.params.t
    }

    pub fn width(&self) -> f64 {
        self.params.h.powf(self.params.beta)
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon_const * (1.0 / self.params.h).ln()
    }

    /// Default `max(0.05 beta, ln 2 / ln(1/h))`, the smallest loss with
    /// `h^(beta - eps) >= 2 h^beta`: trajectories that far apart share no bump.
    pub fn excision_eps(&self) -> f64 {
        let JobParams { h, beta, .. } = self.params;
        self.params
            .excision_eps
            .unwrap_or_else(|| (0.05 * beta).max(2f64.ln() / (1.0 / h).ln()).min(0.99 * beta))
    }

    /// The same job with another propagation time.
    pub fn with_time(&self, t: f64) -> Result<PropagationJob> {
        PropagationJob::new(
            JobParams { t, ..self.params },
            self.surface.clone(),
            self.potential.clone(),
            self.state.clone(),
        )
    }

    /// The same job with another potential (for instance a different weight draw).
    pub fn with_potential(&self, potential: Arc<RandomPotential>) -> Result<PropagationJob> {
        PropagationJob::new(self.params, self.surface.clone(), potential, self.state.clone())
    }

    /// `Phi^{-s}(x~, dB)` as a base point and unit direction.
    pub fn backward(&self, xt: Complex64, s: f64) -> (Complex64, Complex64) {
        flow_c(xt, self.state.gradient_dir_c(xt), -s)
    }

    /// Whether the backward characteristic of length `t` lands in `supp a_0`.
    pub fn in_domain(&self, xt: &DiskPoint) -> bool {
        self.state.in_support_c(self.backward(xt.z(), self.t()).0)
    }

    fn require_domain(&self, xt: &DiskPoint) -> Result<()> {
        xt.check()?;
        if self.in_domain(xt) {
            Ok(())
        } else {
            Err(Error::NotInDomain(format!(
                "backward characteristic from ({}, {}) misses the amplitude support",
                xt.u, xt.v
            )))
        }
    }

    pub fn phi_unperturbed(&self, xt: &DiskPoint) -> Result<f64> {
        self.require_domain(xt)?;
        Ok(self.state.busemann(xt) - self.t() / 2.0)
    }

    /// Per-bump integrals of the profile over `s in [s0, s1]` along `Phi^{-s}(x~, dB)`,
    /// by composite Simpson with doubling.
    pub fn bump_integrals(&self, xt: Complex64, s0: f64, s1: f64) -> Result<BumpIntegrals> {
        if !(s1 > s0) {
            return Ok(BumpIntegrals::default());
        }
        let q = &self.quadrature();
        let pot = &self.potential;
        let n_centers = pot.centers.len();
        let omega_bound = pot
            .omegas
            .iter()
            .fold(pot.distribution.bound(), |m, w| m.max(w.abs()));
        let d0 = self.state.gradient_dir_c(xt);
        let len = s1 - s0;
        let n0 = q.min_intervals.max((q.intervals_per_width * len / self.width()).ceil() as usize);

        let mut active: Vec<u32> = Vec::new();
        let mut seen = vec![false; n_centers];
        // Trapezoid sums: endpoints weighted one half.
        let mut ends = vec![0.0; n_centers];
        let mut interior = vec![0.0; n_centers];
        let mut node = Vec::new();
        let eval = |s: f64, hint: &mut MobiusMap, node: &mut Vec<(usize, f64)>| -> Result<()> {
            let (z, d) = flow_c(xt, d0, -s);
            let (zr, g) = self.surface.reduce_c(z, hint)?;
            *hint = g;
            let dr = d * g.inverse().frame_rotation(z);
            node.clear();
            pot.for_each_bump_reduced(zr, dr, |j, v| node.push((j, v)));
            Ok(())
        };
        let add = |node: &[(usize, f64)], sink: &mut [f64], weight: f64, seen: &mut [bool], active: &mut Vec<u32>| {
            for &(j, v) in node {
                if !seen[j] {
                    seen[j] = true;
                    active.push(j as u32);
                }
                sink[j] += weight * v;
            }
        };
        let mut hint = MobiusMap::IDENTITY;
        eval(s0, &mut hint, &mut node)?;
        add(&node, &mut ends, 0.5, &mut seen, &mut active);
        for k in 1..n0 {
            eval(s0 + len * k as f64 / n0 as f64, &mut hint, &mut node)?;
            add(&node, &mut interior, 1.0, &mut seen, &mut active);
        }
        eval(s1, &mut hint, &mut node)?;
        add(&node, &mut ends, 0.5, &mut seen, &mut active);

        let mut n = n0;
        let trap = |ends: &[f64], interior: &[f64], j: usize, n: usize| (ends[j] + interior[j]) * len / n as f64;
        let mut t_prev: Vec<f64> = (0..n_centers).map(|j| trap(&ends, &interior, j, n)).collect();
        let mut s_prev: Option<Vec<f64>> = None;
        loop {
            let mut hint = MobiusMap::IDENTITY;
            for k in 0..n {
                let s = s0 + len * (2 * k + 1) as f64 / (2 * n) as f64;
                eval(s, &mut hint, &mut node)?;
                add(&node, &mut interior, 1.0, &mut seen, &mut active);
            }
            n *= 2;
            let t_now: Vec<f64> = (0..n_centers).map(|j| trap(&ends, &interior, j, n)).collect();
            let s_now: Vec<f64> = (0..n_centers).map(|j| (4.0 * t_now[j] - t_prev[j]) / 3.0).collect();
            if let Some(sp) = &s_prev {
                let err: f64 =
                    active.iter().map(|&j| (s_now[j as usize] - sp[j as usize]).abs()).sum::<f64>() * omega_bound / 15.0;
                if err <= q.tol {
                    let mut idx = active.clone();
                    idx.sort_unstable();
                    return Ok(BumpIntegrals {
                        entries: idx.into_iter().map(|j| (j, s_now[j as usize])).collect(),
                        error: err,
                        intervals: n,
                    });
                }
                if n > q.max_intervals {
                    return Err(Error::Tolerance { achieved: err, requested: q.tol });
                }
            }
            t_prev = t_now;
            s_prev = Some(s_now);
        }
    }

    fn quadrature(&self) -> QuadratureSettings {
        self.params.quadrature
    }

    pub fn theta_phase(&self, xt: &DiskPoint) -> Result<f64> {
        self.require_domain(xt)?;
        Ok(-self.bump_integrals(xt.z(), 0.0, self.t())?.dot(&self.potential.omegas))
    }

    /// `theta` with the given times removed from the integral.
    pub fn theta_phase_excised(&self, xt: &DiskPoint, intervals: &[[f64; 2]]) -> Result<f64> {
        self.require_domain(xt)?;
        let iv = validate_intervals(intervals, self.t())?;
        Ok(-self.excised_integrals(xt.z(), &iv)?.dot(&self.potential.omegas))
    }

    fn excised_integrals(&self, xt: Complex64, sorted: &[[f64; 2]]) -> Result<BumpIntegrals> {
        let mut parts = Vec::new();
        let mut from = 0.0;
        for iv in sorted {
            parts.push(self.bump_integrals(xt, from, iv[0])?);
            from = iv[1];
        }
        parts.push(self.bump_integrals(xt, from, self.t())?);
        Ok(BumpIntegrals::merge(&parts))
    }

    /// Area Jacobian of `y^{-s}` at `x~`.
    pub fn jacobian(&self, xt: Complex64, s: f64) -> f64 {
        match self.params.jacobian {
            JacobianMode::Analytic => (-s).exp(),
            JacobianMode::FiniteDifference => self.jacobian_fd(xt, s),
        }
    }

    /// Hyperbolic area Jacobian of `z -> pi Phi^{-s}(z, dB)` by central differences.
    pub fn jacobian_fd(&self, xt: Complex64, s: f64) -> f64 {
        let eta = 1e-6 * (1.0 - xt.norm_sqr());
        let f = |z: Complex64| self.backward(z, s).0;
        let dx = (f(xt + eta) - f(xt - eta)) / (2.0 * eta);
        let dy = (f(xt + Complex64::new(0.0, eta)) - f(xt - Complex64::new(0.0, eta))) / (2.0 * eta);
        let det = dx.re * dy.im - dx.im * dy.re;
        let y = f(xt);
        det * ((1.0 - xt.norm_sqr()) / (1.0 - y.norm_sqr())).powi(2)
    }

    /// `a_0(y^{-t} x~) (J^{-t})^{1/2}`; zero off the propagated domain.
    pub fn amplitude_b0(&self, xt: &DiskPoint) -> f64 {
        let z = xt.z();
        let (y, _) = self.backward(z, self.t());
        let a = self.state.amplitude_c(y);
        if a == 0.0 {
            return 0.0;
        }
        a * self.jacobian(z, self.t()).max(0.0).sqrt()
    }

    /// Frame components of `dB(x~)` carried back to the chart origin by the deck map.
    pub fn xi_direction(&self, xt: &DiskPoint, chart: &FrameChart) -> Result<[f64; 2]> {
        xt.check()?;
        let (x, g) = self.surface.reduce(xt)?;
        let gap = (x.z() - chart.origin.z()).norm();
        if gap > 1e-9 {
            return Err(Error::Validation(format!(
                "chart origin ({}, {}) is not the projection ({}, {}) of the lift",
                chart.origin.u, chart.origin.v, x.u, x.v
            )));
        }
        Ok(self.xi_for_lift(&g, xt.z(), chart))
    }

    fn xi_for_lift(&self, g: &MobiusMap, xt: Complex64, chart: &FrameChart) -> [f64; 2] {
        let d = self.state.gradient_dir_c(xt) * g.inverse().frame_rotation(xt);
        chart.components(d)
    }

    /// WKB data of one lift; `intervals` are removed from the excised integral.
    pub fn lift_profile(&self, lift: &Lift, chart: &FrameChart, intervals: &[[f64; 2]]) -> Result<LiftProfile> {
        self.require_domain(&lift.point)?;
        let iv = validate_intervals(intervals, self.t())?;
        let z = lift.point.z();
        let full = self.bump_integrals(z, 0.0, self.t())?;
        let excised = if iv.is_empty() { full.clone() } else { self.excised_integrals(z, &iv)? };
        Ok(LiftProfile {
            lift: lift.map,
            word: lift.word.clone(),
            point: lift.point,
            b0: self.amplitude_b0(&lift.point),
            phi0: self.phi_unperturbed(&lift.point)?,
            xi: self.xi_for_lift(&lift.map, z, chart),
            full,
            excised,
            intervals: iv,
        })
    }

    /// Lifts of `x` reached at time `t`, in ball order.
    pub fn lifts(&self, x: &DiskPoint) -> Result<Vec<Lift>> {
        Ok(enumerate_lifts(&self.surface, x, self.t(), &self.state)?.elements)
    }

    /// WKB data of every lift of a point `x` of the octagon.
    ///
    /// With `Excision::OwnLifts` the removed set is the union over ordered pairs of
    /// distinct lifts of their close-approach times, shared by all lifts. It is
    /// empty in the symbol case, where bumps are localized in direction as well.
    pub fn lift_profiles(&self, x: &DiskPoint, chart: &FrameChart, excision: Excision) -> Result<Vec<LiftProfile>> {
        self.check_base_point(x, chart)?;
        let lifts = self.lifts(x)?;
        let intervals = match excision {
            Excision::OwnLifts if self.potential.case == PotentialCase::Base => {
                diagnostics::excision_set(self, &lifts, self.excision_eps())?.intervals
            }
            _ => Vec::new(),
        };
        lifts.iter().map(|l| self.lift_profile(l, chart, &intervals)).collect()
    }

    pub(crate) fn check_base_point(&self, x: &DiskPoint, chart: &FrameChart) -> Result<()> {
        x.check()?;
        if !self.surface.in_domain(x, 1e-9) {
            return Err(Error::Validation(format!("({}, {}) is not in the fundamental octagon", x.u, x.v)));
        }
        if (x.z() - chart.origin.z()).norm() > 1e-12 {
            return Err(Error::Validation("chart origin differs from the base point".into()));
        }
        Ok(())
    }

    /// Validation mode: the full flow of `|xi|^2/2 + delta q_omega` by RK4 with
    /// a finite-difference gradient of `q_omega` (base case only).
    pub fn perturbed_flow(&self, rho: &PhasePoint, t: f64, steps: usize) -> Result<PhasePoint> {
        rho.check()?;
        if self.potential.case != PotentialCase::Base {
            return Err(Error::Validation("the perturbed flow is implemented for the base case".into()));
        }
        let delta = self.params.delta;
        let (surface, pot) = (&self.surface, &self.potential);
        let eta = 1e-5 * self.width();
        let grad = |z: Complex64| -> Result<Complex64> {
            if delta == 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            let q = |w: Complex64| pot.eval_q(surface, &DiskPoint::from_complex(w)?);
            let e = eta * (1.0 - z.norm_sqr()) / 2.0;
            let gx = (q(z + e)? - q(z - e)?) / (2.0 * e);
            let gy = (q(z + Complex64::new(0.0, e))? - q(z - Complex64::new(0.0, e))?) / (2.0 * e);
            Ok(Complex64::new(gx, gy) * delta)
        };
        let z = rho.base.z();
        let (z1, p1) = hamiltonian_rk4(z, unit_covector(z, rho.dir_c()), t, steps, grad)?;
        let d = p1 / p1.norm();
        PhasePoint::new(DiskPoint::from_complex(z1)?, [d.re, d.im])
    }
}
