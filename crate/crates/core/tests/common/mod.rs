#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use semiwave::geometry::DiskPoint;
use semiwave::lagrangian::LagrangianState;
use semiwave::potential::{build_net, NetParams, PotentialCase, RandomPotential};
use semiwave::profile::Profile;
use semiwave::surface::{Surface, INRADIUS};
use semiwave::wkb::{JobParams, PropagationJob};

pub fn surface() -> Arc<Surface> {
    static S: OnceLock<Arc<Surface>> = OnceLock::new();
    S.get_or_init(|| Arc::new(Surface::bolza(6.4).unwrap())).clone()
}

pub fn potential(h: f64, beta: f64, seed: u64) -> Arc<RandomPotential> {
    let params = NetParams::new(h, beta, PotentialCase::Base, seed).with_profile(Profile::Plateau { flat: 0.5 });
    Arc::new(build_net(&surface(), &params).unwrap())
}

/// Bump of radius `0.25 r_I` at the origin, ideal point at angle 0.3.
pub fn small_state() -> Arc<LagrangianState> {
    Arc::new(LagrangianState::default_state())
}

/// Bump filling most of the inscribed ball.
pub fn large_state() -> Arc<LagrangianState> {
    Arc::new(LagrangianState::new(0.3, DiskPoint::ORIGIN, 0.98 * INRADIUS, Profile::Plateau { flat: 0.8 }).unwrap())
}

pub fn params(h: f64) -> JobParams {
    JobParams { h, delta: h.powf(0.8), t: 0.5 * (1.0 / h).ln(), ..JobParams::default() }
}

pub fn job(h: f64, state: Arc<LagrangianState>, seed: u64) -> PropagationJob {
    PropagationJob::new(params(h), surface(), potential(h, 0.3, seed), state).unwrap()
}

pub fn job_with(p: JobParams, state: Arc<LagrangianState>, seed: u64) -> PropagationJob {
    PropagationJob::new(p, surface(), potential(p.h, p.beta, seed), state).unwrap()
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Composite Gauss-Legendre with `panels` equal panels.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, panels: usize, rule: &[(f64, f64)]) -> f64 {
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let m = a + (k as f64 + 0.5) * h;
            rule.iter().map(|&(x, w)| w * f(m + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}

/// Point at distance `s` from `z` on the geodesic towards the ideal point `p`,
/// through the Mobius map sending `z` to 0.
/// Negative `s` moves away from `p` along the same geodesic.
pub fn toward_ideal(z: Complex64, p: Complex64, s: f64) -> Complex64 {
    let q = (p - z) / (Complex64::new(1.0, 0.0) - z.conj() * p);
    let w = q * (s / 2.0).tanh();
    (w + z) / (Complex64::new(1.0, 0.0) + z.conj() * w)
}

/// A lifted point whose backward characteristic of length `t` ends at `y`.
pub fn lift_ending_at(state: &LagrangianState, y: Complex64, t: f64) -> Complex64 {
    toward_ideal(y, state.p(), -t)
}

pub fn hyp_dist(z: Complex64, w: Complex64) -> f64 {
    let r = ((z - w) / (Complex64::new(1.0, 0.0) - w.conj() * z)).norm();
    2.0 * r.min(1.0 - 1e-16).atanh()
}

fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) < f(d) {
            b = d
        } else {
            a = c
        }
    }
    let m = 0.5 * (a + b);
    (m, f(m))
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    // f(lo) and f(hi) have opposite signs
    let up = f(lo) < 0.0;
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if (f(m) < 0.0) == up {
            lo = m
        } else {
            hi = m
        }
    }
    0.5 * (lo + hi)
}

/// `int q_omega(pi Phi^{-s}(x~, dB)) ds` over `ranges`, one bump image at a
/// time, split where the profile is not smooth. The trajectory and the
/// distance are computed here, independently of the library.
pub fn oracle_integral(job: &PropagationJob, omegas: &[f64], xt: Complex64, ranges: &[(f64, f64)], panels_per_width: f64) -> f64 {
    let pot = &job.potential;
    let surf = &job.surface;
    let w = job.width();
    let flat = match pot.profile {
        Profile::Plateau { flat } => flat,
        Profile::Polynomial => 0.0,
    };
    let p = job.state.p();
    let t = job.t();
    let zs = |s: f64| toward_ideal(xt, p, s);
    let reach = hyp_dist(Complex64::new(0.0, 0.0), xt).max(hyp_dist(Complex64::new(0.0, 0.0), zs(t)));
    let need = reach + semiwave::surface::CIRCUMRADIUS + w;
    assert!(need <= surf.ball_radius, "ball too small for the oracle: {need}");
    let rule = gauss_legendre(20);
    let mut total = 0.0;
    for (j, c) in pot.centers.iter().enumerate() {
        if omegas[j] == 0.0 {
            continue;
        }
        for g in surf.ball.iter().filter(|g| g.displacement <= need) {
            let cz = g.map.apply_c(c.point.z());
            let d = |s: f64| hyp_dist(zs(s), cz);
            let (sm, dm) = golden(&d, 0.0, t);
            if dm >= w {
                continue;
            }
            // the distance is convex in s: split at the level crossings
            let mut cuts = vec![0.0, t, sm];
            for level in [flat * w, w] {
                if dm < level {
                    if d(0.0) > level {
                        cuts.push(bisect(|s| d(s) - level, 0.0, sm));
                    }
                    if d(t) > level {
                        cuts.push(bisect(|s| d(s) - level, sm, t));
                    }
                }
            }
            for &(a, b) in ranges {
                let mut pts: Vec<f64> = cuts.iter().cloned().filter(|&x| x > a && x < b).collect();
                pts.push(a);
                pts.push(b);
                pts.sort_by(f64::total_cmp);
                for win in pts.windows(2) {
                    let (u, v) = (win[0], win[1]);
                    if v <= u {
                        continue;
                    }
                    let panels = ((v - u) * panels_per_width / w).ceil().max(1.0) as usize;
                    total += omegas[j] * integrate(|s| pot.profile.eval(d(s) / w), u, v, panels, &rule);
                }
            }
        }
    }
    total
}

/// `theta` with the given times kept.
pub fn oracle_theta(job: &PropagationJob, xt: Complex64, ranges: &[(f64, f64)]) -> f64 {
    -oracle_integral(job, &job.potential.omegas, xt, ranges, 4.0)
}

/// Hyperbolic area Jacobian of `z -> Phi^{-s}(z, dB)` by central differences of
/// the independent trajectory.
pub fn oracle_jacobian(state: &LagrangianState, z: Complex64, s: f64) -> f64 {
    let p = state.p();
    let eta = 1e-5 * (1.0 - z.norm_sqr());
    let f = |w: Complex64| toward_ideal(w, p, s);
    let dx = (f(z + eta) - f(z - eta)) / (2.0 * eta);
    let dy = (f(z + Complex64::new(0.0, eta)) - f(z - Complex64::new(0.0, eta))) / (2.0 * eta);
    let y = f(z);
    (dx.re * dy.im - dx.im * dy.re) * ((1.0 - z.norm_sqr()) / (1.0 - y.norm_sqr())).powi(2)
}
