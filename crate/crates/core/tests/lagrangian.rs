mod common;

use common::{gauss_legendre, hyp_dist, integrate};
use num_complex::Complex64;
use proptest::prelude::*;
use semiwave::geometry::{flow_c, DiskPoint, MobiusMap};
use semiwave::lagrangian::LagrangianState;
use semiwave::profile::Profile;
use semiwave::rng::Stream;

fn random_disk(rng: &mut Stream, rmax: f64) -> Complex64 {
    let r = rmax * rng.next_f64().sqrt();
    Complex64::from_polar(r, rng.uniform(0.0, std::f64::consts::TAU))
}

#[test]
fn busemann_gradient_has_unit_hyperbolic_length() {
    let s = LagrangianState::default_state();
    let mut rng = Stream::tagged(11, 0, 0);
    let h = 1e-5;
    let worst = (0..1000)
        .map(|_| {
            let z = random_disk(&mut rng, 0.9);
            let bu = (s.busemann_c(z + h) - s.busemann_c(z - h)) / (2.0 * h);
            let bv = (s.busemann_c(z + Complex64::i() * h) - s.busemann_c(z - Complex64::i() * h)) / (2.0 * h);
            (bu.hypot(bv) * (1.0 - z.norm_sqr()) / 2.0 - 1.0).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn busemann_laplacian_is_one() {
    let s = LagrangianState::default_state();
    let h = 1e-4;
    for z in [Complex64::new(0.1, 0.2), Complex64::new(-0.5, 0.3), Complex64::new(0.0, -0.7)] {
        let b = |w: Complex64| s.busemann_c(w);
        let lap = (b(z + h) + b(z - h) + b(z + Complex64::i() * h) + b(z - Complex64::i() * h) - 4.0 * b(z)) / (h * h);
        let hyp = lap * (1.0 - z.norm_sqr()).powi(2) / 4.0;
        assert!((hyp - 1.0).abs() < 1e-5, "{hyp}");
    }
}

#[test]
fn busemann_along_the_radius_and_as_a_limit() {
    let s = LagrangianState::new(1.1, DiskPoint::ORIGIN, 0.3, Profile::Polynomial).unwrap();
    let o = Complex64::new(0.0, 0.0);
    for t in [0.5, 2.0, 4.0] {
        let z = s.p() * (t / 2.0f64).tanh();
        assert!((s.busemann_c(z) + t).abs() < 1e-12);
    }
    let z = Complex64::new(-0.3, 0.45);
    let seq: Vec<f64> = [6.0, 10.0, 14.0]
        .iter()
        .map(|&n| {
            let pn = s.p() * (n / 2.0f64).tanh();
            hyp_dist(z, pn) - hyp_dist(o, pn)
        })
        .collect();
    assert!((seq[2] - s.busemann_c(z)).abs() < 1e-5);
    assert!((seq[2] - s.busemann_c(z)).abs() < (seq[0] - s.busemann_c(z)).abs());
}

#[test]
fn horocycle_perturbations_contract_backwards() {
    let s = LagrangianState::default_state();
    let mut rng = Stream::tagged(12, 0, 0);
    let eps = 1e-6;
    for _ in 0..100 {
        let z = random_disk(&mut rng, 0.6);
        let d = s.gradient_dir_c(z);
        // a step along the level set of B, to first order
        let z2 = z + Complex64::i() * d * (eps * (1.0 - z.norm_sqr()) / 2.0);
        let (a, _) = flow_c(z, d, -3.0);
        let (b, _) = flow_c(z2, s.gradient_dir_c(z2), -3.0);
        let before = hyp_dist(z, z2);
        let after = hyp_dist(a, b);
        assert!(before / after >= 2.5f64.exp(), "contraction {}", before / after);
    }
}

#[test]
fn amplitude_norm_matches_planar_quadrature() {
    let c = DiskPoint::new(0.2, 0.1).unwrap();
    for profile in [Profile::Polynomial, Profile::Plateau { flat: 0.5 }] {
        let s = LagrangianState::new(0.3, c, 0.3, profile).unwrap();
        let gl = gauss_legendre(12);
        let (lo, hi) = (-0.3, 0.6);
        let v = integrate(
            |u| {
                integrate(
                    |v| {
                        let z = Complex64::new(u, v);
                        let a = s.amplitude_c(z);
                        a * a * 4.0 / (1.0 - z.norm_sqr()).powi(2)
                    },
                    lo,
                    hi,
                    60,
                    &gl,
                )
            },
            lo,
            hi,
            60,
            &gl,
        );
        assert!((v - s.amplitude_norm.powi(2)).abs() < 1e-6, "{v} vs {}", s.amplitude_norm.powi(2));
    }
}

#[test]
fn amplitude_peak_and_support() {
    let s = LagrangianState::default_state();
    assert_eq!(s.amplitude_a0(&DiskPoint::ORIGIN), 1.0);
    let edge = (s.amplitude_radius / 2.0).tanh();
    assert_eq!(s.amplitude_a0(&DiskPoint::new(0.0, edge * 1.001).unwrap()), 0.0);
    assert!(s.amplitude_a0(&DiskPoint::new(0.0, edge * 0.5).unwrap()) > 0.0);
}

proptest! {
    #[test]
    fn busemann_differences_are_invariant_under_isometries_fixing_the_ideal_point(
        angle in 0.0..6.3f64, shift in -2.0..2.0f64, z in (-0.6..0.6f64, -0.6..0.6f64), w in (-0.6..0.6f64, -0.6..0.6f64),
    ) {
        let s = LagrangianState::new(angle, DiskPoint::ORIGIN, 0.3, Profile::Polynomial).unwrap();
        let g = MobiusMap::rotation(angle)
            .compose(&MobiusMap::translation_to(Complex64::new((shift / 2.0f64).tanh(), 0.0)))
            .compose(&MobiusMap::rotation(-angle));
        prop_assert!((g.apply_c(s.p() * (1.0 - 1e-12)) - s.p()).norm() < 1e-6);
        let (z, w) = (Complex64::new(z.0, z.1), Complex64::new(w.0, w.1));
        let before = s.busemann_c(z) - s.busemann_c(w);
        let after = s.busemann_c(g.apply_c(z)) - s.busemann_c(g.apply_c(w));
        prop_assert!((before - after).abs() < 1e-9);
    }
}
