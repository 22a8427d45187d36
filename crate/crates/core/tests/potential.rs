use num_complex::Complex64;
use semiwave::geometry::{distance_c, flow_c, DiskPoint, PhasePoint};
use semiwave::potential::{
    build_net, verify_hypotheses, AuditSizes, Center, NetParams, OmegaDistribution, PotentialCase,
    RandomPotential,
};
use semiwave::profile::Profile;
use semiwave::rng::Stream;
use semiwave::surface::Surface;

fn surface() -> Surface {
    Surface::bolza(4.0).unwrap()
}

/// Bump count at `z` by scanning every center against every neighbour translate.
fn brute_overlap(s: &Surface, p: &RandomPotential, z: Complex64) -> usize {
    let (zr, _) = s.reduce_c(z, &semiwave::geometry::MobiusMap::IDENTITY).unwrap();
    p.centers
        .iter()
        .filter(|c| {
            s.neighbors.iter().any(|g| distance_c(zr, g.map.apply_c(c.point.z())) < p.width())
        })
        .count()
}

#[test]
fn coarse_net_is_a_singleton() {
    let s = surface();
    let p = build_net(&s, &NetParams::new(100.0, 0.49, PotentialCase::Base, 1)).unwrap();
    assert_eq!(p.centers.len(), 1);
}

#[test]
fn net_is_separated_and_covering() {
    let s = surface();
    let p = build_net(&s, &NetParams::new(0.05, 0.3, PotentialCase::Base, 7)).unwrap();
    let w = p.width();
    assert!(p.centers.len() >= 10);
    for (i, a) in p.centers.iter().enumerate() {
        for b in &p.centers[i + 1..] {
            let d = s.dist_reduced(a.point.z(), b.point.z());
            assert!(d >= w - 1e-12, "centers {d} apart, width {w}");
        }
    }
    let mut rng = Stream::new(11, 0);
    for _ in 0..2000 {
        let x = s.random_point(&mut rng);
        let rho = PhasePoint { base: x, dir: [1.0, 0.0] };
        let d = p.nearest_center_distance(&s, &rho).unwrap();
        assert!(d < w * (1.0 + 1.0 / 8.0), "uncovered point at distance {d}");
    }
}

#[test]
fn overlap_matches_exhaustive_probe_count() {
    let s = surface();
    let p = build_net(&s, &NetParams::new(0.05, 0.3, PotentialCase::Base, 3)).unwrap();
    let mut rng = Stream::new(5, 0);
    let mut worst = 0;
    for _ in 0..10_000 {
        let x = s.random_point(&mut rng);
        let rho = PhasePoint { base: x, dir: [1.0, 0.0] };
        let fast = p.overlap_count(&s, &rho).unwrap();
        if rng.next_f64() < 0.05 {
            assert_eq!(fast, brute_overlap(&s, &p, x.z()));
        }
        worst = worst.max(fast);
    }
    // Points pairwise at least w apart inside a ball of radius w: at most 7 in the plane,
    // one more allowed for the curvature at these scales.
    assert!(worst <= 8, "overlap {worst}");
}

#[test]
fn zero_weights_give_zero_potential() {
    let s = surface();
    let params = NetParams::new(0.05, 0.3, PotentialCase::Base, 2).with_distribution(OmegaDistribution::Zero);
    let p = build_net(&s, &params).unwrap();
    let mut rng = Stream::new(1, 1);
    for _ in 0..500 {
        let x = s.random_point(&mut rng);
        assert_eq!(p.eval_q(&s, &x).unwrap(), 0.0);
    }
}

#[test]
fn value_at_a_center_is_its_weight() {
    let s = surface();
    let p = build_net(&s, &NetParams::new(0.05, 0.3, PotentialCase::Base, 4)).unwrap();
    for (c, w) in p.centers.iter().zip(&p.omegas).take(20) {
        assert!((p.eval_q(&s, &c.point).unwrap() - w).abs() < 1e-15);
    }
}

#[test]
fn compact_support_of_a_single_bump() {
    let s = surface();
    let params = NetParams::new(0.05, 0.3, PotentialCase::Base, 0);
    let c = DiskPoint::new(0.1, 0.05).unwrap();
    let p = RandomPotential::from_centers(&s, &params, vec![Center { point: c, dir: None }], vec![1.0]).unwrap();
    let w = p.width();
    for k in 0..36 {
        let dir = Complex64::from_polar(1.0, k as f64 * 0.17);
        let (inside, _) = flow_c(c.z(), dir, 0.999 * w);
        let (outside, _) = flow_c(c.z(), dir, 1.0001 * w);
        assert!(p.eval_q(&s, &DiskPoint::new(inside.re, inside.im).unwrap()).unwrap() > 0.0);
        assert_eq!(p.eval_q(&s, &DiskPoint::new(outside.re, outside.im).unwrap()).unwrap(), 0.0);
    }
}

#[test]
fn gradient_is_bounded_by_the_scale() {
    let s = surface();
    let p = build_net(&s, &NetParams::new(0.05, 0.3, PotentialCase::Base, 8)).unwrap();
    let w = p.width();
    // max |chi'| of (1-s^2)^4, found on a fine grid
    let chi1 = (1..10_000)
        .map(|i| {
            let x = i as f64 / 10_000.0;
            8.0 * x * (1.0 - x * x).powi(3)
        })
        .fold(0.0, f64::max);
    let bound = 8.0 * 3f64.sqrt() * chi1 / w;
    let mut rng = Stream::new(2, 2);
    let eps = 1e-6;
    for _ in 0..100 {
        let x = s.random_point(&mut rng);
        let z = x.z();
        let f = |dz: Complex64| p.eval_q(&s, &DiskPoint::new(z.re + dz.re, z.im + dz.im).unwrap()).unwrap();
        let gx = (f(Complex64::new(eps, 0.0)) - f(Complex64::new(-eps, 0.0))) / (2.0 * eps);
        let gy = (f(Complex64::new(0.0, eps)) - f(Complex64::new(0.0, -eps))) / (2.0 * eps);
        // Euclidean gradient divided by the conformal factor is the hyperbolic norm.
        let g = (gx * gx + gy * gy).sqrt() / x.conformal_factor();
        assert!(g <= bound, "gradient {g} exceeds {bound}");
    }
}

#[test]
fn potential_is_periodic() {
    let s = surface();
    let p = build_net(&s, &NetParams::new(0.05, 0.3, PotentialCase::Base, 9)).unwrap();
    let mut rng = Stream::new(3, 3);
    for _ in 0..200 {
        let x = s.random_point(&mut rng);
        let g = &s.neighbors[1 + rng.index(s.neighbors.len() - 1)].map;
        let gx = DiskPoint::new(g.apply_c(x.z()).re, g.apply_c(x.z()).im).unwrap();
        let a = p.eval_q(&s, &x).unwrap();
        let b = p.eval_q(&s, &gx).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn symbol_case_is_periodic_and_directional() {
    let s = surface();
    let p = build_net(&s, &NetParams::new(0.2, 0.3, PotentialCase::Symbol, 9)).unwrap();
    let c = p.centers[0];
    let d = c.dir.unwrap();
    let at = PhasePoint { base: c.point, dir: d };
    assert!((p.eval_q_phase(&s, &at).unwrap() - p.omegas[0]).abs() < 1e-12);
    assert!(p.eval_q(&s, &c.point).is_err());
    let mut rng = Stream::new(4, 4);
    for _ in 0..100 {
        let x = s.random_point(&mut rng);
        let a = rng.uniform(0.0, 6.28);
        let rho = PhasePoint { base: x, dir: [a.cos(), a.sin()] };
        let g = &s.neighbors[1 + rng.index(s.neighbors.len() - 1)].map;
        let moved = rho.transformed(g);
        let (u, v) = (p.eval_q_phase(&s, &rho).unwrap(), p.eval_q_phase(&s, &moved).unwrap());
        assert!((u - v).abs() < 1e-9);
    }
}

#[test]
fn nets_are_deterministic() {
    let s = surface();
    let params = NetParams::new(0.05, 0.3, PotentialCase::Base, 12);
    let a = build_net(&s, &params).unwrap();
    let b = build_net(&s, &params).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let c = build_net(&s, &NetParams::new(0.05, 0.3, PotentialCase::Base, 13)).unwrap();
    assert_ne!(a.omegas, c.omegas);
}

#[test]
fn json_round_trip() {
    let s = surface();
    let p = build_net(&s, &NetParams::new(0.05, 0.3, PotentialCase::Base, 6)).unwrap();
    let text = serde_json::to_string(&p).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["h", "beta", "case", "seed", "centers", "omegas", "profile"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    let q: RandomPotential = serde_json::from_str(&text).unwrap();
    let q = q.reindex(&s);
    let x = DiskPoint::new(0.2, 0.1).unwrap();
    assert_eq!(p.eval_q(&s, &x).unwrap(), q.eval_q(&s, &x).unwrap());
}

#[test]
fn beta_outside_range_is_rejected() {
    let s = surface();
    let r = build_net(&s, &NetParams::new(0.05, 0.6, PotentialCase::Base, 1));
    assert!(matches!(r, Err(semiwave::Error::Admissibility(_))));
}

#[test]
fn line_integrals_stay_positive_with_a_plateau() {
    let s = surface();
    let params = NetParams::new(0.05, 0.3, PotentialCase::Base, 1).with_profile(Profile::Plateau { flat: 0.5 });
    let p = build_net(&s, &params).unwrap();
    let sizes = AuditSizes { n_probes: 500, n_geodesics: 50, n_derivative_lines: 20, seed: 3 };
    let r = verify_hypotheses(&s, &p, 0.0, 0.05, 2.0, sizes).unwrap();
    assert!(r.line_integral_rate > 0.0);
    assert!(r.conditions.all());
    assert!(verify_hypotheses(&s, &p, 0.0, 0.05, 0.5, sizes).is_err());
}
