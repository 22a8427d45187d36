mod common;

use common::*;
use num_complex::Complex64;
use proptest::prelude::*;
use semiwave::berry::BerryKernel;
use semiwave::diagnostics::ApproachIntervals;
use semiwave::field::{plane_wave_sum, LocalFieldSample, PlaneWave};
use semiwave::geometry::{DiskPoint, PhasePoint};
use semiwave::profile::Profile;
use semiwave::stats::empirical_covariance;
use semiwave::wkb::{JacobianMode, JobParams};

fn wave() -> impl Strategy<Value = PlaneWave> {
    (0.0..2.0f64, -10.0..10.0f64, 0.0..6.3f64).prop_map(|(amplitude, phase, a)| PlaneWave {
        amplitude,
        phase,
        xi: [a.cos(), a.sin()],
    })
}

fn sample(values: Vec<Complex64>, grid: Vec<[f64; 2]>, seed: u64) -> LocalFieldSample {
    LocalFieldSample {
        x: DiskPoint::ORIGIN,
        omega_seed: seed,
        grid,
        values,
        lift_count: 1,
        amplitude_sq_sum: 1.0,
        t: 1.0,
        h: 0.1,
        delta: 0.0,
        empty: false,
    }
}

proptest! {
    #[test]
    fn field_is_bounded_by_the_amplitudes(waves in prop::collection::vec(wave(), 1..20), y in (-10.0..10.0f64, -10.0..10.0f64)) {
        let total: f64 = waves.iter().map(|w| w.amplitude).sum();
        let v = plane_wave_sum(&waves, &[[y.0, y.1]])[0];
        prop_assert!(v.norm() <= total * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn covariance_is_hermitian(vals in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), 2..40)) {
        let grid = vec![[0.0, 0.0], [1.0, 0.5]];
        let samples: Vec<_> = vals
            .iter()
            .enumerate()
            .map(|(i, v)| sample(vec![Complex64::new(v.0, v.1), Complex64::new(v.2, v.3)], grid.clone(), i as u64))
            .collect();
        let est = empirical_covariance(&samples, &[(grid[0], grid[1]), (grid[1], grid[0])]).unwrap();
        prop_assert_eq!(est.estimates[0], est.estimates[1].conj());
    }

    #[test]
    fn interval_union_is_sorted_disjoint_and_covering(raw in prop::collection::vec((0.0..10.0f64, 0.0..2.0f64), 0..15)) {
        let input: Vec<[f64; 2]> = raw.iter().map(|&(a, l)| [a, a + l]).collect();
        let u = ApproachIntervals::union(input.clone());
        for w in u.intervals.windows(2) {
            prop_assert!(w[0][1] < w[1][0]);
        }
        for iv in &input {
            prop_assert!(u.intervals.iter().any(|o| o[0] <= iv[0] && iv[1] <= o[1]));
        }
        let sum: f64 = input.iter().map(|iv| iv[1] - iv[0]).sum();
        prop_assert!(u.total_length <= sum + 1e-12);
    }

    #[test]
    fn berry_kernel_is_even_and_bounded(r in 0.0..20.0f64, lambda in 0.1..5.0f64) {
        let k = BerryKernel::new(lambda);
        prop_assert_eq!(k.kernel(r), k.kernel(-r));
        prop_assert!(k.kernel(r).abs() <= lambda * (1.0 + 1e-12));
    }

    #[test]
    fn profiles_are_cutoffs(s in 0.0..2.0f64, flat in 0.05..0.95f64) {
        for p in [Profile::Polynomial, Profile::Plateau { flat }] {
            let v = p.eval(s);
            prop_assert!((0.0..=1.0).contains(&v));
            if s >= 1.0 {
                prop_assert_eq!(v, 0.0);
            }
        }
        prop_assert_eq!(Profile::Plateau { flat }.eval(flat * s.min(1.0)), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_deck_invariant_and_compactly_supported(r in 0.0..0.6f64, a in 0.0..6.3f64, k in 0usize..200) {
        let s = surface();
        let pot = potential(0.05, 0.3, 21);
        let x = DiskPoint::new(r * a.cos(), r * a.sin()).unwrap();
        let g = s.ball[k % s.ball.len()].map;
        let gx = DiskPoint::from_complex(g.apply_c(x.z())).unwrap();
        let q = pot.eval_q(&s, &x).unwrap();
        prop_assert!((pot.eval_q(&s, &gx).unwrap() - q).abs() < 1e-9);
        let d = pot.nearest_center_distance(&s, &PhasePoint::new(x, [1.0, 0.0]).unwrap()).unwrap();
        if d >= pot.width() {
            prop_assert_eq!(q, 0.0);
        }
    }

    #[test]
    fn finite_difference_jacobian_is_a_cocycle(r in 0.0..0.5f64, a in 0.0..6.3f64, t in 0.1..2.0f64, s in 0.1..2.0f64) {
        let p = JobParams { jacobian: JacobianMode::FiniteDifference, ..params(0.05) };
        let job = job_with(p, small_state(), 1);
        let x = Complex64::from_polar(r, a);
        let y = job.backward(x, t).0;
        let whole = job.jacobian(x, t + s);
        let split = job.jacobian(x, t) * job.jacobian(y, s);
        prop_assert!((whole - split).abs() < 1e-6 * whole.max(1e-3), "{whole} vs {split}");
        prop_assert!((whole - (-(t + s)).exp()).abs() < 1e-6);
    }
}
