mod common;

use common::{decoupled_assignment, oracle_zero_set, random_point, random_spec};
use cycleforge_core::averaging::{average, bezout_bound};
use cycleforge_core::generators::{default_targets, expected_zeros, generate, Family};
use cycleforge_core::perturbation::{Kind, PerturbationSpec};
use cycleforge_core::polysolve::{
    count_report, default_box, eval_system, find_zeros, jacobian, SolverConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fd_jacobian(
    sys: &cycleforge_core::averaging::AveragedSystem,
    p: &[f64],
    factored: bool,
    h: f64,
) -> Vec<Vec<f64>> {
    let n = p.len();
    let mut cols = vec![vec![0.0; n]; n];
    for j in 0..n {
        let (mut a, mut b) = (p.to_vec(), p.to_vec());
        a[j] += h;
        b[j] -= h;
        let fa = eval_system(sys, &a, factored).unwrap();
        let fb = eval_system(sys, &b, factored).unwrap();
        for i in 0..n {
            cols[i][j] = (fa[i] - fb[i]) / (2.0 * h);
        }
    }
    cols
}

#[test]
fn formal_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for trial in 0..50 {
        let kind = if trial % 2 == 0 {
            Kind::Continuous
        } else {
            Kind::Discontinuous
        };
        let n = rng.gen_range(1..=4);
        let d = rng.gen_range(1..=2);
        let spec = random_spec(&mut rng, kind, n, d, 5);
        let sys = average(&spec).unwrap();
        let p = random_point(&mut rng, d);
        for factored in [false, true] {
            if factored && sys.r_factored_first.is_none() {
                continue;
            }
            let j = jacobian(&sys, &p, factored).unwrap();
            let fd = fd_jacobian(&sys, &p, factored, 1e-6);
            let scale = j.amax();
            let mut diff: f64 = 0.0;
            for r in 0..j.nrows() {
                for c in 0..j.ncols() {
                    diff = diff.max((j[(r, c)] - fd[r][c]).abs());
                }
            }
            if scale == 0.0 {
                assert!(diff <= 1e-9, "zero Jacobian but fd differs by {diff}");
            } else {
                assert!(
                    diff <= 1e-5 * scale,
                    "trial {trial}: relative error {}",
                    diff / scale
                );
            }
        }
    }
}

#[test]
fn generator_zeros_match_bisection_oracle() {
    let cases = [
        (Family::ContOdd, 3, 1),
        (Family::ContOdd, 5, 1),
        (Family::ContOdd, 3, 2),
        (Family::ContEven, 2, 1),
        (Family::ContEven, 4, 1),
        (Family::ContEven, 2, 2),
        (Family::Disc, 1, 1),
        (Family::Disc, 2, 1),
        (Family::Disc, 3, 1),
        (Family::Disc, 2, 2),
        (Family::HopfDisc, 2, 1),
        (Family::HopfDisc, 3, 1),
    ];
    for (family, n, d) in cases {
        let spec = generate(family, n, d, None).unwrap();
        let sys = average(&spec).unwrap();
        let bx = default_box(&sys);
        let out = find_zeros(&sys, &bx, &SolverConfig::default()).unwrap();
        let oracle = oracle_zero_set(&sys, &bx, &decoupled_assignment(&sys));
        assert_eq!(out.zeros.len(), oracle.len(), "{family:?} n={n} d={d}");
        for (z, o) in out.zeros.iter().zip(&oracle) {
            for (a, b) in z.point().iter().zip(o) {
                assert!(
                    (a - b).abs() <= 1e-9,
                    "{family:?}: {:?} vs {o:?}",
                    z.point()
                );
            }
        }
        // and the prescription itself
        let want = expected_zeros(&default_targets(family, n, d).unwrap());
        for (z, w) in out.zeros.iter().zip(&want) {
            for (a, b) in z.point().iter().zip(w) {
                assert!((a - b).abs() <= 1e-8);
            }
        }
    }
}

#[test]
fn zeros_satisfy_unfactored_system_and_thresholds() {
    let cfg = SolverConfig::default();
    for (family, n, d) in [
        (Family::ContOdd, 5, 1),
        (Family::ContEven, 4, 1),
        (Family::HopfDisc, 3, 1),
    ] {
        let sys = average(&generate(family, n, d, None).unwrap()).unwrap();
        let out = find_zeros(&sys, &default_box(&sys), &cfg).unwrap();
        assert!(!out.zeros.is_empty());
        for z in &out.zeros {
            let v = eval_system(&sys, &z.point(), false).unwrap();
            assert!(v.iter().all(|x| x.abs() <= 1e-10), "{v:?}");
            assert!(z.residual <= cfg.residual_tol);
            assert!(!z.simple || z.jacobian_det.abs() >= cfg.jac_tol);
            assert!(z.r >= default_box(&sys).r_min);
        }
    }
}

#[test]
fn count_report_examples() {
    let cfg = SolverConfig::default();
    for (family, n, want) in [(Family::ContOdd, 3, 3u64), (Family::Disc, 2, 4)] {
        let sys = average(&generate(family, n, 1, None).unwrap()).unwrap();
        let rep = count_report(&sys, &default_box(&sys), &cfg).unwrap();
        assert_eq!(
            (rep.found as u64, rep.bound, rep.all_simple, rep.complete),
            (want, want, true, true)
        );
    }
    let sys = average(&PerturbationSpec::zero(3, 1, Kind::Continuous).unwrap()).unwrap();
    let rep = count_report(&sys, &default_box(&sys), &cfg).unwrap();
    assert_eq!(
        (rep.found, rep.bound, rep.all_simple),
        (0, bezout_bound(&sys), true)
    );
}

#[test]
fn grid_search_is_deterministic_and_agrees_with_fast_path() {
    let sys = average(&generate(Family::ContOdd, 3, 1, None).unwrap()).unwrap();
    let bx = default_box(&sys);
    let grid = SolverConfig {
        use_fast_path: false,
        grid_per_axis: 24,
        ..SolverConfig::default()
    };
    let a = find_zeros(&sys, &bx, &grid).unwrap();
    let b = find_zeros(&sys, &bx, &grid).unwrap();
    assert_eq!(a, b);
    let fast = find_zeros(&sys, &bx, &SolverConfig::default()).unwrap();
    assert_eq!(a.zeros.len(), fast.zeros.len());
    for (x, y) in a.zeros.iter().zip(&fast.zeros) {
        assert!((x.r - y.r).abs() < 1e-9 && (x.z[0] - y.z[0]).abs() < 1e-9);
    }
    let jittered = SolverConfig {
        jitter_seed: Some(5),
        ..grid.clone()
    };
    assert_eq!(
        find_zeros(&sys, &bx, &jittered).unwrap(),
        find_zeros(&sys, &bx, &jittered).unwrap()
    );
}

#[test]
fn certified_radius_isolates_neighbours() {
    let sys = average(&generate(Family::Disc, 3, 1, None).unwrap()).unwrap();
    let out = find_zeros(&sys, &default_box(&sys), &SolverConfig::default()).unwrap();
    for a in &out.zeros {
        assert!(a.newton_radius > 0.0);
        for b in &out.zeros {
            if a != b {
                let dist = a
                    .point()
                    .iter()
                    .zip(b.point())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(dist > a.newton_radius);
            }
        }
    }
}
