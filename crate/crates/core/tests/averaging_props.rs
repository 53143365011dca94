mod common;

use common::{random_point, random_spec};
use cycleforge_core::averaging::{average, factor_r, oracle_deviation};
use cycleforge_core::perturbation::Kind;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_average_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for kind in [Kind::Continuous, Kind::Discontinuous] {
        for _ in 0..100 {
            let n = rand::Rng::gen_range(&mut rng, 1..=4);
            let d = rand::Rng::gen_range(&mut rng, 1..=2);
            let spec = random_spec(&mut rng, kind, n, d, 4);
            let sys = average(&spec).unwrap();
            let pts: Vec<Vec<f64>> = (0..20).map(|_| random_point(&mut rng, d)).collect();
            let dev = oracle_deviation(&spec, &sys, &pts).unwrap();
            assert!(
                dev <= 1e-9,
                "{kind:?} n={n} d={d}: deviation {dev:e}\n{}",
                spec.to_json()
            );
        }
    }
}

fn arb_case(
    kind: Kind,
) -> impl Strategy<Value = (cycleforge_core::perturbation::PerturbationSpec, u64)> {
    (any::<u64>(), 1u32..=5, 1usize..=3).prop_map(move |(seed, n, d)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (random_spec(&mut rng, kind, n, d, 6), seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn continuous_parity_structure((spec, _) in arb_case(Kind::Continuous)) {
        let sys = average(&spec).unwrap();
        for e in sys.components[0].terms.keys() {
            prop_assert_eq!(e[0] % 2, 1, "f1 has even r-power {:?}", e);
        }
        for f in &sys.components[1..] {
            for e in f.terms.keys() {
                prop_assert_eq!(e[0] % 2, 0, "f_l has odd r-power {:?}", e);
            }
        }
        prop_assert!(sys.r_factored_first.is_some());
    }

    #[test]
    fn degree_bounds((spec, _) in arb_case(Kind::Continuous), (dspec, _) in arb_case(Kind::Discontinuous)) {
        for s in [&spec, &dspec] {
            let sys = average(s).unwrap();
            if let Some(bar) = &sys.r_factored_first {
                prop_assert!(bar.total_degree().unwrap_or(0) < s.n);
            }
            for f in &sys.components {
                prop_assert!(f.total_degree().unwrap_or(0) <= s.n);
            }
        }
    }

    #[test]
    fn factored_form_is_exact((spec, seed) in arb_case(Kind::Continuous)) {
        let sys = average(&spec).unwrap();
        let bar = factor_r(&sys).unwrap();
        // Shifting every r-exponent of f̄1 up by one gives back f1 term for term.
        prop_assert_eq!(bar.terms.len(), sys.components[0].terms.len());
        for (e, c) in &bar.terms {
            let mut up = e.clone();
            up[0] += 1;
            prop_assert_eq!(Some(c), sys.components[0].terms.get(&up));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let p = random_point(&mut rng, spec.d);
        let lhs = sys.components[0].eval(&p);
        let rhs = p[0] * bar.eval(&p);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn collapsed_values_match_symbolic_sums((spec, _) in arb_case(Kind::Discontinuous)) {
        let sys = average(&spec).unwrap();
        for f in &sys.components {
            for c in f.terms.values() {
                let re = c.collapse();
                prop_assert!((re - c.value).abs() <= 1e-12 * c.value.abs().max(1e-300) || re == c.value);
            }
        }
    }

    #[test]
    fn averaging_is_linear(
        (a, seed) in arb_case(Kind::Discontinuous),
        s in -3.0f64..3.0,
        t in -3.0f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let b = random_spec(&mut rng, Kind::Discontinuous, a.n, a.d, 6);
        let combo = a.combine(s, &b, t).unwrap();
        let (sa, sb, sc) = (average(&a).unwrap(), average(&b).unwrap(), average(&combo).unwrap());
        for _ in 0..5 {
            let p = random_point(&mut rng, a.d);
            for l in 0..=a.d {
                let want = s * sa.components[l].eval(&p) + t * sb.components[l].eval(&p);
                let got = sc.components[l].eval(&p);
                prop_assert!((want - got).abs() <= 1e-10 * want.abs().max(1.0), "{} vs {}", want, got);
            }
        }
    }
}
