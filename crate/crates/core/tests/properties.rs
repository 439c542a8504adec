use nearcrit_core::engine::{evolve_x, evolve_y, tv_distance, Evolution};
use nearcrit_core::environment::{EnvironmentSpec, ImmigrationFamily, QuadraticFamily};
use nearcrit_core::limits::{
    a_coefficients, b_closed_form, cp_pmf, fy_closed_form, lambda_from_q, limit_law, q_from_lambda,
    QSequence,
};
use nearcrit_core::montecarlo::{simulate_x_with_threads, simulate_y_with_threads, SimConfig};
use nearcrit_core::oracles::{lemma_binom3_check, lemma_sum_check, taylor_remainder_check};
use nearcrit_core::pgf::{
    eval_pgf, factorial_moment, mean_product, phi_composite, shape_function, tail_compose,
    OffspringLaw,
};
use nearcrit_core::Pmf;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed};

const S_GRID: [f64; 12] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 1.0];

fn config(cases: u32) -> Config {
    Config {
        cases,
        rng_seed: RngSeed::Fixed(0x0dd5_eed5),
        failure_persistence: None,
        ..Config::default()
    }
}

fn normalize(w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Finite-support law with positive mean.
fn any_law() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 2..8).prop_map(normalize)
}

fn mean_of(p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(k, x)| k as f64 * x).sum()
}

/// Law with mean in `[0.5, 1]`, usable in an environment.
fn env_law() -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(0.01f64..1.0, 2..6), 0.0f64..1.0)
        .prop_map(|(w, shift)| {
            let mut p = normalize(w);
            // move mass to 0 until the mean is at most 1, then land in [0.5, 1]
            let m = mean_of(&p);
            if m > 1.0 {
                let target = 0.5 + 0.5 * shift;
                let keep = target / m;
                p.iter_mut().for_each(|x| *x *= keep);
                p[0] += 1.0 - keep;
            } else if m < 0.5 {
                let len = p.len();
                let lift = (0.5 - m) / (len - 1) as f64;
                let give = lift.min(p[0]);
                p[0] -= give;
                p[len - 1] += give;
            }
            p
        })
        .prop_filter("mean in [0.5, 1]", |p| (0.5..=1.0).contains(&mean_of(p)))
}

fn environment(laws: &[Vec<f64>]) -> EnvironmentSpec {
    EnvironmentSpec::explicit(
        laws.iter()
            .map(|p| OffspringLaw::from_probs(p.clone()).unwrap())
            .collect(),
    )
    .unwrap()
}

fn quadratic() -> impl Strategy<Value = QuadraticFamily> {
    (0.2f64..1.5, 1usize..6, 0.0f64..3.0).prop_filter_map("valid family", |(a, n0, nu)| {
        QuadraticFamily::new(a, n0, nu).ok()
    })
}

fn rational() -> impl Strategy<Value = BigRational> {
    (-20i64..=20, 1i64..=20).prop_map(|(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d)))
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn shape_bounds(p in any_law()) {
        let law = OffspringLaw::from_probs(p).unwrap();
        let lo = shape_function(&law, 0.0).unwrap() / 2.0;
        let hi = 2.0 * shape_function(&law, 1.0).unwrap();
        for s in S_GRID {
            let phi = shape_function(&law, s).unwrap();
            prop_assert!(lo - 1e-12 <= phi && phi <= hi + 1e-12, "s={s} phi={phi} in [{lo}, {hi}]");
        }
    }

    #[test]
    fn first_factorial_moment_is_the_mean(p in any_law()) {
        let law = OffspringLaw::from_probs(p.clone()).unwrap();
        prop_assert!((factorial_moment(law.pmf(), 1) - law.mean()).abs() <= 1e-12);
        prop_assert!((law.mean() - mean_of(&p)).abs() <= 1e-12);
    }

    #[test]
    fn pgf_is_monotone_and_bounded(p in any_law()) {
        let pmf = Pmf::new(p.clone(), 0.0).unwrap();
        let mut last = 0.0;
        for s in S_GRID {
            let v = eval_pgf(&pmf, s).unwrap();
            prop_assert!(v >= last - 1e-15 && v >= p[0] - 1e-15 && v <= 1.0 + 1e-12);
            last = v;
        }
    }

    #[test]
    fn composition_identity(laws in prop::collection::vec(env_law(), 1..=12)) {
        let env = environment(&laws);
        let n = laws.len();
        for j in 0..n {
            for s in [0.0, 0.25, 0.5, 0.75, 0.9] {
                // 1 - f_{j,n}(s) carried as u ← u Σ_i P(ξ > i) (1-u)^i
                let u = laws[j..n].iter().rev().fold(1.0 - s, |u, p| {
                    let t = 1.0 - u;
                    let g: f64 = (0..p.len()).rev().fold(0.0, |acc, i| acc * t + p[i + 1..].iter().sum::<f64>());
                    u * g
                });
                let mbar: f64 = laws[j..n].iter().map(|p| mean_of(p)).product();
                let lhs = 1.0 / u - 1.0 / (mbar * (1.0 - s));
                let phi = phi_composite(&env, j, n, s).unwrap();
                prop_assert!((lhs - phi).abs() <= 1e-9, "j={j} n={n} s={s}: {lhs} vs {phi}");
            }
        }
    }

    #[test]
    fn convexity_and_monotonicity(laws in prop::collection::vec(env_law(), 1..=12)) {
        let env = environment(&laws);
        let n = laws.len();
        for j in 0..n {
            let mbar = mean_product(&env, j, n).unwrap();
            let mut last = 0.0;
            for s in S_GRID {
                let f = tail_compose(&env, j, n, s).unwrap();
                prop_assert!(f >= 1.0 + mbar * (s - 1.0) - 1e-12);
                prop_assert!(f >= last - 1e-15);
                last = f;
            }
        }
    }

    #[test]
    fn taylor_remainder_bound(p in any_law(), ell in 1usize..=6) {
        let pmf = Pmf::new(p, 0.0).unwrap();
        prop_assert!(taylor_remainder_check(&pmf, ell, &S_GRID[..11]).unwrap() <= 1e-12);
    }

    #[test]
    fn tv_is_a_metric(a in any_law(), b in any_law(), c in any_law()) {
        let (a, b, c) = (Pmf::new(a, 0.0).unwrap(), Pmf::new(b, 0.0).unwrap(), Pmf::new(c, 0.0).unwrap());
        let ab = tv_distance(&a, &b).distance;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&ab));
        prop_assert_eq!(ab, tv_distance(&b, &a).distance);
        prop_assert!(ab <= tv_distance(&a, &c).distance + tv_distance(&c, &b).distance + 1e-12);
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn engine_conserves_mass(family in quadratic(), n in 0usize..300) {
        let env = EnvironmentSpec::quadratic(family);
        let r = evolve_x(&env, n, 256).unwrap();
        prop_assert!((r.pmf.stored_mass() + r.lost_mass_bound - 1.0).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&r.survival));
        prop_assert!(r.pmf.mean() <= mean_product(&env, 0, n).unwrap() + 1e-12);
        prop_assert!((r.pmf.get(0) - tail_compose(&env, 0, n, 0.0).unwrap()).abs() <= 1e-9 + r.lost_mass_bound);
    }

    #[test]
    fn lost_mass_is_nondecreasing(family in quadratic(), cap in 8usize..24) {
        let env = EnvironmentSpec::quadratic(family);
        let mut ev = Evolution::branching(&env, cap).unwrap();
        let mut last = 0.0;
        for n in 1..=60 {
            if ev.advance_to(n).is_err() {
                break;
            }
            let lost = ev.result().lost_mass_bound;
            prop_assert!(lost >= last);
            last = lost;
        }
    }

    #[test]
    fn immigration_pgf_matches_product(family in quadratic(), q in prop::collection::vec(0.0f64..1.0, 1..4), n in 1usize..60) {
        let env = EnvironmentSpec::quadratic(family);
        let total: f64 = q.iter().sum();
        prop_assume!(total > 0.0 && family.decay(1) * total <= 1.0);
        let env = env.with_immigration(ImmigrationFamily::FiniteSupport { q }).unwrap();
        let r = evolve_y(&env, n, 256).unwrap();
        for s in [0.2, 0.5, 0.8] {
            let product = nearcrit_core::pgf::immigration_pgf(&env, n, s).unwrap();
            prop_assert!((eval_pgf(&r.pmf, s).unwrap() - product).abs() <= 1e-8 + r.lost_mass_bound);
        }
    }

    #[test]
    fn lambda_q_round_trip(q in prop::collection::vec(0u32..5, 1..=10)) {
        prop_assume!(q.iter().any(|&v| v > 0));
        let qf: Vec<f64> = q.iter().map(|&v| v as f64).collect();
        let seq = QSequence::new(qf.clone()).unwrap();
        let back = q_from_lambda(&lambda_from_q(&seq, qf.len())).unwrap();
        let mut expected = qf;
        while expected.last() == Some(&0.0) {
            expected.pop();
        }
        prop_assert_eq!(back.values().len(), expected.len());
        for (a, b) in back.values().iter().zip(&expected) {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1.0));
        }
    }

    #[test]
    fn limit_law_is_a_valid_pgf(q in prop::collection::vec(0.0f64..2.0, 1..5), nu in 0.3f64..6.0) {
        prop_assume!(q.iter().any(|&v| v > 0.01));
        let seq = QSequence::new(q.clone()).unwrap();
        let law = limit_law(&seq, nu).unwrap();
        let lambda = lambda_from_q(&seq, q.len());
        let mut last = 0.0;
        for i in 0..10 {
            let s = i as f64 / 10.0;
            let v = fy_closed_form(&lambda, nu, s).unwrap();
            prop_assert!(v > 0.0 && v <= 1.0 && v >= last);
            prop_assert!((v - law.pgf(s)).abs() <= 1e-10);
            last = v;
        }
        let pmf = cp_pmf(&law, 256).unwrap();
        prop_assert!((pmf.stored_mass() + pmf.lost_mass() - 1.0).abs() <= 1e-9);
        let rates = a_coefficients(&seq, nu, 30).unwrap();
        for n in 1..=30 {
            let direct: f64 = q.iter().enumerate().map(|(i, qj)| qj * b_closed_form(n, i + 1, nu).unwrap()).sum();
            prop_assert!((rates.rates()[n - 1] - direct).abs() <= 1e-14 * direct.abs().max(1e-300));
        }
    }

    #[test]
    fn lemma_sum_exact(k in 1usize..=12, x in rational()) {
        let (l, r) = lemma_sum_check(k, &x);
        prop_assert_eq!(l, r);
    }

    #[test]
    fn lemma_binom3_exact(l in 1usize..=10, n in 1usize..=10, x in rational()) {
        let (a, b) = lemma_binom3_check(l, n, &x);
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn simulation_ignores_thread_count(seed in any::<u64>(), family in quadratic()) {
        let env = EnvironmentSpec::quadratic(family);
        let cfg = SimConfig { seed, replicates: 500, horizon: 25, population_cap: 100_000 };
        prop_assert_eq!(
            simulate_x_with_threads(&env, &cfg, 1).unwrap(),
            simulate_x_with_threads(&env, &cfg, 3).unwrap()
        );
        let env = env.with_immigration(ImmigrationFamily::PoissonMean { lambda1: 0.5 }).unwrap();
        prop_assert_eq!(
            simulate_y_with_threads(&env, &cfg, 1).unwrap(),
            simulate_y_with_threads(&env, &cfg, 4).unwrap()
        );
    }
}
