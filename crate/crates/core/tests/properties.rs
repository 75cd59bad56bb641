use std::sync::{Arc, OnceLock};

use ldla::gluing::{GluingDistribution, NuSampler};
use ldla::kernel::shared_kernel;
use ldla::oracle::{bracket_with, BoxGreen};
use ldla::{HittingSystem, LawSpec, PotentialKernel, StepLaw};
use proptest::prelude::*;

fn law(alpha: f64) -> StepLaw {
    StepLaw::power_law(alpha, 0.2).unwrap()
}

fn kernel_for(law: &StepLaw) -> Arc<PotentialKernel> {
    shared_kernel(law, 1 << 14).unwrap()
}

fn distinct_set(raw: Vec<i64>) -> Vec<i64> {
    let mut v = raw;
    v.sort_unstable();
    v.dedup();
    v
}

fn laws() -> impl Strategy<Value = LawSpec> {
    prop_oneof![
        (1.1f64..3.9).prop_map(|a| LawSpec::power_law(a, 0.2)),
        Just(LawSpec::z2_restricted()),
        Just(LawSpec::lazy(0.5)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn step_law_is_symmetric_normalized_and_monotone(spec in laws(), k in 1i64..100_000) {
        let law = spec.build().unwrap();
        prop_assert_eq!(law.pmf(k), law.pmf(-k));
        prop_assert!(law.pmf(k) >= 0.0);
        prop_assert!(law.tail(k as u64) <= law.tail(k as u64 - 1));
        let head: f64 = law.pmf(0) + 2.0 * (1..=64).map(|j| law.pmf(j)).sum::<f64>();
        prop_assert!((head + law.tail(64) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn spec_round_trips_through_json(spec in laws()) {
        let text = serde_json::to_string(&spec).unwrap();
        let back: LawSpec = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn kernel_is_even_and_vanishes_at_origin(alpha in 1.1f64..3.9, n in 1i64..1_000_000) {
        let law = law(alpha);
        let k = kernel_for(&law);
        prop_assert_eq!(k.eval(0), 0.0);
        prop_assert_eq!(k.eval(n), k.eval(-n));
        prop_assert!(k.eval(n) > 0.0);
    }

    #[test]
    fn kernel_is_harmonic_off_origin(x in 1i64..200) {
        // a(x) = sum_k p(k) a(x + k) for x != 0; light tails keep truncation tiny
        let law = law(4.0);
        let k = kernel_for(&law);
        let cut = 4000i64;
        let mut avg = 0.0;
        for j in -cut..=cut {
            avg += law.pmf(j) * k.eval(x + j);
        }
        prop_assert!((avg - k.eval(x)).abs() < 1e-7 * k.eval(x).max(1.0));
    }

    #[test]
    fn hitting_solution_has_small_residual(
        alpha in prop_oneof![Just(1.5f64), Just(2.5), Just(4.0)],
        raw in prop::collection::vec(-500i64..500, 1..24),
    ) {
        let law = law(alpha);
        let k = kernel_for(&law);
        let set = distinct_set(raw);
        let sys = HittingSystem::solve(&k, &set).unwrap();
        prop_assert!(sys.max_residual(&k) < 1e-8);
        let total: f64 = sys.hm_infinity().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(sys.hm_infinity().iter().all(|&h| h >= -1e-12));
    }

    #[test]
    fn incremental_matches_batch(raw in prop::collection::vec(-300i64..300, 2..40)) {
        let law = law(1.5);
        let k = kernel_for(&law);
        let set: Vec<i64> = {
            let mut seen = std::collections::HashSet::new();
            raw.into_iter().filter(|p| seen.insert(*p)).collect()
        };
        prop_assume!(set.len() >= 2);
        let mut inc = HittingSystem::solve(&k, &set[..1]).unwrap();
        for &p in &set[1..] {
            inc.extend(&k, p).unwrap();
        }
        let batch = HittingSystem::solve(&k, &set).unwrap();
        prop_assert!((inc.kappa() - batch.kappa()).abs() < 1e-8 * batch.kappa().abs().max(1.0));
        for (a, b) in inc.hm_sorted().iter().zip(batch.hm_sorted()) {
            prop_assert_eq!(a.0, b.0);
            prop_assert!((a.1 - b.1).abs() < 1e-9);
        }
    }

    #[test]
    fn escape_probability_is_a_probability(
        alpha in prop_oneof![Just(1.5f64), Just(2.5)],
        raw in prop::collection::vec(-50i64..50, 1..10),
        x in -200i64..200,
    ) {
        let law = law(alpha);
        let k = kernel_for(&law);
        let set = distinct_set(raw);
        prop_assume!(!set.contains(&x));
        let sys = HittingSystem::solve(&k, &set).unwrap();
        let e = sys.escape_probability(&k, x).unwrap();
        prop_assert!(e > 0.0 && e <= 1.0);
        prop_assert!(sys.g_infinity(&k, x).unwrap() >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gluing_measure_has_unit_mass(
        spec in prop_oneof![
            Just(LawSpec::power_law(1.2, 0.2)),
            Just(LawSpec::power_law(1.5, 0.2)),
            Just(LawSpec::z2_restricted()),
        ],
        raw in prop::collection::vec(-400i64..400, 1..12),
    ) {
        let law = spec.build().unwrap();
        let k = kernel_for(&law);
        let set = distinct_set(raw);
        let sys = HittingSystem::solve(&k, &set).unwrap();
        let nu = NuSampler::new(&law, Arc::clone(&k)).unwrap();
        let g = GluingDistribution::build(&sys, &nu, &law, 1e-4).unwrap();
        prop_assert!((g.total_mass() - 1.0).abs() <= 1e-3, "mass {}", g.total_mass());
        prop_assert!(g.tail_mass_bound() <= 1e-4);
    }
}

fn box_green(alpha: f64) -> &'static BoxGreen {
    static GREEN15: OnceLock<BoxGreen> = OnceLock::new();
    static GREEN25: OnceLock<BoxGreen> = OnceLock::new();
    let cell = if alpha < 2.0 { &GREEN15 } else { &GREEN25 };
    cell.get_or_init(|| BoxGreen::new(&law(alpha), 1 << 13).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn oracle_bracket_contains_primary_escape(
        alpha in prop_oneof![Just(1.5f64), Just(2.5)],
        raw in prop::collection::vec(-40i64..40, 1..6),
        x in -60i64..60,
    ) {
        let law = law(alpha);
        let set = distinct_set(raw);
        prop_assume!(!set.contains(&x));
        let k = kernel_for(&law);
        let sys = HittingSystem::solve(&k, &set).unwrap();
        let primary = sys.escape_probability(&k, x).unwrap();
        let b = bracket_with(box_green(alpha), &set, x).unwrap();
        let slack = 1e-7;
        prop_assert!(b.lo - slack <= primary && primary <= b.hi + slack,
            "{} not in [{}, {}]", primary, b.lo, b.hi);
    }
}
