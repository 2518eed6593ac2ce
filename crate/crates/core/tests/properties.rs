use aojc_core::analytics::{
    age_max_age, age_randomized, chi, randomized_age, sampling_bound_randomized, MaxAgeOptions,
    Subsystem,
};
use aojc_core::optimizer::Reparam;
use aojc_core::rng::derive;
use aojc_core::stability::{min_service_check, sample_case, uniform_bound_check, weighted_service_check};
use aojc_core::{
    active_set, enumerate_subsets, run, AdaptivePolicy, Mode, SchedulerKind, SimConfig, SubsetKey,
    SystemParams,
};
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    0.01f64..0.99
}

fn rate() -> impl Strategy<Value = f64> {
    0.05f64..=1.0
}

/// Random distribution of length `n` with every weight at least 0.02.
fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..1.0, n).prop_map(|w| {
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn subset_enumeration_is_complete(n in 1usize..=10) {
        let keys = enumerate_subsets(n, 12).unwrap();
        prop_assert_eq!(keys.len(), (1usize << n) - 1);
        prop_assert!(keys.windows(2).all(|w| w[0].mask() < w[1].mask()));
        prop_assert!(keys.iter().all(|k| !k.is_empty() && k.mask() < (1 << n)));
    }

    #[test]
    fn active_set_tracks_nonempty_queues(queues in prop::collection::vec(0u64..3, 1..8)) {
        match active_set(&queues) {
            None => prop_assert!(queues.iter().all(|&x| x == 0)),
            Some(key) => {
                for (i, &x) in queues.iter().enumerate() {
                    prop_assert_eq!(key.contains(i), x > 0);
                }
            }
        }
    }

    #[test]
    fn chi_lies_strictly_inside_unit_interval(q in 0.001f64..0.999, s in 0.001f64..0.999) {
        let c = chi(q, s).unwrap();
        prop_assert!(c > 0.0 && c < 1.0, "chi({q}, {s}) = {c}");
    }

    #[test]
    fn chi_is_continuous_at_one_half(s in 0.001f64..0.999, k in 20i32..40) {
        let d = 2f64.powi(-k);
        let lo = chi(0.5 - d, s).unwrap();
        let hi = chi(0.5 + d, s).unwrap();
        prop_assert!((lo - hi).abs() < 1e-5);
        prop_assert!((lo - 0.5).abs() <= d + 1e-15);
    }

    #[test]
    fn randomized_age_is_at_least_one(
        mu in 0.01f64..=1.0, q in unit(), s in unit(),
        qs in prop::collection::vec(rate(), 1..5),
        seed in any::<u64>(),
    ) {
        let n = qs.len();
        let mut rng = derive(seed, 0);
        let w: Vec<f64> = (0..n).map(|_| 0.02 + rand::Rng::random::<f64>(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        let pi: Vec<f64> = w.iter().map(|x| x / total).collect();
        for k in 0..n {
            let a = randomized_age(mu, &pi, &qs, q, s, k);
            prop_assert!(a.is_finite() && a >= 1.0, "age {a}");
        }
    }

    #[test]
    fn max_age_age_is_at_least_subset_size(mu in 0.01f64..=1.0, q in unit(), s in unit(),
                                           qs in prop::collection::vec(rate(), 1..5)) {
        let n = qs.len();
        let p = SystemParams::new(vec![0.01; n], qs, q, s, 5.0).unwrap();
        let sys = Subsystem::max_age(&p, SubsetKey::full(n), mu).unwrap();
        let a = age_max_age(&sys, 0, MaxAgeOptions::default()).unwrap();
        prop_assert!(a.is_finite() && a >= n as f64, "age {a} for n={n}");
    }

    #[test]
    fn singleton_randomized_and_max_age_coincide(mu in 0.01f64..=1.0, q1 in rate(), q in unit(), s in unit()) {
        let p = SystemParams::new(vec![0.01], vec![q1], q, s, 3.0).unwrap();
        let key = SubsetKey::full(1);
        let r = age_randomized(&Subsystem::randomized(&p, key, mu, &[1.0]).unwrap(), 0).unwrap();
        let m = age_max_age(&Subsystem::max_age(&p, key, mu).unwrap(), 0, MaxAgeOptions::default()).unwrap();
        prop_assert!((r - m).abs() <= 1e-9 * r.max(1.0));
    }

    #[test]
    fn sampling_bound_is_nonnegative_and_grows_with_cost(mu in 0.01f64..=1.0, q in unit(), l in 0.0f64..20.0,
                                                         pi in simplex(3)) {
        let p = SystemParams::new(vec![0.01; 3], vec![0.3, 0.6, 0.9], q, 0.5, l).unwrap();
        let p2 = SystemParams::new(vec![0.01; 3], vec![0.3, 0.6, 0.9], q, 0.5, l + 1.0).unwrap();
        let key = SubsetKey::full(3);
        let a = sampling_bound_randomized(&Subsystem::randomized(&p, key, mu, &pi).unwrap()).unwrap();
        let b = sampling_bound_randomized(&Subsystem::randomized(&p2, key, mu, &pi).unwrap()).unwrap();
        prop_assert!(a >= 0.0 && b > a);
    }

    #[test]
    fn reparametrization_stays_feasible(x in prop::collection::vec(-50.0f64..50.0, 1..6)) {
        let map = Reparam { mu_lo: 1e-3, mu_hi: 1.0 - 1e-3, pi_floor: 1e-4, members: x.len() };
        let mu = map.mu(x[0]);
        prop_assert!((1e-3..=1.0 - 1e-3).contains(&mu));
        let mut pi = Vec::new();
        map.pi_into(&x[1..], &mut pi);
        prop_assert_eq!(pi.len(), x.len());
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pi.iter().all(|&w| w >= 1e-4 - 1e-15));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// The uniform bound implies the weighted-service condition, and the
    /// subset-minimum margin is never below the weighted one.
    #[test]
    fn uniform_bound_implies_weighted_condition(seed in any::<u64>()) {
        let case = sample_case(&mut derive(seed, 7), "p").unwrap();
        let w = weighted_service_check(&case.params, &case.randomized, 0.01).unwrap();
        let m = min_service_check(&case.params, &case.randomized.to_max_age(), 0.01).unwrap();
        let u = uniform_bound_check(&case.params, &case.randomized, 0.01).unwrap();
        if u.satisfied {
            prop_assert!(w.satisfied && m.satisfied);
        }
        prop_assert!(u.margin >= w.worst_margin - 1e-12);
        prop_assert!(m.worst_margin >= w.worst_margin - 1e-12);
        if m.satisfied {
            prop_assert!(w.satisfied);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn margins_increase_with_arrival_scale(seed in any::<u64>(), scale in 1.01f64..3.0) {
        let case = sample_case(&mut derive(seed, 9), "m").unwrap();
        let p = &case.params;
        let scaled: Vec<f64> = p.arrival_rates().iter().map(|x| (x * scale).min(0.999)).collect();
        let p2 = p.with_arrival_rates(scaled, false).unwrap();
        let a = weighted_service_check(p, &case.randomized, 0.01).unwrap();
        let b = weighted_service_check(&p2, &case.randomized, 0.01).unwrap();
        for (x, y) in a.margins.iter().zip(&b.margins) {
            prop_assert!(y.margin >= x.margin);
        }
    }

    /// Conservation of jobs and basic bounds on the simulated averages.
    #[test]
    fn open_mode_run_conserves_jobs(seed in any::<u64>(), mu in 0.1f64..=1.0, maxage in any::<bool>(),
                                    p in prop::collection::vec(0.0f64..0.3, 1..4)) {
        let n = p.len();
        let params = SystemParams::new(p.iter().map(|x| x + 1e-3).collect(), vec![0.6; n], 0.4, 0.5, 2.0).unwrap();
        let kind = if maxage { SchedulerKind::MaxAge } else { SchedulerKind::AdaptiveRandomized };
        let policy = AdaptivePolicy::uniform(n, kind, mu).unwrap();
        let m = run(&params, &policy, &SimConfig::new(3000, seed, Mode::Open)).unwrap();
        for i in 0..n {
            prop_assert_eq!(m.arrivals_total[i] - m.completions_total[i], m.final_queues[i]);
            prop_assert!(m.delta_hat[i] >= 1.0);
        }
        let done: u64 = m.completions_total.iter().sum();
        prop_assert!(m.samples + done <= 2 * 3000);
        prop_assert!(m.sampling_cost <= 2.0 + 1e-12);
    }

    #[test]
    fn runs_are_reproducible(seed in any::<u64>()) {
        let params = SystemParams::new(vec![0.1, 0.2], vec![0.5, 0.7], 0.3, 0.6, 4.0).unwrap();
        let policy = AdaptivePolicy::uniform(2, SchedulerKind::AdaptiveRandomized, 0.6).unwrap();
        let cfg = SimConfig::new(2000, seed, Mode::Open).with_trace(10);
        prop_assert_eq!(run(&params, &policy, &cfg).unwrap(), run(&params, &policy, &cfg).unwrap());
    }

    /// Under permanent backlog max-age serves the subset in a fixed cyclic
    /// order.
    #[test]
    fn saturated_max_age_is_round_robin(seed in any::<u64>(), mask in 1u32..16) {
        let params = SystemParams::new(vec![0.01; 4], vec![0.3, 0.5, 0.7, 0.9], 0.4, 0.5, 1.0).unwrap();
        let key = SubsetKey::new(mask, 4).unwrap();
        let policy = AdaptivePolicy::uniform(4, SchedulerKind::MaxAge, 0.8).unwrap();
        let mut sim = aojc_core::Simulator::new(&params, &policy, Mode::Saturated(key), seed).unwrap();
        let mut order = Vec::new();
        while order.len() < 3 * key.len() {
            if let Some(u) = sim.step().assigned {
                order.push(u);
            }
        }
        let first: Vec<usize> = order[..key.len()].to_vec();
        let mut sorted = first.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, key.users().collect::<Vec<_>>());
        for (i, &u) in order.iter().enumerate() {
            prop_assert_eq!(u, first[i % key.len()]);
        }
    }
}
