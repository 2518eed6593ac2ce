use aojc_core::analytics::{
    age_max_age, age_randomized, sampling_max_age, MaxAgeOptions, NInterp, Subsystem,
};
use aojc_core::{run, AdaptivePolicy, Mode, SchedulerKind, SimConfig, SubsetKey, SubsetPolicy, SystemParams};

const HORIZON: u64 = 1_000_000;
const SEEDS: [u64; 3] = [11, 12, 13];
const REL_TOL: f64 = 0.02;

fn params(qs: &[f64], q: f64, s: f64) -> SystemParams {
    SystemParams::new(vec![0.01; qs.len()], qs.to_vec(), q, s, 5.0).unwrap()
}

/// Seed-averaged per-user ages and sampling cost of a saturated run.
fn saturated(p: &SystemParams, policy: &AdaptivePolicy, key: SubsetKey) -> (Vec<f64>, f64) {
    let n = p.n_users();
    let mut ages = vec![0.0; n];
    let mut cost = 0.0;
    for seed in SEEDS {
        let m = run(p, policy, &SimConfig::new(HORIZON, seed, Mode::Saturated(key))).unwrap();
        for (a, d) in ages.iter_mut().zip(&m.delta_hat) {
            *a += d / SEEDS.len() as f64;
        }
        cost += m.sampling_cost / SEEDS.len() as f64;
    }
    (ages, cost)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn randomized_case(qs: &[f64], q: f64, s: f64, mask: u32, mu: f64, dist: Vec<f64>) {
    let p = params(qs, q, s);
    let key = SubsetKey::new(mask, qs.len()).unwrap();
    let mut policy = AdaptivePolicy::new(qs.len(), SchedulerKind::AdaptiveRandomized).unwrap();
    policy.insert(key, SubsetPolicy::randomized(mu, dist.clone())).unwrap();
    let sys = Subsystem::randomized(&p, key, mu, &dist).unwrap();
    let (ages, _) = saturated(&p, &policy, key);
    for k in key.users() {
        let want = age_randomized(&sys, k).unwrap();
        assert!(rel(ages[k], want) < REL_TOL, "user {k}: simulated {} vs closed form {want}", ages[k]);
    }
}

fn max_age_case(qs: &[f64], q: f64, s: f64, mask: u32, mu: f64) {
    let p = params(qs, q, s);
    let key = SubsetKey::new(mask, qs.len()).unwrap();
    let mut policy = AdaptivePolicy::new(qs.len(), SchedulerKind::MaxAge).unwrap();
    policy.insert(key, SubsetPolicy::sampling_only(mu)).unwrap();
    let sys = Subsystem::max_age(&p, key, mu).unwrap();
    let (ages, cost) = saturated(&p, &policy, key);
    let opts = MaxAgeOptions::default();
    for k in key.users() {
        let want = age_max_age(&sys, k, opts).unwrap();
        assert!(rel(ages[k], want) < REL_TOL, "user {k}: simulated {} vs closed form {want}", ages[k]);
    }
    let want = sampling_max_age(&sys, NInterp::CardinalityOfS).unwrap();
    assert!(rel(cost, want) < REL_TOL, "sampling: simulated {cost} vs closed form {want}");
}

#[test]
fn randomized_singleton_matches() {
    randomized_case(&[1.0], 0.5, 0.5, 0b1, 1.0, vec![1.0]);
    randomized_case(&[0.4], 0.3, 0.7, 0b1, 0.6, vec![1.0]);
}

#[test]
fn randomized_pair_matches() {
    randomized_case(&[0.3, 0.8], 0.4, 0.6, 0b11, 0.7, vec![0.35, 0.65]);
}

#[test]
fn randomized_four_users_match() {
    randomized_case(&[0.1, 0.4, 0.6, 0.9], 0.6, 0.5, 0b1111, 0.8, vec![0.1, 0.2, 0.3, 0.4]);
}

#[test]
fn max_age_matches_on_one_two_and_four_users() {
    max_age_case(&[1.0], 0.5, 0.5, 0b1, 1.0);
    max_age_case(&[0.5, 0.9], 0.3, 0.4, 0b11, 0.5);
    max_age_case(&[0.2, 0.4, 0.7, 0.95], 0.7, 0.3, 0b1111, 0.85);
}

/// On a proper subset of a larger system only the subset size fits the
/// simulated round robin.
#[test]
fn max_age_round_robin_length_is_subset_size() {
    let qs = [0.3, 0.5, 0.7, 0.9];
    let p = params(&qs, 0.4, 0.5);
    let key = SubsetKey::new(0b0110, 4).unwrap();
    let mut policy = AdaptivePolicy::new(4, SchedulerKind::MaxAge).unwrap();
    policy.insert(key, SubsetPolicy::sampling_only(0.7)).unwrap();
    let sys = Subsystem::max_age(&p, key, 0.7).unwrap();
    let (ages, cost) = saturated(&p, &policy, key);

    let by_subset = MaxAgeOptions { n_interp: NInterp::CardinalityOfS, ..MaxAgeOptions::default() };
    let by_total = MaxAgeOptions { n_interp: NInterp::TotalN, ..MaxAgeOptions::default() };
    let age_s = age_max_age(&sys, 1, by_subset).unwrap();
    let age_n = age_max_age(&sys, 1, by_total).unwrap();
    assert!(rel(ages[1], age_s) < REL_TOL);
    assert!(rel(ages[1], age_n) > 0.1);
    let cost_s = sampling_max_age(&sys, NInterp::CardinalityOfS).unwrap();
    let cost_n = sampling_max_age(&sys, NInterp::TotalN).unwrap();
    assert!(rel(cost, cost_s) < REL_TOL);
    assert!(rel(cost, cost_s) < rel(cost, cost_n));
}

#[test]
fn singleton_families_agree_exactly() {
    for mu in [0.1, 0.3, 0.5, 0.8, 1.0] {
        for q1 in [0.05, 0.2, 0.5, 0.75, 1.0] {
            let p = SystemParams::new(vec![0.01], vec![q1], 0.35, 0.6, 5.0).unwrap();
            let key = SubsetKey::full(1);
            let r = age_randomized(&Subsystem::randomized(&p, key, mu, &[1.0]).unwrap(), 0).unwrap();
            let m = age_max_age(&Subsystem::max_age(&p, key, mu).unwrap(), 0, MaxAgeOptions::default())
                .unwrap();
            assert!((r - m).abs() < 1e-9, "mu={mu} q1={q1}: {r} vs {m}");
        }
    }
}
