use aojc_core::analytics::MaxAgeOptions;
use aojc_core::optimizer::{
    build_max_age_table, build_randomized_table, maxage_objective, optimize_maxage_subset,
    optimize_randomized_subset, randomized_objective, OptimizerSettings,
};
use aojc_core::{SubsetKey, SystemParams};

fn params(qs: &[f64], q: f64, s: f64, l: f64) -> SystemParams {
    SystemParams::new(vec![0.01; qs.len()], qs.to_vec(), q, s, l).unwrap()
}

fn settings() -> OptimizerSettings {
    OptimizerSettings::default()
}

/// Dense grid minimum of the randomized objective on a one- or two-user
/// subset, respecting the same bounds as the optimizer.
fn grid_min_randomized(rates: &[f64], q: f64, s: f64, l: f64) -> f64 {
    let st = settings();
    let mus: Vec<f64> = (0..=600).map(|i| st.mu_lo + (st.mu_hi - st.mu_lo) * i as f64 / 600.0).collect();
    let mut best = f64::INFINITY;
    match rates.len() {
        1 => {
            for &mu in &mus {
                best = best.min(randomized_objective(mu, &[1.0], rates, q, s, l));
            }
        }
        2 => {
            for &mu in &mus {
                for j in 0..=400 {
                    let a = st.pi_floor + (1.0 - 2.0 * st.pi_floor) * j as f64 / 400.0;
                    best = best.min(randomized_objective(mu, &[a, 1.0 - a], rates, q, s, l));
                }
            }
        }
        _ => unreachable!(),
    }
    best
}

#[test]
fn randomized_matches_brute_force_on_small_subsets() {
    let cases: [(&[f64], f64, f64, f64); 5] = [
        (&[0.5], 0.5, 0.5, 5.0),
        (&[0.1], 0.2, 0.7, 1.0),
        (&[0.4, 0.9], 0.5, 0.5, 5.0),
        (&[0.1, 0.6], 0.3, 0.3, 8.0),
        (&[0.7, 0.75], 0.8, 0.6, 0.5),
    ];
    for (qs, q, s, l) in cases {
        let p = params(qs, q, s, l);
        let r = optimize_randomized_subset(&p, SubsetKey::full(qs.len()), &settings()).unwrap();
        let grid = grid_min_randomized(qs, q, s, l);
        let gap = (r.objective - grid) / grid;
        assert!(gap.abs() <= 0.01, "{qs:?}: optimizer {} vs grid {grid}", r.objective);
        assert!(r.objective <= grid * (1.0 + 1e-9), "{qs:?}: optimizer {} above grid {grid}", r.objective);
    }
}

/// On four users a coarse grid can only bound the optimum from above.
#[test]
fn randomized_four_users_beat_coarse_grid() {
    let qs = [0.1, 0.4, 0.6, 0.9];
    let (q, s, l) = (0.5, 0.5, 5.0);
    let p = params(&qs, q, s, l);
    let r = optimize_randomized_subset(&p, SubsetKey::full(4), &settings()).unwrap();
    let steps = 10;
    let mut best = f64::INFINITY;
    for m in 1..=20 {
        let mu = m as f64 / 20.0 - 1e-3;
        for a in 1..steps {
            for b in 1..steps - a {
                for c in 1..steps - a - b {
                    let d = steps - a - b - c;
                    let pi = [a, b, c, d].map(|x| x as f64 / steps as f64);
                    best = best.min(randomized_objective(mu, &pi, &qs, q, s, l));
                }
            }
        }
    }
    assert!(r.objective <= best, "optimizer {} vs grid {best}", r.objective);
}

#[test]
fn max_age_line_search_matches_dense_scan() {
    let opts = MaxAgeOptions::default();
    for (qs, q, s, l) in [(&[0.5][..], 0.5, 0.5, 5.0), (&[0.1, 0.9][..], 0.2, 0.6, 10.0), (&[0.3, 0.4, 0.9][..], 0.7, 0.4, 2.0)] {
        let p = params(qs, q, s, l);
        let st = settings();
        let r = optimize_maxage_subset(&p, SubsetKey::full(qs.len()), &st).unwrap();
        let n = 200_000;
        let scan = (0..=n)
            .map(|i| st.mu_lo + (st.mu_hi - st.mu_lo) * i as f64 / n as f64)
            .map(|mu| maxage_objective(mu, qs, q, s, l, qs.len(), opts))
            .fold(f64::INFINITY, f64::min);
        assert!(r.objective <= scan + 1e-6, "{qs:?}: {} vs scan {scan}", r.objective);
        assert!(r.converged);
    }
}

#[test]
fn solved_tables_are_feasible_and_improve_on_the_canonical_start() {
    let p = params(&[0.1, 0.4, 0.6, 0.9], 0.4, 0.5, 5.0);
    let st = settings();
    let sol = build_randomized_table(&p, &st).unwrap();
    assert!(sol.policy.is_complete());
    for r in &sol.results {
        assert!(r.mu >= st.mu_lo && r.mu <= st.mu_hi);
        let pi = r.pi.as_ref().unwrap();
        for (i, &w) in pi.iter().enumerate() {
            if r.subset.contains(i) {
                assert!(w >= st.pi_floor - 1e-15);
            } else {
                assert_eq!(w, 0.0);
            }
        }
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(r.objective <= r.start_objectives[0]);
        assert!(r.start_objectives.iter().all(|&f| r.objective <= f));
    }
    let bar = build_max_age_table(&p, &st).unwrap();
    for r in &bar.results {
        assert!(r.mu >= st.mu_lo && r.mu <= st.mu_hi);
        assert!(r.objective <= r.start_objectives[0]);
        assert!(r.pi.is_none());
    }
}

#[test]
fn identical_users_get_equal_weights() {
    let p = params(&[0.5, 0.5, 0.5], 0.4, 0.5, 5.0);
    let r = optimize_randomized_subset(&p, SubsetKey::full(3), &settings()).unwrap();
    let pi = r.pi.unwrap();
    for w in &pi {
        assert!((w - 1.0 / 3.0).abs() < 1e-3, "{pi:?}");
    }
}

#[test]
fn more_restarts_never_hurt() {
    let p = params(&[0.1, 0.3, 0.9], 0.3, 0.4, 5.0);
    let key = SubsetKey::full(3);
    let few = optimize_randomized_subset(&p, key, &OptimizerSettings { restarts: 2, ..settings() }).unwrap();
    let many = optimize_randomized_subset(&p, key, &OptimizerSettings { restarts: 16, ..settings() }).unwrap();
    assert!(many.objective <= few.objective);
    assert_eq!(&many.start_objectives[..3], &few.start_objectives[..]);
}

#[test]
fn results_are_bit_identical_across_runs_and_thread_counts() {
    let p = params(&[0.1, 0.4, 0.6, 0.9], 0.6, 0.5, 5.0);
    let st = OptimizerSettings { seed: 42, ..settings() };
    let pool = |k| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
    let a = pool(1).install(|| build_randomized_table(&p, &st).unwrap());
    let b = pool(3).install(|| build_randomized_table(&p, &st).unwrap());
    let c = build_randomized_table(&p, &st).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    for (x, y) in a.results.iter().zip(&b.results) {
        assert_eq!(x.mu.to_bits(), y.mu.to_bits());
        assert_eq!(x.objective.to_bits(), y.objective.to_bits());
    }
    let d = build_max_age_table(&p, &st).unwrap();
    assert_eq!(d, build_max_age_table(&p, &st).unwrap());
}
