//! Shared fixtures for the benchmarks.

use aojc_core::SystemParams;

/// Four users with heterogeneous service rates and moderate load.
pub fn four_users(flip_prob: f64) -> SystemParams {
    SystemParams::new(vec![0.01, 0.02, 0.05, 0.06], vec![0.1, 0.4, 0.6, 0.9], flip_prob, 0.5, 5.0)
        .expect("valid fixture")
}

/// `n` users with service rates spread over `[0.2, 0.9]`.
pub fn n_users(n: usize) -> SystemParams {
    let rates = (0..n).map(|i| 0.2 + 0.7 * i as f64 / (n.max(2) - 1) as f64).collect();
    SystemParams::new(vec![0.2 / n as f64; n], rates, 0.4, 0.5, 5.0).expect("valid fixture")
}
