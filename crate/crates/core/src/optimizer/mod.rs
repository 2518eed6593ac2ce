//! Per-subset policy design and assembly of the adaptive policy tables.
//!
//! The randomized design problem minimizes `sum_k age_k + sampling_ub` over
//! `(mu, pi)`. It is solved in an unconstrained coordinate system: a scaled
//! logistic maps `x_0` onto `(mu_lo, mu_hi)` and a floored softmax maps the
//! remaining coordinates onto the open simplex over the subset. A canonical
//! start (`mu = 1/2`, uniform `pi`) plus seeded random restarts each run
//! Nelder-Mead; the best local minimum wins.
//!
//! The max-age design problem is one-dimensional in `mu` and is solved by a
//! coarse grid followed by golden-section refinement.

mod golden;
mod nelder_mead;

pub use golden::{golden_section, grid_then_golden, LineMinimum};
pub use nelder_mead::{minimize, NelderMeadOptions, NelderMeadResult};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{
    eta_bar, max_age_age, max_age_sampling, randomized_age, randomized_sampling_ub, MaxAgeOptions,
    NInterp,
};
use crate::error::{Error, Result};
use crate::model::{
    enumerate_subsets, AdaptivePolicy, SchedulerKind, SubsetKey, SubsetPolicy, SystemParams,
    DEFAULT_SUBSET_CAP,
};
use crate::rng::derive;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub pi_floor: f64,
    pub ftol: f64,
    pub max_iter: usize,
    /// Random restarts in addition to the canonical start.
    pub restarts: usize,
    pub grid_points: usize,
    pub golden_tol: f64,
    pub seed: u64,
    pub subset_cap: usize,
    pub max_age: MaxAgeOptions,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            mu_lo: 1e-3,
            mu_hi: 1.0 - 1e-3,
            pi_floor: 1e-4,
            ftol: 1e-8,
            max_iter: 5000,
            restarts: 16,
            grid_points: 200,
            golden_tol: 1e-8,
            seed: 0,
            subset_cap: DEFAULT_SUBSET_CAP,
            max_age: MaxAgeOptions::default(),
        }
    }
}

impl OptimizerSettings {
    fn validate(&self, subset_len: usize) -> Result<()> {
        if !(0.0 < self.mu_lo && self.mu_lo < self.mu_hi && self.mu_hi < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < mu_lo < mu_hi < 1, got [{}, {}]",
                self.mu_lo, self.mu_hi
            )));
        }
        if !(self.pi_floor > 0.0 && self.pi_floor * (subset_len as f64) < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pi_floor {} is infeasible for a subset of size {subset_len}",
                self.pi_floor
            )));
        }
        Ok(())
    }

    fn nm_options(&self) -> NelderMeadOptions {
        NelderMeadOptions { ftol: self.ftol, xtol: self.ftol, max_iter: self.max_iter, initial_step: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptResult {
    pub subset: SubsetKey,
    pub kind: SchedulerKind,
    pub mu: f64,
    /// Length-N schedule distribution (randomized only).
    pub pi: Option<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Objective at every start point (randomized) or at the best grid
    /// point (max-age).
    pub start_objectives: Vec<f64>,
}

impl OptResult {
    pub fn policy_entry(&self) -> SubsetPolicy {
        match &self.pi {
            Some(pi) => SubsetPolicy::randomized(self.mu, pi.clone()),
            None => SubsetPolicy::sampling_only(self.mu),
        }
    }
}

/// Maps an unconstrained point onto `(mu, pi)`.
#[derive(Debug, Clone, Copy)]
pub struct Reparam {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub pi_floor: f64,
    pub members: usize,
}

impl Reparam {
    pub fn dim(&self) -> usize {
        self.members
    }

    pub fn mu(&self, x0: f64) -> f64 {
        self.mu_lo + (self.mu_hi - self.mu_lo) / (1.0 + (-x0).exp())
    }

    /// Inverse of [`Reparam::mu`].
    pub fn mu_coord(&self, mu: f64) -> f64 {
        let t = (mu - self.mu_lo) / (self.mu_hi - self.mu_lo);
        (t / (1.0 - t)).ln()
    }

    /// Distribution over the subset members; `logits` has `members - 1`
    /// entries, the last member's logit is pinned at zero.
    pub fn pi_into(&self, logits: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let max = logits.iter().copied().fold(0.0, f64::max);
        out.extend(logits.iter().map(|z| (z - max).exp()));
        out.push((-max).exp());
        let total: f64 = out.iter().sum();
        let free = 1.0 - self.pi_floor * self.members as f64;
        for w in out.iter_mut() {
            *w = self.pi_floor + free * *w / total;
        }
    }
}

fn finite(value: f64, point: &[f64]) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteObjective { value, point: point.to_vec() })
    }
}

/// Objective of the randomized design problem at `(mu, pi)` with `pi`
/// aligned to the subset members.
pub fn randomized_objective(mu: f64, pi: &[f64], service_rates: &[f64], q: f64, s: f64, l: f64) -> f64 {
    let ages: f64 = (0..pi.len()).map(|k| randomized_age(mu, pi, service_rates, q, s, k)).sum();
    ages + randomized_sampling_ub(mu, eta_bar(pi, service_rates), q, l)
}

/// Objective of the max-age design problem at `mu`.
pub fn maxage_objective(mu: f64, service_rates: &[f64], q: f64, s: f64, l: f64, n_total: usize, opts: MaxAgeOptions) -> f64 {
    let n = match opts.n_interp {
        NInterp::CardinalityOfS => service_rates.len() as f64,
        NInterp::TotalN => n_total as f64,
    };
    service_rates.len() as f64 * max_age_age(mu, service_rates, q, s, n, opts.beta2)
        + max_age_sampling(mu, service_rates, q, s, l, n)
}

fn subset_rates(params: &SystemParams, subset: SubsetKey) -> Result<Vec<f64>> {
    SubsetKey::new(subset.mask(), params.n_users())?;
    Ok(subset.users().map(|i| params.service_rates()[i]).collect())
}

/// Solves the randomized design problem on `subset`.
pub fn optimize_randomized_subset(
    params: &SystemParams,
    subset: SubsetKey,
    settings: &OptimizerSettings,
) -> Result<OptResult> {
    let rates = subset_rates(params, subset)?;
    settings.validate(rates.len())?;
    let (q, s, l) = (params.flip_prob(), params.post_busy_prob(), params.sampling_cost());
    let map = Reparam {
        mu_lo: settings.mu_lo,
        mu_hi: settings.mu_hi,
        pi_floor: settings.pi_floor,
        members: rates.len(),
    };
    let mut pi_buf = Vec::with_capacity(rates.len());
    let mut objective = |x: &[f64]| -> Result<f64> {
        map.pi_into(&x[1..], &mut pi_buf);
        finite(randomized_objective(map.mu(x[0]), &pi_buf, &rates, q, s, l), x)
    };

    let mut rng = derive(settings.seed, subset.mask() as u64);
    let mut starts = vec![vec![0.0; map.dim()]];
    for _ in 0..settings.restarts {
        let mut x = Vec::with_capacity(map.dim());
        x.push(rng.random_range(-4.0..4.0));
        for _ in 1..map.dim() {
            x.push(rng.random_range(-3.0..3.0));
        }
        starts.push(x);
    }

    let nm = settings.nm_options();
    let mut best: Option<NelderMeadResult> = None;
    let mut start_objectives = Vec::with_capacity(starts.len());
    let mut iterations = 0;
    for x0 in &starts {
        start_objectives.push(objective(x0)?);
        let r = minimize(&mut objective, x0, &nm)?;
        iterations += r.iterations;
        if best.as_ref().is_none_or(|b| r.fx < b.fx) {
            best = Some(r);
        }
    }
    let best = best.expect("at least the canonical start");
    map.pi_into(&best.x[1..], &mut pi_buf);
    let mut pi = vec![0.0; params.n_users()];
    for (slot, &w) in subset.users().zip(&pi_buf) {
        pi[slot] = w;
    }
    Ok(OptResult {
        subset,
        kind: SchedulerKind::AdaptiveRandomized,
        mu: map.mu(best.x[0]),
        pi: Some(pi),
        objective: best.fx,
        iterations,
        restarts: settings.restarts,
        converged: best.converged,
        start_objectives,
    })
}

/// Solves the max-age design problem on `subset`.
pub fn optimize_maxage_subset(
    params: &SystemParams,
    subset: SubsetKey,
    settings: &OptimizerSettings,
) -> Result<OptResult> {
    let rates = subset_rates(params, subset)?;
    settings.validate(rates.len())?;
    let (q, s, l) = (params.flip_prob(), params.post_busy_prob(), params.sampling_cost());
    let n_total = params.n_users();
    let line = grid_then_golden(
        |mu| finite(maxage_objective(mu, &rates, q, s, l, n_total, settings.max_age), &[mu]),
        settings.mu_lo,
        settings.mu_hi,
        settings.grid_points,
        settings.golden_tol,
        settings.max_iter,
    )?;
    Ok(OptResult {
        subset,
        kind: SchedulerKind::MaxAge,
        mu: line.x,
        pi: None,
        objective: line.fx,
        iterations: line.iterations,
        restarts: 0,
        converged: line.converged,
        start_objectives: vec![line.grid_fx],
    })
}

/// A solved policy table with the per-subset optimization records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySolution {
    pub policy: AdaptivePolicy,
    pub results: Vec<OptResult>,
}

fn build(
    params: &SystemParams,
    settings: &OptimizerSettings,
    kind: SchedulerKind,
) -> Result<PolicySolution> {
    let subsets = enumerate_subsets(params.n_users(), settings.subset_cap)?;
    let results = subsets
        .par_iter()
        .map(|&key| match kind {
            SchedulerKind::AdaptiveRandomized => optimize_randomized_subset(params, key, settings),
            SchedulerKind::MaxAge => optimize_maxage_subset(params, key, settings),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut policy = AdaptivePolicy::new(params.n_users(), kind)?;
    for r in &results {
        policy.insert(r.subset, r.policy_entry())?;
    }
    Ok(PolicySolution { policy, results })
}

/// Randomized design solved on every non-empty subset.
pub fn build_randomized_table(params: &SystemParams, settings: &OptimizerSettings) -> Result<PolicySolution> {
    build(params, settings, SchedulerKind::AdaptiveRandomized)
}

/// Max-age sampling probabilities solved on every non-empty subset.
pub fn build_max_age_table(params: &SystemParams, settings: &OptimizerSettings) -> Result<PolicySolution> {
    build(params, settings, SchedulerKind::MaxAge)
}
