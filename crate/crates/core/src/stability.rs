//! Sufficient queue-stability conditions and their empirical cross-check.
//!
//! For every non-empty subset `S` the margin is
//!
//! ```text
//! m(S) = sum_j p_j - mu(S) (1 - chi(q, s)) * service(S)
//! ```
//!
//! with `service(S) = sum_{i in S} pi_i(S) q_i` for randomized scheduling
//! and `min_{i in S} q_i` for max-age scheduling. The condition holds when
//! every margin is at most `-epsilon`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::chi;
use crate::error::{Error, Result};
use crate::model::{
    enumerate_subsets, AdaptivePolicy, SchedulerKind, SubsetKey, SubsetPolicy, SystemParams,
    MAX_TABLE_USERS,
};
use crate::sim::{self, drift_diagnostic, DriftReport, DriftThresholds, Mode, SimConfig, TracePoint, Verdict};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Randomized scheduling, weighted service term.
    WeightedService,
    /// Max-age scheduling, `q_min(S)` service term.
    MinService,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::WeightedService => "weighted_service",
            Condition::MinService => "min_service",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsetMargin {
    pub subset: SubsetKey,
    pub margin: f64,
    /// `sum pi_i q_i` (randomized) or `q_min(S)` (max-age).
    pub service_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformBoundCheck {
    pub margin: f64,
    pub satisfied: bool,
    pub mu_min: f64,
    pub q_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub condition: Condition,
    pub epsilon: f64,
    pub chi: f64,
    pub margins: Vec<SubsetMargin>,
    pub worst_subset: SubsetKey,
    pub worst_margin: f64,
    pub satisfied: bool,
    pub uniform_bound: Option<UniformBoundCheck>,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")))
    }
}

fn report(
    params: &SystemParams,
    policy: &AdaptivePolicy,
    epsilon: f64,
    condition: Condition,
    service: impl Fn(SubsetKey, &SubsetPolicy) -> Result<f64>,
) -> Result<StabilityReport> {
    check_epsilon(epsilon)?;
    if policy.n_users() != params.n_users() {
        return Err(Error::InvalidPolicy(format!(
            "policy is for N = {}, system has N = {}",
            policy.n_users(),
            params.n_users()
        )));
    }
    let c = chi(params.flip_prob(), params.post_busy_prob())?;
    let load = params.total_arrival_rate();
    let mut margins = Vec::new();
    for key in enumerate_subsets(params.n_users(), MAX_TABLE_USERS)? {
        let entry = policy.require(key)?;
        let term = service(key, entry)?;
        margins.push(SubsetMargin {
            subset: key,
            margin: load - entry.sampling_prob * (1.0 - c) * term,
            service_term: term,
        });
    }
    let worst = margins
        .iter()
        .copied()
        .reduce(|a, b| if b.margin > a.margin { b } else { a })
        .expect("at least one subset");
    Ok(StabilityReport {
        condition,
        epsilon,
        chi: c,
        worst_subset: worst.subset,
        worst_margin: worst.margin,
        satisfied: worst.margin <= -epsilon,
        margins,
        uniform_bound: None,
    })
}

/// Sufficient condition for an adaptive randomized policy.
pub fn weighted_service_check(params: &SystemParams, policy: &AdaptivePolicy, epsilon: f64) -> Result<StabilityReport> {
    if policy.kind() != SchedulerKind::AdaptiveRandomized {
        return Err(Error::InvalidPolicy("the weighted-service condition needs a randomized policy table".into()));
    }
    let qs = params.service_rates();
    let mut r = report(params, policy, epsilon, Condition::WeightedService, |key, entry| {
        let dist = entry.schedule_dist.as_deref().ok_or(Error::MissingSubset(key))?;
        Ok(key.users().map(|i| dist[i] * qs[i]).sum())
    })?;
    r.uniform_bound = Some(uniform_bound_check(params, policy, epsilon)?);
    Ok(r)
}

/// Sufficient condition for max-age scheduling; only the sampling
/// probabilities of `policy` are used.
pub fn min_service_check(params: &SystemParams, policy: &AdaptivePolicy, epsilon: f64) -> Result<StabilityReport> {
    let qs = params.service_rates();
    let mut r = report(params, policy, epsilon, Condition::MinService, |key, _| {
        Ok(key.users().map(|i| qs[i]).fold(f64::INFINITY, f64::min))
    })?;
    r.uniform_bound = Some(uniform_bound_check(params, policy, epsilon)?);
    Ok(r)
}

/// Single uniform condition with `mu_min` over the table and `q_min` over
/// all users.
pub fn uniform_bound_check(params: &SystemParams, policy: &AdaptivePolicy, epsilon: f64) -> Result<UniformBoundCheck> {
    check_epsilon(epsilon)?;
    let c = chi(params.flip_prob(), params.post_busy_prob())?;
    let mu_min = policy
        .min_sampling_prob()
        .ok_or_else(|| Error::InvalidPolicy("policy table is empty".into()))?;
    let q_min = params.min_service_rate();
    let margin = params.total_arrival_rate() - mu_min * (1.0 - c) * q_min;
    Ok(UniformBoundCheck { margin, satisfied: margin <= -epsilon, mu_min, q_min })
}

/// One configuration of the sufficiency study.
#[derive(Debug, Clone)]
pub struct SufficiencyCase {
    pub id: String,
    pub params: SystemParams,
    /// Randomized table; the max-age run reuses its sampling probabilities
    /// unless `max_age` is given.
    pub randomized: AdaptivePolicy,
    pub max_age: Option<AdaptivePolicy>,
}

impl SufficiencyCase {
    fn max_age_policy(&self) -> AdaptivePolicy {
        self.max_age.clone().unwrap_or_else(|| self.randomized.to_max_age())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficiencyBudget {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub epsilon: f64,
    pub thresholds: DriftThresholds,
    pub trace_stride: u64,
}

impl Default for SufficiencyBudget {
    fn default() -> Self {
        Self {
            horizon: 200_000,
            seeds: vec![1, 2, 3],
            epsilon: 0.01,
            thresholds: DriftThresholds::default(),
            trace_stride: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalCheck {
    pub kind: SchedulerKind,
    pub verdict: Verdict,
    pub per_seed: Vec<DriftReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficiencyRow {
    pub id: String,
    pub weighted: StabilityReport,
    pub min_service: StabilityReport,
    pub uniform: UniformBoundCheck,
    pub randomized: EmpiricalCheck,
    pub max_age: EmpiricalCheck,
}

impl SufficiencyRow {
    /// A condition held but the matching policy looked unstable.
    pub fn soundness_violation(&self) -> bool {
        (self.weighted.satisfied && self.randomized.verdict == Verdict::Unstable)
            || (self.min_service.satisfied && self.max_age.verdict == Verdict::Unstable)
    }

    /// Uniform bound satisfied but the weighted condition not.
    pub fn uniform_bound_violation(&self) -> bool {
        self.uniform.satisfied && !self.weighted.satisfied
    }
}

/// Drift verdict of `policy` combined over the budget's seeds.
pub fn empirical_stability(
    params: &SystemParams,
    policy: &AdaptivePolicy,
    budget: &SufficiencyBudget,
) -> Result<EmpiricalCheck> {
    Ok(empirical_stability_traced(params, policy, budget)?.0)
}

/// [`empirical_stability`] plus the queue trace of every seed, in seed
/// order.
pub fn empirical_stability_traced(
    params: &SystemParams,
    policy: &AdaptivePolicy,
    budget: &SufficiencyBudget,
) -> Result<(EmpiricalCheck, Vec<Vec<TracePoint>>)> {
    let mut per_seed = Vec::with_capacity(budget.seeds.len());
    let mut traces = Vec::with_capacity(budget.seeds.len());
    for &seed in &budget.seeds {
        let cfg = SimConfig::new(budget.horizon, seed, Mode::Open).with_trace(budget.trace_stride);
        let m = sim::run(params, policy, &cfg)?;
        per_seed.push(drift_diagnostic(&m.trace, params.total_arrival_rate(), &budget.thresholds)?);
        traces.push(m.trace);
    }
    let check = EmpiricalCheck {
        kind: policy.kind(),
        verdict: Verdict::combine(per_seed.iter().map(|r| r.verdict)),
        per_seed,
    };
    Ok((check, traces))
}

/// Checks the conditions and simulates each case under both scheduling
/// rules. Rows come back in input order.
pub fn verify_sufficiency(cases: &[SufficiencyCase], budget: &SufficiencyBudget) -> Result<Vec<SufficiencyRow>> {
    if budget.seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    cases
        .par_iter()
        .map(|case| {
            let max_age = case.max_age_policy();
            Ok(SufficiencyRow {
                id: case.id.clone(),
                weighted: weighted_service_check(&case.params, &case.randomized, budget.epsilon)?,
                min_service: min_service_check(&case.params, &max_age, budget.epsilon)?,
                uniform: uniform_bound_check(&case.params, &case.randomized, budget.epsilon)?,
                randomized: empirical_stability(&case.params, &case.randomized, budget)?,
                max_age: empirical_stability(&case.params, &max_age, budget)?,
            })
        })
        .collect()
}

/// Draws a random configuration for the sufficiency sweep: `N` in 1..=4,
/// random machine constants, service rates and policy table, and a total
/// arrival rate spread around the worst-case weighted service capacity so that
/// both satisfied and violated conditions occur.
pub fn sample_case<R: Rng>(rng: &mut R, id: impl Into<String>) -> Result<SufficiencyCase> {
    let n = rng.random_range(1..=4usize);
    let q = rng.random_range(0.05..0.95);
    let s = rng.random_range(0.05..0.95);
    let qs: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..=1.0)).collect();
    let mut policy = AdaptivePolicy::new(n, SchedulerKind::AdaptiveRandomized)?;
    for key in enumerate_subsets(n, MAX_TABLE_USERS)? {
        let mu = rng.random_range(0.1..=1.0);
        let weights: Vec<f64> =
            (0..n).map(|i| if key.contains(i) { rng.random_range(0.05..1.0) } else { 0.0 }).collect();
        let total: f64 = weights.iter().sum();
        let mut dist: Vec<f64> = weights.iter().map(|w| w / total).collect();
        // absorb rounding so the entry sums to one exactly enough
        let last = key.users().last().expect("non-empty");
        let rest: f64 = dist.iter().enumerate().filter(|&(i, _)| i != last).map(|(_, w)| w).sum();
        dist[last] = 1.0 - rest;
        policy.insert(key, SubsetPolicy::randomized(mu, dist))?;
    }
    let c = chi(q, s)?;
    let capacity = enumerate_subsets(n, MAX_TABLE_USERS)?
        .into_iter()
        .map(|key| {
            let e = policy.get(key).expect("complete table");
            let dist = e.schedule_dist.as_deref().expect("randomized");
            e.sampling_prob * (1.0 - c) * key.users().map(|i| dist[i] * qs[i]).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    let load = capacity * rng.random_range(0.2..1.6);
    let split: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = split.iter().sum();
    let arrivals = split.iter().map(|w| (load * w / total).clamp(1e-6, 0.99)).collect();
    let params = SystemParams::new(arrivals, qs, q, s, rng.random_range(0.0..10.0))?;
    Ok(SufficiencyCase { id: id.into(), params, randomized: policy, max_age: None })
}
