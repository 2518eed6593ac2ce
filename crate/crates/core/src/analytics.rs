//! Closed-form ages and sampling costs for a permanently backlogged subset
//! of users.
//!
//! Two policy families are covered:
//!
//! * stationary randomized `(mu, pi)`: per-user average age and an upper
//!   bound on the sampling cost;
//! * max-age scheduling (round robin under backlog) with sampling
//!   probability `mu`: common average age and exact sampling cost.
//!
//! The max-age age has the renewal form
//!
//! ```text
//! Delta = [n (b2 - b1^2) + sum (1-q_i)/q_i^2] / [2 (n b1 + sum (1-q_i)/q_i)]
//!       + (n b1 + sum (1-q_i)/q_i + 1) / 2
//! ```
//!
//! where `b1 = E[W+1]`, `b2 = E[(W+1)^2]` and `W` counts the slots from a
//! completion to the next assignment. See [`Beta2Form`] for the two
//! available expressions of `b2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_schedule_dist, SchedulerKind, SubsetKey, SystemParams};

/// Which value of `n` enters the max-age expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NInterp {
    /// `n = |S|`: the round robin only cycles over the backlogged subset.
    #[default]
    CardinalityOfS,
    /// `n = N`, the total number of users.
    TotalN,
}

/// Expression used for the second moment `b2 = E[(W+1)^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beta2Form {
    /// `2 (1-mu)/mu^2 (s/(1-mu) a^2 + a - s - mu(1-s) + 3) + b1`, which is
    /// the exact second moment of the assignment gap.
    #[default]
    Renewal,
    /// Same bracket with the prefactor `2 (1-mu)/mu`. Only agrees with
    /// [`Beta2Form::Renewal`] at `mu = 1`.
    SinglePower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaxAgeOptions {
    pub n_interp: NInterp,
    pub beta2: Beta2Form,
}

/// Policy parameters of a backlogged subsystem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SubsystemPolicy {
    /// `pi` is aligned with [`Subsystem::users`].
    Randomized { mu: f64, pi: Vec<f64> },
    MaxAge { mu: f64 },
}

/// A backlogged subset together with the machine constants and the policy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subsystem {
    pub subset: SubsetKey,
    pub n_total: usize,
    pub users: Vec<usize>,
    pub service_rates: Vec<f64>,
    pub flip_prob: f64,
    pub post_busy_prob: f64,
    pub sampling_cost: f64,
    pub policy: SubsystemPolicy,
}

fn check_mu(mu: f64) -> Result<()> {
    if mu > 0.0 && mu <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sampling probability must lie in (0,1], got {mu}")))
    }
}

impl Subsystem {
    fn base(params: &SystemParams, subset: SubsetKey, policy: SubsystemPolicy) -> Result<Self> {
        SubsetKey::new(subset.mask(), params.n_users())?;
        let users: Vec<usize> = subset.users().collect();
        Ok(Self {
            subset,
            n_total: params.n_users(),
            service_rates: users.iter().map(|&i| params.service_rates()[i]).collect(),
            users,
            flip_prob: params.flip_prob(),
            post_busy_prob: params.post_busy_prob(),
            sampling_cost: params.sampling_cost(),
            policy,
        })
    }

    /// Randomized subsystem; `schedule_dist` has length N and is supported
    /// exactly on `subset`.
    pub fn randomized(
        params: &SystemParams,
        subset: SubsetKey,
        mu: f64,
        schedule_dist: &[f64],
    ) -> Result<Self> {
        check_mu(mu)?;
        validate_schedule_dist(schedule_dist, subset, params.n_users())?;
        let pi = subset.users().map(|i| schedule_dist[i]).collect();
        Self::base(params, subset, SubsystemPolicy::Randomized { mu, pi })
    }

    pub fn max_age(params: &SystemParams, subset: SubsetKey, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        Self::base(params, subset, SubsystemPolicy::MaxAge { mu })
    }

    pub fn kind(&self) -> SchedulerKind {
        match self.policy {
            SubsystemPolicy::Randomized { .. } => SchedulerKind::AdaptiveRandomized,
            SubsystemPolicy::MaxAge { .. } => SchedulerKind::MaxAge,
        }
    }

    pub fn mu(&self) -> f64 {
        match self.policy {
            SubsystemPolicy::Randomized { mu, .. } | SubsystemPolicy::MaxAge { mu } => mu,
        }
    }

    fn position(&self, user: usize) -> Result<usize> {
        self.users.iter().position(|&u| u == user).ok_or_else(|| {
            Error::InvalidArgument(format!("user {} is not in subset {}", user + 1, self.subset))
        })
    }

    fn randomized_parts(&self) -> Result<(f64, &[f64])> {
        match &self.policy {
            SubsystemPolicy::Randomized { mu, pi } => Ok((*mu, pi)),
            SubsystemPolicy::MaxAge { .. } => Err(Error::InvalidArgument(
                "expected a randomized subsystem, got max-age".into(),
            )),
        }
    }

    fn n_eff(&self, interp: NInterp) -> f64 {
        match interp {
            NInterp::CardinalityOfS => self.users.len() as f64,
            NInterp::TotalN => self.n_total as f64,
        }
    }
}

/// `p* = q / (1 - (1-2q)(1-mu))`.
pub fn p_star(flip_prob: f64, mu: f64) -> f64 {
    flip_prob / (1.0 - (1.0 - 2.0 * flip_prob) * (1.0 - mu))
}

/// `p1* = s (1-mu) p* + (1-s)(1 - (1-mu) p*)`.
pub fn p1_star(flip_prob: f64, post_busy_prob: f64, mu: f64) -> f64 {
    let ps = p_star(flip_prob, mu);
    let s = post_busy_prob;
    s * (1.0 - mu) * ps + (1.0 - s) * (1.0 - (1.0 - mu) * ps)
}

/// `sum_i pi_i / q_i`.
pub fn eta_bar(pi: &[f64], service_rates: &[f64]) -> f64 {
    pi.iter().zip(service_rates).map(|(p, q)| p / q).sum()
}

/// Age of the user at position `k` of a backlogged randomized subsystem.
/// Slice-level form of [`age_randomized`].
pub fn randomized_age(mu: f64, pi: &[f64], service_rates: &[f64], q: f64, s: f64, k: usize) -> f64 {
    let pk = pi[k];
    let qk = service_rates[k];
    let eb = eta_bar(pi, service_rates);
    let ek = eb - pk / qk;
    let gap = 2.0 * (1.0 / mu - 1.0);
    let psi = ek + pk + gap + s / q;
    let tail: f64 = pi.iter().zip(service_rates).map(|(p, qi)| p * (1.0 - qi) / (qi * qi)).sum();
    let numer = psi * psi / pk + (1.0 / qk + (1.0 - s) / q - 2.0) * psi
        + ((1.0 - s) * (1.0 - pk - ek) - 1.0 / mu) / q
        - pk * (1.0 - qk) / qk
        + tail;
    numer / (s / q + gap + eb) + 1.0
}

/// Upper bound `(L+1) mu / p* / (1/(mu p*) + eta_bar)`.
pub fn randomized_sampling_ub(mu: f64, eta_bar: f64, q: f64, sampling_cost: f64) -> f64 {
    let ps = p_star(q, mu);
    (sampling_cost + 1.0) * mu / ps / (1.0 / (mu * ps) + eta_bar)
}

/// `(alpha, beta1, beta2)` for max-age scheduling.
pub fn max_age_moments(mu: f64, q: f64, s: f64, form: Beta2Form) -> (f64, f64, f64) {
    let alpha = 1.0 - mu + mu / q;
    let beta1 = ((1.0 - mu) + s * mu / q + 1.0) / mu;
    let scale = match form {
        Beta2Form::Renewal => mu * mu,
        Beta2Form::SinglePower => mu,
    };
    // 2 (1-mu)/scale * (s/(1-mu) a^2 + rest) with the (1-mu) cancelled
    // analytically, so mu = 1 needs no special case.
    let rest = alpha - s - mu * (1.0 - s) + 3.0;
    let beta2 = 2.0 * (s * alpha * alpha + (1.0 - mu) * rest) / scale + beta1;
    (alpha, beta1, beta2)
}

/// Common age under max-age scheduling. Slice-level form of
/// [`age_max_age`].
pub fn max_age_age(mu: f64, service_rates: &[f64], q: f64, s: f64, n: f64, form: Beta2Form) -> f64 {
    let (_, b1, b2) = max_age_moments(mu, q, s, form);
    let s1: f64 = service_rates.iter().map(|qi| (1.0 - qi) / (qi * qi)).sum();
    let s2: f64 = service_rates.iter().map(|qi| (1.0 - qi) / qi).sum();
    let mean_cycle = n * b1 + s2;
    (n * (b2 - b1 * b1) + s1) / (2.0 * mean_cycle) + 0.5 * (mean_cycle + 1.0)
}

/// Exact sampling cost under max-age scheduling. Slice-level form of
/// [`sampling_max_age`].
pub fn max_age_sampling(mu: f64, service_rates: &[f64], q: f64, s: f64, l: f64, n: f64) -> f64 {
    let ps = p_star(q, mu);
    let p1 = p1_star(q, s, mu);
    let s2: f64 = service_rates.iter().map(|qi| (1.0 - qi) / qi).sum();
    let denom = n * ((1.0 - mu) + s * mu / q + 1.0) + mu * s2;
    mu * n * l / denom * (p1 + (1.0 - p1) * (1.0 + ps) / ps)
}

/// Average age of user `k` (zero-based, must be in the subset) under a
/// stationary randomized policy.
pub fn age_randomized(sys: &Subsystem, k: usize) -> Result<f64> {
    let (mu, pi) = sys.randomized_parts()?;
    let pos = sys.position(k)?;
    if pi[pos] <= 0.0 {
        return Err(Error::InvalidArgument(format!("pi_{} must be positive", k + 1)));
    }
    Ok(randomized_age(mu, pi, &sys.service_rates, sys.flip_prob, sys.post_busy_prob, pos))
}

/// Upper bound on the sampling cost of a stationary randomized policy.
pub fn sampling_bound_randomized(sys: &Subsystem) -> Result<f64> {
    let (mu, pi) = sys.randomized_parts()?;
    let eb = eta_bar(pi, &sys.service_rates);
    Ok(randomized_sampling_ub(mu, eb, sys.flip_prob, sys.sampling_cost))
}

/// Average age of user `k` under max-age scheduling. The value is the same
/// for every member of the subset.
pub fn age_max_age(sys: &Subsystem, k: usize, opts: MaxAgeOptions) -> Result<f64> {
    sys.position(k)?;
    let mu = sys.mu();
    Ok(max_age_age(
        mu,
        &sys.service_rates,
        sys.flip_prob,
        sys.post_busy_prob,
        sys.n_eff(opts.n_interp),
        opts.beta2,
    ))
}

/// Exact sampling cost under max-age scheduling (`p*` evaluated at the
/// max-age sampling probability).
pub fn sampling_max_age(sys: &Subsystem, n_interp: NInterp) -> Result<f64> {
    Ok(max_age_sampling(
        sys.mu(),
        &sys.service_rates,
        sys.flip_prob,
        sys.post_busy_prob,
        sys.sampling_cost,
        sys.n_eff(n_interp),
    ))
}

/// Piecewise `chi(q, s)`; `1 - chi` lower-bounds the probability that a
/// sample finds the machine free.
pub fn chi(q: f64, s: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0 && s > 0.0 && s < 1.0) {
        return Err(Error::InvalidArgument(format!("chi needs q, s in (0,1), got q={q}, s={s}")));
    }
    let d = 1.0 - 2.0 * q;
    Ok(if q <= 0.5 {
        1.0 - q
    } else if s <= 0.5 {
        (d * d.min(2.0 * s - 1.0) + 1.0) / 2.0
    } else {
        (d * d * (2.0 * s - 1.0) + 1.0) / 2.0
    })
}

/// Sum of the per-user ages plus the sampling upper bound, for a
/// randomized subsystem.
pub fn total_cost_randomized(sys: &Subsystem) -> Result<f64> {
    let mut total = sampling_bound_randomized(sys)?;
    for &k in &sys.users {
        total += age_randomized(sys, k)?;
    }
    Ok(total)
}

/// Sum of the per-user ages plus the exact sampling cost, for a max-age
/// subsystem.
pub fn total_cost_maxage(sys: &Subsystem, opts: MaxAgeOptions) -> Result<f64> {
    let mut total = sampling_max_age(sys, opts.n_interp)?;
    for &k in &sys.users {
        total += age_max_age(sys, k, opts)?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingTag {
    UpperBound,
    Exact,
}

impl SamplingTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingTag::UpperBound => "upper_bound",
            SamplingTag::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserAge {
    /// Zero-based user index.
    pub user: usize,
    pub age: f64,
}

/// Intermediate quantities; fields that do not apply to the policy family
/// are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Auxiliaries {
    pub p_star: f64,
    pub eta_bar: Option<f64>,
    pub eta: Option<Vec<f64>>,
    pub psi: Option<Vec<f64>>,
    pub p1_star: Option<f64>,
    pub alpha: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormReport {
    pub subset: SubsetKey,
    pub kind: SchedulerKind,
    pub mu: f64,
    pub ages: Vec<UserAge>,
    pub sampling_cost: f64,
    pub sampling_tag: SamplingTag,
    /// Sum of ages plus sampling cost (the optimization objective).
    pub objective: f64,
    pub aux: Auxiliaries,
    pub options: MaxAgeOptions,
}

impl ClosedFormReport {
    /// Ages below one slot are impossible; callers should surface them.
    pub fn ages_below_one(&self) -> Vec<&UserAge> {
        self.ages.iter().filter(|a| a.age < 1.0).collect()
    }
}

pub fn closed_form_report(sys: &Subsystem, opts: MaxAgeOptions) -> Result<ClosedFormReport> {
    let (q, s) = (sys.flip_prob, sys.post_busy_prob);
    let mu = sys.mu();
    let (ages, sampling_cost, sampling_tag, aux) = match &sys.policy {
        SubsystemPolicy::Randomized { pi, .. } => {
            let eb = eta_bar(pi, &sys.service_rates);
            let eta: Vec<f64> =
                pi.iter().zip(&sys.service_rates).map(|(p, qi)| eb - p / qi).collect();
            let psi = eta
                .iter()
                .zip(pi)
                .map(|(e, p)| e + p + 2.0 * (1.0 / mu - 1.0) + s / q)
                .collect();
            let ages = sys
                .users
                .iter()
                .map(|&u| Ok(UserAge { user: u, age: age_randomized(sys, u)? }))
                .collect::<Result<Vec<_>>>()?;
            let aux = Auxiliaries {
                p_star: p_star(q, mu),
                eta_bar: Some(eb),
                eta: Some(eta),
                psi: Some(psi),
                ..Auxiliaries::default()
            };
            (ages, sampling_bound_randomized(sys)?, SamplingTag::UpperBound, aux)
        }
        SubsystemPolicy::MaxAge { .. } => {
            let (alpha, beta1, beta2) = max_age_moments(mu, q, s, opts.beta2);
            let ages = sys
                .users
                .iter()
                .map(|&u| Ok(UserAge { user: u, age: age_max_age(sys, u, opts)? }))
                .collect::<Result<Vec<_>>>()?;
            let aux = Auxiliaries {
                p_star: p_star(q, mu),
                p1_star: Some(p1_star(q, s, mu)),
                alpha: Some(alpha),
                beta1: Some(beta1),
                beta2: Some(beta2),
                ..Auxiliaries::default()
            };
            (ages, sampling_max_age(sys, opts.n_interp)?, SamplingTag::Exact, aux)
        }
    };
    let objective = ages.iter().map(|a| a.age).sum::<f64>() + sampling_cost;
    Ok(ClosedFormReport {
        subset: sys.subset,
        kind: sys.kind(),
        mu,
        ages,
        sampling_cost,
        sampling_tag,
        objective,
        aux,
        options: opts,
    })
}
