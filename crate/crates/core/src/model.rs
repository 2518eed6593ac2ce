//! Domain types shared by every other module.
//!
//! Users are indexed from zero internally. Anything printed for humans
//! (`Display`, CSV `subset` columns) uses the one-based labels `{1,3}`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of users for which all `2^N - 1` subsets are
/// enumerated.
pub const DEFAULT_SUBSET_CAP: usize = 12;

/// Hard ceiling imposed by the `u32` bitmask.
pub const MAX_USERS: usize = 31;

/// Largest N for which a dense policy table is allocated.
pub const MAX_TABLE_USERS: usize = 20;

const PROB_SUM_TOL: f64 = 1e-12;

/// Unvalidated system parameters, as read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub n_users: usize,
    pub arrival_rates: Vec<f64>,
    pub service_rates: Vec<f64>,
    pub flip_prob: f64,
    pub post_busy_prob: f64,
    pub sampling_cost: f64,
}

/// Validated model constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemParams {
    n_users: usize,
    arrival_rates: Vec<f64>,
    service_rates: Vec<f64>,
    flip_prob: f64,
    post_busy_prob: f64,
    sampling_cost: f64,
}

impl SystemParams {
    pub fn new(
        arrival_rates: Vec<f64>,
        service_rates: Vec<f64>,
        flip_prob: f64,
        post_busy_prob: f64,
        sampling_cost: f64,
    ) -> Result<Self> {
        validate_params(&RawParams {
            n_users: arrival_rates.len(),
            arrival_rates,
            service_rates,
            flip_prob,
            post_busy_prob,
            sampling_cost,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn arrival_rates(&self) -> &[f64] {
        &self.arrival_rates
    }

    pub fn service_rates(&self) -> &[f64] {
        &self.service_rates
    }

    /// Machine free <-> internally-busy transition probability `q`.
    pub fn flip_prob(&self) -> f64 {
        self.flip_prob
    }

    /// Probability `s` that the machine is internally busy right after a
    /// completion.
    pub fn post_busy_prob(&self) -> f64 {
        self.post_busy_prob
    }

    pub fn sampling_cost(&self) -> f64 {
        self.sampling_cost
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.arrival_rates.iter().sum()
    }

    pub fn min_service_rate(&self) -> f64 {
        self.service_rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Copy of `self` with new arrival rates (validated with the same rules).
    pub fn with_arrival_rates(&self, arrival_rates: Vec<f64>, allow_zero: bool) -> Result<Self> {
        let raw = RawParams {
            n_users: self.n_users,
            arrival_rates,
            service_rates: self.service_rates.clone(),
            flip_prob: self.flip_prob,
            post_busy_prob: self.post_busy_prob,
            sampling_cost: self.sampling_cost,
        };
        if allow_zero {
            validate_params_allow_zero_arrivals(&raw)
        } else {
            validate_params(&raw)
        }
    }

    /// Copy of `self` with a new machine flip probability.
    pub fn with_flip_prob(&self, flip_prob: f64) -> Result<Self> {
        let mut raw = self.to_raw();
        raw.flip_prob = flip_prob;
        check(&raw, false)
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            n_users: self.n_users,
            arrival_rates: self.arrival_rates.clone(),
            service_rates: self.service_rates.clone(),
            flip_prob: self.flip_prob,
            post_busy_prob: self.post_busy_prob,
            sampling_cost: self.sampling_cost,
        }
    }
}

/// Validates a raw parameter record.
///
/// Arrival rates must be strictly positive; use
/// [`validate_params_allow_zero_arrivals`] for degenerate sanity studies.
pub fn validate_params(raw: &RawParams) -> Result<SystemParams> {
    check(raw, false)
}

/// Same as [`validate_params`] but admits `p_i = 0` (users that never
/// submit jobs).
pub fn validate_params_allow_zero_arrivals(raw: &RawParams) -> Result<SystemParams> {
    check(raw, true)
}

fn check(raw: &RawParams, allow_zero_arrivals: bool) -> Result<SystemParams> {
    let bad = |msg: String| Err(Error::InvalidParams(msg));
    let n = raw.n_users;
    if n == 0 {
        return bad("N must be at least 1".into());
    }
    if n > MAX_USERS {
        return bad(format!("N = {n} exceeds the supported maximum of {MAX_USERS}"));
    }
    if raw.arrival_rates.len() != n {
        return bad(format!(
            "arrival_rates has length {}, expected N = {n}",
            raw.arrival_rates.len()
        ));
    }
    if raw.service_rates.len() != n {
        return bad(format!(
            "service_rates has length {}, expected N = {n}",
            raw.service_rates.len()
        ));
    }
    for (i, &p) in raw.arrival_rates.iter().enumerate() {
        if !p.is_finite() || !(0.0..1.0).contains(&p) || (p == 0.0 && !allow_zero_arrivals) {
            if p == 0.0 {
                return bad(format!("arrival rate must be positive (user {}: p = 0)", i + 1));
            }
            return bad(format!("arrival rate of user {} must lie in (0,1), got {p}", i + 1));
        }
    }
    for (i, &qi) in raw.service_rates.iter().enumerate() {
        if !qi.is_finite() || qi <= 0.0 || qi > 1.0 {
            return bad(format!("service rate of user {} must lie in (0,1], got {qi}", i + 1));
        }
    }
    if !(raw.flip_prob > 0.0 && raw.flip_prob < 1.0) {
        return bad(format!("flip probability q must lie in (0,1), got {}", raw.flip_prob));
    }
    if !(raw.post_busy_prob > 0.0 && raw.post_busy_prob < 1.0) {
        return bad(format!(
            "post-completion busy probability s must lie in (0,1), got {}",
            raw.post_busy_prob
        ));
    }
    if !(raw.sampling_cost >= 0.0 && raw.sampling_cost.is_finite()) {
        return bad(format!("sampling cost L must be finite and >= 0, got {}", raw.sampling_cost));
    }
    Ok(SystemParams {
        n_users: n,
        arrival_rates: raw.arrival_rates.clone(),
        service_rates: raw.service_rates.clone(),
        flip_prob: raw.flip_prob,
        post_busy_prob: raw.post_busy_prob,
        sampling_cost: raw.sampling_cost,
    })
}

/// A non-empty set of users, stored as a bitmask (bit `i` set iff user `i`
/// is a member).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct SubsetKey(u32);

impl SubsetKey {
    /// Builds a key for a system with `n_users` users.
    pub fn new(mask: u32, n_users: usize) -> Result<Self> {
        if mask == 0 {
            return Err(Error::InvalidSubset("subset must be non-empty".into()));
        }
        if n_users < 32 && mask >> n_users != 0 {
            return Err(Error::InvalidSubset(format!(
                "mask {mask:#b} references users beyond N = {n_users}"
            )));
        }
        Ok(Self(mask))
    }

    /// Key from zero-based user indices.
    pub fn from_users<I: IntoIterator<Item = usize>>(users: I, n_users: usize) -> Result<Self> {
        let mut mask = 0u32;
        for u in users {
            if u >= n_users {
                return Err(Error::InvalidSubset(format!(
                    "user index {} out of range for N = {n_users}",
                    u + 1
                )));
            }
            mask |= 1 << u;
        }
        Self::new(mask, n_users)
    }

    /// Key from one-based user labels, as written in configuration files.
    pub fn from_labels(labels: &[usize], n_users: usize) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidSubset("user labels are one-based".into()));
        }
        Self::from_users(labels.iter().map(|l| l - 1), n_users)
    }

    pub fn full(n_users: usize) -> Self {
        debug_assert!((1..=MAX_USERS).contains(&n_users));
        Self(((1u64 << n_users) - 1) as u32)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn contains(self, user: usize) -> bool {
        user < 32 && self.0 & (1 << user) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Always false; a key is non-empty by construction.
    pub fn is_empty(self) -> bool {
        false
    }

    /// Zero-based member indices in ascending order.
    pub fn users(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..32usize).filter(move |&i| mask & (1 << i) != 0)
    }
}

impl TryFrom<u32> for SubsetKey {
    type Error = Error;

    fn try_from(mask: u32) -> Result<Self> {
        Self::new(mask, 32)
    }
}

impl From<SubsetKey> for u32 {
    fn from(key: SubsetKey) -> u32 {
        key.0
    }
}

impl fmt::Display for SubsetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, u) in self.users().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", u + 1)?;
        }
        f.write_str("}")
    }
}

/// All `2^N - 1` non-empty subsets in ascending mask order.
pub fn enumerate_subsets(n_users: usize, cap: usize) -> Result<Vec<SubsetKey>> {
    if n_users == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if n_users > cap || n_users > MAX_USERS {
        return Err(Error::SubsetCapExceeded {
            n: n_users,
            cap: cap.min(MAX_USERS),
            subsets: (1u64 << n_users.min(63)) - 1,
        });
    }
    let top = (1u64 << n_users) as u32;
    Ok((1..top).map(SubsetKey).collect())
}

/// Users with a non-empty queue, or `None` when every queue is empty.
pub fn active_set(queues: &[u64]) -> Option<SubsetKey> {
    let mask = queues
        .iter()
        .enumerate()
        .filter(|(_, &q)| q > 0)
        .fold(0u32, |m, (i, _)| m | (1 << i));
    (mask != 0).then_some(SubsetKey(mask))
}

/// How the server picks a user once a sample finds the machine free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    AdaptiveRandomized,
    MaxAge,
}

impl SchedulerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchedulerKind::AdaptiveRandomized => "adaptive_randomized",
            SchedulerKind::MaxAge => "max_age",
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampling probability and (for randomized scheduling) the user
/// distribution applied while the active set equals one particular subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetPolicy {
    pub sampling_prob: f64,
    /// Length-N distribution, supported exactly on the subset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_dist: Option<Vec<f64>>,
}

impl SubsetPolicy {
    pub fn randomized(sampling_prob: f64, schedule_dist: Vec<f64>) -> Self {
        Self { sampling_prob, schedule_dist: Some(schedule_dist) }
    }

    pub fn sampling_only(sampling_prob: f64) -> Self {
        Self { sampling_prob, schedule_dist: None }
    }

    fn validate(&self, key: SubsetKey, n_users: usize, kind: SchedulerKind) -> Result<()> {
        let mu = self.sampling_prob;
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidPolicy(format!(
                "sampling probability for {key} must lie in (0,1], got {mu}"
            )));
        }
        match (&self.schedule_dist, kind) {
            (None, SchedulerKind::MaxAge) => Ok(()),
            (Some(_), SchedulerKind::MaxAge) => Err(Error::InvalidPolicy(format!(
                "max-age policy entry for {key} must not carry a schedule distribution"
            ))),
            (None, SchedulerKind::AdaptiveRandomized) => Err(Error::InvalidPolicy(format!(
                "randomized policy entry for {key} is missing its schedule distribution"
            ))),
            (Some(dist), SchedulerKind::AdaptiveRandomized) => {
                validate_schedule_dist(dist, key, n_users)
            }
        }
    }
}

/// Checks that `dist` is a length-N distribution supported exactly on `key`.
pub fn validate_schedule_dist(dist: &[f64], key: SubsetKey, n_users: usize) -> Result<()> {
    if dist.len() != n_users {
        return Err(Error::InvalidPolicy(format!(
            "schedule distribution for {key} has length {}, expected {n_users}",
            dist.len()
        )));
    }
    let mut sum = 0.0;
    for (i, &w) in dist.iter().enumerate() {
        let inside = key.contains(i);
        if !w.is_finite() || (inside && w <= 0.0) || (!inside && w != 0.0) || w > 1.0 {
            return Err(Error::InvalidPolicy(format!(
                "schedule distribution for {key}: user {} has weight {w} \
                 (must be > 0 inside the subset and 0 outside)",
                i + 1
            )));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(Error::InvalidPolicy(format!(
            "schedule distribution for {key} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Subset-indexed policy table plus the scheduler rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct AdaptivePolicy {
    n_users: usize,
    kind: SchedulerKind,
    // indexed by mask; slot 0 is always None
    table: Vec<Option<SubsetPolicy>>,
}

impl AdaptivePolicy {
    pub fn new(n_users: usize, kind: SchedulerKind) -> Result<Self> {
        if n_users == 0 || n_users > MAX_TABLE_USERS {
            return Err(Error::InvalidPolicy(format!(
                "policy tables support 1..={MAX_TABLE_USERS} users, got {n_users}"
            )));
        }
        Ok(Self { n_users, kind, table: vec![None; 1 << n_users] })
    }

    /// Same sampling probability everywhere; uniform scheduling over each
    /// subset for the randomized kind.
    pub fn uniform(n_users: usize, kind: SchedulerKind, sampling_prob: f64) -> Result<Self> {
        let mut policy = Self::new(n_users, kind)?;
        for key in enumerate_subsets(n_users, MAX_TABLE_USERS)? {
            let entry = match kind {
                SchedulerKind::MaxAge => SubsetPolicy::sampling_only(sampling_prob),
                SchedulerKind::AdaptiveRandomized => {
                    let w = 1.0 / key.len() as f64;
                    let dist = (0..n_users).map(|i| if key.contains(i) { w } else { 0.0 }).collect();
                    SubsetPolicy::randomized(sampling_prob, dist)
                }
            };
            policy.insert(key, entry)?;
        }
        Ok(policy)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn insert(&mut self, key: SubsetKey, entry: SubsetPolicy) -> Result<()> {
        SubsetKey::new(key.mask(), self.n_users)?;
        entry.validate(key, self.n_users, self.kind)?;
        self.table[key.mask() as usize] = Some(entry);
        Ok(())
    }

    pub fn get(&self, key: SubsetKey) -> Option<&SubsetPolicy> {
        self.table.get(key.mask() as usize).and_then(Option::as_ref)
    }

    pub fn require(&self, key: SubsetKey) -> Result<&SubsetPolicy> {
        self.get(key).ok_or(Error::MissingSubset(key))
    }

    /// True when every non-empty subset has an entry.
    pub fn is_complete(&self) -> bool {
        self.table.iter().skip(1).all(Option::is_some)
    }

    pub fn first_missing(&self) -> Option<SubsetKey> {
        self.table
            .iter()
            .enumerate()
            .skip(1)
            .find(|(_, e)| e.is_none())
            .map(|(m, _)| SubsetKey(m as u32))
    }

    /// Entries in ascending mask order.
    pub fn entries(&self) -> impl Iterator<Item = (SubsetKey, &SubsetPolicy)> {
        self.table
            .iter()
            .enumerate()
            .filter_map(|(m, e)| e.as_ref().map(|e| (SubsetKey(m as u32), e)))
    }

    /// Smallest sampling probability across the table.
    pub fn min_sampling_prob(&self) -> Option<f64> {
        self.entries().map(|(_, e)| e.sampling_prob).reduce(f64::min)
    }

    /// Max-age policy carrying this table's sampling probabilities.
    pub fn to_max_age(&self) -> Self {
        let table = self
            .table
            .iter()
            .map(|e| e.as_ref().map(|e| SubsetPolicy::sampling_only(e.sampling_prob)))
            .collect();
        Self { n_users: self.n_users, kind: SchedulerKind::MaxAge, table }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    n_users: usize,
    kind: SchedulerKind,
    entries: Vec<PolicyFileEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFileEntry {
    subset_mask: u32,
    sampling_prob: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule_dist: Option<Vec<f64>>,
}

impl TryFrom<PolicyFile> for AdaptivePolicy {
    type Error = Error;

    fn try_from(file: PolicyFile) -> Result<Self> {
        let mut policy = AdaptivePolicy::new(file.n_users, file.kind)?;
        for e in file.entries {
            let key = SubsetKey::new(e.subset_mask, file.n_users)?;
            policy.insert(
                key,
                SubsetPolicy { sampling_prob: e.sampling_prob, schedule_dist: e.schedule_dist },
            )?;
        }
        Ok(policy)
    }
}

impl From<AdaptivePolicy> for PolicyFile {
    fn from(policy: AdaptivePolicy) -> Self {
        let entries = policy
            .entries()
            .map(|(k, e)| PolicyFileEntry {
                subset_mask: k.mask(),
                sampling_prob: e.sampling_prob,
                schedule_dist: e.schedule_dist.clone(),
            })
            .collect();
        PolicyFile { n_users: policy.n_users, kind: policy.kind, entries }
    }
}
