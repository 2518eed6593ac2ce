//! Slot-by-slot simulation of the server, the user queues and the Markov
//! machine.
//!
//! One slot runs in a fixed order:
//!
//! 1. beginning of slot: unless the machine is serving, the server samples
//!    with probability `mu(A)` where `A` is the active set (the backlogged
//!    subset in saturated mode). A sample that finds the machine free assigns
//!    a job immediately, so that slot is the first service slot;
//! 2. every user's current age is recorded;
//! 3. end of slot: a serving machine completes w.p. `q_j` and then becomes
//!    internally busy w.p. `s` (free otherwise); an idle machine flips
//!    free <-> busy w.p. `q`;
//! 4. end of slot: Bernoulli arrivals join the queues (open mode only).
//!
//! Queues are decremented at completion, so the job in service still counts
//! toward the active set.

mod drift;

pub use drift::{drift_diagnostic, DriftReport, DriftThresholds, Verdict};

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AdaptivePolicy, SchedulerKind, SubsetKey, SystemParams};
use crate::rng::{bernoulli, RngContract, SimStreams};

/// What the machine is actually doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MachineActual {
    InternalBusy,
    Free,
    Serving(usize),
}

/// The server's last known state of the machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MachineKnowledge {
    InternalBusy,
    /// Set right after a completion, until the next sample.
    Ambiguous,
    Serving(usize),
    /// A sample found the machine free but nothing was assigned. The
    /// adaptive policies never sample on an empty active set, so this state
    /// is not reached by [`Simulator::step`].
    KnownFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    /// Stochastic arrivals and queue dynamics.
    Open,
    /// The subset's queues are permanently backlogged; other users never
    /// get service and arrivals are ignored.
    Saturated(SubsetKey),
}

/// Counters accumulated over the measured (post burn-in) slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Counters {
    pub measured_slots: u64,
    pub samples: u64,
    pub completions: Vec<u64>,
    pub age_sums: Vec<u64>,
    pub queue_sums: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Index of the next slot to execute (starts at 1).
    pub slot: u64,
    pub queues: Vec<u64>,
    pub ages: Vec<u64>,
    pub actual: MachineActual,
    pub knowledge: MachineKnowledge,
    pub mode: Mode,
    pub arrivals_total: Vec<u64>,
    pub completions_total: Vec<u64>,
    pub counters: Counters,
}

/// Events of one executed slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotOutcome {
    pub slot: u64,
    pub sampled: bool,
    pub assigned: Option<usize>,
    pub completed: Option<usize>,
    /// Bitmask of users that received an arrival at the end of the slot.
    pub arrivals: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TracePoint {
    pub slot: u64,
    pub total_queue: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: u64,
    pub seed: u64,
    pub mode: Mode,
    /// Leading slots excluded from the averages.
    pub burn_in: u64,
    /// Record `(slot, sum Q_i)` every `stride` slots.
    pub trace_stride: Option<u64>,
}

impl SimConfig {
    pub fn new(horizon: u64, seed: u64, mode: Mode) -> Self {
        Self { horizon, seed, mode, burn_in: 0, trace_stride: None }
    }

    pub fn with_burn_in(mut self, burn_in: u64) -> Self {
        self.burn_in = burn_in;
        self
    }

    /// Burn-in as a fraction of the horizon.
    pub fn with_burn_in_fraction(mut self, fraction: f64) -> Self {
        self.burn_in = (self.horizon as f64 * fraction.clamp(0.0, 1.0)).floor() as u64;
        self
    }

    pub fn with_trace(mut self, stride: u64) -> Self {
        self.trace_stride = Some(stride.max(1));
        self
    }
}

/// Time-average estimates from one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimMetrics {
    pub horizon: u64,
    pub burn_in: u64,
    pub measured_slots: u64,
    pub delta_hat: Vec<f64>,
    pub samples: u64,
    pub sampling_cost: f64,
    /// `(1/N) sum_i delta_hat_i + sampling_cost`.
    pub total_cost: f64,
    pub completion_rate: Vec<f64>,
    pub mean_queue: Vec<f64>,
    pub arrivals_total: Vec<u64>,
    pub completions_total: Vec<u64>,
    pub final_queues: Vec<u64>,
    pub trace: Vec<TracePoint>,
}

impl SimMetrics {
    pub fn mean_age(&self) -> f64 {
        self.delta_hat.iter().sum::<f64>() / self.delta_hat.len() as f64
    }
}

/// Highest age within `active`; ties go to the lowest index.
pub fn max_age_select(ages: &[u64], active: SubsetKey) -> usize {
    let mut best: Option<usize> = None;
    for i in active.users() {
        match best {
            Some(b) if ages[b] >= ages[i] => {}
            _ => best = Some(i),
        }
    }
    best.expect("active set is non-empty")
}

pub struct Simulator<'a> {
    params: &'a SystemParams,
    policy: &'a AdaptivePolicy,
    streams: SimStreams,
    state: SimState,
    active_mask: u32,
    burn_in: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(
        params: &'a SystemParams,
        policy: &'a AdaptivePolicy,
        mode: Mode,
        seed: u64,
    ) -> Result<Self> {
        let n = params.n_users();
        if policy.n_users() != n {
            return Err(Error::InvalidPolicy(format!(
                "policy is for N = {}, system has N = {n}",
                policy.n_users()
            )));
        }
        match mode {
            Mode::Open => {
                if let Some(missing) = policy.first_missing() {
                    return Err(Error::MissingSubset(missing));
                }
            }
            Mode::Saturated(key) => {
                SubsetKey::new(key.mask(), n)?;
                policy.require(key)?;
            }
        }
        let mut streams = SimStreams::new(RngContract::new(seed), n);
        let actual = if bernoulli(&mut streams.machine_flip, 0.5) {
            MachineActual::Free
        } else {
            MachineActual::InternalBusy
        };
        let state = SimState {
            slot: 1,
            queues: vec![0; n],
            ages: vec![1; n],
            actual,
            knowledge: MachineKnowledge::Ambiguous,
            mode,
            arrivals_total: vec![0; n],
            completions_total: vec![0; n],
            counters: Counters {
                completions: vec![0; n],
                age_sums: vec![0; n],
                queue_sums: vec![0; n],
                ..Counters::default()
            },
        };
        Ok(Self { params, policy, streams, state, active_mask: 0, burn_in: 0 })
    }

    /// Slots `1..=burn_in` are executed but not counted.
    pub fn set_burn_in(&mut self, burn_in: u64) {
        self.burn_in = burn_in;
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    fn active(&self) -> Option<SubsetKey> {
        match self.state.mode {
            Mode::Saturated(key) => Some(key),
            Mode::Open => SubsetKey::new(self.active_mask, self.params.n_users()).ok(),
        }
    }

    /// Executes one slot.
    pub fn step(&mut self) -> SlotOutcome {
        let mut out = SlotOutcome { slot: self.state.slot, ..SlotOutcome::default() };
        let measured = self.state.slot > self.burn_in;

        // (a) sampling and assignment
        if !matches!(self.state.actual, MachineActual::Serving(_)) {
            if let Some(active) = self.active() {
                let entry = self.policy.get(active).expect("policy covers the active set");
                if bernoulli(&mut self.streams.sampling_decision, entry.sampling_prob) {
                    out.sampled = true;
                    if measured {
                        self.state.counters.samples += 1;
                    }
                    match self.state.actual {
                        MachineActual::Free => {
                            let user = match self.policy.kind() {
                                SchedulerKind::MaxAge => max_age_select(&self.state.ages, active),
                                SchedulerKind::AdaptiveRandomized => {
                                    let dist = entry.schedule_dist.as_deref().expect("randomized");
                                    draw_user(&mut self.streams.schedule_choice, dist, active)
                                }
                            };
                            assert!(
                                matches!(self.state.mode, Mode::Saturated(_))
                                    || self.state.queues[user] > 0,
                                "slot {}: scheduled user {} with an empty queue",
                                self.state.slot,
                                user + 1
                            );
                            self.state.actual = MachineActual::Serving(user);
                            self.state.knowledge = MachineKnowledge::Serving(user);
                            out.assigned = Some(user);
                        }
                        MachineActual::InternalBusy => {
                            self.state.knowledge = MachineKnowledge::InternalBusy;
                        }
                        MachineActual::Serving(_) => unreachable!(),
                    }
                }
            }
        }

        // (b) ages of this slot
        if measured {
            let c = &mut self.state.counters;
            c.measured_slots += 1;
            for (sum, &v) in c.age_sums.iter_mut().zip(&self.state.ages) {
                *sum += v;
            }
            for (sum, &q) in c.queue_sums.iter_mut().zip(&self.state.queues) {
                *sum += q;
            }
        }
        for v in &mut self.state.ages {
            *v += 1;
        }

        // (c) machine transition
        match self.state.actual {
            MachineActual::Serving(j) => {
                if bernoulli(&mut self.streams.service[j], self.params.service_rates()[j]) {
                    out.completed = Some(j);
                    self.state.ages[j] = 1;
                    self.state.completions_total[j] += 1;
                    if measured {
                        self.state.counters.completions[j] += 1;
                    }
                    if self.state.mode == Mode::Open {
                        let q = &mut self.state.queues[j];
                        *q = q.checked_sub(1).expect("completion from an empty queue");
                        if *q == 0 {
                            self.active_mask &= !(1 << j);
                        }
                    }
                    self.state.actual = if bernoulli(
                        &mut self.streams.post_completion,
                        self.params.post_busy_prob(),
                    ) {
                        MachineActual::InternalBusy
                    } else {
                        MachineActual::Free
                    };
                    self.state.knowledge = MachineKnowledge::Ambiguous;
                }
            }
            idle => {
                if bernoulli(&mut self.streams.machine_flip, self.params.flip_prob()) {
                    self.state.actual = match idle {
                        MachineActual::Free => MachineActual::InternalBusy,
                        _ => MachineActual::Free,
                    };
                }
            }
        }

        // (d) arrivals
        if self.state.mode == Mode::Open {
            for (i, &p) in self.params.arrival_rates().iter().enumerate() {
                if bernoulli(&mut self.streams.arrivals[i], p) {
                    self.state.queues[i] += 1;
                    self.state.arrivals_total[i] += 1;
                    self.active_mask |= 1 << i;
                    out.arrivals |= 1 << i;
                }
            }
        }

        // (e)
        self.state.slot += 1;
        out
    }

    /// Metrics over the slots executed so far.
    pub fn metrics(&self, trace: Vec<TracePoint>) -> SimMetrics {
        let c = &self.state.counters;
        let t = c.measured_slots.max(1) as f64;
        let n = self.params.n_users() as f64;
        let delta_hat: Vec<f64> = c.age_sums.iter().map(|&s| s as f64 / t).collect();
        let sampling_cost = self.params.sampling_cost() * c.samples as f64 / t;
        let total_cost = delta_hat.iter().sum::<f64>() / n + sampling_cost;
        SimMetrics {
            horizon: self.state.slot - 1,
            burn_in: self.burn_in.min(self.state.slot - 1),
            measured_slots: c.measured_slots,
            delta_hat,
            samples: c.samples,
            sampling_cost,
            total_cost,
            completion_rate: c.completions.iter().map(|&x| x as f64 / t).collect(),
            mean_queue: c.queue_sums.iter().map(|&x| x as f64 / t).collect(),
            arrivals_total: self.state.arrivals_total.clone(),
            completions_total: self.state.completions_total.clone(),
            final_queues: self.state.queues.clone(),
            trace,
        }
    }
}

fn draw_user<R: Rng>(rng: &mut R, dist: &[f64], active: SubsetKey) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for i in active.users() {
        acc += dist[i];
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Runs `config.horizon` slots from the initial state.
pub fn run(params: &SystemParams, policy: &AdaptivePolicy, config: &SimConfig) -> Result<SimMetrics> {
    if config.horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1 slot".into()));
    }
    if config.burn_in >= config.horizon {
        return Err(Error::InvalidArgument(format!(
            "burn-in ({}) must be shorter than the horizon ({})",
            config.burn_in, config.horizon
        )));
    }
    let mut sim = Simulator::new(params, policy, config.mode, config.seed)?;
    sim.set_burn_in(config.burn_in);
    let mut trace = Vec::new();
    if let Some(stride) = config.trace_stride {
        trace.reserve((config.horizon / stride) as usize + 1);
    }
    for _ in 0..config.horizon {
        if let Some(stride) = config.trace_stride {
            let slot = sim.state.slot;
            if slot % stride == 0 {
                trace.push(TracePoint { slot, total_queue: sim.state.queues.iter().sum() });
            }
        }
        sim.step();
    }
    Ok(sim.metrics(trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_params_allow_zero_arrivals, RawParams, SubsetPolicy};

    fn singleton(q1: f64, q: f64, s: f64, l: f64) -> SystemParams {
        SystemParams::new(vec![0.1], vec![q1], q, s, l).unwrap()
    }

    fn saturated_policy(n: usize, key: SubsetKey, kind: SchedulerKind, mu: f64, pi: &[f64]) -> AdaptivePolicy {
        let mut p = AdaptivePolicy::new(n, kind).unwrap();
        let entry = match kind {
            SchedulerKind::MaxAge => SubsetPolicy::sampling_only(mu),
            SchedulerKind::AdaptiveRandomized => SubsetPolicy::randomized(mu, pi.to_vec()),
        };
        p.insert(key, entry).unwrap();
        p
    }

    #[test]
    fn max_age_examples() {
        let full = SubsetKey::full(4);
        assert_eq!(max_age_select(&[5, 9, 2, 9], full), 1);
        assert_eq!(max_age_select(&[7, 7], SubsetKey::full(2)), 0);
        let a = SubsetKey::from_labels(&[1, 3], 3).unwrap();
        assert_eq!(max_age_select(&[3, 100, 4], a), 2);
    }

    #[test]
    fn no_arrivals_means_no_sampling() {
        let raw = RawParams {
            n_users: 3,
            arrival_rates: vec![0.0; 3],
            service_rates: vec![0.5, 0.6, 0.7],
            flip_prob: 0.3,
            post_busy_prob: 0.4,
            sampling_cost: 5.0,
        };
        let params = validate_params_allow_zero_arrivals(&raw).unwrap();
        for kind in [SchedulerKind::AdaptiveRandomized, SchedulerKind::MaxAge] {
            let policy = AdaptivePolicy::uniform(3, kind, 1.0).unwrap();
            let mut sim = Simulator::new(&params, &policy, Mode::Open, 9).unwrap();
            for t in 1..=500u64 {
                assert_eq!(sim.state().ages, vec![t; 3]);
                let out = sim.step();
                assert!(!out.sampled);
                assert_eq!(sim.state().queues, vec![0; 3]);
            }
            let m = run(&params, &policy, &SimConfig::new(500, 9, Mode::Open)).unwrap();
            assert_eq!(m.samples, 0);
            // v_i(t) = t, so the average is (T + 1) / 2
            assert!(m.delta_hat.iter().all(|&d| (d - 250.5).abs() < 1e-12));
        }
    }

    #[test]
    fn single_slot_horizon() {
        let params = SystemParams::new(vec![0.3, 0.2], vec![0.5, 0.9], 0.5, 0.5, 2.0).unwrap();
        let policy = AdaptivePolicy::uniform(2, SchedulerKind::MaxAge, 0.5).unwrap();
        let m = run(&params, &policy, &SimConfig::new(1, 3, Mode::Open)).unwrap();
        assert_eq!(m.delta_hat, vec![1.0, 1.0]);
        assert_eq!(m.measured_slots, 1);
    }

    #[test]
    fn rejects_bad_configs() {
        let params = singleton(1.0, 0.5, 0.5, 5.0);
        let policy = AdaptivePolicy::uniform(1, SchedulerKind::MaxAge, 1.0).unwrap();
        assert!(run(&params, &policy, &SimConfig::new(0, 1, Mode::Open)).is_err());
        assert!(run(&params, &policy, &SimConfig::new(10, 1, Mode::Open).with_burn_in(10)).is_err());
        let partial = AdaptivePolicy::new(1, SchedulerKind::MaxAge).unwrap();
        assert!(matches!(
            Simulator::new(&params, &partial, Mode::Open, 1),
            Err(Error::MissingSubset(_))
        ));
    }

    #[test]
    fn saturated_singleton_renewal_values() {
        // cycle: assignment slot, then with prob s a Geom(q) busy spell
        let params = singleton(1.0, 0.5, 0.5, 5.0);
        let key = SubsetKey::full(1);
        let policy = saturated_policy(1, key, SchedulerKind::AdaptiveRandomized, 1.0, &[1.0]);
        let m = run(&params, &policy, &SimConfig::new(1_000_000, 11, Mode::Saturated(key))).unwrap();
        assert!((m.delta_hat[0] - 2.0).abs() < 0.01, "{}", m.delta_hat[0]);
        assert!((m.sampling_cost - 5.0).abs() < 0.02, "{}", m.sampling_cost);
    }

    #[test]
    fn max_age_and_randomized_agree_on_singleton() {
        let params = SystemParams::new(vec![0.1, 0.1], vec![0.6, 0.3], 0.4, 0.6, 3.0).unwrap();
        let key = SubsetKey::from_labels(&[2], 2).unwrap();
        let a = saturated_policy(2, key, SchedulerKind::MaxAge, 0.7, &[]);
        let b = saturated_policy(2, key, SchedulerKind::AdaptiveRandomized, 0.7, &[0.0, 1.0]);
        let cfg = SimConfig::new(50_000, 5, Mode::Saturated(key));
        assert_eq!(run(&params, &a, &cfg).unwrap(), run(&params, &b, &cfg).unwrap());
    }

    #[test]
    fn sampling_cost_bounded_by_l() {
        let params = SystemParams::new(vec![0.2, 0.3], vec![0.9, 0.8], 0.5, 0.5, 4.0).unwrap();
        let policy = AdaptivePolicy::uniform(2, SchedulerKind::AdaptiveRandomized, 1.0).unwrap();
        let m = run(&params, &policy, &SimConfig::new(20_000, 2, Mode::Open)).unwrap();
        assert!(m.sampling_cost <= 4.0 && m.sampling_cost > 0.0);
        assert!(m.delta_hat.iter().all(|&d| d >= 1.0));
        assert!(m.completion_rate.iter().all(|&r| (0.0..=1.0).contains(&r)));
    }

    #[test]
    fn burn_in_excludes_leading_slots() {
        let params = SystemParams::new(vec![0.2], vec![0.9], 0.5, 0.5, 4.0).unwrap();
        let policy = AdaptivePolicy::uniform(1, SchedulerKind::MaxAge, 0.5).unwrap();
        let m = run(&params, &policy, &SimConfig::new(1000, 2, Mode::Open).with_burn_in_fraction(0.1))
            .unwrap();
        assert_eq!(m.burn_in, 100);
        assert_eq!(m.measured_slots, 900);
        assert_eq!(m.horizon, 1000);
    }

    #[test]
    fn trace_stride() {
        let params = SystemParams::new(vec![0.2], vec![0.9], 0.5, 0.5, 4.0).unwrap();
        let policy = AdaptivePolicy::uniform(1, SchedulerKind::MaxAge, 0.5).unwrap();
        let m = run(&params, &policy, &SimConfig::new(1000, 2, Mode::Open).with_trace(10)).unwrap();
        assert_eq!(m.trace.len(), 100);
        assert_eq!(m.trace[0].slot, 10);
        assert_eq!(m.trace.last().unwrap().slot, 1000);
    }
}
