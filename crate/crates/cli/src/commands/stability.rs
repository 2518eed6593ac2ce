//! Sufficient-condition checks with empirical drift runs, for named case
//! studies and for a random soundness sweep.

use aojc_core::optimizer::{build_max_age_table, build_randomized_table};
use aojc_core::rng::derive;
use aojc_core::sim::TracePoint;
use aojc_core::stability::{
    empirical_stability_traced, min_service_check, sample_case, uniform_bound_check, verify_sufficiency,
    weighted_service_check, EmpiricalCheck, StabilityReport, SufficiencyBudget, SufficiencyRow,
    UniformBoundCheck,
};
use aojc_core::{AdaptivePolicy, SchedulerKind, SystemParams, Verdict};
use rayon::prelude::*;
use serde::Serialize;

use super::simulate::TRACE_HEADER;
use super::{Context, Outcome};
use crate::config::{Expectation, StabilityConfig, StabilitySection};
use crate::error::Result;
use crate::output::{f, write_json, Table};

pub const MARGIN_HEADER: [&str; 6] =
    ["config_id", "subset_mask", "margin", "satisfied", "q_min_or_weighted", "policy_kind"];
pub const VERDICT_HEADER: [&str; 11] = [
    "config_id",
    "policy_kind",
    "condition_satisfied",
    "uniform_bound_satisfied",
    "verdict",
    "seed",
    "seed_verdict",
    "slope",
    "quartile_ratio",
    "first_quartile_mean",
    "last_quartile_mean",
];
pub const SOUNDNESS_HEADER: [&str; 10] = [
    "case_id",
    "n_users",
    "total_arrival_rate",
    "weighted_satisfied",
    "min_service_satisfied",
    "uniform_bound_satisfied",
    "randomized_verdict",
    "max_age_verdict",
    "soundness_violation",
    "uniform_bound_violation",
];

/// One checked policy of a case study.
#[derive(Debug, Clone, Serialize)]
pub struct PolicyStudy {
    pub report: StabilityReport,
    pub empirical: EmpiricalCheck,
    #[serde(skip)]
    pub traces: Vec<Vec<TracePoint>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseStudy {
    pub id: String,
    pub uniform_bound: UniformBoundCheck,
    /// Randomized table against the weighted-service condition.
    pub randomized: PolicyStudy,
    /// Max-age table against the subset-minimum condition.
    pub max_age: PolicyStudy,
    /// Replicate indices, aligned with the per-seed reports.
    pub seeds: Vec<u64>,
}

impl CaseStudy {
    pub fn conditions_satisfied(&self) -> bool {
        self.randomized.report.satisfied || self.max_age.report.satisfied
    }

    /// Differences from the configured expectation, if any.
    pub fn mismatches(&self, expect: Option<Expectation>) -> Vec<String> {
        let Some(e) = expect else { return Vec::new() };
        let mut out = Vec::new();
        if let Some(c) = e.conditions_satisfied {
            if c != self.conditions_satisfied() {
                out.push(format!("{}: expected conditions satisfied = {c}", self.id));
            }
        }
        if let Some(v) = e.verdict {
            for (kind, study) in [("randomized", &self.randomized), ("max-age", &self.max_age)] {
                if study.empirical.verdict != v {
                    out.push(format!(
                        "{}: expected {} under the {kind} table, got {}",
                        self.id,
                        v.as_str(),
                        study.empirical.verdict.as_str()
                    ));
                }
            }
        }
        out
    }
}

fn budget(ctx: &Context, s: &StabilitySection) -> SufficiencyBudget {
    SufficiencyBudget {
        horizon: s.horizon,
        seeds: s.seeds.iter().map(|&r| ctx.run_seed(r)).collect(),
        epsilon: s.epsilon,
        thresholds: s.drift,
        trace_stride: s.trace_stride,
    }
}

fn tables(ctx: &Context, cfg: &StabilityConfig, params: &SystemParams) -> Result<(AdaptivePolicy, AdaptivePolicy)> {
    if let Some(mu) = cfg.uniform_mu {
        let r = AdaptivePolicy::uniform(params.n_users(), SchedulerKind::AdaptiveRandomized, mu)?;
        let m = r.to_max_age();
        return Ok((r, m));
    }
    let settings = &ctx.cfg.config.optimizer;
    Ok((build_randomized_table(params, settings)?.policy, build_max_age_table(params, settings)?.policy))
}

pub fn case_study(ctx: &Context, s: &StabilitySection, cfg: &StabilityConfig) -> Result<CaseStudy> {
    let params = cfg.params()?;
    let (rt, mt) = tables(ctx, cfg, &params)?;
    let b = budget(ctx, s);
    let (re, rtr) = empirical_stability_traced(&params, &rt, &b)?;
    let (me, mtr) = empirical_stability_traced(&params, &mt, &b)?;
    Ok(CaseStudy {
        id: cfg.id.clone(),
        uniform_bound: uniform_bound_check(&params, &rt, s.epsilon)?,
        randomized: PolicyStudy { report: weighted_service_check(&params, &rt, s.epsilon)?, empirical: re, traces: rtr },
        max_age: PolicyStudy { report: min_service_check(&params, &mt, s.epsilon)?, empirical: me, traces: mtr },
        seeds: s.seeds.clone(),
    })
}

pub fn case_studies(ctx: &Context) -> Result<Vec<CaseStudy>> {
    let s = ctx.cfg.section(&ctx.cfg.config.stability, "stability")?;
    s.configs.par_iter().map(|cfg| case_study(ctx, s, cfg)).collect()
}

/// Random configurations with random policy tables, each checked against
/// both conditions and simulated under both scheduling rules.
pub fn soundness_sweep(ctx: &Context) -> Result<Option<Vec<SufficiencyRow>>> {
    let s = ctx.cfg.section(&ctx.cfg.config.stability, "stability")?;
    let Some(sweep) = &s.sweep else { return Ok(None) };
    let cases = (0..sweep.count)
        .map(|i| sample_case(&mut derive(sweep.seed ^ ctx.master_seed, i as u64), format!("r{i:05}")))
        .collect::<aojc_core::Result<Vec<_>>>()?;
    Ok(Some(verify_sufficiency(&cases, &budget(ctx, s))?))
}

pub fn margin_table(studies: &[CaseStudy]) -> Table {
    let mut t = Table::new(&MARGIN_HEADER);
    for cs in studies {
        for (kind, study) in [(SchedulerKind::AdaptiveRandomized, &cs.randomized), (SchedulerKind::MaxAge, &cs.max_age)] {
            for m in &study.report.margins {
                t.push(vec![
                    cs.id.clone(),
                    m.subset.mask().to_string(),
                    f(m.margin),
                    (m.margin <= -study.report.epsilon).to_string(),
                    f(m.service_term),
                    kind.to_string(),
                ]);
            }
        }
    }
    t
}

pub fn verdict_table(studies: &[CaseStudy]) -> Table {
    let mut t = Table::new(&VERDICT_HEADER);
    for cs in studies {
        for (kind, study) in [(SchedulerKind::AdaptiveRandomized, &cs.randomized), (SchedulerKind::MaxAge, &cs.max_age)] {
            for (seed, r) in cs.seeds.iter().zip(&study.empirical.per_seed) {
                t.push(vec![
                    cs.id.clone(),
                    kind.to_string(),
                    study.report.satisfied.to_string(),
                    cs.uniform_bound.satisfied.to_string(),
                    study.empirical.verdict.as_str().into(),
                    seed.to_string(),
                    r.verdict.as_str().into(),
                    f(r.slope),
                    f(r.quartile_ratio),
                    f(r.first_quartile_mean),
                    f(r.last_quartile_mean),
                ]);
            }
        }
    }
    t
}

pub fn trace_table(studies: &[CaseStudy]) -> Table {
    let mut t = Table::new(&TRACE_HEADER);
    for cs in studies {
        for (kind, study) in [(SchedulerKind::AdaptiveRandomized, &cs.randomized), (SchedulerKind::MaxAge, &cs.max_age)] {
            let id = format!("{}:{kind}", cs.id);
            for (seed, trace) in cs.seeds.iter().zip(&study.traces) {
                for p in trace {
                    t.push(vec![id.clone(), seed.to_string(), p.slot.to_string(), p.total_queue.to_string()]);
                }
            }
        }
    }
    t
}

pub fn soundness_table(rows: &[SufficiencyRow], params: &[(usize, f64)]) -> Table {
    let mut t = Table::new(&SOUNDNESS_HEADER);
    for (r, &(n, load)) in rows.iter().zip(params) {
        t.push(vec![
            r.id.clone(),
            n.to_string(),
            f(load),
            r.weighted.satisfied.to_string(),
            r.min_service.satisfied.to_string(),
            r.uniform.satisfied.to_string(),
            r.randomized.verdict.as_str().into(),
            r.max_age.verdict.as_str().into(),
            r.soundness_violation().to_string(),
            r.uniform_bound_violation().to_string(),
        ]);
    }
    t
}

#[derive(Debug, Clone, Serialize)]
pub struct SoundnessSummary {
    pub cases: usize,
    pub weighted_satisfied: usize,
    pub min_service_satisfied: usize,
    pub unstable_randomized: usize,
    pub unstable_max_age: usize,
    pub soundness_violations: usize,
    pub uniform_bound_violations: usize,
}

pub fn summarize(rows: &[SufficiencyRow]) -> SoundnessSummary {
    let count = |p: &dyn Fn(&SufficiencyRow) -> bool| rows.iter().filter(|r| p(r)).count();
    SoundnessSummary {
        cases: rows.len(),
        weighted_satisfied: count(&|r| r.weighted.satisfied),
        min_service_satisfied: count(&|r| r.min_service.satisfied),
        unstable_randomized: count(&|r| r.randomized.verdict == Verdict::Unstable),
        unstable_max_age: count(&|r| r.max_age.verdict == Verdict::Unstable),
        soundness_violations: count(&|r| r.soundness_violation()),
        uniform_bound_violations: count(&|r| r.uniform_bound_violation()),
    }
}

pub fn run(ctx: &Context) -> Result<Outcome> {
    let meta = ctx.meta("stability");
    let mut out = Outcome::default();
    let s = ctx.cfg.section(&ctx.cfg.config.stability, "stability")?;
    let studies = case_studies(ctx)?;
    if !studies.is_empty() {
        out.files.push(margin_table(&studies).write(&ctx.out_dir, "stability.csv", &meta)?);
        out.files.push(verdict_table(&studies).write(&ctx.out_dir, "stability_verdicts.csv", &meta)?);
        out.files.push(trace_table(&studies).write(&ctx.out_dir, "stability_trace.csv", &meta)?);
        for cs in &studies {
            out.notes.push(format!(
                "{}: conditions {}, randomized {}, max-age {}",
                cs.id,
                if cs.conditions_satisfied() { "satisfied" } else { "not satisfied" },
                cs.randomized.empirical.verdict.as_str(),
                cs.max_age.empirical.verdict.as_str()
            ));
        }
        for (cs, cfg) in studies.iter().zip(&s.configs) {
            out.failures.extend(cs.mismatches(cfg.expect));
        }
    }
    if let Some(rows) = soundness_sweep(ctx)? {
        let sweep = s.sweep.as_ref().expect("sweep present");
        let params: Vec<(usize, f64)> = (0..sweep.count)
            .map(|i| sample_case(&mut derive(sweep.seed ^ ctx.master_seed, i as u64), "")
                .map(|c| (c.params.n_users(), c.params.total_arrival_rate())))
            .collect::<aojc_core::Result<_>>()?;
        out.files.push(soundness_table(&rows, &params).write(&ctx.out_dir, "soundness.csv", &meta)?);
        let summary = summarize(&rows);
        out.files.push(write_json(&ctx.out_dir, "soundness_summary.json", &summary, &meta)?);
        for r in rows.iter().filter(|r| r.soundness_violation()) {
            out.failures.push(format!("{}: a condition holds but the matching policy looks unstable", r.id));
        }
        for r in rows.iter().filter(|r| r.uniform_bound_violation()) {
            out.failures.push(format!("{}: uniform bound holds but the weighted condition does not", r.id));
        }
        out.notes.push(format!(
            "sweep: {} cases, {} soundness violations, {} uniform-bound violations",
            summary.cases, summary.soundness_violations, summary.uniform_bound_violations
        ));
    }
    Ok(out)
}
