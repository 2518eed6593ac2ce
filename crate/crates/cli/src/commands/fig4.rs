//! Total cost of both policy families over a grid of flip probabilities
//! and several arrival-rate vectors.

use aojc_core::{run as simulate, AdaptivePolicy, Mode, SchedulerKind, SimConfig, SimMetrics};
use rayon::prelude::*;
use serde::Serialize;

use super::{solve, Context, Outcome};
use crate::config::SweepParam;
use crate::error::{config_err, CliError, Result};
use crate::output::{f, write_json, Table};
use crate::stats::mean_ci95;

pub const HEADER: [&str; 7] =
    ["q", "policy", "arrival_config", "total_cost", "delta_avg", "sampling_cost", "ci_halfwidth"];

/// Relative tolerance for "both policies perform alike".
pub const SIMILAR_TOL: f64 = 0.05;

const KINDS: [SchedulerKind; 2] = [SchedulerKind::AdaptiveRandomized, SchedulerKind::MaxAge];

#[derive(Debug, Clone, Serialize)]
pub struct Fig4Row {
    pub q: f64,
    pub policy: SchedulerKind,
    pub arrival_config: String,
    pub total_cost: f64,
    pub delta_avg: f64,
    pub sampling_cost: f64,
    /// 95% half-width of `total_cost` across seeds.
    pub ci_halfwidth: f64,
    pub per_seed_total: Vec<f64>,
}

pub fn compute(ctx: &Context) -> Result<Vec<Fig4Row>> {
    let c = &ctx.cfg.config;
    let sweep = ctx.cfg.section(&c.sweep, "sweep")?;
    let SweepParam::FlipProb = sweep.param;
    let base = ctx.cfg.system()?;
    if c.sim.seeds.len() < 2 {
        return Err(config_err("fig4 needs at least two seeds for confidence intervals"));
    }
    for a in &sweep.arrival_configs {
        if a.rates.len() != base.n_users() {
            return Err(config_err(format!(
                "arrival config {:?} has {} rates for {} users",
                a.name,
                a.rates.len(),
                base.n_users()
            )));
        }
        base.with_arrival_rates(a.rates.clone(), false)?;
    }

    // One table per (q, policy); the design problems do not depend on the
    // arrival rates.
    let grid: Vec<(usize, SchedulerKind)> =
        (0..sweep.values.len()).flat_map(|qi| KINDS.map(|k| (qi, k))).collect();
    let tables: Vec<AdaptivePolicy> = grid
        .par_iter()
        .map(|&(qi, kind)| {
            let q = sweep.values[qi];
            let cell_err = |source| CliError::Fig4Cell { q, policy: kind.to_string(), arrivals: "*".into(), source };
            let params = base.with_flip_prob(q).map_err(cell_err)?;
            solve(&params, kind, &c.optimizer).map_err(|e| match e {
                CliError::Core(source) => cell_err(source),
                other => other,
            })
        })
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for (gi, &(qi, kind)) in grid.iter().enumerate() {
        for (ai, _) in sweep.arrival_configs.iter().enumerate() {
            for &seed in &c.sim.seeds {
                jobs.push((gi, qi, kind, ai, seed));
            }
        }
    }
    let runs: Vec<SimMetrics> = jobs
        .par_iter()
        .map(|&(gi, qi, kind, ai, seed)| {
            let q = sweep.values[qi];
            let arrivals = &sweep.arrival_configs[ai];
            let cell_err = |source| CliError::Fig4Cell {
                q,
                policy: kind.to_string(),
                arrivals: arrivals.name.clone(),
                source,
            };
            let params = base
                .with_flip_prob(q)
                .and_then(|p| p.with_arrival_rates(arrivals.rates.clone(), false))
                .map_err(cell_err)?;
            let cfg = SimConfig::new(c.sim.horizon, ctx.run_seed(seed), Mode::Open)
                .with_burn_in_fraction(c.sim.burn_in_fraction);
            let m = simulate(&params, &tables[gi], &cfg).map_err(cell_err)?;
            if !m.total_cost.is_finite() {
                return Err(cell_err(aojc_core::Error::NonFiniteObjective { value: m.total_cost, point: vec![q] }));
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;

    let n_seeds = c.sim.seeds.len();
    let mut rows = Vec::new();
    for (qi, &q) in sweep.values.iter().enumerate() {
        for (ai, a) in sweep.arrival_configs.iter().enumerate() {
            for kind in KINDS {
                let gi = grid.iter().position(|&g| g == (qi, kind)).expect("grid cell");
                let start = jobs
                    .iter()
                    .position(|&(g, _, _, aj, _)| g == gi && aj == ai)
                    .expect("job block");
                let block = &runs[start..start + n_seeds];
                let totals: Vec<f64> = block.iter().map(|m| m.total_cost).collect();
                let (total_cost, ci) = mean_ci95(&totals);
                rows.push(Fig4Row {
                    q,
                    policy: kind,
                    arrival_config: a.name.clone(),
                    total_cost,
                    delta_avg: block.iter().map(|m| m.mean_age()).sum::<f64>() / n_seeds as f64,
                    sampling_cost: block.iter().map(|m| m.sampling_cost).sum::<f64>() / n_seeds as f64,
                    ci_halfwidth: ci,
                    per_seed_total: totals,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ClaimCheck {
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig4Claims {
    pub low_arrivals: String,
    pub high_arrivals: String,
    /// Under the high arrival rates max-age costs no more than randomized
    /// at every q (up to the summed half-widths) and less on average.
    pub max_age_dominates_under_high: ClaimCheck,
    pub mean_gap_under_high: f64,
    /// Under the low arrival rates the two costs differ by at most
    /// [`SIMILAR_TOL`] relative to the randomized cost.
    pub similar_under_low: ClaimCheck,
    pub max_rel_gap_under_low: f64,
    /// Every cost sequence is non-increasing in q up to the summed
    /// half-widths of neighbouring points.
    pub non_increasing_in_q: ClaimCheck,
}

fn find<'a>(rows: &'a [Fig4Row], q: f64, kind: SchedulerKind, arrivals: &str) -> &'a Fig4Row {
    rows.iter()
        .find(|r| r.q == q && r.policy == kind && r.arrival_config == arrivals)
        .expect("complete sweep")
}

/// Evaluates the qualitative relationships. `low` and `high` name the
/// arrival configurations with the smallest and largest total rate.
pub fn claims(rows: &[Fig4Row], low: &str, high: &str) -> Fig4Claims {
    let mut qs: Vec<f64> = rows.iter().map(|r| r.q).collect();
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    let (ra, ma) = (SchedulerKind::AdaptiveRandomized, SchedulerKind::MaxAge);

    let mut bad = Vec::new();
    let mut gap_sum = 0.0;
    for &q in &qs {
        let (r, m) = (find(rows, q, ra, high), find(rows, q, ma, high));
        gap_sum += r.total_cost - m.total_cost;
        if m.total_cost > r.total_cost + r.ci_halfwidth + m.ci_halfwidth {
            bad.push(format!("q={q}: max-age {:.4} > randomized {:.4}", m.total_cost, r.total_cost));
        }
    }
    let mean_gap = gap_sum / qs.len() as f64;
    if mean_gap <= 0.0 {
        bad.push(format!("mean gap {mean_gap:.4} is not positive"));
    }
    let dominates = ClaimCheck {
        passed: bad.is_empty(),
        detail: if bad.is_empty() { format!("mean gap {mean_gap:.4}") } else { bad.join("; ") },
    };

    let mut bad = Vec::new();
    let mut max_gap: f64 = 0.0;
    for &q in &qs {
        let (r, m) = (find(rows, q, ra, low), find(rows, q, ma, low));
        let g = (m.total_cost - r.total_cost).abs() / r.total_cost;
        max_gap = max_gap.max(g);
        if g > SIMILAR_TOL {
            bad.push(format!("q={q}: relative gap {g:.4}"));
        }
    }
    let similar = ClaimCheck {
        passed: bad.is_empty(),
        detail: if bad.is_empty() { format!("max relative gap {max_gap:.4}") } else { bad.join("; ") },
    };

    let mut bad = Vec::new();
    let mut configs: Vec<&str> = rows.iter().map(|r| r.arrival_config.as_str()).collect();
    configs.dedup();
    configs.sort_unstable();
    configs.dedup();
    for a in configs {
        for kind in KINDS {
            for w in qs.windows(2) {
                let (x, y) = (find(rows, w[0], kind, a), find(rows, w[1], kind, a));
                if y.total_cost > x.total_cost + x.ci_halfwidth + y.ci_halfwidth {
                    bad.push(format!("{kind}/{a}: q={} {:.4} -> q={} {:.4}", w[0], x.total_cost, w[1], y.total_cost));
                }
            }
        }
    }
    let monotone = ClaimCheck {
        passed: bad.is_empty(),
        detail: if bad.is_empty() { "all sequences non-increasing".into() } else { bad.join("; ") },
    };

    Fig4Claims {
        low_arrivals: low.into(),
        high_arrivals: high.into(),
        max_age_dominates_under_high: dominates,
        mean_gap_under_high: mean_gap,
        similar_under_low: similar,
        max_rel_gap_under_low: max_gap,
        non_increasing_in_q: monotone,
    }
}

/// Names of the arrival configurations with the smallest and largest total
/// rate.
pub fn low_high(ctx: &Context) -> Result<(String, String)> {
    let sweep = ctx.cfg.section(&ctx.cfg.config.sweep, "sweep")?;
    let total = |r: &[f64]| r.iter().sum::<f64>();
    let by_total = |a: &&crate::config::ArrivalConfig, b: &&crate::config::ArrivalConfig| {
        total(&a.rates).total_cmp(&total(&b.rates))
    };
    let low = sweep.arrival_configs.iter().min_by(by_total).expect("validated non-empty");
    let high = sweep.arrival_configs.iter().max_by(by_total).expect("validated non-empty");
    Ok((low.name.clone(), high.name.clone()))
}

pub fn table(rows: &[Fig4Row]) -> Table {
    let mut t = Table::new(&HEADER);
    for r in rows {
        t.push(vec![
            f(r.q),
            r.policy.to_string(),
            r.arrival_config.clone(),
            f(r.total_cost),
            f(r.delta_avg),
            f(r.sampling_cost),
            f(r.ci_halfwidth),
        ]);
    }
    t
}

pub fn run(ctx: &Context) -> Result<Outcome> {
    let rows = compute(ctx)?;
    let meta = ctx.meta("fig4");
    let mut out = Outcome::default();
    out.files.push(table(&rows).write(&ctx.out_dir, "fig4.csv", &meta)?);
    let (low, high) = low_high(ctx)?;
    if low != high {
        let claims = claims(&rows, &low, &high);
        for (name, c) in [
            ("max-age dominates under high arrivals", &claims.max_age_dominates_under_high),
            ("policies similar under low arrivals", &claims.similar_under_low),
            ("cost non-increasing in q", &claims.non_increasing_in_q),
        ] {
            if c.passed {
                out.notes.push(format!("{name}: holds ({})", c.detail));
            } else {
                out.failures.push(format!("{name}: does not hold ({})", c.detail));
            }
        }
        out.files.push(write_json(&ctx.out_dir, "fig4_claims.json", &claims, &meta)?);
    }
    Ok(out)
}
