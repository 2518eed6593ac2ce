use aojc_core::{run as simulate, Mode, SimConfig, SimMetrics, SubsetKey, SystemParams};
use rayon::prelude::*;

use super::{Context, Outcome};
use crate::config::ModeSpec;
use crate::error::{config_err, Result};
use crate::output::{f, Table};

pub const METRICS_HEADER: [&str; 7] =
    ["config_id", "seed", "T", "user", "delta_hat", "completion_rate", "mean_queue"];
pub const SUMMARY_HEADER: [&str; 7] =
    ["config_id", "seed", "T", "mean_age", "sampling_cost", "total_cost", "final_total_queue"];
pub const TRACE_HEADER: [&str; 4] = ["config_id", "seed", "slot", "total_queue"];

/// One simulated replicate.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub seed: u64,
    pub metrics: SimMetrics,
}

pub fn mode(ctx: &Context, params: &SystemParams) -> Result<Mode> {
    let sim = &ctx.cfg.config.sim;
    match sim.mode {
        ModeSpec::Open => {
            if sim.subset.is_some() {
                return Err(config_err("sim.subset only applies to saturated mode"));
            }
            Ok(Mode::Open)
        }
        ModeSpec::Saturated => {
            let labels = sim.subset.as_ref().ok_or_else(|| config_err("saturated mode needs sim.subset"))?;
            Ok(Mode::Saturated(SubsetKey::from_labels(labels, params.n_users())?))
        }
    }
}

pub fn replicates(ctx: &Context) -> Result<Vec<Replicate>> {
    let params = ctx.cfg.system()?;
    let policy = ctx.policy_for(&params)?;
    let mode = mode(ctx, &params)?;
    let sim = &ctx.cfg.config.sim;
    sim.seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = SimConfig::new(sim.horizon, ctx.run_seed(seed), mode)
                .with_burn_in_fraction(sim.burn_in_fraction);
            if let Some(stride) = sim.trace_stride {
                cfg = cfg.with_trace(stride);
            }
            Ok(Replicate { seed, metrics: simulate(&params, &policy, &cfg)? })
        })
        .collect()
}

pub fn tables(id: &str, reps: &[Replicate]) -> (Table, Table, Table) {
    let mut metrics = Table::new(&METRICS_HEADER);
    let mut summary = Table::new(&SUMMARY_HEADER);
    let mut trace = Table::new(&TRACE_HEADER);
    for r in reps {
        let m = &r.metrics;
        for i in 0..m.delta_hat.len() {
            metrics.push(vec![
                id.into(),
                r.seed.to_string(),
                m.horizon.to_string(),
                (i + 1).to_string(),
                f(m.delta_hat[i]),
                f(m.completion_rate[i]),
                f(m.mean_queue[i]),
            ]);
        }
        summary.push(vec![
            id.into(),
            r.seed.to_string(),
            m.horizon.to_string(),
            f(m.mean_age()),
            f(m.sampling_cost),
            f(m.total_cost),
            m.final_queues.iter().sum::<u64>().to_string(),
        ]);
        for p in &m.trace {
            trace.push(vec![id.into(), r.seed.to_string(), p.slot.to_string(), p.total_queue.to_string()]);
        }
    }
    (metrics, summary, trace)
}

pub fn run(ctx: &Context) -> Result<Outcome> {
    let reps = replicates(ctx)?;
    let (metrics, summary, trace) = tables(&ctx.cfg.config.id, &reps);
    let meta = ctx.meta("simulate");
    let mut out = Outcome::default();
    out.files.push(metrics.write(&ctx.out_dir, "simulate_metrics.csv", &meta)?);
    out.files.push(summary.write(&ctx.out_dir, "simulate_summary.csv", &meta)?);
    if ctx.cfg.config.sim.trace_stride.is_some() {
        out.files.push(trace.write(&ctx.out_dir, "simulate_trace.csv", &meta)?);
    }
    Ok(out)
}
