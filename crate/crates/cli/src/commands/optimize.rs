use aojc_core::optimizer::{build_max_age_table, build_randomized_table, PolicySolution};
use aojc_core::SchedulerKind;

use super::{Context, Outcome};
use crate::error::Result;
use crate::output::{f, write_json, Table};

pub const HEADER: [&str; 5] = ["subset_mask", "mu_star", "pi_star_json", "objective", "converged"];

/// Kinds selected by `[policy].kind`; both when unset.
pub fn kinds(ctx: &Context) -> Vec<SchedulerKind> {
    match ctx.cfg.config.policy.as_ref().and_then(|p| p.kind) {
        Some(k) => vec![k],
        None => vec![SchedulerKind::AdaptiveRandomized, SchedulerKind::MaxAge],
    }
}

pub fn solve(ctx: &Context, kind: SchedulerKind) -> Result<PolicySolution> {
    let params = ctx.cfg.system()?;
    let settings = &ctx.cfg.config.optimizer;
    Ok(match kind {
        SchedulerKind::AdaptiveRandomized => build_randomized_table(&params, settings)?,
        SchedulerKind::MaxAge => build_max_age_table(&params, settings)?,
    })
}

pub fn table(sol: &PolicySolution) -> Result<Table> {
    let mut t = Table::new(&HEADER);
    for r in &sol.results {
        let pi = match &r.pi {
            Some(pi) => serde_json::to_string(pi)?,
            None => "null".into(),
        };
        t.push(vec![r.subset.mask().to_string(), f(r.mu), pi, f(r.objective), r.converged.to_string()]);
    }
    Ok(t)
}

pub fn run(ctx: &Context) -> Result<Outcome> {
    let meta = ctx.meta("optimize");
    let mut out = Outcome::default();
    for kind in kinds(ctx) {
        let sol = solve(ctx, kind)?;
        out.files.push(table(&sol)?.write(&ctx.out_dir, &format!("optimize_{kind}.csv"), &meta)?);
        out.files.push(write_json(&ctx.out_dir, &format!("policy_{kind}.json"), &sol.policy, &meta)?);
        for r in sol.results.iter().filter(|r| !r.converged) {
            out.notes.push(format!("{kind}: subset {} did not converge", r.subset));
        }
    }
    Ok(out)
}
