//! Closed-form ages and sampling costs of configured backlogged subsets.

use aojc_core::analytics::{closed_form_report, ClosedFormReport, Subsystem};
use aojc_core::SchedulerKind;

use super::{Context, Outcome};
use crate::config::CaseSpec;
use crate::error::Result;
use crate::output::{f, Table};

pub const HEADER: [&str; 6] = ["case", "subset", "user", "quantity", "value", "tag"];

pub fn subsystem(case: &CaseSpec, default: Option<&aojc_core::RawParams>) -> Result<Subsystem> {
    let params = case.params(default)?;
    let key = case.key(params.n_users())?;
    Ok(match case.kind {
        SchedulerKind::AdaptiveRandomized => {
            Subsystem::randomized(&params, key, case.mu, &case.schedule_dist(params.n_users())?)?
        }
        SchedulerKind::MaxAge => Subsystem::max_age(&params, key, case.mu)?,
    })
}

pub fn age_quantity(kind: SchedulerKind) -> &'static str {
    match kind {
        SchedulerKind::AdaptiveRandomized => "age_randomized",
        SchedulerKind::MaxAge => "age_max_age",
    }
}

pub fn sampling_quantity(kind: SchedulerKind) -> &'static str {
    match kind {
        SchedulerKind::AdaptiveRandomized => "sampling_bound_randomized",
        SchedulerKind::MaxAge => "sampling_max_age",
    }
}

pub fn reports(ctx: &Context) -> Result<Vec<(String, ClosedFormReport)>> {
    let c = &ctx.cfg.config;
    let section = ctx.cfg.section(&c.evaluate, "evaluate")?;
    section
        .cases
        .iter()
        .map(|case| {
            let sys = subsystem(case, c.system.as_ref())?;
            Ok((case.name.clone(), closed_form_report(&sys, section.max_age)?))
        })
        .collect()
}

pub fn table(reports: &[(String, ClosedFormReport)]) -> Table {
    let mut t = Table::new(&HEADER);
    for (name, r) in reports {
        let mask = r.subset.mask().to_string();
        for a in &r.ages {
            t.push(vec![
                name.clone(),
                mask.clone(),
                (a.user + 1).to_string(),
                age_quantity(r.kind).into(),
                f(a.age),
                "exact".into(),
            ]);
        }
        t.push(vec![
            name.clone(),
            mask,
            "all".into(),
            sampling_quantity(r.kind).into(),
            f(r.sampling_cost),
            r.sampling_tag.as_str().into(),
        ]);
    }
    t
}

pub fn run(ctx: &Context) -> Result<Outcome> {
    let reports = reports(ctx)?;
    let mut out = Outcome::default();
    for (name, r) in &reports {
        for a in r.ages_below_one() {
            out.notes.push(format!("case {name}: user {} has age {} < 1", a.user + 1, a.age));
        }
    }
    out.files.push(table(&reports).write(&ctx.out_dir, "evaluate.csv", &ctx.meta("evaluate"))?);
    Ok(out)
}

