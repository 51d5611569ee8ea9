//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

use std::time::{Duration, Instant};

use nlgibbs::lab::battery::{
    bounds_battery, classical_battery, entropy_battery, husimi_battery, identity_battery, BatteryConfig, CheckOutcome,
};
use nlgibbs::lab::campaigns::{
    dm_campaign, dm_oracle, husimi_campaign, husimi_oracle, partition_campaign, prepare_rows, Setup,
};
use nlgibbs::lab::config::RunConfig;
use nlgibbs::Result;

type Criterion<'a> = (&'static str, Duration, Box<dyn FnOnce() -> Result<Verdict> + 'a>);

struct Verdict {
    pass: bool,
    detail: String,
}

fn from_checks(checks: &[CheckOutcome]) -> Verdict {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("[{}] {} = {:.3e} vs {:.1e}", c.group, c.name, c.value, c.threshold))
        .collect();
    Verdict {
        pass: failed.is_empty(),
        detail: if failed.is_empty() {
            format!("{} checks", checks.len())
        } else {
            format!("{} of {} failed: {}", failed.len(), checks.len(), failed.join("; "))
        },
    }
}

fn battery(f: impl FnOnce() -> Result<Vec<CheckOutcome>>) -> Result<Verdict> {
    Ok(from_checks(&f()?))
}

fn bounds() -> Result<Verdict> {
    let mut checks = bounds_battery()?;
    let setup = Setup::new(RunConfig::default())?;
    let set = prepare_rows(&setup);
    let z_r = setup.model.relative_partition_mc(&setup.config.classical)?;
    let report = partition_campaign(&setup, &set, &z_r)?;
    for row in &report.rows {
        for c in &row.checks {
            let name = format!("campaign T={} {}", row.temperature, c.name);
            checks.push(CheckOutcome::at_least("bounds", name, c.margin, -c.tolerance));
        }
    }
    let mut v = from_checks(&checks);
    if !report.aborted.is_empty() {
        v.pass = false;
        v.detail.push_str(&format!("; {} aborted rows", report.aborted.len()));
    }
    Ok(v)
}

fn convergence() -> Result<Verdict> {
    let setup = Setup::new(RunConfig::default())?;
    let set = prepare_rows(&setup);
    let mut notes = Vec::new();
    let mut pass = set.aborted.is_empty();

    let z_r = setup.model.relative_partition_mc(&setup.config.classical)?;
    let partition = partition_campaign(&setup, &set, &z_r)?;
    let gap = partition.trend("gap").expect("gap trend");
    let ok = gap.strictly_decreasing && gap.final_over_initial <= 1.0 / 3.0;
    pass &= ok;
    notes.push(format!(
        "partition gap strict={} final/initial={:.4}",
        gap.strictly_decreasing, gap.final_over_initial
    ));

    let dm = dm_campaign(&setup, &set, &dm_oracle(&setup)?)?;
    let d = dm.trend("distance").expect("distance trend");
    let ok = d.decreasing_within_uncertainty && d.final_over_initial <= 0.5;
    pass &= ok;
    notes.push(format!(
        "dm distance decreasing={} final/initial={:.4}",
        d.decreasing_within_uncertainty, d.final_over_initial
    ));

    let husimi = husimi_campaign(&setup, &set, &husimi_oracle(&setup)?)?;
    for t in &husimi.trends {
        let ok = t.decreasing_within_uncertainty || t.consistent_with_zero;
        pass &= ok;
        let shape = if t.consistent_with_zero { "zero" } else if ok { "decreasing" } else { "NOT decreasing" };
        notes.push(format!("{} {}", t.name, shape));
    }
    Ok(Verdict {
        pass,
        detail: notes.join("; "),
    })
}

fn schatten() -> Result<Verdict> {
    let report = nlgibbs::lab::campaigns::run_dm_convergence(&RunConfig::schatten_campaign())?;
    let d = report.trend("distance").expect("distance trend");
    Ok(Verdict {
        pass: report.aborted.is_empty() && d.decreasing_within_uncertainty,
        detail: format!(
            "schatten-2 distances {:?} strict={} final/initial={:.4}",
            d.values.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>(),
            d.strictly_decreasing,
            d.final_over_initial
        ),
    })
}

fn main() {
    let cfg = BatteryConfig::default();
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let criteria: Vec<Criterion> = vec![
        ("exact identities", minutes(1), Box::new(|| battery(identity_battery))),
        ("coherent/Husimi", minutes(10), Box::new(|| battery(|| husimi_battery(&cfg)))),
        ("entropy", minutes(5), Box::new(|| battery(|| entropy_battery(&cfg)))),
        ("a-priori bounds", minutes(5), Box::new(bounds)),
        ("convergence campaign", minutes(60), Box::new(convergence)),
        ("classical oracles", minutes(10), Box::new(|| battery(|| classical_battery(&cfg)))),
        ("p>1 campaign", minutes(30), Box::new(schatten)),
    ];
    let mut failures = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let verdict = run().unwrap_or_else(|e| Verdict {
            pass: false,
            detail: format!("error: {e}"),
        });
        let elapsed = start.elapsed();
        let pass = verdict.pass && elapsed <= budget;
        failures += usize::from(!pass);
        println!(
            "{} {} {name}: {} ({:.1}s of {}s budget)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            verdict.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
