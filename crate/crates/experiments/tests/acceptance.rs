//! Runs every acceptance criterion in sequence, one line per criterion.
//! Sequential on purpose: the criteria carry wall-clock budgets.
//!
//! `SMTM_ACCEPTANCE_ONLY=3,7` restricts the run to the listed criteria.

use std::process::ExitCode;

use smtm_experiments::acceptance::{evaluate, CRITERIA};

fn main() -> ExitCode {
    let only: Vec<u8> = std::env::var("SMTM_ACCEPTANCE_ONLY")
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = Vec::new();
    for c in CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.id)) {
        let o = evaluate(c);
        println!("{}", o.line());
        if !o.passed {
            failed.push(o.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
