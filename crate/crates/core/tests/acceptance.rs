//! Acceptance run: one pass/fail line per criterion.
//!
//! `QUENCH_ACCEPT_ONLY=1,4` restricts the run and `QUENCH_ACCEPT_REPORT=path`
//! writes the detailed rows as CSV.

use std::process::ExitCode;

use quench_core::lab::{run_acceptance, write_report, AcceptanceOptions};

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::var("QUENCH_ACCEPT_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_default();
    let outcomes = run_acceptance(&AcceptanceOptions::default(), &only);
    for o in &outcomes {
        println!("{}", o.summary());
    }
    if let Ok(path) = std::env::var("QUENCH_ACCEPT_REPORT") {
        if let Err(e) = write_report(std::path::Path::new(&path), &outcomes) {
            eprintln!("could not write report: {e}");
        }
    }
    let passed = outcomes.iter().filter(|o| o.pass()).count();
    println!("acceptance: {passed}/{} criteria passed", outcomes.len());
    ExitCode::SUCCESS
}
