//! End-to-end acceptance suite: one criterion per check, one summary line
//! per criterion, pinned tolerances inside the harness implementations.

use std::time::Instant;

use pshlab::harness::{acceptance_core, CheckRecord, ExperimentConfig, RunReport};

fn summarize(rec: &CheckRecord) -> String {
    format!(
        "{} {} (measured = {:.6e}, bound = {:.6e}, {} ms)",
        if rec.verdict { "PASS" } else { "FAIL" },
        rec.name,
        rec.measured,
        rec.bound,
        rec.runtime_ms
    )
}

#[test]
fn acceptance() {
    let seed = 7u64;
    let start = Instant::now();
    let first = acceptance_core(seed).expect("acceptance core run");
    let second = acceptance_core(seed).expect("acceptance core rerun");
    let elapsed = start.elapsed();

    let mut all_pass = true;
    for rec in &first {
        println!("{}", summarize(rec));
        all_pass &= rec.verdict;
    }

    // Criterion 9: byte-identical canonical reports across two runs with
    // the same seed, within the runtime budget.
    let cfg = ExperimentConfig::default();
    let render = |records: &[CheckRecord]| {
        RunReport::assemble(&cfg, records.to_vec()).canonical_json()
    };
    let deterministic = render(&first) == render(&second);
    let in_budget = elapsed.as_secs() < 20 * 60;
    println!(
        "{} crit9_determinism (byte-identical = {}, suite = {} s)",
        if deterministic && in_budget {
            "PASS"
        } else {
            "FAIL"
        },
        deterministic,
        elapsed.as_secs()
    );
    all_pass &= deterministic && in_budget;

    assert!(all_pass, "one or more acceptance criteria failed");
}
