//! Dev profiling driver: runs each acceptance criterion once and prints
//! its record immediately.

use pshlab::harness::*;

fn main() {
    let seed = 7u64;
    let args: Vec<String> = std::env::args().skip(1).collect();
    let want = |tag: &str| args.is_empty() || args.iter().any(|a| a == tag);
    let checks: Vec<(&str, Box<dyn Fn() -> HarnessResult<CheckRecord>>)> = vec![
        ("c1", Box::new(crit1_lambert_roundtrip)),
        ("c2", Box::new(crit2_loglip_limit)),
        ("c3", Box::new(move || crit3_translation(seed))),
        ("c4", Box::new(move || crit4_segment(seed))),
        ("c5", Box::new(move || crit5_mergelyan(seed))),
        ("c6", Box::new(move || crit6_exhaustion(seed))),
        ("c7", Box::new(move || crit7_attainment(seed))),
        ("c8", Box::new(move || crit8_levi_floor(seed))),
    ];
    for (tag, f) in checks {
        if !want(tag) {
            continue;
        }
        match f() {
            Ok(rec) => println!(
                "{tag} {} verdict={} measured={:.3e} bound={:.3e} {} ms fits={:?}",
                rec.name,
                rec.verdict,
                rec.measured,
                rec.bound,
                rec.runtime_ms,
                rec.fitted_constants
            ),
            Err(e) => println!("{tag} ERROR: {e}"),
        }
    }
}
