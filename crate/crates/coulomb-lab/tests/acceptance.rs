//! One line per acceptance criterion. `COULAB_SUITE=fast` trims the expensive ladders;
//! `COULAB_CRITERIA=1,4` restricts the run.

use coulomb_lab::verify::{run_criterion, Suite, Tolerances, CRITERIA};

#[test]
fn acceptance_criteria() {
    let suite: Suite = std::env::var("COULAB_SUITE").ok().map_or(Suite::Full, |s| s.parse().unwrap());
    let only: Option<Vec<u8>> = std::env::var("COULAB_CRITERIA")
        .ok()
        .map(|s| s.split(',').map(|t| t.trim().parse().unwrap()).collect());
    let tol = Tolerances::default();
    let mut bad = Vec::new();
    for id in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let out = run_criterion(id, suite, &tol, 7);
        println!("{}", out.line());
        if !out.acceptable() {
            bad.push(id);
        }
    }
    assert!(bad.is_empty(), "failing criteria: {bad:?}");
}

#[test]
fn tampered_tolerance_surfaces() {
    let tol = Tolerances { gradient: 1e-30, newton: 0.0, ..Tolerances::default() };
    for id in [1, 9] {
        let out = run_criterion(id, Suite::Fast, &tol, 7);
        assert!(!out.passed && out.known_gap.is_none(), "{}", out.line());
    }
}
