//! Runs the twelve acceptance criteria at their stated tolerances and prints
//! one line per criterion. Run with `--nocapture` to see the table.

use dirac_afunc::verify::{run_verify, VerifyOptions, CRITERIA};

#[test]
fn acceptance_suite() {
    let opts = VerifyOptions::default();
    let first = run_verify(&opts);
    // Determinism also covers the whole suite: a second run must match exactly.
    let second = run_verify(&opts);
    let identical =
        serde_json::to_string(&first).unwrap() == serde_json::to_string(&second).unwrap();

    let mut failures = Vec::new();
    for (k, c) in first.criteria.iter().enumerate() {
        let pass = if k + 1 == CRITERIA.len() {
            c.pass && identical
        } else {
            c.pass
        };
        println!(
            "[{}] {:>2}. {}: measured {:.3e}, required {}{}",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            c.name,
            c.measured,
            c.required,
            if c.detail.is_empty() {
                String::new()
            } else {
                format!(" ({})", c.detail)
            }
        );
        if !pass {
            failures.push(c.name.clone());
        }
    }
    if !identical {
        println!("       repeated suite runs produced different reports");
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

#[test]
fn branch_flip_is_caught() {
    let opts = VerifyOptions {
        inject_branch_flip: true,
    };
    let report = (CRITERIA[0].1)(&opts);
    assert!(!report.pass, "{report:?}");
    assert!(report.measured > 1e-3);
}
