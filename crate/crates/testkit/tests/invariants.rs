use streamrc_testkit::invariants::{back_pressure_coverage, run_suite};

#[test]
fn thousand_random_topologies_hold_every_invariant() {
    let outcome = run_suite(1000);
    assert_eq!(outcome.failure, None);
}

#[test]
fn generator_exercises_back_pressure() {
    let hits = back_pressure_coverage(50);
    assert!(hits >= 10, "only {hits} of 50 cases entered back pressure");
}
