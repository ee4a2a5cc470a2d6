//! Acceptance suite: runs every criterion of the built-in verification
//! catalog at a fixed seed and requires each to pass. Run with
//! `cargo test --test acceptance -- --nocapture` to see the per-check
//! numbers alongside the verdict lines.

use qsteer_core::verify::{run_criterion, CRITERIA};

const ACCEPTANCE_SEED: u64 = 20260825;

fn check(id: u32) {
    assert!((1..=CRITERIA).contains(&id));
    let report = run_criterion(id, ACCEPTANCE_SEED).expect("criterion must be runnable");
    println!("{}", report.summary());
    assert!(report.passed, "\n{report}");
}

#[test]
fn criterion_01_kraus_completeness_and_purity() {
    check(1);
}

#[test]
fn criterion_02_unconditional_dephasing_law() {
    check(2);
}

#[test]
fn criterion_03_strength_map_at_229_ns() {
    check(3);
}

#[test]
fn criterion_04_steering_conversion_identity() {
    check(4);
}

#[test]
fn criterion_05_herald_statistics() {
    check(5);
}

#[test]
fn criterion_06_weak_values() {
    check(6);
}

#[test]
fn criterion_07_readout_model_consistency() {
    check(7);
}

#[test]
fn criterion_08_feedback_beats_postselection() {
    check(8);
}

#[test]
fn criterion_09_process_tomography_oracles() {
    check(9);
}

#[test]
fn criterion_10_fringe_fit_round_trip() {
    check(10);
}
