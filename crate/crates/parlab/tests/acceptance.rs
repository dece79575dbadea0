//! Acceptance gate: every criterion runs at full resolution and prints one
//! pass/fail line. `cargo test --test acceptance` is the release check.

use parlab::suite::{run_criterion, SuiteLevel};

const SEED: u64 = 7;

fn check(index: usize) {
    let outcome = run_criterion(index, SuiteLevel::Full, SEED)
        .unwrap_or_else(|e| panic!("criterion {index} errored: {e}"));
    let row = &outcome.row;
    println!(
        "criterion {index}: {} {} {}: value {:.4e} vs threshold {:.3e} -- {}",
        if row.pass { "PASS" } else { "FAIL" },
        row.name,
        row.tag,
        row.value,
        row.threshold,
        row.summary
    );
    assert!(row.pass, "criterion {index} failed: {}", row.summary);
}

#[test]
fn criterion_01_oracle_convergence() {
    check(1);
}

#[test]
fn criterion_02_gaussian_fit_sanity() {
    check(2);
}

#[test]
fn criterion_03_paper_constant_margin() {
    check(3);
}

#[test]
fn criterion_04_duality_identity() {
    check(4);
}

#[test]
fn criterion_05_drift_energy_neutrality() {
    check(5);
}

#[test]
fn criterion_06_eps_scaling() {
    check(6);
}

#[test]
fn criterion_07_annulus_decay() {
    check(7);
}

#[test]
fn criterion_08_pointwise_stability() {
    check(8);
}

#[test]
fn criterion_09_davies_growth() {
    check(9);
}

#[test]
fn criterion_10_structural_identities() {
    check(10);
}

#[test]
fn criterion_11_drifted_oracle() {
    check(11);
}

#[test]
fn criterion_12_determinism() {
    check(12);
}
