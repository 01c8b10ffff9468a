//! Acceptance suite: one test per criterion, each printing a pass/fail line.

use std::sync::Mutex;

use besov_mkv_core::acceptance::{run_criterion, CriterionResult};

// criteria run one at a time so the wall-clock budgets are meaningful
static SERIAL: Mutex<()> = Mutex::new(());

fn check(id: usize) {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let r: CriterionResult = run_criterion(id);
    let status = if r.passed { "PASS" } else { "FAIL" };
    println!(
        "[{status}] criterion {:02} ({}) in {:.2}s (budget {:.0}s): {}",
        r.id, r.name, r.runtime_s, r.budget_s, r.details
    );
    assert!(r.passed, "criterion {} failed: {}", r.id, r.details);
    assert!(
        r.runtime_s <= r.budget_s,
        "criterion {} exceeded its runtime budget: {:.1}s > {:.0}s",
        r.id,
        r.runtime_s,
        r.budget_s
    );
}

#[test]
fn criterion_01_condition_engine() {
    check(1);
}

#[test]
fn criterion_02_heat_kernel_oracle() {
    check(2);
}

#[test]
fn criterion_03_hk_exponent_recovery() {
    check(3);
}

#[test]
fn criterion_04_beta_function_identities() {
    check(4);
}

#[test]
fn criterion_05_fp_linear_regime() {
    check(5);
}

#[test]
fn criterion_06_gronwall_envelope() {
    check(6);
}

#[test]
fn criterion_07_epsilon_cauchy() {
    check(7);
}

#[test]
fn criterion_08_limit_equation_probe() {
    check(8);
}

#[test]
fn criterion_09_drift_integrability() {
    check(9);
}

#[test]
fn criterion_10_particle_cross_validation() {
    check(10);
}

#[test]
fn criterion_11_young_reconstruction() {
    check(11);
}

#[test]
fn criterion_12_pathwise_probe() {
    check(12);
}

#[test]
fn criterion_13_determinism() {
    check(13);
}
