use std::io::Write;

use bandloc::acceptance::run_criterion;
use bandloc::Exec;

// Written straight to stdout so the verdicts show without --nocapture.
fn check(id: u8) {
    let outcome = run_criterion(id, Exec::Parallel).expect("criterion ran");
    let mut out = std::io::stdout().lock();
    write!(out, "{outcome}").unwrap();
    out.flush().unwrap();
    assert!(outcome.passed(), "{}", outcome.verdict());
}

#[test]
fn criterion_1_algebraic_identities() {
    check(1);
}

#[test]
fn criterion_2_fuerstenberg_certificate() {
    check(2);
}

#[test]
fn criterion_3_lyapunov_calibration() {
    check(3);
}

#[test]
fn criterion_4_positivity_sweep() {
    check(4);
}

#[test]
fn criterion_5_localization_evidence() {
    check(5);
}

#[test]
fn criterion_6_spectrum_containment() {
    check(6);
}

#[test]
fn criterion_7_spectral_averaging() {
    check(7);
}

#[test]
fn criterion_8_cyclicity() {
    check(8);
}
