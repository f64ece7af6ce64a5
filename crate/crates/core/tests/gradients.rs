//! Finite-difference checks of every loss term against reverse mode.

mod common;

use common::gradcheck;

fn run(f: fn() -> gradcheck::Report) {
    let r = f();
    println!("{}", r.summary());
    assert!(r.passed(), "{}", r.summary());
}

#[test]
fn cholesky_assembly() {
    run(gradcheck::cholesky_assembly);
}

#[test]
fn ldl_assembly() {
    run(gradcheck::ldl_assembly);
}

#[test]
fn trace_term() {
    run(gradcheck::trace_term);
}

#[test]
fn psd_term_on_mixed_spectra() {
    run(gradcheck::psd_term_on_mixed_spectra);
}

#[test]
fn herm_term() {
    run(gradcheck::herm_term);
}

#[test]
fn task_term_teleportation() {
    run(gradcheck::task_term_teleportation);
}

#[test]
fn task_term_bell_broadcast() {
    run(gradcheck::task_term_bell_broadcast);
}

#[test]
fn task_term_werner_broadcast() {
    run(gradcheck::task_term_werner_broadcast);
}

#[test]
fn diversity_term() {
    run(gradcheck::diversity_term);
}

#[test]
fn adversarial_term() {
    run(gradcheck::adversarial_term);
}

#[test]
fn discriminator_objective() {
    run(gradcheck::discriminator_objective);
}

#[test]
fn composite_generator_objective() {
    run(gradcheck::composite_generator_objective);
}
