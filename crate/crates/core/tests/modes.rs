//! Both execution modes agree on what can go wrong and on what a program
//! can compute.

mod common;

use std::collections::BTreeSet;

use mcheck_core::{explore, Mode, SearchConfig, ViolationKind};

fn summary(name: &str, observe: &[&str], mode: Mode) -> (BTreeSet<ViolationKind>, BTreeSet<Vec<String>>) {
    let program = common::load(name);
    let config = SearchConfig {
        stop_at_first: false,
        observe: observe.iter().map(|s| s.to_string()).collect(),
        ..SearchConfig::new(mode)
    };
    let report = explore(&program, &config).unwrap();
    (report.violation_kinds, report.terminal_observations)
}

#[test]
fn every_corpus_program_is_covered() {
    let listed: Vec<&str> = common::CORPUS.iter().map(|(n, _)| *n).collect();
    assert_eq!(listed, common::corpus_names());
}

#[test]
fn modes_agree_on_violations_and_final_values() {
    for (name, observe) in common::CORPUS {
        let a = summary(name, observe, Mode::Abstracted);
        let r = summary(name, observe, Mode::Reference);
        assert_eq!(a, r, "{name}");
    }
}

#[test]
fn expected_verdicts() {
    use ViolationKind::*;
    let kinds = |name: &str| summary(name, &[], Mode::Abstracted).0;
    assert_eq!(kinds("atomic_racy.asm"), BTreeSet::from([Assertion]));
    assert!(kinds("atomic_ok.asm").is_empty());
    assert_eq!(kinds("two_lock_deadlock.asm"), BTreeSet::from([Deadlock]));
    assert_eq!(kinds("illegal_unlock.asm"), BTreeSet::from([IllegalMonitor]));
    assert_eq!(kinds("unknown_method.asm"), BTreeSet::from([UnsupportedNativeMethod]));
    for clean in ["lock_counter.asm", "gcas_spin.asm", "mixed.asm", "park_handoff.asm", "map_ops.asm"] {
        assert!(kinds(clean).is_empty(), "{clean}");
    }
}

#[test]
fn observed_outcomes() {
    let obs = |name: &str, globals: &[&str]| summary(name, globals, Mode::Reference).1;
    let row = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();

    // Each worker sees a distinct counter value.
    let seen = obs("atomic_counter.asm", &["seen1", "seen2", "seen3"]);
    assert_eq!(seen.len(), 6);
    for r in &seen {
        let mut sorted = r.clone();
        sorted.sort();
        assert_eq!(sorted, row(&["1", "2", "3"]));
    }

    // Runs that lose an update fail the assertion, so they end as violations
    // rather than terminal observations.
    assert_eq!(obs("atomic_racy.asm", &["value"]), BTreeSet::from([row(&["2"])]));

    // put always lands; it returns the putIfAbsent value only when that went first.
    assert_eq!(
        obs("map_ops.asm", &["r1", "r2", "final", "size"]),
        BTreeSet::from([row(&["20", "nil", "10", "1"]), row(&["nil", "10", "10", "1"])]),
    );

    // tryLock either fails while the owner holds the lock or succeeds when it is free.
    let tries = obs("reentrant_trylock.asm", &["got"]);
    assert_eq!(tries, BTreeSet::from([row(&["0"]), row(&["1"])]));
}
