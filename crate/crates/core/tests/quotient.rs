//! The explorer's state and transition counts match an independent
//! breadth-first enumeration of the quotient graph.

mod common;

use common::oracle::enumerate;
use mcheck_core::bench::Benchmark;
use mcheck_core::{explore, parse_program, Mode, SearchConfig};
use std::collections::BTreeMap;

fn exhaustive(mode: Mode) -> SearchConfig {
    SearchConfig {
        stop_at_first: false,
        ..SearchConfig::new(mode)
    }
}

#[test]
fn corpus_counts_match_brute_force() {
    for name in common::corpus_names() {
        let program = common::load(&name);
        for mode in [Mode::Abstracted, Mode::Reference] {
            let expected = enumerate(&program, mode);
            let report = explore(&program, &exhaustive(mode)).unwrap();
            assert_eq!(report.states, expected.states, "{name} {mode} states");
            assert_eq!(report.transitions, expected.edges, "{name} {mode} transitions");
        }
    }
}

#[test]
fn benchmark_counts_match_brute_force() {
    for b in Benchmark::ALL {
        let program = parse_program(b.source(), &BTreeMap::new()).unwrap();
        for mode in [Mode::Abstracted, Mode::Reference] {
            let expected = enumerate(&program, mode);
            let report = explore(&program, &SearchConfig::new(mode)).unwrap();
            assert!(report.violation.is_none(), "{b} {mode}");
            assert_eq!((report.states, report.transitions), (expected.states, expected.edges), "{b} {mode}");
        }
    }
}

#[test]
fn abstraction_never_adds_states_on_the_corpus() {
    for name in common::corpus_names() {
        let program = common::load(&name);
        let a = enumerate(&program, Mode::Abstracted);
        let r = enumerate(&program, Mode::Reference);
        assert!(a.states <= r.states, "{name}: {} > {}", a.states, r.states);
    }
}
