//! Peer garbage collection changes memory use only, never the verdict or
//! the shape of the state space.

mod common;

use mcheck_core::{explore, Mode, SearchConfig};

#[test]
fn gc_on_and_off_give_the_same_reports() {
    for name in common::corpus_names() {
        let program = common::load(&name);
        for mode in [Mode::Abstracted, Mode::Reference] {
            for stop_at_first in [true, false] {
                let run = |peer_gc: bool| {
                    let config = SearchConfig {
                        peer_gc,
                        stop_at_first,
                        gc_interval: 1,
                        ..SearchConfig::new(mode)
                    };
                    explore(&program, &config).unwrap().without_resources()
                };
                assert_eq!(run(true), run(false), "{name} {mode}");
            }
        }
    }
}

#[test]
fn gc_releases_entries_of_abandoned_objects() {
    let program = common::load("abandoned_lock.asm");
    let config = SearchConfig {
        peer_gc: true,
        gc_interval: 1,
        ..SearchConfig::new(Mode::Abstracted)
    };
    let report = explore(&program, &config).unwrap();
    assert!(report.violation.is_none());
    assert!(report.gc_dropped > 0);
}
