//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod fuzz;
pub mod oracle;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mcheck_core::vm::load_program;
use mcheck_core::Program;

/// Corpus programs with the integer globals observed at termination.
pub const CORPUS: &[(&str, &[&str])] = &[
    ("abandoned_lock.asm", &["g"]),
    ("atomic_counter.asm", &["seen1", "seen2", "seen3"]),
    ("atomic_ok.asm", &[]),
    ("atomic_racy.asm", &["value"]),
    ("cas_retry.asm", &["retries"]),
    ("gcas_spin.asm", &["counter"]),
    ("illegal_unlock.asm", &[]),
    ("lock_counter.asm", &["counter"]),
    ("map_ops.asm", &["r1", "r2", "final", "size"]),
    ("mixed.asm", &["flag"]),
    ("park_handoff.asm", &["data"]),
    ("reentrant_trylock.asm", &["got", "held"]),
    ("two_lock_deadlock.asm", &[]),
    ("unknown_method.asm", &[]),
];

/// Resolved from the workspace layout so other crates' tests can share it.
pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .expect("crate inside a workspace")
        .join("core/tests/corpus")
}

/// Every corpus file name, sorted.
pub fn corpus_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| {
            let name = e.ok()?.file_name().into_string().ok()?;
            name.ends_with(".asm").then_some(name)
        })
        .collect();
    names.sort();
    names
}

pub fn load(name: &str) -> Program {
    load_program(&corpus_dir().join(name), &BTreeMap::new()).unwrap_or_else(|e| panic!("{name}: {e}"))
}
