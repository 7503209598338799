//! An explicit-state model checker for a small concurrent stack machine.
//!
//! Library objects (reentrant locks, atomic integers, concurrent maps) run in
//! one of two modes. In *reference* mode their implementations are ordinary
//! interpreted code built from shared-memory operations, so every internal
//! step is a scheduling point. In *abstracted* mode each object is backed by
//! a native peer: a method call executes atomically on the host, and the
//! object's entire tracked state is a single version integer naming an
//! interned payload. Comparing the two modes on the same program measures
//! how much state space the abstraction saves.
//!
//! ```
//! use mcheck_core::{explore, parse_program, Mode, SearchConfig};
//! use std::collections::BTreeMap;
//!
//! let program = parse_program(
//!     "global count = 0
//!      fn main(0 args, 1 locals):
//!        new lock
//!        store 0
//!        load 0
//!        invoke lock.lock 0
//!        pop
//!        load 0
//!        invoke lock.unlock 0
//!        pop
//!        halt",
//!     &BTreeMap::new(),
//! )
//! .unwrap();
//! let abstracted = explore(&program, &SearchConfig::new(Mode::Abstracted)).unwrap();
//! let reference = explore(&program, &SearchConfig::new(Mode::Reference)).unwrap();
//! assert!(abstracted.violation.is_none());
//! assert!(abstracted.states < reference.states);
//! ```

pub mod bench;
pub mod conc_lib;
pub mod explorer;
pub mod listeners;
pub mod peer;
pub mod report;
pub mod vm;

#[cfg(doctest)]
mod book;

pub use explorer::{
    detect_violation, execute_transition, explore, explore_with, state_key, EndReason, SearchConfig,
    SearchError, SearchReport, Trace, TraceEntry, Transition, Violation,
};
pub use peer::{NativeOutcome, Peer, PeerInternTable, VersionId};
pub use vm::{parse_program, Mode, Program, SystemState, ViolationKind, Vm};
