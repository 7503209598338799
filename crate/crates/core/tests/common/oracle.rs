//! Brute-force state enumerator used as a test oracle.
//!
//! Written against the single-step VM interface only: it decides where a
//! transition ends by looking at the next instruction itself, keeps its own
//! visited set, and walks breadth-first, so it shares no search code with the
//! explorer under test.

use std::collections::{HashSet, VecDeque};

use mcheck_core::vm::{StepOutcome, ThreadStatus};
use mcheck_core::{Mode, Program, SystemState, Vm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quotient {
    /// Distinct states reachable from the initial state.
    pub states: usize,
    /// Edges leaving non-violating states, duplicates included.
    pub edges: usize,
    pub violating: usize,
}

fn violating(state: &SystemState) -> bool {
    state.assertion_failed || state.fault.is_some()
}

/// Runs `tid` until it stops, or its next instruction is a scheduling point.
fn run_thread(vm: &mut Vm<'_>, state: &SystemState, tid: u32) -> SystemState {
    let mut next = state.clone();
    loop {
        match vm.step_in_place(&mut next, tid).expect("runnable thread") {
            StepOutcome::Continue | StepOutcome::BoundaryReached => {
                let t = next.thread(tid).expect("thread exists");
                if t.status != ThreadStatus::Runnable || vm.next_is_boundary(&next, tid) {
                    return next;
                }
            }
            StepOutcome::ThreadEnded | StepOutcome::Blocked | StepOutcome::Violation(_) => return next,
        }
    }
}

pub fn enumerate(program: &Program, mode: Mode) -> Quotient {
    let mut vm = Vm::new(program, mode);
    let initial = vm.initial_state();
    let mut seen: HashSet<Vec<u8>> = HashSet::new();
    seen.insert(initial.canonical_bytes());
    let mut queue = VecDeque::from([initial]);
    let mut q = Quotient {
        states: 1,
        edges: 0,
        violating: 0,
    };
    while let Some(state) = queue.pop_front() {
        if violating(&state) {
            q.violating += 1;
            continue;
        }
        let runnable: Vec<u32> = state
            .threads
            .iter()
            .filter(|t| t.status == ThreadStatus::Runnable)
            .map(|t| t.id)
            .collect();
        for tid in runnable {
            let next = run_thread(&mut vm, &state, tid);
            q.edges += 1;
            if seen.insert(next.canonical_bytes()) {
                q.states += 1;
                queue.push_back(next);
            }
        }
    }
    q
}
