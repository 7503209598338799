//! Depth-first state-space exploration.
//!
//! A transition runs one thread from its current instruction until the next
//! scheduling point (or until it ends, blocks, or faults). The search expands
//! every enabled thread at every state, in ascending thread order, and prunes
//! any child whose canonical serialization has been seen before. States are
//! restored by value on backtrack; peer tables are append-only and need no
//! undo.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rustc_hash::FxHashSet;
use serde::Serialize;
use thiserror::Error;

use crate::listeners::{self, dispatch_violation, ListenerError, ListenerHooks, RetainedView, TraceFilter, TraceFilterPolicy};
use crate::peer::{Peer, VersionId};
use crate::vm::{
    LibClass, Mode, Program, SourceLoc, StepOutcome, SystemState, ThreadId, ThreadStatus, ViolationKind, Vm, VmError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndReason {
    Boundary,
    ThreadEnded,
    Blocked,
    Violation(ViolationKind),
}

/// One edge of the state graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub tid: ThreadId,
    /// Instructions completed; a call that blocks is not counted.
    pub instructions: u32,
    pub location: SourceLoc,
    pub function: Arc<str>,
    pub library: bool,
    pub end: EndReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub step: usize,
    pub tid: ThreadId,
    pub location: String,
    pub function: String,
    pub library: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Trace {
    pub entries: Vec<TraceEntry>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Thread schedule that reproduces the trace from the initial state.
    pub fn schedule(&self) -> Vec<ThreadId> {
        self.entries.iter().map(|e| e.tid).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
    pub trace: Trace,
    /// Unique states and transitions seen when the violation was detected.
    pub states: usize,
    pub transitions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchConfig {
    pub mode: Mode,
    pub max_depth: Option<usize>,
    pub trace_filter: bool,
    pub peer_gc: bool,
    pub overrides: BTreeMap<String, i64>,
    /// Stop at the first violation (the default) or record every violation
    /// kind reachable, pruning violating states.
    pub stop_at_first: bool,
    /// Globals whose values are recorded at every terminal state.
    pub observe: Vec<String>,
    /// Instructions a single transition may execute before the search gives up.
    pub transition_step_limit: u32,
    pub time_limit: Option<Duration>,
    /// Backtracks between peer GC passes.
    pub gc_interval: usize,
}

impl SearchConfig {
    pub fn new(mode: Mode) -> Self {
        SearchConfig {
            mode,
            max_depth: None,
            trace_filter: false,
            peer_gc: false,
            overrides: BTreeMap::new(),
            stop_at_first: true,
            observe: Vec::new(),
            transition_step_limit: 1_000_000,
            time_limit: None,
            gc_interval: 256,
        }
    }
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig::new(Mode::Abstracted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchReport {
    pub states: usize,
    pub transitions: usize,
    pub max_depth: usize,
    pub time: Duration,
    pub peak_state_bytes: usize,
    pub interned_versions: usize,
    pub violation: Option<Violation>,
    /// Every violation kind found (only more than one when not stopping at the first).
    pub violation_kinds: BTreeSet<ViolationKind>,
    /// Values of the observed globals at each distinct terminal state.
    pub terminal_observations: BTreeSet<Vec<String>>,
    pub native_calls: u64,
    pub gc_dropped: usize,
}

impl SearchReport {
    /// The report with wall time and memory figures cleared, for comparing runs.
    pub fn without_resources(&self) -> SearchReport {
        SearchReport {
            time: Duration::ZERO,
            peak_state_bytes: 0,
            gc_dropped: 0,
            ..self.clone()
        }
    }
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Vm(#[from] VmError),
    #[error("listener failed: {0}")]
    Listener(#[from] ListenerError),
    #[error("thread {tid} ran {limit} instructions without reaching a scheduling point")]
    StepLimit { tid: ThreadId, limit: u32 },
    #[error("time limit of {0:?} exceeded")]
    TimeLimit(Duration),
    #[error("unknown observed global `{0}`")]
    UnknownGlobal(String),
}

/// Runs `tid` from its current instruction up to the next scheduling point.
pub fn execute_transition(
    vm: &mut Vm<'_>,
    state: &SystemState,
    tid: ThreadId,
) -> Result<(SystemState, Transition), SearchError> {
    execute_transition_limited(vm, state, tid, SearchConfig::default().transition_step_limit)
}

fn execute_transition_limited(
    vm: &mut Vm<'_>,
    state: &SystemState,
    tid: ThreadId,
    limit: u32,
) -> Result<(SystemState, Transition), SearchError> {
    let program = vm.program();
    let (function, library, location) = match state.thread(tid).and_then(|t| t.top()) {
        Some(frame) => {
            let f = program.function(frame.func);
            let loc = f
                .lines
                .get(frame.pc as usize)
                .or(f.lines.last())
                .cloned()
                .unwrap_or_else(|| SourceLoc {
                    file: f.name.clone(),
                    line: 0,
                });
            (f.name.clone(), f.library, loc)
        }
        None => return Err(VmError::NotRunnable(tid).into()),
    };
    let mut next = state.clone();
    let mut instructions = 0u32;
    let end = loop {
        let outcome = vm.step_in_place(&mut next, tid)?;
        match outcome {
            StepOutcome::Continue => {
                instructions += 1;
                if instructions >= limit {
                    return Err(SearchError::StepLimit { tid, limit });
                }
            }
            StepOutcome::BoundaryReached => {
                instructions += 1;
                break EndReason::Boundary;
            }
            StepOutcome::ThreadEnded => {
                instructions += 1;
                break EndReason::ThreadEnded;
            }
            StepOutcome::Blocked => break EndReason::Blocked,
            StepOutcome::Violation(kind) => {
                instructions += 1;
                break EndReason::Violation(kind);
            }
        }
    };
    Ok((
        next,
        Transition {
            tid,
            instructions,
            location,
            function,
            library,
            end,
        },
    ))
}

/// Exact-match key: the full canonical serialization.
pub fn state_key(state: &SystemState) -> Vec<u8> {
    state.canonical_bytes()
}

/// Property check on a single state.
pub fn detect_violation(state: &SystemState) -> Option<(ViolationKind, String)> {
    if state.assertion_failed {
        return Some((ViolationKind::Assertion, "assertion failed".to_string()));
    }
    if let Some(fault) = &state.fault {
        let kind = match fault.kind {
            crate::vm::FaultKind::IllegalOperation => ViolationKind::IllegalMonitor,
            crate::vm::FaultKind::UnsupportedNative => ViolationKind::UnsupportedNativeMethod,
        };
        return Some((kind, fault.message.clone()));
    }
    let any_enabled = state.threads.iter().any(|t| t.status == ThreadStatus::Runnable);
    if any_enabled || state.threads.iter().all(|t| t.is_terminated()) {
        return None;
    }
    let stuck: Vec<String> = state
        .threads
        .iter()
        .filter(|t| !t.is_terminated())
        .map(|t| match t.status {
            ThreadStatus::BlockedOnObject(r) => format!("thread {} blocked on @{}", t.id, r.0),
            ThreadStatus::Parked => format!("thread {} parked", t.id),
            ThreadStatus::WaitingJoin(j) => format!("thread {} joining thread {j}", t.id),
            _ => format!("thread {} runnable", t.id),
        })
        .collect();
    Some((ViolationKind::Deadlock, format!("deadlock: {}", stuck.join(", "))))
}

pub fn explore(program: &Program, config: &SearchConfig) -> Result<SearchReport, SearchError> {
    explore_with(program, config, &mut [])
}

struct Node {
    state: SystemState,
    children: Vec<ThreadId>,
    next: usize,
    entry: Option<PathStep>,
    bytes: usize,
}

/// The transition that led to a node; rendered only when a trace is needed.
struct PathStep {
    tid: ThreadId,
    location: SourceLoc,
    function: Arc<str>,
    library: bool,
}

impl PathStep {
    fn to_entry(&self, step: usize) -> TraceEntry {
        TraceEntry {
            step,
            tid: self.tid,
            location: self.location.to_string(),
            function: self.function.to_string(),
            library: self.library,
        }
    }
}

/// Depth-first search with listeners attached (in registration order).
pub fn explore_with(
    program: &Program,
    config: &SearchConfig,
    listeners: &mut [&mut dyn ListenerHooks],
) -> Result<SearchReport, SearchError> {
    let started = Instant::now();
    let observed: Vec<u32> = config
        .observe
        .iter()
        .map(|g| program.global_id(g).ok_or_else(|| SearchError::UnknownGlobal(g.clone())))
        .collect::<Result<_, _>>()?;
    let mut filter = TraceFilter::new(TraceFilterPolicy::default());

    let mut vm = Vm::with_peer(program, config.mode, Peer::new(config.peer_gc));
    let mut search = Search {
        config,
        observed,
        visited: FxHashSet::default(),
        visited_bytes: 0,
        stack_bytes: 0,
        peak_bytes: 0,
        retained_versions: HashSet::new(),
        report: SearchReport {
            states: 0,
            transitions: 0,
            max_depth: 0,
            time: Duration::ZERO,
            peak_state_bytes: 0,
            interned_versions: 0,
            violation: None,
            violation_kinds: BTreeSet::new(),
            terminal_observations: BTreeSet::new(),
            native_calls: 0,
            gc_dropped: 0,
        },
        stack: Vec::new(),
        backtracks: 0,
    };

    let initial = vm.initial_state();
    let key = state_key(&initial);
    search.remember(&initial, key);
    let expand = search.on_new_state(&initial, None, listeners, &mut filter)?;
    if expand {
        search.push(initial, None);
    }

    while let Some(top) = search.stack.last_mut() {
        if top.next == top.children.len() {
            let done = search.stack.pop().expect("non-empty stack");
            search.stack_bytes -= done.bytes;
            search.backtracks += 1;
            for l in listeners.iter_mut() {
                l.on_backtrack(search.stack.len());
            }
            if config.peer_gc && search.backtracks.is_multiple_of(config.gc_interval.max(1)) {
                search.collect_garbage(&mut vm, listeners);
            }
            continue;
        }
        let tid = top.children[top.next];
        top.next += 1;
        let parent_depth = search.stack.len() - 1;
        let (child, transition) = execute_transition_limited(
            &mut vm,
            &search.stack.last().expect("non-empty stack").state,
            tid,
            config.transition_step_limit,
        )?;
        search.report.transitions += 1;
        for l in listeners.iter_mut() {
            l.on_state_advanced(&child, &transition);
        }
        if let Some(limit) = config.time_limit {
            if search.report.transitions.is_multiple_of(1024) && started.elapsed() > limit {
                return Err(SearchError::TimeLimit(limit));
            }
        }

        let key = state_key(&child);
        if search.visited.contains(key.as_slice()) {
            continue;
        }
        search.remember(&child, key);
        let entry = PathStep {
            tid,
            location: transition.location,
            function: transition.function,
            library: transition.library,
        };
        let depth = parent_depth + 1;
        search.report.max_depth = search.report.max_depth.max(depth);

        let expand = search.on_new_state(&child, Some(&entry), listeners, &mut filter)?;
        if search.stopped() {
            break;
        }
        if !expand {
            continue;
        }
        if config.max_depth.is_some_and(|max| depth >= max) && !Vm::enabled_threads(&child).is_empty() {
            let mut trace = search.trace();
            trace.entries.push(entry.to_entry(parent_depth));
            let v = Violation {
                kind: ViolationKind::DepthLimit,
                message: format!("depth limit {} reached", config.max_depth.unwrap_or_default()),
                trace,
                states: search.report.states,
                transitions: search.report.transitions,
            };
            search.record_depth_limit(v, listeners, &mut filter)?;
            continue;
        }
        search.push(child, Some(entry));
    }

    if config.peer_gc {
        search.collect_garbage(&mut vm, listeners);
    }
    let mut report = search.report;
    report.time = started.elapsed();
    report.interned_versions = vm.peer().table().total();
    report.native_calls = vm.peer().native_calls();
    report.peak_state_bytes = search.peak_bytes + vm.peer().table().payload_bytes();
    Ok(report)
}

struct Search<'c> {
    config: &'c SearchConfig,
    observed: Vec<u32>,
    visited: FxHashSet<Box<[u8]>>,
    visited_bytes: usize,
    stack_bytes: usize,
    peak_bytes: usize,
    retained_versions: HashSet<(LibClass, VersionId)>,
    report: SearchReport,
    stack: Vec<Node>,
    backtracks: usize,
}

impl Search<'_> {
    fn remember(&mut self, state: &SystemState, key: Vec<u8>) {
        self.visited_bytes += key.len();
        self.visited.insert(key.into_boxed_slice());
        self.report.states += 1;
        if self.config.peer_gc {
            self.retained_versions.extend(state.versions());
        }
    }

    fn push(&mut self, state: SystemState, entry: Option<PathStep>) {
        let bytes = std::mem::size_of::<SystemState>()
            + state
                .threads
                .iter()
                .map(|t| 32 + t.frames.iter().map(|f| 16 * (f.locals.len() + f.stack.len())).sum::<usize>())
                .sum::<usize>();
        self.stack_bytes += bytes;
        self.peak_bytes = self.peak_bytes.max(self.visited_bytes + self.stack_bytes);
        let children = Vm::enabled_threads(&state);
        self.stack.push(Node {
            state,
            children,
            next: 0,
            entry,
            bytes,
        });
    }

    fn stopped(&self) -> bool {
        self.config.stop_at_first
            && self
                .report
                .violation
                .as_ref()
                .is_some_and(|v| v.kind != ViolationKind::DepthLimit)
    }

    fn trace(&self) -> crate::explorer::Trace {
        Trace {
            entries: self
                .stack
                .iter()
                .filter_map(|n| n.entry.as_ref())
                .enumerate()
                .map(|(i, e)| e.to_entry(i))
                .collect(),
        }
    }

    /// Checks a freshly discovered state. Returns whether to expand it.
    fn on_new_state(
        &mut self,
        state: &SystemState,
        entry: Option<&PathStep>,
        listeners: &mut [&mut dyn ListenerHooks],
        filter: &mut TraceFilter,
    ) -> Result<bool, SearchError> {
        if let Some((kind, message)) = detect_violation(state) {
            let mut trace = self.trace();
            let depth = trace.len();
            trace.entries.extend(entry.map(|e| e.to_entry(depth)));
            let v = Violation {
                kind,
                message,
                trace,
                states: self.report.states,
                transitions: self.report.transitions,
            };
            self.report.violation_kinds.insert(kind);
            let keep_first = self
                .report
                .violation
                .as_ref()
                .is_some_and(|old| old.kind != ViolationKind::DepthLimit);
            if !keep_first {
                self.report.violation = Some(self.dispatch(v, listeners, filter)?);
            }
            return Ok(false);
        }
        if state.threads.iter().all(|t| t.is_terminated()) {
            if !self.observed.is_empty() {
                let values = self
                    .observed
                    .iter()
                    .map(|&g| state.globals[g as usize].to_string())
                    .collect();
                self.report.terminal_observations.insert(values);
            }
            return Ok(false);
        }
        Ok(true)
    }

    fn record_depth_limit(
        &mut self,
        v: Violation,
        listeners: &mut [&mut dyn ListenerHooks],
        filter: &mut TraceFilter,
    ) -> Result<(), SearchError> {
        self.report.violation_kinds.insert(ViolationKind::DepthLimit);
        if self.report.violation.is_none() {
            self.report.violation = Some(self.dispatch(v, listeners, filter)?);
        }
        Ok(())
    }

    fn dispatch(
        &self,
        v: Violation,
        listeners: &mut [&mut dyn ListenerHooks],
        filter: &mut TraceFilter,
    ) -> Result<Violation, SearchError> {
        let mut v = dispatch_violation(listeners, v)?;
        if self.config.trace_filter {
            v = dispatch_violation(&mut [filter as &mut dyn ListenerHooks], v)?;
        }
        Ok(v)
    }

    fn collect_garbage(&mut self, vm: &mut Vm<'_>, listeners: &mut [&mut dyn ListenerHooks]) {
        let view = RetainedView {
            stack: self.stack.iter().map(|n| &n.state).collect(),
            retained_versions: &self.retained_versions,
        };
        self.report.gc_dropped += listeners::run_peer_gc(&view, vm.peer_mut(), listeners);
    }
}
