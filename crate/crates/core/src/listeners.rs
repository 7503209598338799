//! Search observers: violation augmentation, trace filtering and peer GC.

use std::collections::HashSet;

use thiserror::Error;

use crate::explorer::{Trace, TraceEntry, Transition, Violation};
use crate::peer::{Peer, VersionId};
use crate::vm::{HeapObject, LibClass, ObjRef, SystemState, ViolationKind};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ListenerError {
    #[error("listener `{name}` failed: {message}")]
    Failed { name: String, message: String },
    #[error("listener changed the violation kind from {from} to {to}")]
    KindChanged { from: ViolationKind, to: ViolationKind },
}

/// Hooks invoked synchronously by the explorer. They observe; only
/// `on_property_violated` may rewrite anything, and then only the
/// violation's trace and message.
pub trait ListenerHooks {
    fn on_state_advanced(&mut self, _state: &SystemState, _transition: &Transition) {}

    fn on_backtrack(&mut self, _depth: usize) {}

    fn on_property_violated(&mut self, violation: Violation) -> Result<Violation, ListenerError> {
        Ok(violation)
    }

    fn on_object_unreachable(&mut self, _objects: &[(LibClass, ObjRef)]) {}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFilterPolicy {
    pub hide_library: bool,
    pub collapse: bool,
    pub synthetic_label: String,
}

impl TraceFilterPolicy {
    pub fn identity() -> Self {
        TraceFilterPolicy {
            hide_library: false,
            collapse: false,
            synthetic_label: String::new(),
        }
    }

    pub fn hide() -> Self {
        TraceFilterPolicy {
            hide_library: true,
            ..Self::default()
        }
    }
}

impl Default for TraceFilterPolicy {
    fn default() -> Self {
        TraceFilterPolicy {
            hide_library: false,
            collapse: true,
            synthetic_label: "[library internals]".to_string(),
        }
    }
}

/// Removes library-internal entries (`hide_library`) or replaces each run of
/// them with one synthetic entry (`collapse`). User entries keep their order
/// and step indices.
pub fn filter_trace(trace: &Trace, policy: &TraceFilterPolicy) -> Trace {
    if !policy.hide_library && !policy.collapse {
        return trace.clone();
    }
    let mut entries: Vec<TraceEntry> = Vec::with_capacity(trace.len());
    let mut in_run = false;
    for e in &trace.entries {
        if !e.library {
            entries.push(e.clone());
            in_run = false;
            continue;
        }
        if policy.hide_library || in_run {
            continue;
        }
        in_run = true;
        entries.push(TraceEntry {
            step: e.step,
            tid: e.tid,
            location: String::new(),
            function: policy.synthetic_label.clone(),
            library: false,
        });
    }
    Trace { entries }
}

/// Built-in listener that filters counterexample traces.
#[derive(Debug, Clone)]
pub struct TraceFilter {
    pub policy: TraceFilterPolicy,
}

impl TraceFilter {
    pub fn new(policy: TraceFilterPolicy) -> Self {
        TraceFilter { policy }
    }
}

impl ListenerHooks for TraceFilter {
    fn on_property_violated(&mut self, mut violation: Violation) -> Result<Violation, ListenerError> {
        violation.trace = filter_trace(&violation.trace, &self.policy);
        Ok(violation)
    }
}

/// Applies listeners in registration order. A listener error is fatal.
pub fn dispatch_violation(
    listeners: &mut [&mut dyn ListenerHooks],
    violation: Violation,
) -> Result<Violation, ListenerError> {
    let kind = violation.kind;
    let mut v = violation;
    for l in listeners.iter_mut() {
        v = l.on_property_violated(v)?;
        if v.kind != kind {
            return Err(ListenerError::KindChanged { from: kind, to: v.kind });
        }
    }
    Ok(v)
}

/// What the explorer still holds: states on the DFS stack, and every
/// version that appears in some stored state.
pub struct RetainedView<'a> {
    pub stack: Vec<&'a SystemState>,
    pub retained_versions: &'a HashSet<(LibClass, VersionId)>,
}

/// Drops peer-side auxiliary entries for library objects unreachable from
/// every state on the DFS stack. Versions are treated as live if any stored
/// state mentions them, so nothing a later path can reach is dropped.
pub fn run_peer_gc(
    view: &RetainedView<'_>,
    peer: &mut Peer,
    listeners: &mut [&mut dyn ListenerHooks],
) -> usize {
    if !peer.gc_enabled() {
        return 0;
    }
    let mut reachable: HashSet<(LibClass, ObjRef)> = HashSet::new();
    let mut stack_versions: HashSet<(LibClass, VersionId)> = HashSet::new();
    for state in &view.stack {
        stack_versions.extend(state.versions());
        for r in state.reachable_objects() {
            if let Some(HeapObject::Library { class, .. }) = state.objects.get(r.index()) {
                reachable.insert((*class, r));
            }
        }
    }
    let unreachable: Vec<(LibClass, ObjRef)> = peer
        .monitored_objects()
        .into_iter()
        .filter(|o| !reachable.contains(o))
        .collect();
    if !unreachable.is_empty() {
        for l in listeners.iter_mut() {
            l.on_object_unreachable(&unreachable);
        }
    }
    let live = |class: LibClass, v: VersionId| {
        view.retained_versions.contains(&(class, v)) || stack_versions.contains(&(class, v))
    };
    peer.notify_unreachable(&unreachable, &live)
}
