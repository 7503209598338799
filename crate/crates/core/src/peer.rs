//! Native peers: library-object state kept outside the tracked state.
//!
//! A library object in abstracted mode is represented in the model-checked
//! state by a single [`VersionId`]. The payload behind it lives in a
//! [`PeerInternTable`] that hash-conses payloads per class, so two paths that
//! drive an object into the same logical state carry the same integer and
//! their states match. Tables only ever grow during a search: backtracking
//! restores version integers by value and never has to touch the peer.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::conc_lib::{apply_method, Payload, PayloadOutcome};
use crate::vm::{LibClass, ObjRef, ThreadId, ThreadStatus, Value};

/// Dense per-class id of an interned payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VersionId(pub u32);

impl fmt::Display for VersionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PeerError {
    #[error("unknown {class} version {version} (table holds {len})")]
    UnknownVersion {
        class: LibClass,
        version: VersionId,
        len: usize,
    },
    #[error("payload of class {payload} interned as {requested}")]
    ClassMismatch {
        requested: LibClass,
        payload: LibClass,
    },
}

#[derive(Debug, Default, Clone)]
struct ClassTable {
    ids: HashMap<Payload, VersionId>,
    payloads: Vec<Payload>,
    bytes: usize,
}

/// Per-class bijection between canonical payloads and version ids.
#[derive(Debug, Default, Clone)]
pub struct PeerInternTable {
    tables: [ClassTable; 3],
}

impl PeerInternTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn table(&self, class: LibClass) -> &ClassTable {
        &self.tables[class.tag() as usize]
    }

    pub fn intern_state(&mut self, class: LibClass, payload: Payload) -> Result<VersionId, PeerError> {
        if payload.class() != class {
            return Err(PeerError::ClassMismatch {
                requested: class,
                payload: payload.class(),
            });
        }
        let table = &mut self.tables[class.tag() as usize];
        if let Some(&id) = table.ids.get(&payload) {
            return Ok(id);
        }
        let id = VersionId(table.payloads.len() as u32);
        table.bytes += payload.canonical_bytes().len();
        table.payloads.push(payload.clone());
        table.ids.insert(payload, id);
        Ok(id)
    }

    pub fn resolve(&self, class: LibClass, version: VersionId) -> Result<&Payload, PeerError> {
        let table = self.table(class);
        table
            .payloads
            .get(version.0 as usize)
            .ok_or(PeerError::UnknownVersion {
                class,
                version,
                len: table.payloads.len(),
            })
    }

    /// Id already assigned to `payload`, without interning it.
    pub fn lookup(&self, payload: &Payload) -> Option<VersionId> {
        self.table(payload.class()).ids.get(payload).copied()
    }

    pub fn len(&self, class: LibClass) -> usize {
        self.table(class).payloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }

    /// Versions assigned across all classes.
    pub fn total(&self) -> usize {
        self.tables.iter().map(|t| t.payloads.len()).sum()
    }

    pub fn payload_bytes(&self) -> usize {
        self.tables.iter().map(|t| t.bytes).sum()
    }
}

/// Outcome of a native call, applied to the tracked state by the VM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NativeOutcome {
    Return(Value, VersionId),
    /// The caller must block on the object; nothing changes.
    Block,
    ReturnAndWake(Value, VersionId, Vec<ThreadId>),
    IllegalOp(String),
    Unsupported(String),
}

/// Everything a native method may look at.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub tid: ThreadId,
    pub object: ObjRef,
    pub class: LibClass,
    pub version: VersionId,
    pub method: &'a str,
    pub args: &'a [Value],
    /// Statuses of all threads, indexed by thread id.
    pub statuses: &'a [ThreadStatus],
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CallKey {
    version: VersionId,
    method: Box<str>,
    tid: ThreadId,
    args: Vec<Value>,
    blocked_here: Vec<ThreadId>,
}

/// Auxiliary per-object bookkeeping: which class the object belongs to and
/// memoized native-call results. Dropping it never changes behavior.
#[derive(Debug, Default, Clone)]
struct ObjectMonitor {
    calls: HashMap<CallKey, NativeOutcome>,
}

impl ObjectMonitor {
    fn entries(&self) -> usize {
        1 + self.calls.len()
    }
}

/// The host side of abstracted mode: intern table plus native dispatch.
#[derive(Debug, Default, Clone)]
pub struct Peer {
    table: PeerInternTable,
    monitors: HashMap<(LibClass, ObjRef), ObjectMonitor>,
    gc_enabled: bool,
    native_calls: u64,
}

impl Peer {
    pub fn new(gc_enabled: bool) -> Self {
        Peer {
            gc_enabled,
            ..Default::default()
        }
    }

    pub fn table(&self) -> &PeerInternTable {
        &self.table
    }

    pub fn intern_state(&mut self, class: LibClass, payload: Payload) -> Result<VersionId, PeerError> {
        self.table.intern_state(class, payload)
    }

    pub fn resolve(&self, class: LibClass, version: VersionId) -> Result<&Payload, PeerError> {
        self.table.resolve(class, version)
    }

    pub fn native_calls(&self) -> u64 {
        self.native_calls
    }

    pub fn gc_enabled(&self) -> bool {
        self.gc_enabled
    }

    /// Number of auxiliary entries (monitors and memoized calls) currently held.
    pub fn auxiliary_entries(&self) -> usize {
        self.monitors.values().map(ObjectMonitor::entries).sum()
    }

    /// Runs one native method atomically. Pure in `ctx` and the resolved
    /// payload; the only side effect is interning the successor payload.
    pub fn invoke_native(&mut self, ctx: &CallContext<'_>) -> Result<NativeOutcome, PeerError> {
        self.native_calls += 1;
        let blocked_here: Vec<ThreadId> = ctx
            .statuses
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == ThreadStatus::BlockedOnObject(ctx.object))
            .map(|(t, _)| t as ThreadId)
            .collect();
        let key = CallKey {
            version: ctx.version,
            method: ctx.method.into(),
            tid: ctx.tid,
            args: ctx.args.to_vec(),
            blocked_here,
        };
        let monitor_key = (ctx.class, ctx.object);
        if let Some(hit) = self
            .monitors
            .get(&monitor_key)
            .and_then(|m| m.calls.get(&key))
        {
            return Ok(hit.clone());
        }

        let payload = self.table.resolve(ctx.class, ctx.version)?;
        let outcome = match apply_method(payload, ctx.method, ctx.tid, ctx.args, &key.blocked_here) {
            None => NativeOutcome::Unsupported(format!("{}.{}", ctx.class, ctx.method)),
            Some(PayloadOutcome::Block) => NativeOutcome::Block,
            Some(PayloadOutcome::IllegalOp(msg)) => NativeOutcome::IllegalOp(msg),
            Some(PayloadOutcome::Return(v, next)) => {
                NativeOutcome::Return(v, self.table.intern_state(ctx.class, next)?)
            }
            Some(PayloadOutcome::ReturnAndWake(v, next, wake)) => {
                let version = self.table.intern_state(ctx.class, next)?;
                NativeOutcome::ReturnAndWake(v, version, wake)
            }
        };
        self.monitors
            .entry(monitor_key)
            .or_default()
            .calls
            .insert(key, outcome.clone());
        Ok(outcome)
    }

    /// Drops auxiliary entries for objects reported unreachable and memoized
    /// calls on versions that fail `live`. Interned payloads are kept: their
    /// ids may still appear in stored states and resurface on other paths.
    /// A no-op unless peer GC is enabled.
    pub fn notify_unreachable(
        &mut self,
        refs: &[(LibClass, ObjRef)],
        live: &dyn Fn(LibClass, VersionId) -> bool,
    ) -> usize {
        if !self.gc_enabled {
            return 0;
        }
        let mut dropped = 0;
        for key in refs {
            if let Some(m) = self.monitors.remove(key) {
                dropped += m.entries();
            }
        }
        for (&(class, _), monitor) in self.monitors.iter_mut() {
            let before = monitor.calls.len();
            monitor.calls.retain(|k, _| live(class, k.version));
            dropped += before - monitor.calls.len();
        }
        dropped
    }

    /// Objects the peer currently keeps auxiliary entries for.
    pub fn monitored_objects(&self) -> Vec<(LibClass, ObjRef)> {
        let mut out: Vec<_> = self.monitors.keys().copied().collect();
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conc_lib::{LockPayload, MapPayload};

    fn ctx<'a>(
        tid: ThreadId,
        class: LibClass,
        version: VersionId,
        method: &'a str,
        args: &'a [Value],
        statuses: &'a [ThreadStatus],
    ) -> CallContext<'a> {
        CallContext {
            tid,
            object: ObjRef(0),
            class,
            version,
            method,
            args,
            statuses,
        }
    }

    #[test]
    fn intern_is_dense_and_idempotent() {
        let mut t = PeerInternTable::new();
        let free = Payload::Lock(LockPayload::default());
        assert_eq!(t.intern_state(LibClass::Lock, free.clone()).unwrap(), VersionId(0));
        assert_eq!(t.intern_state(LibClass::Lock, free.clone()).unwrap(), VersionId(0));
        let held = Payload::Lock(LockPayload::held_by(1, 1));
        assert_eq!(t.intern_state(LibClass::Lock, held).unwrap(), VersionId(1));
        // ids are per class
        let m = Payload::Map(MapPayload::default());
        assert_eq!(t.intern_state(LibClass::Map, m).unwrap(), VersionId(0));
        assert_eq!(t.resolve(LibClass::Lock, VersionId(0)).unwrap(), &free);
    }

    #[test]
    fn resolve_out_of_range_is_error() {
        let t = PeerInternTable::new();
        assert!(matches!(
            t.resolve(LibClass::AtomicInt, VersionId(3)),
            Err(PeerError::UnknownVersion { len: 0, .. })
        ));
    }

    #[test]
    fn class_mismatch_rejected() {
        let mut t = PeerInternTable::new();
        let err = t.intern_state(LibClass::Lock, Payload::Map(MapPayload::default()));
        assert!(matches!(err, Err(PeerError::ClassMismatch { .. })));
    }

    #[test]
    fn native_lock_and_unsupported() {
        let mut peer = Peer::new(false);
        let v0 = peer.intern_state(LibClass::Lock, Payload::initial(LibClass::Lock)).unwrap();
        let statuses = [ThreadStatus::Runnable, ThreadStatus::Runnable];
        let out = peer
            .invoke_native(&ctx(1, LibClass::Lock, v0, "lock", &[], &statuses))
            .unwrap();
        let v1 = peer.table().lookup(&Payload::Lock(LockPayload::held_by(1, 1)));
        assert_eq!(out, NativeOutcome::Return(Value::Nil, v1.unwrap()));
        let out = peer
            .invoke_native(&ctx(0, LibClass::Lock, v1.unwrap(), "unlock", &[], &statuses))
            .unwrap();
        assert!(matches!(out, NativeOutcome::IllegalOp(_)));
        let out = peer
            .invoke_native(&ctx(0, LibClass::Lock, v0, "foo", &[], &statuses))
            .unwrap();
        assert_eq!(out, NativeOutcome::Unsupported("lock.foo".into()));
    }

    #[test]
    fn release_wakes_threads_blocked_on_the_object() {
        let mut peer = Peer::new(false);
        let held = peer.intern_state(LibClass::Lock, Payload::Lock(LockPayload::held_by(0, 1))).unwrap();
        let statuses = [
            ThreadStatus::Runnable,
            ThreadStatus::BlockedOnObject(ObjRef(0)),
            ThreadStatus::BlockedOnObject(ObjRef(7)),
            ThreadStatus::BlockedOnObject(ObjRef(0)),
        ];
        let out = peer
            .invoke_native(&ctx(0, LibClass::Lock, held, "unlock", &[], &statuses))
            .unwrap();
        let free = peer.table().lookup(&Payload::initial(LibClass::Lock)).unwrap();
        assert_eq!(out, NativeOutcome::ReturnAndWake(Value::Nil, free, vec![1, 3]));
    }

    #[test]
    fn invoke_is_pure_and_memoized() {
        let mut peer = Peer::new(true);
        let v = peer.intern_state(LibClass::AtomicInt, Payload::initial(LibClass::AtomicInt)).unwrap();
        let c = ctx(0, LibClass::AtomicInt, v, "incrementAndGet", &[], &[ThreadStatus::Runnable]);
        let a = peer.invoke_native(&c).unwrap();
        let b = peer.invoke_native(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(peer.table().total(), 2);
        assert_eq!(peer.auxiliary_entries(), 2);
    }

    #[test]
    fn gc_flag_gates_dropping() {
        let mut off = Peer::new(false);
        let v = off.intern_state(LibClass::AtomicInt, Payload::initial(LibClass::AtomicInt)).unwrap();
        let c = ctx(0, LibClass::AtomicInt, v, "get", &[], &[]);
        off.invoke_native(&c).unwrap();
        assert_eq!(off.notify_unreachable(&[(LibClass::AtomicInt, ObjRef(0))], &|_, _| false), 0);
        assert_eq!(off.auxiliary_entries(), 2);

        let mut on = Peer::new(true);
        let v = on.intern_state(LibClass::AtomicInt, Payload::initial(LibClass::AtomicInt)).unwrap();
        on.invoke_native(&ctx(0, LibClass::AtomicInt, v, "get", &[], &[])).unwrap();
        // live version, reachable object: nothing to drop
        assert_eq!(on.notify_unreachable(&[], &|_, _| true), 0);
        assert_eq!(on.notify_unreachable(&[(LibClass::AtomicInt, ObjRef(0))], &|_, _| true), 2);
        assert_eq!(on.table().total(), 1, "interned payloads survive");
    }
}
