//! The modeled concurrency utilities.
//!
//! Each class exists twice: as pure payload-transition functions executed by
//! the peer in abstracted mode, and as interpreted assembly (see
//! [`reference_library_source`]) executed instruction by instruction in
//! reference mode. Both forms expose the same observable API.

mod atomic_int;
mod lock;
mod map;

use std::fmt;

pub use atomic_int::{atomic_apply, AtomicIntPayload, AtomicOp};
pub use lock::{lock_acquire, lock_release, lock_try_acquire, LockPayload};
pub use map::{map_apply, MapOp, MapPayload};

use crate::vm::{LibClass, ThreadId, Value};

/// Host-side state of one library object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Payload {
    Lock(LockPayload),
    AtomicInt(AtomicIntPayload),
    Map(MapPayload),
}

impl Payload {
    pub fn class(&self) -> LibClass {
        match self {
            Payload::Lock(_) => LibClass::Lock,
            Payload::AtomicInt(_) => LibClass::AtomicInt,
            Payload::Map(_) => LibClass::Map,
        }
    }

    /// State of a freshly constructed object.
    pub fn initial(class: LibClass) -> Payload {
        match class {
            LibClass::Lock => Payload::Lock(LockPayload::default()),
            LibClass::AtomicInt => Payload::AtomicInt(AtomicIntPayload(0)),
            LibClass::Map => Payload::Map(MapPayload::default()),
        }
    }

    /// Canonical byte form; equal bytes iff equal payloads.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.class().tag()];
        match self {
            Payload::Lock(p) => {
                out.extend_from_slice(&p.owner.map_or(-1i64, |o| o as i64).to_le_bytes());
                out.extend_from_slice(&p.count.to_le_bytes());
                out.extend_from_slice(&(p.queue.len() as u32).to_le_bytes());
                for t in &p.queue {
                    out.extend_from_slice(&t.to_le_bytes());
                }
            }
            Payload::AtomicInt(p) => out.extend_from_slice(&p.0.to_le_bytes()),
            Payload::Map(p) => {
                out.extend_from_slice(&(p.entries.len() as u32).to_le_bytes());
                for (k, v) in &p.entries {
                    out.extend_from_slice(&k.to_le_bytes());
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Lock(p) => write!(
                f,
                "lock(owner={}, count={}, queue={:?})",
                p.owner.map_or("none".to_string(), |o| o.to_string()),
                p.count,
                p.queue
            ),
            Payload::AtomicInt(p) => write!(f, "atomicint({})", p.0),
            Payload::Map(p) => write!(f, "map({:?})", p.entries),
        }
    }
}

/// Result of a payload transition, before the peer interns the successor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadOutcome<P> {
    Return(Value, P),
    Block,
    ReturnAndWake(Value, P, Vec<ThreadId>),
    IllegalOp(String),
}

impl<P> PayloadOutcome<P> {
    pub fn map<Q>(self, f: impl FnOnce(P) -> Q) -> PayloadOutcome<Q> {
        match self {
            PayloadOutcome::Return(v, p) => PayloadOutcome::Return(v, f(p)),
            PayloadOutcome::Block => PayloadOutcome::Block,
            PayloadOutcome::ReturnAndWake(v, p, w) => PayloadOutcome::ReturnAndWake(v, f(p), w),
            PayloadOutcome::IllegalOp(m) => PayloadOutcome::IllegalOp(m),
        }
    }
}

/// Applies `method` to a payload on behalf of `tid`. `blocked_here` lists
/// threads currently blocked on this object. Returns `None` when the class
/// has no such method.
pub fn apply_method(
    payload: &Payload,
    method: &str,
    tid: ThreadId,
    args: &[Value],
    blocked_here: &[ThreadId],
) -> Option<PayloadOutcome<Payload>> {
    let out = match payload {
        Payload::Lock(p) => {
            let out = match method {
                "lock" => lock_acquire(p, tid),
                "tryLock" => lock_try_acquire(p, tid),
                "unlock" => lock_release(p, tid, blocked_here),
                _ => return None,
            };
            out.map(Payload::Lock)
        }
        Payload::AtomicInt(p) => atomic_apply(AtomicOp::from_name(method)?, p, args).map(Payload::AtomicInt),
        Payload::Map(p) => map_apply(MapOp::from_name(method)?, p, args).map(Payload::Map),
    };
    Some(out)
}

const LOCK_ASM: &str = include_str!("../../lib/reference/lock.asm");
const ATOMICINT_ASM: &str = include_str!("../../lib/reference/atomicint.asm");
const MAP_ASM: &str = include_str!("../../lib/reference/map.asm");

/// Interpreted reference implementation of `class`, as library-flagged assembly.
pub fn reference_library_source(class: LibClass) -> &'static str {
    match class {
        LibClass::Lock => LOCK_ASM,
        LibClass::AtomicInt => ATOMICINT_ASM,
        LibClass::Map => MAP_ASM,
    }
}

pub(crate) fn int_arg(args: &[Value], i: usize, what: &str) -> Result<i64, String> {
    match args.get(i) {
        Some(Value::Int(v)) => Ok(*v),
        Some(other) => Err(format!("{what}: expected an integer, got {other}")),
        None => Err(format!("{what}: missing argument {i}")),
    }
}
