use std::collections::HashSet;
use std::sync::Arc;

use super::program::{FuncId, LibClass, Program};
use super::value::{ObjRef, Value};
use crate::peer::VersionId;

pub type ThreadId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThreadStatus {
    Runnable,
    BlockedOnObject(ObjRef),
    Parked,
    WaitingJoin(ThreadId),
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub func: FuncId,
    pub pc: u32,
    pub locals: Vec<Value>,
    pub stack: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThreadState {
    pub id: ThreadId,
    pub status: ThreadStatus,
    pub frames: Vec<Frame>,
    pub permit: bool,
    pub atomic_depth: u32,
}

impl ThreadState {
    pub fn is_terminated(&self) -> bool {
        self.status == ThreadStatus::Terminated
    }

    pub fn top(&self) -> Option<&Frame> {
        self.frames.last()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum HeapObject {
    Array(Vec<Value>),
    /// A library object in abstracted mode: its whole tracked state is one
    /// version integer naming a payload held by the peer.
    Library { class: LibClass, version: VersionId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultKind {
    IllegalOperation,
    UnsupportedNative,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fault {
    pub kind: FaultKind,
    pub message: String,
}

/// The complete backtrackable state. Plain value semantics: cloning is a
/// snapshot and restoring is assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SystemState {
    /// Shared between successor states until a transition modifies them.
    pub threads: Vec<Arc<ThreadState>>,
    pub globals: Vec<Value>,
    pub objects: Vec<HeapObject>,
    pub assertion_failed: bool,
    pub fault: Option<Fault>,
}

impl SystemState {
    /// `main` as thread 0, globals at their declared initial values.
    pub fn initial(program: &Program) -> SystemState {
        let main = program.function(program.entry);
        SystemState {
            threads: vec![Arc::new(ThreadState {
                id: 0,
                status: ThreadStatus::Runnable,
                frames: vec![Frame {
                    func: program.entry,
                    pc: 0,
                    locals: vec![Value::Nil; main.locals as usize],
                    stack: Vec::new(),
                }],
                permit: false,
                atomic_depth: 0,
            })],
            globals: program.global_inits.clone(),
            objects: Vec::new(),
            assertion_failed: false,
            fault: None,
        }
    }

    pub fn next_thread_id(&self) -> ThreadId {
        self.threads.len() as ThreadId
    }

    pub fn thread(&self, tid: ThreadId) -> Option<&ThreadState> {
        self.threads.get(tid as usize).map(|t| &**t)
    }

    /// Mutable access, copying the thread first if another state shares it.
    pub fn thread_mut(&mut self, tid: ThreadId) -> Option<&mut ThreadState> {
        self.threads.get_mut(tid as usize).map(Arc::make_mut)
    }

    pub fn global(&self, program: &Program, name: &str) -> Option<Value> {
        program.global_id(name).map(|g| self.globals[g as usize])
    }

    /// Deterministic byte encoding. Two states serialize equally iff they
    /// are equal as values; map-like data is already held in sorted order.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 16 * self.threads.len());
        self.write_canonical(&mut out);
        out
    }

    pub fn write_canonical(&self, out: &mut Vec<u8>) {
        let mut flags = self.assertion_failed as u8;
        if let Some(f) = &self.fault {
            flags |= match f.kind {
                FaultKind::IllegalOperation => 2,
                FaultKind::UnsupportedNative => 4,
            };
        }
        out.push(flags);
        if let Some(f) = &self.fault {
            put_uvar(out, f.message.len() as u64);
            out.extend_from_slice(f.message.as_bytes());
        }
        put_uvar(out, self.globals.len() as u64);
        for v in &self.globals {
            put_value(out, *v);
        }
        put_uvar(out, self.objects.len() as u64);
        for obj in &self.objects {
            match obj {
                HeapObject::Array(cells) => {
                    out.push(0xA0);
                    put_uvar(out, cells.len() as u64);
                    for v in cells {
                        put_value(out, *v);
                    }
                }
                HeapObject::Library { class, version } => {
                    out.push(0xB0 | class.tag());
                    put_uvar(out, version.0 as u64);
                }
            }
        }
        put_uvar(out, self.threads.len() as u64);
        for t in &self.threads {
            match t.status {
                ThreadStatus::Runnable => out.push(0),
                ThreadStatus::BlockedOnObject(r) => {
                    out.push(1);
                    put_uvar(out, r.0 as u64);
                }
                ThreadStatus::Parked => out.push(2),
                ThreadStatus::WaitingJoin(j) => {
                    out.push(3);
                    put_uvar(out, j as u64);
                }
                ThreadStatus::Terminated => out.push(4),
            }
            out.push(t.permit as u8);
            put_uvar(out, t.atomic_depth as u64);
            put_uvar(out, t.frames.len() as u64);
            for f in &t.frames {
                put_uvar(out, f.func as u64);
                put_uvar(out, f.pc as u64);
                put_uvar(out, f.locals.len() as u64);
                for v in &f.locals {
                    put_value(out, *v);
                }
                put_uvar(out, f.stack.len() as u64);
                for v in &f.stack {
                    put_value(out, *v);
                }
            }
        }
    }

    /// Every `(class, version)` held by a library object in this state.
    pub fn versions(&self) -> impl Iterator<Item = (LibClass, VersionId)> + '_ {
        self.objects.iter().filter_map(|o| match o {
            HeapObject::Library { class, version } => Some((*class, *version)),
            HeapObject::Array(_) => None,
        })
    }

    /// Objects reachable from globals and live thread frames.
    pub fn reachable_objects(&self) -> HashSet<ObjRef> {
        let mut seen = HashSet::new();
        let mut work: Vec<ObjRef> = Vec::new();
        let roots = self.globals.iter().chain(
            self.threads
                .iter()
                .flat_map(|t| t.frames.iter())
                .flat_map(|f| f.locals.iter().chain(f.stack.iter())),
        );
        work.extend(roots.filter_map(|v| v.as_ref()));
        for t in &self.threads {
            if let ThreadStatus::BlockedOnObject(r) = t.status {
                work.push(r);
            }
        }
        while let Some(r) = work.pop() {
            if !seen.insert(r) {
                continue;
            }
            if let Some(HeapObject::Array(cells)) = self.objects.get(r.index()) {
                work.extend(cells.iter().filter_map(|v| v.as_ref()));
            }
        }
        seen
    }
}

fn put_uvar(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn put_value(out: &mut Vec<u8>, v: Value) {
    match v {
        Value::Nil => out.push(0),
        Value::Int(i) => {
            out.push(1);
            // zigzag keeps small negatives short
            put_uvar(out, ((i << 1) ^ (i >> 63)) as u64);
        }
        Value::Ref(r) => {
            out.push(2);
            put_uvar(out, r.0 as u64);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::parse_program;
    use std::collections::BTreeMap;

    fn sample() -> (Program, SystemState) {
        let p = parse_program(
            "global a = 1\nglobal b = nil\nfn main(0 args, 2 locals):\n halt",
            &BTreeMap::new(),
        )
        .unwrap();
        let s = SystemState::initial(&p);
        (p, s)
    }

    #[test]
    fn serialization_is_deterministic_and_copy_stable() {
        let (_, s) = sample();
        let copy = s.clone();
        assert_eq!(s.canonical_bytes(), s.canonical_bytes());
        assert_eq!(copy.canonical_bytes(), s.canonical_bytes());
    }

    #[test]
    fn version_integer_is_tracked() {
        let (_, mut s) = sample();
        s.objects.push(HeapObject::Library {
            class: LibClass::Lock,
            version: VersionId(0),
        });
        let mut t = s.clone();
        t.objects[0] = HeapObject::Library {
            class: LibClass::Lock,
            version: VersionId(1),
        };
        assert_ne!(s.canonical_bytes(), t.canonical_bytes());
    }

    #[test]
    fn local_slot_difference_changes_bytes() {
        let (_, s) = sample();
        let mut t = s.clone();
        t.thread_mut(0).unwrap().frames[0].locals[1] = Value::Int(0);
        assert_ne!(s.canonical_bytes(), t.canonical_bytes());
    }

    #[test]
    fn nil_and_zero_and_ref_are_distinct() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut c = Vec::new();
        put_value(&mut a, Value::Nil);
        put_value(&mut b, Value::Int(0));
        put_value(&mut c, Value::Ref(ObjRef(0)));
        assert_ne!(a, b);
        assert_ne!(b, c);
    }

    #[test]
    fn reachability_follows_array_cells() {
        let (_, mut s) = sample();
        s.objects.push(HeapObject::Array(vec![Value::Ref(ObjRef(1))]));
        s.objects.push(HeapObject::Array(vec![]));
        s.objects.push(HeapObject::Array(vec![]));
        s.globals[0] = Value::Ref(ObjRef(0));
        let live = s.reachable_objects();
        assert!(live.contains(&ObjRef(0)) && live.contains(&ObjRef(1)));
        assert!(!live.contains(&ObjRef(2)));
    }
}
