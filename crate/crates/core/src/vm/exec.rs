use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::program::{FuncId, Instruction, LibClass, Program};
use super::state::{Fault, FaultKind, Frame, HeapObject, SystemState, ThreadId, ThreadStatus};
use super::value::{ObjRef, Value};
use crate::conc_lib::Payload;
use crate::peer::{CallContext, NativeOutcome, Peer, PeerError};

/// How library objects execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Interpreted reference implementations, instruction by instruction.
    Reference,
    /// Native peers; an object's tracked state is one version integer.
    #[default]
    Abstracted,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Reference => "reference",
            Mode::Abstracted => "abstracted",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(Mode::Reference),
            "abstracted" => Ok(Mode::Abstracted),
            other => Err(format!("unknown mode `{other}` (expected reference or abstracted)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Assertion,
    Deadlock,
    IllegalMonitor,
    UnsupportedNativeMethod,
    DepthLimit,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::Assertion => "assertion",
            ViolationKind::Deadlock => "deadlock",
            ViolationKind::IllegalMonitor => "illegal-monitor",
            ViolationKind::UnsupportedNativeMethod => "unsupported-native-method",
            ViolationKind::DepthLimit => "depth-limit",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    BoundaryReached,
    ThreadEnded,
    Blocked,
    Violation(ViolationKind),
}

/// Failures that indicate a broken invariant rather than a program bug.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VmError {
    #[error("thread {0} is not runnable")]
    NotRunnable(ThreadId),
    #[error(transparent)]
    Peer(#[from] PeerError),
}

/// Executes instructions of one program in one mode. Owns the peer, whose
/// tables persist across every state the VM touches.
#[derive(Debug)]
pub struct Vm<'p> {
    program: &'p Program,
    mode: Mode,
    peer: Peer,
}

enum Flow {
    Next,
    Jump(u32),
    /// pc already updated (calls, returns)
    Done,
    Ended,
    Blocked,
    AssertFailed,
}

fn illegal(msg: impl Into<String>) -> Fault {
    Fault {
        kind: FaultKind::IllegalOperation,
        message: msg.into(),
    }
}

fn pop(stack: &mut Vec<Value>) -> Result<Value, Fault> {
    stack.pop().ok_or_else(|| illegal("operand stack underflow"))
}

fn pop_int(stack: &mut Vec<Value>, what: &str) -> Result<i64, Fault> {
    match pop(stack)? {
        Value::Int(v) => Ok(v),
        other => Err(illegal(format!("{what}: expected an integer, got {other}"))),
    }
}

fn pop_args(stack: &mut Vec<Value>, argc: usize) -> Result<Vec<Value>, Fault> {
    if stack.len() < argc {
        return Err(illegal("operand stack underflow"));
    }
    Ok(stack.split_off(stack.len() - argc))
}

fn array_mut(objects: &mut [HeapObject], r: Value) -> Result<&mut Vec<Value>, Fault> {
    let r = r.as_ref().ok_or_else(|| illegal(format!("array access through non-reference {r}")))?;
    match objects.get_mut(r.index()) {
        Some(HeapObject::Array(cells)) => Ok(cells),
        Some(HeapObject::Library { class, .. }) => {
            Err(illegal(format!("array access on a {class} object")))
        }
        None => Err(illegal(format!("dangling reference @{}", r.0))),
    }
}

fn cell_index(cells: &[Value], idx: i64) -> Result<usize, Fault> {
    if idx < 0 || idx as usize >= cells.len() {
        Err(illegal(format!(
            "array index {idx} out of range for length {}",
            cells.len()
        )))
    } else {
        Ok(idx as usize)
    }
}

/// Pushes a callee frame; the caller resumes after the calling instruction.
fn push_call(program: &Program, frames: &mut Vec<Frame>, func: FuncId, args: Vec<Value>) {
    if let Some(caller) = frames.last_mut() {
        caller.pc += 1;
    }
    frames.push(new_frame(program, func, args));
}

fn new_frame(program: &Program, func: FuncId, args: Vec<Value>) -> Frame {
    let mut locals = args;
    locals.resize(program.function(func).locals as usize, Value::Nil);
    Frame {
        func,
        pc: 0,
        locals,
        stack: Vec::new(),
    }
}

impl<'p> Vm<'p> {
    pub fn new(program: &'p Program, mode: Mode) -> Self {
        Self::with_peer(program, mode, Peer::new(false))
    }

    pub fn with_peer(program: &'p Program, mode: Mode, peer: Peer) -> Self {
        Vm { program, mode, peer }
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn peer(&self) -> &Peer {
        &self.peer
    }

    pub fn peer_mut(&mut self) -> &mut Peer {
        &mut self.peer
    }

    pub fn initial_state(&self) -> SystemState {
        SystemState::initial(self.program)
    }

    /// Runnable threads in ascending id order.
    pub fn enabled_threads(state: &SystemState) -> Vec<ThreadId> {
        state
            .threads
            .iter()
            .filter(|t| t.status == ThreadStatus::Runnable)
            .map(|t| t.id)
            .collect()
    }

    pub fn current_instruction(&self, state: &SystemState, tid: ThreadId) -> Option<&'p Instruction> {
        let frame = state.thread(tid)?.top()?;
        self.program.function(frame.func).code.get(frame.pc as usize)
    }

    /// True when the thread's next instruction is a scheduling point and no
    /// atomic section is open.
    pub fn next_is_boundary(&self, state: &SystemState, tid: ThreadId) -> bool {
        let Some(t) = state.thread(tid) else {
            return false;
        };
        t.atomic_depth == 0
            && self
                .current_instruction(state, tid)
                .is_some_and(Instruction::is_scheduling_relevant)
    }

    /// Executes exactly one instruction of `tid` on a copy of `state`.
    pub fn step(
        &mut self,
        state: &SystemState,
        tid: ThreadId,
    ) -> Result<(SystemState, StepOutcome), VmError> {
        let mut next = state.clone();
        let outcome = self.step_in_place(&mut next, tid)?;
        Ok((next, outcome))
    }

    pub fn step_in_place(&mut self, state: &mut SystemState, tid: ThreadId) -> Result<StepOutcome, VmError> {
        match state.thread(tid) {
            Some(t) if t.status == ThreadStatus::Runnable && !t.frames.is_empty() => {}
            _ => return Err(VmError::NotRunnable(tid)),
        }
        let flow = match self.exec(state, tid) {
            Ok(flow) => flow,
            Err(Exec::Fault(fault)) => {
                let kind = match fault.kind {
                    FaultKind::IllegalOperation => ViolationKind::IllegalMonitor,
                    FaultKind::UnsupportedNative => ViolationKind::UnsupportedNativeMethod,
                };
                state.fault = Some(fault);
                return Ok(StepOutcome::Violation(kind));
            }
            Err(Exec::Internal(e)) => return Err(e),
        };
        match flow {
            Flow::Next => {
                if let Some(f) = Arc::make_mut(&mut state.threads[tid as usize]).frames.last_mut() {
                    f.pc += 1;
                }
            }
            Flow::Jump(target) => {
                if let Some(f) = Arc::make_mut(&mut state.threads[tid as usize]).frames.last_mut() {
                    f.pc = target;
                }
            }
            Flow::Done => {}
            Flow::Ended => {
                end_thread(state, tid);
                return Ok(StepOutcome::ThreadEnded);
            }
            Flow::Blocked => return Ok(StepOutcome::Blocked),
            Flow::AssertFailed => {
                if let Some(f) = Arc::make_mut(&mut state.threads[tid as usize]).frames.last_mut() {
                    f.pc += 1;
                }
                state.assertion_failed = true;
                return Ok(StepOutcome::Violation(ViolationKind::Assertion));
            }
        }
        Ok(if self.next_is_boundary(state, tid) {
            StepOutcome::BoundaryReached
        } else {
            StepOutcome::Continue
        })
    }

    fn exec(&mut self, state: &mut SystemState, tid: ThreadId) -> Result<Flow, Exec> {
        let program = self.program;
        let ti = tid as usize;
        let (func_id, pc) = {
            let f = state.threads[ti].frames.last().expect("runnable thread has a frame");
            (f.func, f.pc)
        };
        let func = program.function(func_id);
        let Some(ins) = func.code.get(pc as usize) else {
            return Err(illegal(format!("fell off the end of `{}`", func.name)).into());
        };

        let SystemState {
            threads,
            globals,
            objects,
            ..
        } = state;
        let thread_count = threads.len();
        let stack = &mut Arc::make_mut(&mut threads[ti]).frames.last_mut().unwrap().stack;

        use Instruction as I;
        let flow = match ins {
            I::Push(v) => {
                stack.push(*v);
                Flow::Next
            }
            I::Pop => {
                pop(stack)?;
                Flow::Next
            }
            I::Dup => {
                let v = *stack.last().ok_or_else(|| illegal("operand stack underflow"))?;
                stack.push(v);
                Flow::Next
            }
            I::Load(slot) => {
                let v = threads[ti].frames.last().unwrap().locals[*slot as usize];
                Arc::make_mut(&mut threads[ti]).frames.last_mut().unwrap().stack.push(v);
                Flow::Next
            }
            I::Store(slot) => {
                let frame = Arc::make_mut(&mut threads[ti]).frames.last_mut().unwrap();
                let v = pop(&mut frame.stack)?;
                frame.locals[*slot as usize] = v;
                Flow::Next
            }
            I::Add | I::Sub | I::Mul | I::Lt => {
                let b = pop_int(stack, ins.mnemonic())?;
                let a = pop_int(stack, ins.mnemonic())?;
                stack.push(match ins {
                    I::Add => Value::Int(a.wrapping_add(b)),
                    I::Sub => Value::Int(a.wrapping_sub(b)),
                    I::Mul => Value::Int(a.wrapping_mul(b)),
                    _ => Value::from_bool(a < b),
                });
                Flow::Next
            }
            I::Eq => {
                let b = pop(stack)?;
                let a = pop(stack)?;
                stack.push(Value::from_bool(a == b));
                Flow::Next
            }
            I::Not => {
                let a = pop(stack)?;
                stack.push(Value::from_bool(a.is_falsy()));
                Flow::Next
            }
            I::Jmp(target) => Flow::Jump(*target),
            I::Jz(target) => {
                if pop(stack)?.is_falsy() {
                    Flow::Jump(*target)
                } else {
                    Flow::Next
                }
            }
            I::Call { func, argc } => {
                let args = pop_args(stack, *argc as usize)?;
                push_call(program, &mut Arc::make_mut(&mut threads[ti]).frames, *func, args);
                Flow::Done
            }
            I::Ret => {
                let frames = &mut Arc::make_mut(&mut threads[ti]).frames;
                let done = frames.pop().unwrap();
                let ret = done.stack.last().copied().unwrap_or(Value::Nil);
                match frames.last_mut() {
                    Some(caller) => {
                        caller.stack.push(ret);
                        Flow::Done
                    }
                    None => Flow::Ended,
                }
            }
            I::Tid => {
                stack.push(Value::Int(tid as i64));
                Flow::Next
            }
            I::GLoad(g) => {
                stack.push(globals[*g as usize]);
                Flow::Next
            }
            I::GStore(g) => {
                globals[*g as usize] = pop(stack)?;
                Flow::Next
            }
            I::GCas(g) => {
                let new = pop(stack)?;
                let expected = pop(stack)?;
                let cell = &mut globals[*g as usize];
                let ok = *cell == expected;
                if ok {
                    *cell = new;
                }
                stack.push(Value::from_bool(ok));
                Flow::Next
            }
            I::NewArr(n) => {
                let r = ObjRef(objects.len() as u32);
                objects.push(HeapObject::Array(vec![Value::Nil; *n as usize]));
                stack.push(Value::Ref(r));
                Flow::Next
            }
            I::ALoad => {
                let idx = pop_int(stack, "aload index")?;
                let r = pop(stack)?;
                let cells = array_mut(objects, r)?;
                let v = cells[cell_index(cells, idx)?];
                stack.push(v);
                Flow::Next
            }
            I::AStore => {
                let v = pop(stack)?;
                let idx = pop_int(stack, "astore index")?;
                let r = pop(stack)?;
                let cells = array_mut(objects, r)?;
                let i = cell_index(cells, idx)?;
                cells[i] = v;
                Flow::Next
            }
            I::ACas => {
                let new = pop(stack)?;
                let expected = pop(stack)?;
                let idx = pop_int(stack, "acas index")?;
                let r = pop(stack)?;
                let cells = array_mut(objects, r)?;
                let i = cell_index(cells, idx)?;
                let ok = cells[i] == expected;
                if ok {
                    cells[i] = new;
                }
                stack.push(Value::from_bool(ok));
                Flow::Next
            }
            I::New { class, ctor } => match self.mode {
                Mode::Abstracted => {
                    let version = self
                        .peer
                        .intern_state(*class, Payload::initial(*class))
                        .map_err(VmError::from)?;
                    let r = ObjRef(objects.len() as u32);
                    objects.push(HeapObject::Library {
                        class: *class,
                        version,
                    });
                    stack.push(Value::Ref(r));
                    Flow::Next
                }
                Mode::Reference => match ctor {
                    Some(f) => {
                        push_call(program, &mut Arc::make_mut(&mut threads[ti]).frames, *f, Vec::new());
                        Flow::Done
                    }
                    None => return Err(unsupported(format!("{class}.new")).into()),
                },
            },
            I::Invoke {
                class,
                method,
                argc,
                target,
            } => match self.mode {
                Mode::Reference => match target {
                    Some(f) => {
                        // receiver becomes argument 0
                        let args = pop_args(stack, *argc as usize + 1)?;
                        push_call(program, &mut Arc::make_mut(&mut threads[ti]).frames, *f, args);
                        Flow::Done
                    }
                    None => return Err(unsupported(format!("{class}.{method}")).into()),
                },
                Mode::Abstracted => return self.invoke_native(state, tid, *class, method, *argc as usize),
            },
            I::Spawn { func, argc } => {
                let args = pop_args(stack, *argc as usize)?;
                let new_tid = thread_count as ThreadId;
                stack.push(Value::Int(new_tid as i64));
                threads.push(Arc::new(super::state::ThreadState {
                    id: new_tid,
                    status: ThreadStatus::Runnable,
                    frames: vec![new_frame(program, *func, args)],
                    permit: false,
                    atomic_depth: 0,
                }));
                Flow::Next
            }
            I::Join => {
                let target = pop_int(stack, "join")?;
                let status = usize::try_from(target)
                    .ok()
                    .and_then(|t| threads.get(t))
                    .map(|t| t.status)
                    .ok_or_else(|| illegal(format!("join on unknown thread {target}")))?;
                let me = Arc::make_mut(&mut threads[ti]);
                me.frames.last_mut().unwrap().pc += 1;
                if status == ThreadStatus::Terminated {
                    Flow::Done
                } else {
                    me.status = ThreadStatus::WaitingJoin(target as ThreadId);
                    Flow::Blocked
                }
            }
            I::Park => {
                let me = Arc::make_mut(&mut threads[ti]);
                me.frames.last_mut().unwrap().pc += 1;
                if me.permit {
                    me.permit = false;
                    Flow::Done
                } else {
                    me.status = ThreadStatus::Parked;
                    Flow::Blocked
                }
            }
            I::Unpark => {
                let target = pop_int(stack, "unpark")?;
                // unpark of a thread that does not exist yet is a no-op
                if let Some(t) = usize::try_from(target).ok().and_then(|t| threads.get_mut(t)).map(Arc::make_mut) {
                    match t.status {
                        ThreadStatus::Parked => t.status = ThreadStatus::Runnable,
                        ThreadStatus::Terminated => {}
                        _ => t.permit = true,
                    }
                }
                Flow::Next
            }
            I::AtomicBegin => {
                Arc::make_mut(&mut threads[ti]).atomic_depth += 1;
                Flow::Next
            }
            I::AtomicEnd => {
                let me = Arc::make_mut(&mut threads[ti]);
                if me.atomic_depth == 0 {
                    return Err(illegal("atomic_end without matching atomic_begin").into());
                }
                me.atomic_depth -= 1;
                Flow::Next
            }
            I::Assert => {
                if pop(stack)?.is_falsy() {
                    Flow::AssertFailed
                } else {
                    Flow::Next
                }
            }
            I::Halt => Flow::Ended,
            I::Illegal => {
                return Err(illegal(format!("illegal operation raised in `{}`", func.name)).into())
            }
        };
        Ok(flow)
    }

    fn invoke_native(
        &mut self,
        state: &mut SystemState,
        tid: ThreadId,
        class: LibClass,
        method: &str,
        argc: usize,
    ) -> Result<Flow, Exec> {
        let ti = tid as usize;
        let stack = &state.threads[ti].frames.last().unwrap().stack;
        if stack.len() < argc + 1 {
            return Err(illegal("operand stack underflow").into());
        }
        let base = stack.len() - argc - 1;
        let receiver = stack[base];
        let object = receiver
            .as_ref()
            .ok_or_else(|| illegal(format!("invoke {class}.{method} on non-reference {receiver}")))?;
        let version = match state.objects.get(object.index()) {
            Some(HeapObject::Library { class: c, version }) if *c == class => *version,
            _ => return Err(illegal(format!("invoke {class}.{method} on an object that is not a {class}")).into()),
        };
        let statuses: Vec<ThreadStatus> = state.threads.iter().map(|t| t.status).collect();
        let ctx = CallContext {
            tid,
            object,
            class,
            version,
            method,
            args: &stack[base + 1..],
            statuses: &statuses,
        };
        let outcome = self.peer.invoke_native(&ctx).map_err(VmError::from)?;
        let (value, version, wake) = match outcome {
            NativeOutcome::Return(v, ver) => (v, ver, Vec::new()),
            NativeOutcome::ReturnAndWake(v, ver, wake) => (v, ver, wake),
            NativeOutcome::Block => {
                // pc stays on the invoke: the call re-executes once woken
                Arc::make_mut(&mut state.threads[ti]).status = ThreadStatus::BlockedOnObject(object);
                return Ok(Flow::Blocked);
            }
            NativeOutcome::IllegalOp(msg) => return Err(illegal(msg).into()),
            NativeOutcome::Unsupported(m) => return Err(unsupported(m).into()),
        };
        state.objects[object.index()] = HeapObject::Library { class, version };
        let frame = Arc::make_mut(&mut state.threads[ti]).frames.last_mut().unwrap();
        frame.stack.truncate(base);
        frame.stack.push(value);
        for w in wake {
            if let Some(t) = state.threads.get_mut(w as usize) {
                if t.status == ThreadStatus::BlockedOnObject(object) {
                    Arc::make_mut(t).status = ThreadStatus::Runnable;
                }
            }
        }
        Ok(Flow::Next)
    }
}

fn unsupported(method: String) -> Fault {
    Fault {
        kind: FaultKind::UnsupportedNative,
        message: format!("no native peer for {method}"),
    }
}

fn end_thread(state: &mut SystemState, tid: ThreadId) {
    let t = Arc::make_mut(&mut state.threads[tid as usize]);
    t.frames.clear();
    t.status = ThreadStatus::Terminated;
    t.atomic_depth = 0;
    for other in &mut state.threads {
        if other.status == ThreadStatus::WaitingJoin(tid) {
            Arc::make_mut(other).status = ThreadStatus::Runnable;
        }
    }
}

enum Exec {
    Fault(Fault),
    Internal(VmError),
}

impl From<Fault> for Exec {
    fn from(f: Fault) -> Self {
        Exec::Fault(f)
    }
}

impl From<VmError> for Exec {
    fn from(e: VmError) -> Self {
        Exec::Internal(e)
    }
}
