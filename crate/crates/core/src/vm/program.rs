use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::value::Value;

/// The library classes the assembly language knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LibClass {
    Lock,
    AtomicInt,
    Map,
}

impl LibClass {
    pub const ALL: [LibClass; 3] = [LibClass::Lock, LibClass::AtomicInt, LibClass::Map];

    pub fn name(self) -> &'static str {
        match self {
            LibClass::Lock => "lock",
            LibClass::AtomicInt => "atomicint",
            LibClass::Map => "map",
        }
    }

    pub fn from_name(name: &str) -> Option<LibClass> {
        LibClass::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Public method surface as `(name, argument count)`; the receiver is not counted.
    pub fn methods(self) -> &'static [(&'static str, usize)] {
        match self {
            LibClass::Lock => &[("lock", 0), ("unlock", 0), ("tryLock", 0)],
            LibClass::AtomicInt => &[
                ("get", 0),
                ("set", 1),
                ("compareAndSet", 2),
                ("incrementAndGet", 0),
                ("addAndGet", 1),
            ],
            LibClass::Map => &[
                ("get", 1),
                ("put", 2),
                ("remove", 1),
                ("putIfAbsent", 2),
                ("size", 0),
            ],
        }
    }

    pub fn method_arity(self, method: &str) -> Option<usize> {
        self.methods()
            .iter()
            .find(|(m, _)| *m == method)
            .map(|&(_, argc)| argc)
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            LibClass::Lock => 0,
            LibClass::AtomicInt => 1,
            LibClass::Map => 2,
        }
    }
}

impl fmt::Display for LibClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type FuncId = u32;
pub type GlobalId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instruction {
    Push(Value),
    Pop,
    Dup,
    Load(u16),
    Store(u16),
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
    Not,
    Jmp(u32),
    Jz(u32),
    Call {
        func: FuncId,
        argc: u16,
    },
    Ret,
    Tid,
    GLoad(GlobalId),
    GStore(GlobalId),
    GCas(GlobalId),
    NewArr(u32),
    ALoad,
    AStore,
    /// Compare-and-swap on an array cell: `ref idx expected new -> 0|1`.
    ACas,
    New {
        class: LibClass,
        /// Reference-mode constructor (`<class>.new`), when linked.
        ctor: Option<FuncId>,
    },
    Invoke {
        class: LibClass,
        method: Arc<str>,
        argc: u16,
        /// Reference-mode implementation (`<class>.<method>`), when linked.
        target: Option<FuncId>,
    },
    Spawn {
        func: FuncId,
        argc: u16,
    },
    Join,
    Park,
    Unpark,
    AtomicBegin,
    AtomicEnd,
    Assert,
    Halt,
    /// Raises an illegal-operation fault; used by library code for API misuse.
    Illegal,
}

impl Instruction {
    pub fn mnemonic(&self) -> &'static str {
        use Instruction::*;
        match self {
            Push(_) => "push",
            Pop => "pop",
            Dup => "dup",
            Load(_) => "load",
            Store(_) => "store",
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Eq => "eq",
            Lt => "lt",
            Not => "not",
            Jmp(_) => "jmp",
            Jz(_) => "jz",
            Call { .. } => "call",
            Ret => "ret",
            Tid => "tid",
            GLoad(_) => "gload",
            GStore(_) => "gstore",
            GCas(_) => "gcas",
            NewArr(_) => "newarr",
            ALoad => "aload",
            AStore => "astore",
            ACas => "acas",
            New { .. } => "new",
            Invoke { .. } => "invoke",
            Spawn { .. } => "spawn",
            Join => "join",
            Park => "park",
            Unpark => "unpark",
            AtomicBegin => "atomic_begin",
            AtomicEnd => "atomic_end",
            Assert => "assert",
            Halt => "halt",
            Illegal => "illegal",
        }
    }

    /// Whether the instruction can interact with other threads. Whether it
    /// actually ends a transition also depends on the thread's atomic depth.
    pub fn is_scheduling_relevant(&self) -> bool {
        use Instruction::*;
        matches!(
            self,
            GLoad(_)
                | GStore(_)
                | GCas(_)
                | ALoad
                | AStore
                | ACas
                | Park
                | Unpark
                | Spawn { .. }
                | Join
                | Invoke { .. }
        )
    }
}

/// Where an instruction came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SourceLoc {
    pub file: Arc<str>,
    pub line: u32,
}

impl fmt::Display for SourceLoc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub name: Arc<str>,
    pub params: u16,
    pub locals: u16,
    pub code: Vec<Instruction>,
    pub lines: Vec<SourceLoc>,
    /// Shipped by the concurrency library rather than written by the user.
    pub library: bool,
}

/// A parsed and validated program.
///
/// Functions and globals are stored sorted by name, so their dense ids are
/// independent of declaration order.
#[derive(Debug, Clone)]
pub struct Program {
    pub constants: BTreeMap<String, i64>,
    pub global_names: Vec<Arc<str>>,
    pub global_inits: Vec<Value>,
    pub functions: Vec<FunctionDef>,
    pub entry: FuncId,
}

impl Program {
    pub fn function(&self, id: FuncId) -> &FunctionDef {
        &self.functions[id as usize]
    }

    pub fn function_id(&self, name: &str) -> Option<FuncId> {
        self.functions
            .binary_search_by(|f| (*f.name).cmp(name))
            .ok()
            .map(|i| i as FuncId)
    }

    pub fn global_id(&self, name: &str) -> Option<GlobalId> {
        self.global_names
            .binary_search_by(|g| (**g).cmp(name))
            .ok()
            .map(|i| i as GlobalId)
    }

    /// Library classes the user code allocates or invokes.
    pub fn classes_used(&self) -> Vec<LibClass> {
        let mut used: Vec<LibClass> = self
            .functions
            .iter()
            .flat_map(|f| f.code.iter())
            .filter_map(|i| match i {
                Instruction::New { class, .. } | Instruction::Invoke { class, .. } => Some(*class),
                _ => None,
            })
            .collect();
        used.sort();
        used.dedup();
        used
    }
}
