//! The concurrent stack machine: program representation, parsing,
//! single-instruction execution and canonical state encoding.

mod exec;
mod parse;
mod program;
mod state;
mod value;

pub use exec::{Mode, StepOutcome, ViolationKind, Vm, VmError};
pub use parse::{load_program, parse_program, parse_with_loader, FsLoader, ParseError, SourceLoader};
pub use program::{FuncId, FunctionDef, GlobalId, Instruction, LibClass, Program, SourceLoc};
pub use state::{Fault, FaultKind, Frame, HeapObject, SystemState, ThreadId, ThreadState, ThreadStatus};
pub use value::{ObjRef, Value};
