use super::{int_arg, PayloadOutcome};
use crate::vm::Value;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AtomicIntPayload(pub i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomicOp {
    Get,
    Set,
    CompareAndSet,
    IncrementAndGet,
    AddAndGet,
}

impl AtomicOp {
    pub fn from_name(name: &str) -> Option<AtomicOp> {
        Some(match name {
            "get" => AtomicOp::Get,
            "set" => AtomicOp::Set,
            "compareAndSet" => AtomicOp::CompareAndSet,
            "incrementAndGet" => AtomicOp::IncrementAndGet,
            "addAndGet" => AtomicOp::AddAndGet,
            _ => return None,
        })
    }
}

pub fn atomic_apply(op: AtomicOp, p: &AtomicIntPayload, args: &[Value]) -> PayloadOutcome<AtomicIntPayload> {
    let run = || -> Result<(Value, AtomicIntPayload), String> {
        Ok(match op {
            AtomicOp::Get => (Value::Int(p.0), *p),
            AtomicOp::Set => (Value::Nil, AtomicIntPayload(int_arg(args, 0, "atomicint.set")?)),
            AtomicOp::CompareAndSet => {
                let expected = int_arg(args, 0, "atomicint.compareAndSet")?;
                let new = int_arg(args, 1, "atomicint.compareAndSet")?;
                if p.0 == expected {
                    (Value::Int(1), AtomicIntPayload(new))
                } else {
                    (Value::Int(0), *p)
                }
            }
            AtomicOp::IncrementAndGet => {
                let v = p.0.wrapping_add(1);
                (Value::Int(v), AtomicIntPayload(v))
            }
            AtomicOp::AddAndGet => {
                let v = p.0.wrapping_add(int_arg(args, 0, "atomicint.addAndGet")?);
                (Value::Int(v), AtomicIntPayload(v))
            }
        })
    };
    match run() {
        Ok((v, next)) => PayloadOutcome::Return(v, next),
        Err(msg) => PayloadOutcome::IllegalOp(msg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(op: AtomicOp, on: i64, args: &[i64]) -> (Value, i64) {
        let args: Vec<Value> = args.iter().map(|&a| Value::Int(a)).collect();
        match atomic_apply(op, &AtomicIntPayload(on), &args) {
            PayloadOutcome::Return(v, p) => (v, p.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn cas_and_arithmetic() {
        assert_eq!(apply(AtomicOp::CompareAndSet, 5, &[5, 9]), (Value::Int(1), 9));
        assert_eq!(apply(AtomicOp::CompareAndSet, 6, &[5, 9]), (Value::Int(0), 6));
        assert_eq!(apply(AtomicOp::AddAndGet, 10, &[-3]), (Value::Int(7), 7));
        assert_eq!(apply(AtomicOp::IncrementAndGet, 41, &[]), (Value::Int(42), 42));
        assert_eq!(apply(AtomicOp::Get, 3, &[]), (Value::Int(3), 3));
        assert_eq!(apply(AtomicOp::Set, 3, &[8]), (Value::Nil, 8));
        assert_eq!(apply(AtomicOp::IncrementAndGet, i64::MAX, &[]).1, i64::MIN);
    }

    #[test]
    fn non_integer_argument_is_illegal() {
        let out = atomic_apply(AtomicOp::Set, &AtomicIntPayload(0), &[Value::Nil]);
        assert!(matches!(out, PayloadOutcome::IllegalOp(_)));
    }
}
