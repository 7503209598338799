use std::collections::BTreeMap;

use super::{int_arg, PayloadOutcome};
use crate::vm::Value;

/// Integer-keyed map; `BTreeMap` keeps the canonical ascending-key order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MapPayload {
    pub entries: BTreeMap<i64, i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapOp {
    Get,
    Put,
    Remove,
    PutIfAbsent,
    Size,
}

impl MapOp {
    pub fn from_name(name: &str) -> Option<MapOp> {
        Some(match name {
            "get" => MapOp::Get,
            "put" => MapOp::Put,
            "remove" => MapOp::Remove,
            "putIfAbsent" => MapOp::PutIfAbsent,
            "size" => MapOp::Size,
            _ => return None,
        })
    }
}

fn or_nil(v: Option<i64>) -> Value {
    v.map_or(Value::Nil, Value::Int)
}

/// Absent keys read as `nil`, never as a sentinel integer.
pub fn map_apply(op: MapOp, p: &MapPayload, args: &[Value]) -> PayloadOutcome<MapPayload> {
    let run = || -> Result<(Value, MapPayload), String> {
        Ok(match op {
            MapOp::Get => {
                let k = int_arg(args, 0, "map.get")?;
                (or_nil(p.entries.get(&k).copied()), p.clone())
            }
            MapOp::Put => {
                let k = int_arg(args, 0, "map.put")?;
                let v = int_arg(args, 1, "map.put")?;
                let mut next = p.clone();
                let old = next.entries.insert(k, v);
                (or_nil(old), next)
            }
            MapOp::Remove => {
                let k = int_arg(args, 0, "map.remove")?;
                let mut next = p.clone();
                let old = next.entries.remove(&k);
                (or_nil(old), next)
            }
            MapOp::PutIfAbsent => {
                let k = int_arg(args, 0, "map.putIfAbsent")?;
                let v = int_arg(args, 1, "map.putIfAbsent")?;
                match p.entries.get(&k) {
                    Some(&old) => (Value::Int(old), p.clone()),
                    None => {
                        let mut next = p.clone();
                        next.entries.insert(k, v);
                        (Value::Nil, next)
                    }
                }
            }
            MapOp::Size => (Value::Int(p.entries.len() as i64), p.clone()),
        })
    };
    match run() {
        Ok((v, next)) => PayloadOutcome::Return(v, next),
        Err(msg) => PayloadOutcome::IllegalOp(msg),
    }
}
