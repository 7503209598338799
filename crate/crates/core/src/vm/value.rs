use std::fmt;

/// Index into a state's object table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjRef(pub u32);

impl ObjRef {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A machine word. Integers wrap on overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Ref(ObjRef),
    Nil,
}

impl Value {
    pub fn as_int(self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_ref(self) -> Option<ObjRef> {
        match self {
            Value::Ref(r) => Some(r),
            _ => None,
        }
    }

    /// `jz` treats both integer zero and nil as false.
    pub fn is_falsy(self) -> bool {
        matches!(self, Value::Int(0) | Value::Nil)
    }

    pub fn from_bool(b: bool) -> Value {
        Value::Int(b as i64)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Ref(r) => write!(f, "@{}", r.0),
            Value::Nil => f.write_str("nil"),
        }
    }
}
