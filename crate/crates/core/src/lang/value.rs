use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

pub type ArrRef = Rc<RefCell<Vec<Value>>>;

/// A runtime value. Arrays are shared mutable references, so a `Value` never
/// leaves the execution that created it; use [`Datum`] to move state around.
#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(Rc<str>),
    Arr(ArrRef),
    FnRef(Rc<str>),
    Unit,
}

impl Value {
    pub fn array(items: Vec<Value>) -> Value {
        Value::Arr(Rc::new(RefCell::new(items)))
    }

    pub fn str(s: &str) -> Value {
        Value::Str(Rc::from(s))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Bool(_) => "bool",
            Value::Str(_) => "str",
            Value::Arr(_) => "arr",
            Value::FnRef(_) => "fnref",
            Value::Unit => "unit",
        }
    }

    /// Structural equality; arrays compare by contents, not identity.
    pub fn deep_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::FnRef(a), Value::FnRef(b)) => a == b,
            (Value::Unit, Value::Unit) => true,
            (Value::Arr(a), Value::Arr(b)) => {
                if Rc::ptr_eq(a, b) {
                    return true;
                }
                let (a, b) = (a.borrow(), b.borrow());
                a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.deep_eq(y))
            }
            _ => false,
        }
    }

    /// True when `target` is this array or is reachable from it.
    pub fn reaches(&self, target: &ArrRef) -> bool {
        match self {
            Value::Arr(a) => {
                Rc::ptr_eq(a, target) || a.borrow().iter().any(|v| v.reaches(target))
            }
            _ => false,
        }
    }

    pub fn freeze(&self) -> Datum {
        match self {
            Value::Int(i) => Datum::Int(*i),
            Value::Bool(b) => Datum::Bool(*b),
            Value::Str(s) => Datum::Str(s.to_string()),
            Value::Arr(a) => Datum::Arr(a.borrow().iter().map(Value::freeze).collect()),
            Value::FnRef(f) => Datum::FnRef(f.to_string()),
            Value::Unit => Datum::Unit,
        }
    }

    /// Pushes the address of every array reachable from this value.
    pub(crate) fn collect_arrays(&self, out: &mut Vec<*const RefCell<Vec<Value>>>) {
        if let Value::Arr(a) = self {
            out.push(Rc::as_ptr(a));
            for v in a.borrow().iter() {
                v.collect_arrays(out);
            }
        }
    }
}

/// Returns a structurally equal value sharing no array with the input.
pub fn deep_copy(v: &Value) -> Value {
    match v {
        Value::Arr(a) => Value::array(a.borrow().iter().map(deep_copy).collect()),
        other => other.clone(),
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Str(s) => write!(f, "{s}"),
            Value::Arr(a) => {
                write!(f, "[")?;
                for (i, v) in a.borrow().iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            Value::FnRef(name) => write!(f, "&{name}"),
            Value::Unit => write!(f, "()"),
        }
    }
}

/// An owned, thread-safe value tree: global initializers, memo snapshots and
/// decoded canonical encodings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "t", content = "v")]
pub enum Datum {
    Int(i64),
    Bool(bool),
    Str(String),
    Arr(Vec<Datum>),
    FnRef(String),
    Unit,
}

impl Datum {
    /// Builds a fresh runtime value; every array in the result is newly allocated.
    pub fn thaw(&self) -> Value {
        match self {
            Datum::Int(i) => Value::Int(*i),
            Datum::Bool(b) => Value::Bool(*b),
            Datum::Str(s) => Value::str(s),
            Datum::Arr(items) => Value::array(items.iter().map(Datum::thaw).collect()),
            Datum::FnRef(f) => Value::FnRef(Rc::from(f.as_str())),
            Datum::Unit => Value::Unit,
        }
    }
}
