//! Runtime values of the interpreter.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::fmt::Write as _;
use std::rc::Rc;

use crate::regex::{Captures, Regex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Module {
    Re,
    Math,
}

/// Result of a successful regex search.
#[derive(Debug)]
pub struct MatchObj {
    pub hay: Rc<[char]>,
    pub caps: Captures,
    pub re: Rc<Regex>,
}

impl MatchObj {
    pub fn group_str(&self, i: usize) -> Option<String> {
        self.caps.get(i).map(|(a, b)| self.hay[a..b].iter().collect())
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Rc<str>),
    List(Rc<RefCell<Vec<Value>>>),
    Tuple(Rc<Vec<Value>>),
    /// Read-only mapping; used for chat messages.
    Dict(Rc<Vec<(Value, Value)>>),
    Range { start: i64, stop: i64, step: i64 },
    Match(Rc<MatchObj>),
    Module(Module),
    Builtin(&'static str),
    /// A method looked up on a receiver but not yet called.
    Method(Box<Value>, &'static str),
    ExcClass(&'static str),
    Exception(Rc<Exc>),
}

/// A catchable runtime error.
#[derive(Debug, Clone, PartialEq)]
pub struct Exc {
    pub kind: &'static str,
    pub msg: String,
}

impl std::fmt::Display for Exc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.msg)
    }
}

pub const EXCEPTION_CLASSES: &[&str] = &[
    "Exception",
    "ArithmeticError",
    "LookupError",
    "ValueError",
    "TypeError",
    "IndexError",
    "KeyError",
    "ZeroDivisionError",
    "OverflowError",
    "AttributeError",
    "NameError",
    "UnboundLocalError",
];

/// Whether an exception of kind `kind` is caught by `except class_`.
pub fn exc_matches(kind: &str, class: &str) -> bool {
    if kind == class || class == "Exception" {
        return true;
    }
    matches!(
        (class, kind),
        ("ArithmeticError", "ZeroDivisionError" | "OverflowError")
            | ("LookupError", "IndexError" | "KeyError")
            | ("NameError", "UnboundLocalError")
    )
}

pub fn exc(kind: &'static str, msg: impl Into<String>) -> Exc {
    Exc { kind, msg: msg.into() }
}

impl Value {
    pub fn str(s: impl Into<Rc<str>>) -> Value {
        Value::Str(s.into())
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Rc::new(RefCell::new(items)))
    }

    pub fn tuple(items: Vec<Value>) -> Value {
        Value::Tuple(Rc::new(items))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "NoneType",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Tuple(_) => "tuple",
            Value::Dict(_) => "dict",
            Value::Range { .. } => "range",
            Value::Match(_) => "re.Match",
            Value::Module(_) => "module",
            Value::Builtin(_) | Value::Method(..) => "builtin_function_or_method",
            Value::ExcClass(_) => "type",
            Value::Exception(e) => e.kind,
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(l) => !l.borrow().is_empty(),
            Value::Tuple(t) => !t.is_empty(),
            Value::Dict(d) => !d.is_empty(),
            Value::Range { .. } => range_len(self) > 0,
            _ => true,
        }
    }

    /// Numeric view for arithmetic; bools count as ints.
    pub fn as_num(&self) -> Option<Num> {
        match self {
            Value::Bool(b) => Some(Num::Int(*b as i64)),
            Value::Int(i) => Some(Num::Int(*i)),
            Value::Float(f) => Some(Num::Float(*f)),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Bool(b) => Some(*b as i64),
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Python `str()`.
    pub fn to_str(&self) -> String {
        match self {
            Value::Str(s) => s.to_string(),
            other => other.repr(),
        }
    }

    /// Python `repr()`.
    pub fn repr(&self) -> String {
        match self {
            Value::None => "None".into(),
            Value::Bool(true) => "True".into(),
            Value::Bool(false) => "False".into(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => float_repr(*f),
            Value::Str(s) => str_repr(s),
            Value::List(l) => {
                let items: Vec<String> = l.borrow().iter().map(Value::repr).collect();
                format!("[{}]", items.join(", "))
            }
            Value::Tuple(t) => {
                let items: Vec<String> = t.iter().map(Value::repr).collect();
                if items.len() == 1 {
                    format!("({},)", items[0])
                } else {
                    format!("({})", items.join(", "))
                }
            }
            Value::Dict(d) => {
                let items: Vec<String> = d.iter().map(|(k, v)| format!("{}: {}", k.repr(), v.repr())).collect();
                format!("{{{}}}", items.join(", "))
            }
            Value::Range { start, stop, step } => {
                if *step == 1 {
                    format!("range({start}, {stop})")
                } else {
                    format!("range({start}, {stop}, {step})")
                }
            }
            Value::Match(m) => {
                let (a, b) = m.caps.span();
                format!("<re.Match object; span=({a}, {b}), match={}>", str_repr(&m.group_str(0).unwrap_or_default()))
            }
            Value::Module(Module::Re) => "<module 're'>".into(),
            Value::Module(Module::Math) => "<module 'math'>".into(),
            Value::Builtin(n) => format!("<built-in function {n}>"),
            Value::Method(_, n) => format!("<built-in method {n}>"),
            Value::ExcClass(n) => format!("<class '{n}'>"),
            Value::Exception(e) => e.msg.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Num {
    Int(i64),
    Float(f64),
}

impl Num {
    pub fn to_f64(self) -> f64 {
        match self {
            Num::Int(i) => i as f64,
            Num::Float(f) => f,
        }
    }
}

pub fn range_len(v: &Value) -> usize {
    let Value::Range { start, stop, step } = *v else { return 0 };
    let (start, stop, step) = (start as i128, stop as i128, step as i128);
    let n = if step > 0 {
        (stop - start + step - 1) / step
    } else {
        (start - stop - step - 1) / (-step)
    };
    n.max(0) as usize
}

/// Shortest round-trip float text in Python's style.
pub fn float_repr(f: f64) -> String {
    if f.is_nan() {
        return "nan".into();
    }
    if f.is_infinite() {
        return if f > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if f == 0.0 {
        return if f.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{f:e}");
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-4..16).contains(&exp) {
        let s = format!("{f}");
        if s.contains('.') {
            s
        } else {
            format!("{s}.0")
        }
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    }
}

pub fn str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// Python `==`.
pub fn values_eq(a: &Value, b: &Value) -> bool {
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        return match (x, y) {
            (Num::Int(i), Num::Int(j)) => i == j,
            _ => x.to_f64() == y.to_f64(),
        };
    }
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::List(x), Value::List(y)) => {
            Rc::ptr_eq(x, y) || seq_eq(&x.borrow(), &y.borrow())
        }
        (Value::Tuple(x), Value::Tuple(y)) => seq_eq(x, y),
        (Value::Dict(x), Value::Dict(y)) => {
            x.len() == y.len()
                && x.iter().all(|(k, v)| y.iter().any(|(k2, v2)| values_eq(k, k2) && values_eq(v, v2)))
        }
        (Value::Range { .. }, Value::Range { .. }) => {
            let (xs, ys) = (range_items(a), range_items(b));
            xs == ys
        }
        (Value::Module(x), Value::Module(y)) => x == y,
        (Value::Builtin(x), Value::Builtin(y)) => x == y,
        (Value::ExcClass(x), Value::ExcClass(y)) => x == y,
        (Value::Match(x), Value::Match(y)) => Rc::ptr_eq(x, y),
        _ => false,
    }
}

fn range_items(v: &Value) -> (usize, i64, i64) {
    let Value::Range { start, step, .. } = *v else { unreachable!() };
    let n = range_len(v);
    (n, if n > 0 { start } else { 0 }, if n > 1 { step } else { 0 })
}

fn seq_eq(a: &[Value], b: &[Value]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_eq(x, y))
}

/// Python ordering; `None` when the types are not orderable together.
pub fn values_cmp(a: &Value, b: &Value) -> Option<Ordering> {
    if let (Some(x), Some(y)) = (a.as_num(), b.as_num()) {
        return match (x, y) {
            (Num::Int(i), Num::Int(j)) => Some(i.cmp(&j)),
            // NaN compares false both ways; report it as unordered equal-ish
            _ => Some(x.to_f64().partial_cmp(&y.to_f64()).unwrap_or(Ordering::Equal)),
        };
    }
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => Some(x.as_ref().cmp(y.as_ref())),
        (Value::List(x), Value::List(y)) => seq_cmp(&x.borrow(), &y.borrow()),
        (Value::Tuple(x), Value::Tuple(y)) => seq_cmp(x, y),
        _ => None,
    }
}

fn seq_cmp(a: &[Value], b: &[Value]) -> Option<Ordering> {
    for (x, y) in a.iter().zip(b) {
        if !values_eq(x, y) {
            return values_cmp(x, y);
        }
    }
    Some(a.len().cmp(&b.len()))
}

/// True if either side is NaN, which makes every ordering comparison false.
pub fn has_nan(a: &Value, b: &Value) -> bool {
    let nan = |v: &Value| matches!(v, Value::Float(f) if f.is_nan());
    nan(a) || nan(b)
}
