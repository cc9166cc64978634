//! Tree-walking evaluator with step, wall-clock and allocation limits.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::rc::Rc;
use std::time::Instant;

use rewardsmith_core::text::{is_space as py_space, parse_float, strip as py_strip};

use crate::ast::*;
use crate::regex::{Abort, Budget, Regex, DOTALL, IGNORECASE, MULTILINE};
use crate::value::*;
use crate::value::Module;

/// Resource exhaustion; never catchable by the program.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Fault {
    #[error("step-limit: exceeded {0} interpreter steps")]
    StepLimit(u64),
    #[error("timeout: exceeded wall-clock limit of {0} ms")]
    Timeout(u64),
    #[error("memory: {0}")]
    Memory(String),
}

impl Fault {
    /// Name of the exhausted limit.
    pub fn limit(&self) -> &'static str {
        match self {
            Fault::StepLimit(_) => "step-limit",
            Fault::Timeout(_) => "timeout",
            Fault::Memory(_) => "memory",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Unwind {
    Exc(Exc),
    Fault(Fault),
}

impl From<Exc> for Unwind {
    fn from(e: Exc) -> Self {
        Unwind::Exc(e)
    }
}

impl From<Fault> for Unwind {
    fn from(f: Fault) -> Self {
        Unwind::Fault(f)
    }
}

type R<T> = Result<T, Unwind>;

fn raise<T>(kind: &'static str, msg: impl Into<String>) -> R<T> {
    Err(Unwind::Exc(exc(kind, msg)))
}

#[derive(Debug, Clone, Copy)]
pub struct RunLimits {
    pub max_steps: u64,
    pub timeout_ms: u64,
    pub deadline: Option<Instant>,
    /// Longest string or list a program may build.
    pub max_len: usize,
    /// Total characters and elements a call may allocate.
    pub max_alloc: usize,
}

/// A function definition plus the module-level imports it can see.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub func: FuncDef,
    pub imports: Vec<Alias>,
}

pub const TAG_CONSTANTS: &[(&str, &str)] = &[
    ("THINKING_OPEN", "<thinking>"),
    ("THINKING_CLOSE", "</thinking>"),
    ("SOLUTION_OPEN", "<solution>"),
    ("SOLUTION_CLOSE", "</solution>"),
];

pub const BUILTINS: &[&str] = &[
    "len", "abs", "min", "max", "float", "int", "str", "bool", "list", "sorted", "sum", "round", "any", "all",
    "zip", "range", "enumerate", "to_number", "regex_search", "regex_findall", "regex_split", "strip", "split",
    "lower", "replace",
];

pub const MODULES: &[&str] = &["re", "math"];

pub const RE_FUNCS: &[&str] = &["search", "match", "fullmatch", "findall", "split", "sub"];
pub const RE_CONSTS: &[(&str, i64)] = &[
    ("DOTALL", DOTALL),
    ("S", DOTALL),
    ("IGNORECASE", IGNORECASE),
    ("I", IGNORECASE),
    ("MULTILINE", MULTILINE),
    ("M", MULTILINE),
];
pub const MATH_FUNCS: &[&str] = &[
    "sqrt", "log", "log10", "log2", "exp", "floor", "ceil", "fabs", "isfinite", "isnan", "isinf", "pow",
];
pub const MATH_CONSTS: &[(&str, f64)] = &[
    ("pi", std::f64::consts::PI),
    ("e", std::f64::consts::E),
    ("inf", f64::INFINITY),
    ("nan", f64::NAN),
];

pub const STR_METHODS: &[&str] = &[
    "strip", "lstrip", "rstrip", "split", "lower", "upper", "replace", "startswith", "endswith", "count", "find",
    "index", "join", "splitlines", "isdigit", "isalpha", "isalnum", "isspace", "isnumeric", "isdecimal",
];
pub const LIST_METHODS: &[&str] = &["append", "extend", "count", "index", "pop"];
pub const MATCH_METHODS: &[&str] = &["group", "groups", "start", "end", "span"];
pub const DICT_METHODS: &[&str] = &["get", "keys", "values", "items"];

/// Every attribute name the language can look up.
pub fn known_attribute(name: &str) -> bool {
    RE_FUNCS.contains(&name)
        || RE_CONSTS.iter().any(|(n, _)| *n == name)
        || name == "error"
        || MATH_FUNCS.contains(&name)
        || MATH_CONSTS.iter().any(|(n, _)| *n == name)
        || STR_METHODS.contains(&name)
        || LIST_METHODS.contains(&name)
        || MATCH_METHODS.contains(&name)
        || DICT_METHODS.contains(&name)
}

fn static_name(table: &[&'static str], name: &str) -> Option<&'static str> {
    table.iter().copied().find(|n| *n == name)
}

fn qualified(module: Module, name: &str) -> Option<&'static str> {
    const RE_Q: &[&str] = &["re.search", "re.match", "re.fullmatch", "re.findall", "re.split", "re.sub"];
    const MATH_Q: &[&str] = &[
        "math.sqrt", "math.log", "math.log10", "math.log2", "math.exp", "math.floor", "math.ceil", "math.fabs",
        "math.isfinite", "math.isnan", "math.isinf", "math.pow",
    ];
    let table = match module {
        Module::Re => RE_Q,
        Module::Math => MATH_Q,
    };
    table.iter().copied().find(|q| q.split_once('.').unwrap().1 == name)
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Value),
}

struct Args {
    pos: Vec<Value>,
    kw: Vec<(String, Value)>,
    name: &'static str,
}

impl Args {
    fn arity(&self, min: usize, max: usize) -> R<()> {
        let n = self.pos.len();
        if n < min || n > max {
            let want = if min == max { format!("{min}") } else { format!("{min} to {max}") };
            return raise("TypeError", format!("{}() takes {want} positional arguments but {n} were given", self.name));
        }
        Ok(())
    }

    /// Positional argument `i` or keyword `kw`, whichever is present.
    fn get(&mut self, i: usize, kw: &str) -> R<Option<Value>> {
        let from_kw = self.kw.iter().position(|(k, _)| k == kw).map(|j| self.kw.remove(j).1);
        match (self.pos.get(i).cloned(), from_kw) {
            (Some(_), Some(_)) => raise("TypeError", format!("{}() got multiple values for argument '{kw}'", self.name)),
            (p, k) => Ok(p.or(k)),
        }
    }

    fn done(&self) -> R<()> {
        if let Some((k, _)) = self.kw.first() {
            return raise("TypeError", format!("{}() got an unexpected keyword argument '{k}'", self.name));
        }
        Ok(())
    }
}

pub struct Interp {
    globals: HashMap<&'static str, Value>,
    locals: HashMap<String, Value>,
    local_names: HashSet<String>,
    steps: u64,
    limits: RunLimits,
    budget: Budget,
    alloc: usize,
    regex_cache: HashMap<(String, i64), Rc<Regex>>,
}

/// Names assigned anywhere in a function body, Python's local-scope rule.
pub fn assigned_names(func: &FuncDef) -> HashSet<String> {
    fn walk(stmts: &[Stmt], out: &mut HashSet<String>) {
        for s in stmts {
            let mut names = Vec::new();
            match &s.kind {
                StmtKind::Assign { targets, .. } => targets.iter().for_each(|t| t.bound_names(&mut names)),
                StmtKind::AugAssign { target, .. } => target.bound_names(&mut names),
                StmtKind::For { target, body, .. } => {
                    target.bound_names(&mut names);
                    walk(body, out);
                }
                StmtKind::If { branches, orelse } => {
                    branches.iter().for_each(|(_, b)| walk(b, out));
                    walk(orelse, out);
                }
                StmtKind::Try { body, handlers } => {
                    walk(body, out);
                    for h in handlers {
                        if let Some(n) = &h.name {
                            out.insert(n.clone());
                        }
                        walk(&h.body, out);
                    }
                }
                StmtKind::Import(aliases) => {
                    for a in aliases {
                        out.insert(a.asname.clone().unwrap_or_else(|| a.name.split('.').next().unwrap().to_string()));
                    }
                }
                StmtKind::ImportFrom { names: ns, .. } => {
                    for a in ns {
                        out.insert(a.asname.clone().unwrap_or_else(|| a.name.clone()));
                    }
                }
                _ => {}
            }
            out.extend(names.into_iter().map(String::from));
        }
    }
    let mut out: HashSet<String> = func.params.iter().map(|p| p.name.clone()).collect();
    walk(&func.body, &mut out);
    out
}

/// Calls the program's function on one batch.
pub fn call(prog: &Program, args: [Value; 3], limits: RunLimits) -> R<Value> {
    let mut it = Interp {
        globals: HashMap::new(),
        locals: HashMap::new(),
        local_names: assigned_names(&prog.func),
        steps: 0,
        limits,
        budget: Budget::new(limits.deadline),
        alloc: 0,
        regex_cache: HashMap::new(),
    };
    for b in BUILTINS {
        it.globals.insert(b, Value::Builtin(b));
    }
    for c in EXCEPTION_CLASSES {
        it.globals.insert(c, Value::ExcClass(c));
    }
    for (n, v) in TAG_CONSTANTS {
        it.globals.insert(n, Value::str(*v));
    }
    for a in &prog.imports.clone() {
        let v = it.import_value(&a.name)?;
        let bound = a.asname.clone().unwrap_or_else(|| a.name.clone());
        let key = static_name(MODULES, &bound).or_else(|| static_name(BUILTINS, &bound));
        match key {
            Some(k) => {
                it.globals.insert(k, v);
            }
            None => it.locals_insert_global(bound, v),
        }
    }
    let [p, c, a] = args;
    let mut positional = vec![p, c, a].into_iter();
    for param in &prog.func.params {
        let v = match param.kind {
            ParamKind::VarKw => Value::Dict(Rc::new(Vec::new())),
            ParamKind::VarArgs => Value::tuple(Vec::new()),
            _ => positional.next().unwrap_or(Value::None),
        };
        it.locals.insert(param.name.clone(), v);
    }
    match it.block(&prog.func.body)? {
        Flow::Return(v) => Ok(v),
        _ => Ok(Value::None),
    }
}

impl Interp {
    fn locals_insert_global(&mut self, name: String, v: Value) {
        // module-level aliases are visible like locals that are never reassigned
        self.locals.insert(name, v);
    }

    #[inline]
    fn step(&mut self) -> R<()> {
        self.steps += 1;
        if self.steps > self.limits.max_steps {
            return Err(Fault::StepLimit(self.limits.max_steps).into());
        }
        self.budget.tick().map_err(|a| self.abort(a))
    }

    fn work(&mut self, n: usize) -> R<()> {
        self.budget.tick_n(n).map_err(|a| self.abort(a))
    }

    fn abort(&self, a: Abort) -> Unwind {
        match a {
            Abort::Timeout => Fault::Timeout(self.limits.timeout_ms).into(),
            Abort::Memory => Fault::Memory("regex backtracking stack exhausted".into()).into(),
        }
    }

    /// Charges an allocation of `n` characters or elements.
    fn charge(&mut self, n: usize) -> R<()> {
        if n > self.limits.max_len {
            return Err(Fault::Memory(format!("object of length {n} exceeds limit {}", self.limits.max_len)).into());
        }
        self.alloc += n;
        if self.alloc > self.limits.max_alloc {
            return Err(Fault::Memory(format!("allocation budget of {} exhausted", self.limits.max_alloc)).into());
        }
        self.work(n)
    }

    fn new_str(&mut self, s: String) -> R<Value> {
        self.charge(s.len())?;
        Ok(Value::str(s))
    }

    fn new_list(&mut self, items: Vec<Value>) -> R<Value> {
        self.charge(items.len())?;
        Ok(Value::list(items))
    }

    fn new_tuple(&mut self, items: Vec<Value>) -> R<Value> {
        self.charge(items.len())?;
        Ok(Value::tuple(items))
    }

    fn import_value(&mut self, name: &str) -> R<Value> {
        match name {
            "re" => Ok(Value::Module(Module::Re)),
            "math" => Ok(Value::Module(Module::Math)),
            _ => raise("ImportError", format!("import of '{name}' is not allowed")),
        }
    }

    // ---- statements ----

    fn block(&mut self, stmts: &[Stmt]) -> R<Flow> {
        for s in stmts {
            match self.stmt(s)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt(&mut self, s: &Stmt) -> R<Flow> {
        self.step()?;
        match &s.kind {
            StmtKind::Def(_) => raise("TypeError", "nested function definitions are not supported"),
            StmtKind::Import(aliases) => {
                for a in aliases {
                    let v = self.import_value(&a.name)?;
                    let bound = a.asname.clone().unwrap_or_else(|| a.name.clone());
                    self.locals.insert(bound, v);
                }
                Ok(Flow::Normal)
            }
            StmtKind::ImportFrom { module, names } => {
                let m = match self.import_value(module)? {
                    Value::Module(m) => m,
                    _ => unreachable!(),
                };
                for a in names {
                    let v = self.module_attr(m, &a.name)?;
                    self.locals.insert(a.asname.clone().unwrap_or_else(|| a.name.clone()), v);
                }
                Ok(Flow::Normal)
            }
            StmtKind::Assign { targets, value } => {
                let v = self.eval(value)?;
                for t in targets {
                    self.assign(t, v.clone())?;
                }
                Ok(Flow::Normal)
            }
            StmtKind::AugAssign { target, op, value } => {
                self.aug_assign(target, *op, value)?;
                Ok(Flow::Normal)
            }
            StmtKind::Expr(e) => {
                self.eval(e)?;
                Ok(Flow::Normal)
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(e)?,
                    None => Value::None,
                };
                Ok(Flow::Return(v))
            }
            StmtKind::If { branches, orelse } => {
                for (cond, body) in branches {
                    if self.eval(cond)?.truthy() {
                        return self.block(body);
                    }
                }
                self.block(orelse)
            }
            StmtKind::For { target, iter, body } => {
                let it = self.eval(iter)?;
                if let Value::Range { start, step, .. } = it {
                    let n = range_len(&it);
                    for k in 0..n {
                        self.step()?;
                        self.assign(target, Value::Int(start + step * k as i64))?;
                        match self.block(body)? {
                            Flow::Break => break,
                            Flow::Return(v) => return Ok(Flow::Return(v)),
                            _ => {}
                        }
                    }
                    return Ok(Flow::Normal);
                }
                let items = self.iterate(&it)?;
                for item in items {
                    self.step()?;
                    self.assign(target, item)?;
                    match self.block(body)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
                Ok(Flow::Normal)
            }
            StmtKind::Try { body, handlers } => match self.block(body) {
                Err(Unwind::Exc(e)) => {
                    for h in handlers {
                        if self.handler_matches(h, &e)? {
                            if let Some(n) = &h.name {
                                self.locals.insert(n.clone(), Value::Exception(Rc::new(e.clone())));
                            }
                            let r = self.block(&h.body);
                            if let Some(n) = &h.name {
                                self.locals.remove(n);
                            }
                            return r;
                        }
                    }
                    Err(Unwind::Exc(e))
                }
                other => other,
            },
            StmtKind::Continue => Ok(Flow::Continue),
            StmtKind::Break => Ok(Flow::Break),
            StmtKind::Pass => Ok(Flow::Normal),
        }
    }

    fn handler_matches(&mut self, h: &Handler, e: &Exc) -> R<bool> {
        let Some(types) = &h.types else { return Ok(true) };
        let t = self.eval(types)?;
        let classes: Vec<Value> = match t {
            Value::Tuple(items) => items.to_vec(),
            other => vec![other],
        };
        for c in classes {
            match c {
                Value::ExcClass(name) => {
                    if exc_matches(e.kind, name) {
                        return Ok(true);
                    }
                }
                other => {
                    return raise(
                        "TypeError",
                        format!("catching classes that do not inherit from BaseException is not allowed ({})", other.type_name()),
                    )
                }
            }
        }
        Ok(false)
    }

    fn assign(&mut self, t: &Target, v: Value) -> R<()> {
        match t {
            Target::Name(n, _) => {
                self.locals.insert(n.clone(), v);
                Ok(())
            }
            Target::Tuple(ts, _) => {
                let items = self.iterate(&v)?;
                if items.len() != ts.len() {
                    return raise(
                        "ValueError",
                        format!("expected {} values to unpack, got {}", ts.len(), items.len()),
                    );
                }
                for (t, item) in ts.iter().zip(items) {
                    self.assign(t, item)?;
                }
                Ok(())
            }
            Target::Subscript(obj, idx, _) => {
                let container = self.eval(obj)?;
                let index = self.eval(idx)?;
                self.set_item(&container, &index, v)
            }
        }
    }

    fn set_item(&mut self, container: &Value, index: &Value, v: Value) -> R<()> {
        match container {
            Value::List(l) => {
                let len = l.borrow().len();
                let i = self.seq_index(index, len)?;
                l.borrow_mut()[i] = v;
                Ok(())
            }
            other => raise("TypeError", format!("'{}' object does not support item assignment", other.type_name())),
        }
    }

    fn aug_assign(&mut self, target: &Target, op: BinOp, value: &Expr) -> R<()> {
        match target {
            Target::Name(n, pos) => {
                let cur = self.load(n, *pos)?;
                let rhs = self.eval(value)?;
                if let (BinOp::Add, Value::List(l)) = (op, &cur) {
                    // in-place extend, as Python's list.__iadd__
                    let extra = self.iterate(&rhs)?;
                    let new_len = l.borrow().len() + extra.len();
                    self.charge_len(new_len, extra.len())?;
                    l.borrow_mut().extend(extra);
                    return Ok(());
                }
                let v = self.binop(op, &cur, &rhs)?;
                self.locals.insert(n.clone(), v);
                Ok(())
            }
            Target::Subscript(obj, idx, _) => {
                let container = self.eval(obj)?;
                let index = self.eval(idx)?;
                let cur = self.get_item(&container, &index)?;
                let rhs = self.eval(value)?;
                let v = self.binop(op, &cur, &rhs)?;
                self.set_item(&container, &index, v)
            }
            Target::Tuple(..) => raise("TypeError", "illegal target for augmented assignment"),
        }
    }

    fn charge_len(&mut self, total: usize, added: usize) -> R<()> {
        if total > self.limits.max_len {
            return Err(Fault::Memory(format!("object of length {total} exceeds limit {}", self.limits.max_len)).into());
        }
        self.charge(added)
    }

    fn load(&self, name: &str, _pos: crate::lexer::Pos) -> R<Value> {
        if let Some(v) = self.locals.get(name) {
            return Ok(v.clone());
        }
        if self.local_names.contains(name) {
            return raise("UnboundLocalError", format!("local variable '{name}' referenced before assignment"));
        }
        match self.globals.get(name) {
            Some(v) => Ok(v.clone()),
            None => raise("NameError", format!("name '{name}' is not defined")),
        }
    }

    // ---- expressions ----

    fn eval(&mut self, e: &Expr) -> R<Value> {
        self.step()?;
        match &e.kind {
            ExprKind::Name(n) => self.load(n, e.pos),
            ExprKind::Const(c) => Ok(match c {
                Const::None => Value::None,
                Const::Bool(b) => Value::Bool(*b),
                Const::Int(i) => Value::Int(*i),
                Const::Float(f) => Value::Float(*f),
                Const::Str(s) => Value::str(s.as_str()),
            }),
            ExprKind::List(items) => {
                let vs = items.iter().map(|x| self.eval(x)).collect::<R<Vec<_>>>()?;
                self.new_list(vs)
            }
            ExprKind::Tuple(items) => {
                let vs = items.iter().map(|x| self.eval(x)).collect::<R<Vec<_>>>()?;
                self.new_tuple(vs)
            }
            ExprKind::ListComp { elt, gens } => {
                let mut out = Vec::new();
                let mut saved = Vec::new();
                for g in gens {
                    let mut names = Vec::new();
                    g.target.bound_names(&mut names);
                    for n in names {
                        saved.push((n.to_string(), self.locals.get(n).cloned()));
                    }
                }
                let r = self.comprehension(elt, gens, &mut out);
                for (n, old) in saved.into_iter().rev() {
                    match old {
                        Some(v) => self.locals.insert(n, v),
                        None => self.locals.remove(&n),
                    };
                }
                r?;
                Ok(Value::list(out))
            }
            ExprKind::BinOp { op, left, right } => {
                let l = self.eval(left)?;
                let r = self.eval(right)?;
                self.binop(*op, &l, &r)
            }
            ExprKind::Unary { op, operand } => {
                let v = self.eval(operand)?;
                match op {
                    UnaryOp::Not => Ok(Value::Bool(!v.truthy())),
                    UnaryOp::Neg => match v.as_num() {
                        Some(Num::Int(i)) => i
                            .checked_neg()
                            .map(Value::Int)
                            .ok_or_else(|| exc("OverflowError", "integer overflow").into()),
                        Some(Num::Float(f)) => Ok(Value::Float(-f)),
                        None => raise("TypeError", format!("bad operand type for unary -: '{}'", v.type_name())),
                    },
                    UnaryOp::Pos => match v.as_num() {
                        Some(Num::Int(i)) => Ok(Value::Int(i)),
                        Some(Num::Float(f)) => Ok(Value::Float(f)),
                        None => raise("TypeError", format!("bad operand type for unary +: '{}'", v.type_name())),
                    },
                }
            }
            ExprKind::BoolOp { is_and, values } => {
                let mut last = Value::None;
                for (k, x) in values.iter().enumerate() {
                    last = self.eval(x)?;
                    let stop = if *is_and { !last.truthy() } else { last.truthy() };
                    if stop || k + 1 == values.len() {
                        break;
                    }
                }
                Ok(last)
            }
            ExprKind::Compare { left, ops } => {
                let mut l = self.eval(left)?;
                for (op, rexpr) in ops {
                    let r = self.eval(rexpr)?;
                    if !self.compare(*op, &l, &r)? {
                        return Ok(Value::Bool(false));
                    }
                    l = r;
                }
                Ok(Value::Bool(true))
            }
            ExprKind::IfExp { test, body, orelse } => {
                if self.eval(test)?.truthy() {
                    self.eval(body)
                } else {
                    self.eval(orelse)
                }
            }
            ExprKind::Call { func, args, kwargs } => {
                let recv_attr = match &func.kind {
                    ExprKind::Attribute { value, attr } => Some((self.eval(value)?, attr)),
                    _ => None,
                };
                let callee = match &recv_attr {
                    Some(_) => None,
                    None => Some(self.eval(func)?),
                };
                let pos = args.iter().map(|a| self.eval(a)).collect::<R<Vec<_>>>()?;
                let mut kw = Vec::with_capacity(kwargs.len());
                for (k, v) in kwargs {
                    kw.push((k.clone(), self.eval(v)?));
                }
                match (recv_attr, callee) {
                    (Some((recv, attr)), _) => {
                        let f = self.get_attr(&recv, attr)?;
                        self.call_value(f, pos, kw)
                    }
                    (None, Some(f)) => self.call_value(f, pos, kw),
                    _ => unreachable!(),
                }
            }
            ExprKind::Attribute { value, attr } => {
                let v = self.eval(value)?;
                self.get_attr(&v, attr)
            }
            ExprKind::Subscript { value, index } => {
                let v = self.eval(value)?;
                if let ExprKind::Slice { lower, upper, step } = &index.kind {
                    let mut bound = |b: &Option<Box<Expr>>| -> R<Option<i64>> {
                        match b {
                            None => Ok(None),
                            Some(x) => match self.eval(x)? {
                                Value::None => Ok(None),
                                other => match other.as_int() {
                                    Some(i) => Ok(Some(i)),
                                    None => raise("TypeError", "slice indices must be integers or None"),
                                },
                            },
                        }
                    };
                    let (lo, hi, st) = (bound(lower)?, bound(upper)?, bound(step)?);
                    return self.slice(&v, lo, hi, st);
                }
                let i = self.eval(index)?;
                self.get_item(&v, &i)
            }
            ExprKind::Slice { .. } => raise("TypeError", "slice outside subscript"),
        }
    }

    fn comprehension(&mut self, elt: &Expr, gens: &[Comprehension], out: &mut Vec<Value>) -> R<()> {
        let Some((g, rest)) = gens.split_first() else {
            let v = self.eval(elt)?;
            self.charge_len(out.len() + 1, 1)?;
            out.push(v);
            return Ok(());
        };
        let it = self.eval(&g.iter)?;
        let items = self.iterate(&it)?;
        'outer: for item in items {
            self.step()?;
            self.assign(&g.target, item)?;
            for cond in &g.ifs {
                if !self.eval(cond)?.truthy() {
                    continue 'outer;
                }
            }
            self.comprehension(elt, rest, out)?;
        }
        Ok(())
    }

    /// Materializes an iterable.
    fn iterate(&mut self, v: &Value) -> R<Vec<Value>> {
        let items = match v {
            Value::List(l) => l.borrow().clone(),
            Value::Tuple(t) => t.to_vec(),
            Value::Str(s) => s.chars().map(|c| Value::str(c.to_string())).collect(),
            Value::Dict(d) => d.iter().map(|(k, _)| k.clone()).collect(),
            Value::Range { start, step, .. } => {
                let n = range_len(v);
                self.charge(n)?;
                return Ok((0..n).map(|k| Value::Int(start + step * k as i64)).collect());
            }
            other => return raise("TypeError", format!("'{}' object is not iterable", other.type_name())),
        };
        self.work(items.len())?;
        Ok(items)
    }

    fn compare(&mut self, op: CmpOp, l: &Value, r: &Value) -> R<bool> {
        use std::cmp::Ordering::*;
        let ord = |s: &mut Self, want: &[std::cmp::Ordering], sym: &str| -> R<bool> {
            if has_nan(l, r) {
                return Ok(false);
            }
            s.work(seq_size(l).min(seq_size(r)))?;
            match values_cmp(l, r) {
                Some(o) => Ok(want.contains(&o)),
                None => raise(
                    "TypeError",
                    format!("'{sym}' not supported between instances of '{}' and '{}'", l.type_name(), r.type_name()),
                ),
            }
        };
        match op {
            CmpOp::Eq => {
                self.work(seq_size(l).min(seq_size(r)))?;
                Ok(values_eq(l, r))
            }
            CmpOp::Ne => {
                self.work(seq_size(l).min(seq_size(r)))?;
                Ok(!values_eq(l, r))
            }
            CmpOp::Lt => ord(self, &[Less], "<"),
            CmpOp::Le => ord(self, &[Less, Equal], "<="),
            CmpOp::Gt => ord(self, &[Greater], ">"),
            CmpOp::Ge => ord(self, &[Greater, Equal], ">="),
            CmpOp::In => self.contains(r, l),
            CmpOp::NotIn => Ok(!self.contains(r, l)?),
            CmpOp::Is => Ok(identical(l, r)),
            CmpOp::IsNot => Ok(!identical(l, r)),
        }
    }

    fn contains(&mut self, container: &Value, item: &Value) -> R<bool> {
        self.work(seq_size(container))?;
        match container {
            Value::Str(s) => match item {
                Value::Str(sub) => Ok(s.contains(sub.as_ref())),
                other => raise(
                    "TypeError",
                    format!("'in <string>' requires string as left operand, not {}", other.type_name()),
                ),
            },
            Value::List(l) => Ok(l.borrow().iter().any(|x| values_eq(x, item))),
            Value::Tuple(t) => Ok(t.iter().any(|x| values_eq(x, item))),
            Value::Dict(d) => Ok(d.iter().any(|(k, _)| values_eq(k, item))),
            Value::Range { start, stop: _, step } => match item.as_num() {
                Some(Num::Int(i)) => {
                    let n = range_len(container) as i64;
                    let off = i - start;
                    Ok(off % step == 0 && (0..n).contains(&(off / step)))
                }
                Some(Num::Float(f)) if f.fract() == 0.0 => self.contains(container, &Value::Int(f as i64)),
                _ => Ok(false),
            },
            other => raise("TypeError", format!("argument of type '{}' is not iterable", other.type_name())),
        }
    }

    fn binop(&mut self, op: BinOp, l: &Value, r: &Value) -> R<Value> {
        if let (Some(a), Some(b)) = (l.as_num(), r.as_num()) {
            if op == BinOp::BitOr {
                return match (l, r) {
                    (Value::Bool(x), Value::Bool(y)) => Ok(Value::Bool(*x | *y)),
                    _ => match (a, b) {
                        (Num::Int(x), Num::Int(y)) => Ok(Value::Int(x | y)),
                        _ => self.type_error_bin("|", l, r),
                    },
                };
            }
            return arith(op, a, b);
        }
        match (op, l, r) {
            (BinOp::Add, Value::Str(a), Value::Str(b)) => {
                self.charge(a.len() + b.len())?;
                let mut s = String::with_capacity(a.len() + b.len());
                s.push_str(a);
                s.push_str(b);
                Ok(Value::str(s))
            }
            (BinOp::Add, Value::List(a), Value::List(b)) => {
                let mut v = a.borrow().clone();
                v.extend(b.borrow().iter().cloned());
                self.new_list(v)
            }
            (BinOp::Add, Value::Tuple(a), Value::Tuple(b)) => {
                let mut v = a.to_vec();
                v.extend(b.iter().cloned());
                self.new_tuple(v)
            }
            (BinOp::Mul, Value::Str(_) | Value::List(_) | Value::Tuple(_), _) if r.as_int().is_some() => {
                self.repeat(l, r.as_int().unwrap())
            }
            (BinOp::Mul, _, Value::Str(_) | Value::List(_) | Value::Tuple(_)) if l.as_int().is_some() => {
                self.repeat(r, l.as_int().unwrap())
            }
            (BinOp::Mod, Value::Str(_), _) => raise("TypeError", "string formatting is not supported"),
            _ => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::FloorDiv => "//",
                    BinOp::Mod => "%",
                    BinOp::Pow => "**",
                    BinOp::BitOr => "|",
                };
                self.type_error_bin(sym, l, r)
            }
        }
    }

    fn type_error_bin<T>(&self, sym: &str, l: &Value, r: &Value) -> R<T> {
        raise(
            "TypeError",
            format!("unsupported operand type(s) for {sym}: '{}' and '{}'", l.type_name(), r.type_name()),
        )
    }

    fn repeat(&mut self, seq: &Value, n: i64) -> R<Value> {
        let n = n.max(0) as usize;
        let unit = seq_size(seq);
        let total = unit.checked_mul(n).unwrap_or(usize::MAX);
        self.charge(total)?;
        Ok(match seq {
            Value::Str(s) => Value::str(s.repeat(n)),
            Value::List(l) => {
                let items = l.borrow();
                Value::list(items.iter().cloned().cycle().take(items.len() * n).collect())
            }
            Value::Tuple(t) => Value::tuple(t.iter().cloned().cycle().take(t.len() * n).collect()),
            _ => unreachable!(),
        })
    }

    fn seq_index(&self, index: &Value, len: usize) -> R<usize> {
        let Some(i) = index.as_int() else {
            return raise("TypeError", format!("indices must be integers, not {}", index.type_name()));
        };
        let j = if i < 0 { i + len as i64 } else { i };
        if j < 0 || j >= len as i64 {
            return raise("IndexError", "index out of range");
        }
        Ok(j as usize)
    }

    fn get_item(&mut self, v: &Value, index: &Value) -> R<Value> {
        match v {
            Value::List(l) => {
                let l = l.borrow();
                let i = self.seq_index(index, l.len())?;
                Ok(l[i].clone())
            }
            Value::Tuple(t) => {
                let i = self.seq_index(index, t.len())?;
                Ok(t[i].clone())
            }
            Value::Str(s) => {
                let n = s.chars().count();
                self.work(n)?;
                let i = self.seq_index(index, n)?;
                Ok(Value::str(s.chars().nth(i).unwrap().to_string()))
            }
            Value::Range { start, step, .. } => {
                let i = self.seq_index(index, range_len(v))?;
                Ok(Value::Int(start + step * i as i64))
            }
            Value::Dict(d) => match d.iter().find(|(k, _)| values_eq(k, index)) {
                Some((_, val)) => Ok(val.clone()),
                None => raise("KeyError", index.repr()),
            },
            Value::Match(m) => self.match_group(m, index),
            other => raise("TypeError", format!("'{}' object is not subscriptable", other.type_name())),
        }
    }

    fn slice(&mut self, v: &Value, lo: Option<i64>, hi: Option<i64>, step: Option<i64>) -> R<Value> {
        let step = step.unwrap_or(1);
        if step == 0 {
            return raise("ValueError", "slice step cannot be zero");
        }
        let pick = |len: usize| -> Vec<usize> {
            let len = len as i64;
            let norm = |x: i64, lo_clamp: i64, hi_clamp: i64| {
                let x = if x < 0 { x + len } else { x };
                x.clamp(lo_clamp, hi_clamp)
            };
            let mut out = Vec::new();
            if step > 0 {
                let a = lo.map_or(0, |x| norm(x, 0, len));
                let b = hi.map_or(len, |x| norm(x, 0, len));
                let mut i = a;
                while i < b {
                    out.push(i as usize);
                    i += step;
                }
            } else {
                let a = lo.map_or(len - 1, |x| norm(x, -1, len - 1));
                let b = hi.map_or(-1, |x| norm(x, -1, len - 1));
                let mut i = a;
                while i > b {
                    out.push(i as usize);
                    i += step;
                }
            }
            out
        };
        match v {
            Value::Str(s) => {
                let chars: Vec<char> = s.chars().collect();
                self.work(chars.len())?;
                let out: String = pick(chars.len()).into_iter().map(|i| chars[i]).collect();
                self.new_str(out)
            }
            Value::List(l) => {
                let items = l.borrow().clone();
                let out = pick(items.len()).into_iter().map(|i| items[i].clone()).collect();
                self.new_list(out)
            }
            Value::Tuple(t) => {
                let out = pick(t.len()).into_iter().map(|i| t[i].clone()).collect();
                self.new_tuple(out)
            }
            other => raise("TypeError", format!("'{}' object is not subscriptable", other.type_name())),
        }
    }

    fn module_attr(&mut self, m: Module, attr: &str) -> R<Value> {
        if let Some(q) = qualified(m, attr) {
            return Ok(Value::Builtin(q));
        }
        let found = match m {
            Module::Re => {
                if attr == "error" {
                    Some(Value::ExcClass("re.error"))
                } else {
                    RE_CONSTS.iter().find(|(n, _)| *n == attr).map(|(_, v)| Value::Int(*v))
                }
            }
            Module::Math => MATH_CONSTS.iter().find(|(n, _)| *n == attr).map(|(_, v)| Value::Float(*v)),
        };
        match found {
            Some(v) => Ok(v),
            None => raise("AttributeError", format!("module has no attribute '{attr}'")),
        }
    }

    fn get_attr(&mut self, v: &Value, attr: &str) -> R<Value> {
        if let Value::Module(m) = v {
            return self.module_attr(*m, attr);
        }
        let table: &[&'static str] = match v {
            Value::Str(_) => STR_METHODS,
            Value::List(_) => LIST_METHODS,
            Value::Match(_) => MATCH_METHODS,
            Value::Dict(_) => DICT_METHODS,
            _ => &[],
        };
        match static_name(table, attr) {
            Some(name) => Ok(Value::Method(Box::new(v.clone()), name)),
            None => raise("AttributeError", format!("'{}' object has no attribute '{attr}'", v.type_name())),
        }
    }

    fn call_value(&mut self, f: Value, pos: Vec<Value>, kw: Vec<(String, Value)>) -> R<Value> {
        match f {
            Value::Builtin(name) => self.call_builtin(Args { pos, kw, name }),
            Value::Method(recv, name) => self.call_method(*recv, Args { pos, kw, name }),
            Value::ExcClass(name) => {
                let msg = pos.first().map(Value::to_str).unwrap_or_default();
                Ok(Value::Exception(Rc::new(Exc { kind: name, msg })))
            }
            other => raise("TypeError", format!("'{}' object is not callable", other.type_name())),
        }
    }

    // ---- builtin functions ----

    fn call_builtin(&mut self, mut a: Args) -> R<Value> {
        match a.name {
            "len" => {
                a.arity(1, 1)?;
                a.done()?;
                let n = match &a.pos[0] {
                    Value::Str(s) => {
                        self.work(s.len())?;
                        s.chars().count()
                    }
                    Value::List(l) => l.borrow().len(),
                    Value::Tuple(t) => t.len(),
                    Value::Dict(d) => d.len(),
                    r @ Value::Range { .. } => range_len(r),
                    other => return raise("TypeError", format!("object of type '{}' has no len()", other.type_name())),
                };
                Ok(Value::Int(n as i64))
            }
            "abs" => {
                a.arity(1, 1)?;
                a.done()?;
                match a.pos[0].as_num() {
                    Some(Num::Int(i)) => i.checked_abs().map(Value::Int).ok_or_else(|| exc("OverflowError", "integer overflow").into()),
                    Some(Num::Float(f)) => Ok(Value::Float(f.abs())),
                    None => raise("TypeError", format!("bad operand type for abs(): '{}'", a.pos[0].type_name())),
                }
            }
            "min" | "max" => {
                let default = a.get(usize::MAX, "default")?;
                a.done()?;
                if a.pos.is_empty() {
                    return raise("TypeError", format!("{} expected at least 1 argument, got 0", a.name));
                }
                let items = if a.pos.len() == 1 { self.iterate(&a.pos[0])? } else { a.pos.clone() };
                if items.is_empty() {
                    return match default {
                        Some(d) => Ok(d),
                        None => raise("ValueError", format!("{}() arg is an empty sequence", a.name)),
                    };
                }
                let want = if a.name == "max" { std::cmp::Ordering::Greater } else { std::cmp::Ordering::Less };
                let mut best = items[0].clone();
                for x in &items[1..] {
                    if has_nan(x, &best) {
                        continue;
                    }
                    match values_cmp(x, &best) {
                        Some(o) if o == want => best = x.clone(),
                        Some(_) => {}
                        None => return self.type_error_bin(if a.name == "max" { ">" } else { "<" }, x, &best),
                    }
                }
                Ok(best)
            }
            "float" => {
                a.arity(0, 1)?;
                a.done()?;
                match a.pos.first() {
                    None => Ok(Value::Float(0.0)),
                    Some(v) => to_float(v).map(Value::Float),
                }
            }
            "to_number" => {
                a.arity(1, 1)?;
                a.done()?;
                match &a.pos[0] {
                    Value::Str(s) => to_float(&Value::str(s.replace(',', ""))).map(Value::Float),
                    v => to_float(v).map(Value::Float),
                }
            }
            "int" => {
                a.arity(0, 1)?;
                a.done()?;
                match a.pos.first() {
                    None => Ok(Value::Int(0)),
                    Some(v) => to_int(v).map(Value::Int),
                }
            }
            "str" => {
                a.arity(0, 1)?;
                a.done()?;
                match a.pos.first() {
                    None => Ok(Value::str("")),
                    Some(v) => {
                        self.work(seq_size(v))?;
                        let s = v.to_str();
                        self.new_str(s)
                    }
                }
            }
            "bool" => {
                a.arity(0, 1)?;
                a.done()?;
                Ok(Value::Bool(a.pos.first().is_some_and(Value::truthy)))
            }
            "list" => {
                a.arity(0, 1)?;
                a.done()?;
                let items = match a.pos.first() {
                    None => Vec::new(),
                    Some(v) => self.iterate(v)?,
                };
                self.new_list(items)
            }
            "sorted" => {
                a.arity(1, 1)?;
                let reverse = a.get(usize::MAX, "reverse")?.is_some_and(|v| v.truthy());
                a.done()?;
                let mut items = self.iterate(&a.pos[0])?;
                self.work(items.len() * 16)?;
                let mut err = None;
                items.sort_by(|x, y| match values_cmp(x, y) {
                    Some(o) => o,
                    None => {
                        err.get_or_insert((x.type_name(), y.type_name()));
                        std::cmp::Ordering::Equal
                    }
                });
                if let Some((x, y)) = err {
                    return raise("TypeError", format!("'<' not supported between instances of '{x}' and '{y}'"));
                }
                if reverse {
                    items.reverse();
                }
                self.new_list(items)
            }
            "sum" => {
                a.arity(1, 2)?;
                let start = a.get(1, "start")?.unwrap_or(Value::Int(0));
                a.done()?;
                let items = self.iterate(&a.pos[0])?;
                let mut acc = start;
                if matches!(acc, Value::Str(_)) {
                    return raise("TypeError", "sum() can't sum strings [use ''.join(seq) instead]");
                }
                for x in items {
                    acc = self.binop(BinOp::Add, &acc, &x)?;
                }
                Ok(acc)
            }
            "round" => {
                a.arity(1, 2)?;
                let nd = a.get(1, "ndigits")?;
                a.done()?;
                round(&a.pos[0], nd.as_ref())
            }
            "any" | "all" => {
                a.arity(1, 1)?;
                a.done()?;
                let items = self.iterate(&a.pos[0])?;
                Ok(Value::Bool(if a.name == "any" {
                    items.iter().any(Value::truthy)
                } else {
                    items.iter().all(Value::truthy)
                }))
            }
            "zip" => {
                a.done()?;
                let seqs = a.pos.iter().map(|v| self.iterate(v)).collect::<R<Vec<_>>>()?;
                let n = seqs.iter().map(Vec::len).min().unwrap_or(0);
                self.charge(n * (seqs.len() + 1))?;
                let out = (0..n).map(|i| Value::tuple(seqs.iter().map(|s| s[i].clone()).collect())).collect();
                Ok(Value::list(out))
            }
            "enumerate" => {
                a.arity(1, 2)?;
                let start = match a.get(1, "start")? {
                    None => 0,
                    Some(v) => match v.as_int() {
                        Some(i) => i,
                        None => return raise("TypeError", "start must be an integer"),
                    },
                };
                a.done()?;
                let items = self.iterate(&a.pos[0])?;
                self.charge(items.len() * 3)?;
                let out = items
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| Value::tuple(vec![Value::Int(start + i as i64), v]))
                    .collect();
                Ok(Value::list(out))
            }
            "range" => {
                a.arity(1, 3)?;
                a.done()?;
                let ints = a
                    .pos
                    .iter()
                    .map(|v| v.as_int().ok_or_else(|| exc("TypeError", format!("'{}' object cannot be interpreted as an integer", v.type_name())).into()))
                    .collect::<R<Vec<i64>>>()?;
                let (start, stop, step) = match ints[..] {
                    [stop] => (0, stop, 1),
                    [start, stop] => (start, stop, 1),
                    [start, stop, step] => (start, stop, step),
                    _ => unreachable!(),
                };
                if step == 0 {
                    return raise("ValueError", "range() arg 3 must not be zero");
                }
                Ok(Value::Range { start, stop, step })
            }
            "strip" | "split" | "lower" | "replace" => {
                // function spellings of the string methods
                if a.pos.is_empty() {
                    return raise("TypeError", format!("{}() missing required argument", a.name));
                }
                let recv = a.pos.remove(0);
                if !matches!(recv, Value::Str(_)) {
                    return raise("TypeError", format!("{}() expects a string, got {}", a.name, recv.type_name()));
                }
                self.call_method(recv, a)
            }
            "regex_search" => self.call_builtin(Args { name: "re.search", ..a }),
            "regex_findall" => self.call_builtin(Args { name: "re.findall", ..a }),
            "regex_split" => self.call_builtin(Args { name: "re.split", ..a }),
            n if n.starts_with("re.") => self.call_re(a),
            n if n.starts_with("math.") => self.call_math(a),
            n => raise("NameError", format!("name '{n}' is not defined")),
        }
    }

    fn regex(&mut self, pattern: &Value, flags: Option<Value>) -> R<Rc<Regex>> {
        let Value::Str(p) = pattern else {
            return raise("TypeError", format!("first argument must be string, not {}", pattern.type_name()));
        };
        let flags = match flags {
            None => 0,
            Some(v) => v.as_int().ok_or_else(|| Unwind::from(exc("TypeError", "flags must be an integer")))?,
        };
        let key = (p.to_string(), flags);
        if let Some(re) = self.regex_cache.get(&key) {
            return Ok(re.clone());
        }
        self.work(p.len() * 8)?;
        let re = Rc::new(Regex::new(p, flags).map_err(|e| Unwind::from(exc("re.error", e.to_string())))?);
        self.regex_cache.insert(key, re.clone());
        Ok(re)
    }

    fn hay(&mut self, v: &Value) -> R<Rc<[char]>> {
        match v {
            Value::Str(s) => {
                self.work(s.len())?;
                Ok(s.chars().collect::<Vec<_>>().into())
            }
            other => raise("TypeError", format!("expected string, got {}", other.type_name())),
        }
    }

    fn call_re(&mut self, mut a: Args) -> R<Value> {
        let fname = &a.name[3..];
        match fname {
            "search" | "match" | "fullmatch" | "findall" => {
                a.arity(2, 3)?;
                let flags = a.get(2, "flags")?;
                a.done()?;
                let re = self.regex(&a.pos[0], flags)?;
                let hay = self.hay(&a.pos[1])?;
                let mut budget = std::mem::replace(&mut self.budget, Budget::unlimited());
                let res = match fname {
                    "search" => re.search(&hay, 0, false, &mut budget).map(|m| vec![m]),
                    "match" => re.match_at(&hay, 0, &mut budget).map(|m| vec![m]),
                    "fullmatch" => re.fullmatch(&hay, &mut budget).map(|m| vec![m]),
                    _ => re.find_all(&hay, None, &mut budget).map(|ms| ms.into_iter().map(Some).collect()),
                };
                self.budget = budget;
                let res = res.map_err(|e| self.abort(e))?;
                if fname != "findall" {
                    return Ok(match res.into_iter().next().flatten() {
                        Some(caps) => Value::Match(Rc::new(MatchObj { hay, caps, re })),
                        None => Value::None,
                    });
                }
                let text = |s: Option<(usize, usize)>| -> String {
                    s.map(|(x, y)| hay[x..y].iter().collect()).unwrap_or_default()
                };
                let mut out = Vec::new();
                let mut size = 0;
                for m in res.into_iter().flatten() {
                    let v = match re.groups() {
                        0 => Value::str(text(m.get(0))),
                        1 => Value::str(text(m.get(1))),
                        g => Value::tuple((1..=g).map(|i| Value::str(text(m.get(i)))).collect()),
                    };
                    size += seq_size(&v) + 1;
                    out.push(v);
                }
                self.charge(size)?;
                Ok(Value::list(out))
            }
            "split" => {
                a.arity(2, 4)?;
                let maxsplit = a.get(2, "maxsplit")?.map_or(Some(0), |v| v.as_int());
                let flags = a.get(3, "flags")?;
                a.done()?;
                let Some(maxsplit) = maxsplit else {
                    return raise("TypeError", "maxsplit must be an integer");
                };
                let re = self.regex(&a.pos[0], flags)?;
                let hay = self.hay(&a.pos[1])?;
                let limit = if maxsplit > 0 { Some(maxsplit as usize) } else { None };
                if maxsplit < 0 {
                    return Ok(Value::list(vec![a.pos[1].clone()]));
                }
                let mut budget = std::mem::replace(&mut self.budget, Budget::unlimited());
                let res = re.find_all(&hay, limit, &mut budget);
                self.budget = budget;
                let ms = res.map_err(|e| self.abort(e))?;
                let piece = |x: usize, y: usize| Value::str(hay[x..y].iter().collect::<String>());
                let mut out = Vec::new();
                let mut last = 0;
                for m in &ms {
                    let (s, e) = m.span();
                    out.push(piece(last, s));
                    for g in 1..=re.groups() {
                        out.push(m.get(g).map_or(Value::None, |(x, y)| piece(x, y)));
                    }
                    last = e;
                }
                out.push(piece(last, hay.len()));
                self.charge(hay.len() + out.len())?;
                Ok(Value::list(out))
            }
            "sub" => {
                a.arity(3, 5)?;
                let count = a.get(3, "count")?.map_or(Some(0), |v| v.as_int());
                let flags = a.get(4, "flags")?;
                a.done()?;
                let Some(count) = count else {
                    return raise("TypeError", "count must be an integer");
                };
                let re = self.regex(&a.pos[0], flags)?;
                let Value::Str(repl) = &a.pos[1] else {
                    return raise("TypeError", "replacement must be a string");
                };
                let template = parse_template(repl, &re)?;
                let hay = self.hay(&a.pos[2])?;
                let limit = if count > 0 { Some(count as usize) } else { None };
                let mut budget = std::mem::replace(&mut self.budget, Budget::unlimited());
                let res = re.find_all(&hay, limit, &mut budget);
                self.budget = budget;
                let ms = res.map_err(|e| self.abort(e))?;
                let mut out = String::new();
                let mut last = 0;
                for m in &ms {
                    let (s, e) = m.span();
                    out.extend(&hay[last..s]);
                    for part in &template {
                        match part {
                            TemplatePart::Lit(t) => out.push_str(t),
                            TemplatePart::Group(g) => {
                                if let Some((x, y)) = m.get(*g) {
                                    out.extend(&hay[x..y]);
                                }
                            }
                        }
                    }
                    last = e;
                    if out.len() > self.limits.max_len {
                        return Err(Fault::Memory(format!("object exceeds length limit {}", self.limits.max_len)).into());
                    }
                }
                out.extend(&hay[last..]);
                self.new_str(out)
            }
            other => raise("AttributeError", format!("module 're' has no attribute '{other}'")),
        }
    }

    fn call_math(&mut self, a: Args) -> R<Value> {
        let fname = &a.name[5..];
        let arity = match fname {
            "log" => (1, 2),
            "pow" => (2, 2),
            _ => (1, 1),
        };
        a.arity(arity.0, arity.1)?;
        a.done()?;
        let xs = a.pos.iter().map(to_float_strict).collect::<R<Vec<f64>>>()?;
        let x = xs[0];
        let domain = || raise("ValueError", "math domain error");
        let v = match fname {
            "sqrt" => {
                if x < 0.0 {
                    return domain();
                }
                x.sqrt()
            }
            "log" | "log10" | "log2" => {
                if x <= 0.0 {
                    return domain();
                }
                match (fname, xs.get(1)) {
                    ("log", Some(&b)) => {
                        if b <= 0.0 || b == 1.0 {
                            return if b == 1.0 { raise("ZeroDivisionError", "float division by zero") } else { domain() };
                        }
                        x.ln() / b.ln()
                    }
                    ("log", None) => x.ln(),
                    ("log10", _) => x.log10(),
                    _ => x.log2(),
                }
            }
            "exp" => {
                let r = x.exp();
                if r.is_infinite() && x.is_finite() {
                    return raise("OverflowError", "math range error");
                }
                r
            }
            "floor" | "ceil" => {
                if x.is_nan() {
                    return raise("ValueError", "cannot convert float NaN to integer");
                }
                if x.is_infinite() {
                    return raise("OverflowError", "cannot convert float infinity to integer");
                }
                let r = if fname == "floor" { x.floor() } else { x.ceil() };
                return float_to_int(r).map(Value::Int);
            }
            "fabs" => x.abs(),
            "isfinite" => return Ok(Value::Bool(x.is_finite())),
            "isnan" => return Ok(Value::Bool(x.is_nan())),
            "isinf" => return Ok(Value::Bool(x.is_infinite())),
            "pow" => {
                let r = x.powf(xs[1]);
                if r.is_infinite() && x.is_finite() && xs[1].is_finite() {
                    if x == 0.0 {
                        return domain();
                    }
                    return raise("OverflowError", "math range error");
                }
                if r.is_nan() && !x.is_nan() && !xs[1].is_nan() {
                    return domain();
                }
                r
            }
            other => return raise("AttributeError", format!("module 'math' has no attribute '{other}'")),
        };
        Ok(Value::Float(v))
    }

    // ---- methods ----

    fn call_method(&mut self, recv: Value, a: Args) -> R<Value> {
        match recv {
            Value::Str(s) => self.str_method(&s, a),
            Value::List(l) => self.list_method(&l, a),
            Value::Match(m) => self.match_method(&m, a),
            Value::Dict(d) => self.dict_method(&d, a),
            other => raise("AttributeError", format!("'{}' object has no attribute '{}'", other.type_name(), a.name)),
        }
    }

    fn str_method(&mut self, s: &Rc<str>, mut a: Args) -> R<Value> {
        self.work(s.len())?;
        let str_arg = |v: &Value, what: &str| -> R<Rc<str>> {
            match v {
                Value::Str(x) => Ok(x.clone()),
                other => raise("TypeError", format!("{what} must be str, not {}", other.type_name())),
            }
        };
        match a.name {
            "strip" | "lstrip" | "rstrip" => {
                a.arity(0, 1)?;
                let chars = a.get(0, "chars")?;
                a.done()?;
                let out = match chars {
                    None | Some(Value::None) => match a.name {
                        "strip" => py_strip(s).to_string(),
                        "lstrip" => s.trim_start_matches(py_space).to_string(),
                        _ => s.trim_end_matches(py_space).to_string(),
                    },
                    Some(v) => {
                        let set: Vec<char> = str_arg(&v, "strip arg")?.chars().collect();
                        let f = |c: char| set.contains(&c);
                        match a.name {
                            "strip" => s.trim_matches(f).to_string(),
                            "lstrip" => s.trim_start_matches(f).to_string(),
                            _ => s.trim_end_matches(f).to_string(),
                        }
                    }
                };
                self.new_str(out)
            }
            "split" => {
                a.arity(0, 2)?;
                let sep = a.get(0, "sep")?;
                let maxsplit = a.get(1, "maxsplit")?.map_or(Some(-1), |v| v.as_int());
                a.done()?;
                let Some(maxsplit) = maxsplit else {
                    return raise("TypeError", "maxsplit must be an integer");
                };
                let parts: Vec<String> = match sep {
                    None | Some(Value::None) => split_whitespace(s, maxsplit),
                    Some(v) => {
                        let sep = str_arg(&v, "sep")?;
                        if sep.is_empty() {
                            return raise("ValueError", "empty separator");
                        }
                        if maxsplit < 0 {
                            s.split(sep.as_ref()).map(String::from).collect()
                        } else {
                            s.splitn(maxsplit as usize + 1, sep.as_ref()).map(String::from).collect()
                        }
                    }
                };
                self.charge(s.len() + parts.len())?;
                Ok(Value::list(parts.into_iter().map(Value::str).collect()))
            }
            "splitlines" => {
                a.arity(0, 0)?;
                a.done()?;
                let parts = split_lines(s);
                self.charge(s.len() + parts.len())?;
                Ok(Value::list(parts.into_iter().map(Value::str).collect()))
            }
            "lower" | "upper" => {
                a.arity(0, 0)?;
                a.done()?;
                let out = if a.name == "lower" { s.to_lowercase() } else { s.to_uppercase() };
                self.new_str(out)
            }
            "replace" => {
                a.arity(2, 3)?;
                let count = a.get(2, "count")?.map_or(Some(-1), |v| v.as_int());
                a.done()?;
                let old = str_arg(&a.pos[0], "replace() argument 1")?;
                let new = str_arg(&a.pos[1], "replace() argument 2")?;
                let Some(count) = count else {
                    return raise("TypeError", "count must be an integer");
                };
                let hits = if old.is_empty() { s.chars().count() + 1 } else { s.matches(old.as_ref()).count() };
                let n = if count < 0 { hits } else { hits.min(count as usize) };
                let est = s.len() + n.saturating_mul(new.len());
                if est > self.limits.max_len {
                    return Err(Fault::Memory(format!("object of length {est} exceeds limit {}", self.limits.max_len)).into());
                }
                let out = if count < 0 { s.replace(old.as_ref(), &new) } else { s.replacen(old.as_ref(), &new, n) };
                self.new_str(out)
            }
            "startswith" | "endswith" => {
                a.arity(1, 1)?;
                a.done()?;
                let options: Vec<Value> = match &a.pos[0] {
                    Value::Tuple(t) => t.to_vec(),
                    other => vec![other.clone()],
                };
                for o in options {
                    let p = str_arg(&o, a.name)?;
                    let hit = if a.name == "startswith" { s.starts_with(p.as_ref()) } else { s.ends_with(p.as_ref()) };
                    if hit {
                        return Ok(Value::Bool(true));
                    }
                }
                Ok(Value::Bool(false))
            }
            "count" => {
                a.arity(1, 1)?;
                a.done()?;
                let sub = str_arg(&a.pos[0], "count() argument")?;
                let n = if sub.is_empty() { s.chars().count() + 1 } else { s.matches(sub.as_ref()).count() };
                Ok(Value::Int(n as i64))
            }
            "find" | "index" => {
                a.arity(1, 1)?;
                a.done()?;
                let sub = str_arg(&a.pos[0], "find() argument")?;
                match s.find(sub.as_ref()) {
                    Some(b) => Ok(Value::Int(s[..b].chars().count() as i64)),
                    None if a.name == "find" => Ok(Value::Int(-1)),
                    None => raise("ValueError", "substring not found"),
                }
            }
            "join" => {
                a.arity(1, 1)?;
                a.done()?;
                let items = self.iterate(&a.pos[0])?;
                let mut parts = Vec::with_capacity(items.len());
                let mut total = 0usize;
                for (i, it) in items.iter().enumerate() {
                    match it {
                        Value::Str(x) => {
                            total += x.len() + s.len();
                            parts.push(x.clone());
                        }
                        other => {
                            return raise(
                                "TypeError",
                                format!("sequence item {i}: expected str instance, {} found", other.type_name()),
                            )
                        }
                    }
                }
                if total > self.limits.max_len {
                    return Err(Fault::Memory(format!("object of length {total} exceeds limit {}", self.limits.max_len)).into());
                }
                let out = parts.iter().map(|p| p.as_ref()).collect::<Vec<&str>>().join(s);
                self.new_str(out)
            }
            "isdigit" | "isalpha" | "isalnum" | "isspace" | "isnumeric" | "isdecimal" => {
                a.arity(0, 0)?;
                a.done()?;
                let f: fn(char) -> bool = match a.name {
                    "isdigit" | "isdecimal" => crate::regex::is_digit,
                    "isnumeric" => char::is_numeric,
                    "isalpha" => char::is_alphabetic,
                    "isalnum" => char::is_alphanumeric,
                    _ => py_space,
                };
                Ok(Value::Bool(!s.is_empty() && s.chars().all(f)))
            }
            other => raise("AttributeError", format!("'str' object has no attribute '{other}'")),
        }
    }

    fn list_method(&mut self, l: &Rc<RefCell<Vec<Value>>>, mut a: Args) -> R<Value> {
        match a.name {
            "append" => {
                a.arity(1, 1)?;
                a.done()?;
                let len = l.borrow().len();
                self.charge_len(len + 1, 1)?;
                l.borrow_mut().push(a.pos.pop().unwrap());
                Ok(Value::None)
            }
            "extend" => {
                a.arity(1, 1)?;
                a.done()?;
                let extra = self.iterate(&a.pos[0])?;
                let len = l.borrow().len();
                self.charge_len(len + extra.len(), extra.len())?;
                l.borrow_mut().extend(extra);
                Ok(Value::None)
            }
            "count" => {
                a.arity(1, 1)?;
                a.done()?;
                self.work(l.borrow().len())?;
                Ok(Value::Int(l.borrow().iter().filter(|x| values_eq(x, &a.pos[0])).count() as i64))
            }
            "index" => {
                a.arity(1, 1)?;
                a.done()?;
                self.work(l.borrow().len())?;
                match l.borrow().iter().position(|x| values_eq(x, &a.pos[0])) {
                    Some(i) => Ok(Value::Int(i as i64)),
                    None => raise("ValueError", format!("{} is not in list", a.pos[0].repr())),
                }
            }
            "pop" => {
                a.arity(0, 1)?;
                a.done()?;
                let len = l.borrow().len();
                if len == 0 {
                    return raise("IndexError", "pop from empty list");
                }
                let i = match a.pos.first() {
                    None => len - 1,
                    Some(v) => self.seq_index(v, len)?,
                };
                self.work(len)?;
                Ok(l.borrow_mut().remove(i))
            }
            other => raise("AttributeError", format!("'list' object has no attribute '{other}'")),
        }
    }

    fn match_group(&mut self, m: &MatchObj, g: &Value) -> R<Value> {
        let idx = match g {
            Value::Str(name) => m.re.group_index(name),
            other => other.as_int().and_then(|i| usize::try_from(i).ok()),
        };
        match idx {
            Some(i) if i <= m.re.groups() => match m.group_str(i) {
                Some(s) => self.new_str(s),
                None => Ok(Value::None),
            },
            _ => raise("IndexError", "no such group"),
        }
    }

    fn match_method(&mut self, m: &MatchObj, mut a: Args) -> R<Value> {
        match a.name {
            "group" => {
                a.done()?;
                match a.pos.len() {
                    0 => self.match_group(m, &Value::Int(0)),
                    1 => self.match_group(m, &a.pos[0]),
                    _ => {
                        let items = a.pos.iter().map(|g| self.match_group(m, g)).collect::<R<Vec<_>>>()?;
                        Ok(Value::tuple(items))
                    }
                }
            }
            "groups" => {
                a.arity(0, 1)?;
                let default = a.get(0, "default")?.unwrap_or(Value::None);
                a.done()?;
                let items = (1..=m.re.groups())
                    .map(|i| m.group_str(i).map_or(default.clone(), Value::str))
                    .collect();
                self.new_tuple(items)
            }
            "start" | "end" | "span" => {
                a.arity(0, 1)?;
                a.done()?;
                let g = a.pos.first().cloned().unwrap_or(Value::Int(0));
                let i = match &g {
                    Value::Str(n) => m.re.group_index(n),
                    other => other.as_int().and_then(|i| usize::try_from(i).ok()),
                };
                let Some(i) = i.filter(|i| *i <= m.re.groups()) else {
                    return raise("IndexError", "no such group");
                };
                let (s, e) = m.caps.get(i).map_or((-1, -1), |(s, e)| (s as i64, e as i64));
                Ok(match a.name {
                    "start" => Value::Int(s),
                    "end" => Value::Int(e),
                    _ => Value::tuple(vec![Value::Int(s), Value::Int(e)]),
                })
            }
            other => raise("AttributeError", format!("'re.Match' object has no attribute '{other}'")),
        }
    }

    fn dict_method(&mut self, d: &Rc<Vec<(Value, Value)>>, a: Args) -> R<Value> {
        match a.name {
            "get" => {
                a.arity(1, 2)?;
                a.done()?;
                let default = a.pos.get(1).cloned().unwrap_or(Value::None);
                Ok(d.iter().find(|(k, _)| values_eq(k, &a.pos[0])).map_or(default, |(_, v)| v.clone()))
            }
            "keys" | "values" | "items" => {
                a.arity(0, 0)?;
                a.done()?;
                let items = d
                    .iter()
                    .map(|(k, v)| match a.name {
                        "keys" => k.clone(),
                        "values" => v.clone(),
                        _ => Value::tuple(vec![k.clone(), v.clone()]),
                    })
                    .collect();
                self.new_list(items)
            }
            other => raise("AttributeError", format!("'dict' object has no attribute '{other}'")),
        }
    }
}

fn seq_size(v: &Value) -> usize {
    match v {
        Value::Str(s) => s.len(),
        Value::List(l) => l.borrow().len(),
        Value::Tuple(t) => t.len(),
        Value::Dict(d) => d.len(),
        _ => 1,
    }
}

fn identical(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y && (-5..=256).contains(x),
        (Value::Str(x), Value::Str(y)) => Rc::ptr_eq(x, y),
        (Value::List(x), Value::List(y)) => Rc::ptr_eq(x, y),
        (Value::Tuple(x), Value::Tuple(y)) => Rc::ptr_eq(x, y),
        (Value::Dict(x), Value::Dict(y)) => Rc::ptr_eq(x, y),
        (Value::Match(x), Value::Match(y)) => Rc::ptr_eq(x, y),
        (Value::Module(x), Value::Module(y)) => x == y,
        (Value::Builtin(x), Value::Builtin(y)) => x == y,
        (Value::ExcClass(x), Value::ExcClass(y)) => x == y,
        _ => false,
    }
}

fn arith(op: BinOp, a: Num, b: Num) -> R<Value> {
    let overflow = || raise("OverflowError", "integer overflow");
    if let (Num::Int(x), Num::Int(y)) = (a, b) {
        return match op {
            BinOp::Add => x.checked_add(y).map_or_else(overflow, |v| Ok(Value::Int(v))),
            BinOp::Sub => x.checked_sub(y).map_or_else(overflow, |v| Ok(Value::Int(v))),
            BinOp::Mul => x.checked_mul(y).map_or_else(overflow, |v| Ok(Value::Int(v))),
            BinOp::Div => {
                if y == 0 {
                    raise("ZeroDivisionError", "division by zero")
                } else {
                    Ok(Value::Float(x as f64 / y as f64))
                }
            }
            BinOp::FloorDiv | BinOp::Mod => {
                if y == 0 {
                    return raise("ZeroDivisionError", "integer division or modulo by zero");
                }
                let (Some(q), Some(r)) = (x.checked_div_euclid(y), x.checked_rem_euclid(y)) else {
                    return overflow();
                };
                // euclidean -> floor semantics for negative divisors
                let (q, r) = if y < 0 && r != 0 { (q - 1, r + y) } else { (q, r) };
                Ok(Value::Int(if op == BinOp::FloorDiv { q } else { r }))
            }
            BinOp::Pow => {
                if y < 0 {
                    if x == 0 {
                        return raise("ZeroDivisionError", "0.0 cannot be raised to a negative power");
                    }
                    return Ok(Value::Float((x as f64).powf(y as f64)));
                }
                match u32::try_from(y).ok().and_then(|e| x.checked_pow(e)) {
                    Some(v) => Ok(Value::Int(v)),
                    None => overflow(),
                }
            }
            BinOp::BitOr => Ok(Value::Int(x | y)),
        };
    }
    let (x, y) = (a.to_f64(), b.to_f64());
    Ok(Value::Float(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y == 0.0 {
                return raise("ZeroDivisionError", "float division by zero");
            }
            x / y
        }
        BinOp::FloorDiv => {
            if y == 0.0 {
                return raise("ZeroDivisionError", "float floor division by zero");
            }
            (x / y).floor()
        }
        BinOp::Mod => {
            if y == 0.0 {
                return raise("ZeroDivisionError", "float modulo");
            }
            let r = x % y;
            if r != 0.0 && (r < 0.0) != (y < 0.0) {
                r + y
            } else {
                r
            }
        }
        BinOp::Pow => {
            if x == 0.0 && y < 0.0 {
                return raise("ZeroDivisionError", "0.0 cannot be raised to a negative power");
            }
            if x < 0.0 && y.fract() != 0.0 {
                return raise("ValueError", "complex results are not supported");
            }
            let r = x.powf(y);
            if r.is_infinite() && x.is_finite() && y.is_finite() {
                return raise("OverflowError", "numerical result out of range");
            }
            r
        }
        BinOp::BitOr => return raise("TypeError", "unsupported operand type(s) for |: 'float'"),
    }))
}

fn float_to_int(f: f64) -> R<i64> {
    if f.is_nan() {
        return raise("ValueError", "cannot convert float NaN to integer");
    }
    if f.is_infinite() {
        return raise("OverflowError", "cannot convert float infinity to integer");
    }
    if f >= 9.2e18 || f <= -9.2e18 {
        return raise("OverflowError", "integer overflow");
    }
    Ok(f.trunc() as i64)
}

/// Python `float()` of a value.
fn to_float(v: &Value) -> R<f64> {
    match v {
        Value::Str(s) => parse_float(s)
            .ok_or_else(|| exc("ValueError", format!("could not convert string to float: {}", v.repr())).into()),
        other => to_float_strict(other),
    }
}

/// Numeric-only conversion used by the math functions.
fn to_float_strict(v: &Value) -> R<f64> {
    match v.as_num() {
        Some(n) => Ok(n.to_f64()),
        None => raise("TypeError", format!("must be real number, not {}", v.type_name())),
    }
}

fn to_int(v: &Value) -> R<i64> {
    match v {
        Value::Bool(b) => Ok(*b as i64),
        Value::Int(i) => Ok(*i),
        Value::Float(f) => float_to_int(*f),
        Value::Str(s) => {
            let t = py_strip(s);
            let bad = || exc("ValueError", format!("invalid literal for int() with base 10: {}", v.repr()));
            let (neg, body) = match t.as_bytes().first() {
                Some(b'-') => (true, &t[1..]),
                Some(b'+') => (false, &t[1..]),
                _ => (false, t),
            };
            let ok = !body.is_empty()
                && !body.starts_with('_')
                && !body.ends_with('_')
                && !body.contains("__")
                && body.chars().all(|c| c.is_ascii_digit() || c == '_');
            if !ok {
                return Err(bad().into());
            }
            let digits: String = body.chars().filter(|c| *c != '_').collect();
            let mag: i64 = digits.parse().map_err(|_| Unwind::from(exc("OverflowError", "integer overflow")))?;
            Ok(if neg { -mag } else { mag })
        }
        other => raise(
            "TypeError",
            format!("int() argument must be a string or a real number, not '{}'", other.type_name()),
        ),
    }
}

fn round(x: &Value, nd: Option<&Value>) -> R<Value> {
    let nd = match nd {
        None | Some(Value::None) => None,
        Some(v) => Some(v.as_int().ok_or_else(|| Unwind::from(exc("TypeError", "ndigits must be an integer")))?),
    };
    match (x.as_num(), nd) {
        (Some(Num::Int(i)), None) => Ok(Value::Int(i)),
        (Some(Num::Int(i)), Some(d)) if d >= 0 => Ok(Value::Int(i)),
        (Some(Num::Int(i)), Some(d)) => {
            let p = 10f64.powi((-d) as i32);
            Ok(Value::Int(((i as f64 / p).round_ties_even() * p) as i64))
        }
        (Some(Num::Float(f)), None) => float_to_int(f.round_ties_even()).map(Value::Int),
        (Some(Num::Float(f)), Some(d)) => {
            if !f.is_finite() {
                return Ok(Value::Float(f));
            }
            // round through the shortest decimal text, close to CPython's
            // correctly rounded result for typical inputs
            let d = d.clamp(-308, 308) as i32;
            if d >= 0 {
                let s = format!("{:.*}", d as usize, f);
                Ok(Value::Float(s.parse().unwrap_or(f)))
            } else {
                let p = 10f64.powi(-d);
                Ok(Value::Float((f / p).round_ties_even() * p))
            }
        }
        (None, _) => raise("TypeError", format!("type {} doesn't define __round__ method", x.type_name())),
    }
}

fn split_whitespace(s: &str, maxsplit: i64) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = s.trim_start_matches(py_space);
    while !rest.is_empty() {
        if maxsplit >= 0 && out.len() as i64 == maxsplit {
            out.push(rest.to_string());
            return out;
        }
        match rest.find(py_space) {
            Some(i) => {
                out.push(rest[..i].to_string());
                rest = rest[i..].trim_start_matches(py_space);
            }
            None => {
                out.push(rest.to_string());
                break;
            }
        }
    }
    out
}

fn split_lines(s: &str) -> Vec<String> {
    let is_break = |c: char| {
        matches!(c, '\n' | '\r' | '\x0b' | '\x0c' | '\x1c' | '\x1d' | '\x1e' | '\u{85}' | '\u{2028}' | '\u{2029}')
    };
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if is_break(c) {
            if c == '\r' && chars.peek() == Some(&'\n') {
                chars.next();
            }
            out.push(std::mem::take(&mut cur));
        } else {
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

enum TemplatePart {
    Lit(String),
    Group(usize),
}

fn parse_template(repl: &str, re: &Regex) -> R<Vec<TemplatePart>> {
    let bad = |m: &str| -> R<Vec<TemplatePart>> { raise("re.error", m.to_string()) };
    let mut out = Vec::new();
    let mut lit = String::new();
    let mut chars = repl.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            lit.push(c);
            continue;
        }
        let Some(e) = chars.next() else {
            return bad("bad escape (end of pattern)");
        };
        let group = match e {
            'n' => {
                lit.push('\n');
                continue;
            }
            't' => {
                lit.push('\t');
                continue;
            }
            'r' => {
                lit.push('\r');
                continue;
            }
            '\\' => {
                lit.push('\\');
                continue;
            }
            'g' => {
                if chars.next() != Some('<') {
                    return bad("missing <");
                }
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some('>') => break,
                        Some(ch) => name.push(ch),
                        None => return bad("missing >, unterminated name"),
                    }
                }
                match name.parse::<usize>() {
                    Ok(i) => i,
                    Err(_) => match re.group_index(&name) {
                        Some(i) => i,
                        None => return bad(&format!("unknown group name '{name}'")),
                    },
                }
            }
            d if d.is_ascii_digit() => {
                let mut n = d.to_digit(10).unwrap() as usize;
                if let Some(d2) = chars.peek().and_then(|c| c.to_digit(10)) {
                    n = n * 10 + d2 as usize;
                    chars.next();
                }
                n
            }
            ch if ch.is_ascii_alphabetic() => return bad(&format!("bad escape \\{ch}")),
            ch => {
                lit.push('\\');
                lit.push(ch);
                continue;
            }
        };
        if group > re.groups() {
            return bad(&format!("invalid group reference {group}"));
        }
        if !lit.is_empty() {
            out.push(TemplatePart::Lit(std::mem::take(&mut lit)));
        }
        out.push(TemplatePart::Group(group));
    }
    if !lit.is_empty() {
        out.push(TemplatePart::Lit(lit));
    }
    Ok(out)
}
