//! Four-stage validation of candidate reward programs and the guarded
//! callable that runs accepted ones.

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use rewardsmith_core::rewards::{is_protected, RewardBatch, RewardFault, RewardFn};
use rewardsmith_core::Decimal;

use crate::ast::*;
use crate::interp::{self, Program, RunLimits, Unwind};
use crate::lexer::{tokenize, Pos, Tok};
use crate::parser::{parse_module, ParseError};
use crate::value::{Value, EXCEPTION_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxLimits {
    pub max_ast_nodes: usize,
    pub max_interp_steps_per_call: u64,
    #[serde(with = "millis")]
    pub wall_timeout: Duration,
    pub max_collection_len: usize,
    pub max_alloc_units: usize,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        SandboxLimits {
            max_ast_nodes: 2000,
            max_interp_steps_per_call: 200_000,
            wall_timeout: Duration::from_secs(2),
            max_collection_len: 1_000_000,
            max_alloc_units: 8_000_000,
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl SandboxLimits {
    fn run_limits(&self) -> RunLimits {
        RunLimits {
            max_steps: self.max_interp_steps_per_call,
            timeout_ms: self.wall_timeout.as_millis() as u64,
            deadline: Some(Instant::now() + self.wall_timeout),
            max_len: self.max_collection_len,
            max_alloc: self.max_alloc_units,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "stage1")]
    Modules,
    #[serde(rename = "stage2")]
    Ast,
    #[serde(rename = "stage3")]
    Limits,
    #[serde(rename = "stage4")]
    Probe,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Modules => 1,
            Stage::Ast => 2,
            Stage::Limits => 3,
            Stage::Probe => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Status {
    Unvalidated,
    Valid,
    Rejected { stage: Stage, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardProgram {
    pub name: String,
    pub source: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub round: u32,
    #[serde(default = "unvalidated")]
    pub status: Status,
}

fn unvalidated() -> Status {
    Status::Unvalidated
}

impl RewardProgram {
    pub fn new(name: impl Into<String>, source: impl Into<String>, description: impl Into<String>, round: u32) -> Self {
        RewardProgram {
            name: name.into(),
            source: source.into(),
            description: description.into(),
            round,
            status: Status::Unvalidated,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.status == Status::Valid
    }
}

/// JSON validation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub name: String,
    pub status: String,
    pub stage: Option<u8>,
    pub reason: Option<String>,
}

impl Report {
    pub fn of(p: &RewardProgram) -> Report {
        let (status, stage, reason) = match &p.status {
            Status::Unvalidated => ("unvalidated", None, None),
            Status::Valid => ("valid", None, None),
            Status::Rejected { stage, reason } => ("rejected", Some(stage.number()), Some(reason.clone())),
        };
        Report {
            name: p.name.clone(),
            status: status.into(),
            stage,
            reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub stage: Stage,
    pub reason: String,
}

fn reject<T>(stage: Stage, reason: impl Into<String>) -> Result<T, Rejection> {
    Err(Rejection {
        stage,
        reason: reason.into(),
    })
}

pub fn is_identifier(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c == '_' || c.is_ascii_alphabetic())
        && cs.all(|c| c == '_' || c.is_ascii_alphanumeric())
}

pub const ALLOWED_MODULES: &[&str] = &["re", "math"];

/// Names that never appear in an acceptable program.
const FORBIDDEN_NAMES: &[&str] = &[
    "os", "sys", "subprocess", "socket", "shutil", "pathlib", "io", "builtins", "importlib", "ctypes", "pickle",
    "marshal", "urllib", "http", "requests", "threading", "multiprocessing", "signal", "open", "eval", "exec",
    "compile", "input", "print", "getattr", "setattr", "delattr", "hasattr", "globals", "locals", "vars", "dir",
    "type", "object", "breakpoint", "help", "memoryview", "bytearray", "classmethod", "staticmethod", "super",
    "property", "exit", "quit",
];

/// Stage 1: imports and dangerous names, by token scan.
pub fn stage1(src: &str) -> Result<(), Rejection> {
    let toks = tokenize(src).map_err(|e| Rejection {
        stage: Stage::Ast,
        reason: format!("parse error at {}: {}", e.pos, e.msg),
    })?;
    let at = |p: Pos, what: String| format!("{what} at {p}");
    for (i, t) in toks.iter().enumerate() {
        let Tok::Name(n) = &t.tok else { continue };
        let prev_dot = i > 0 && toks[i - 1].tok == Tok::Op(".");
        if n == "import" || n == "from" {
            // the module path follows the keyword
            let mut j = i + 1;
            let mut path = String::new();
            while let Some(tk) = toks.get(j) {
                match &tk.tok {
                    Tok::Name(m) if m != "import" => path.push_str(m),
                    Tok::Op(".") => path.push('.'),
                    _ => break,
                }
                j += 1;
            }
            let root = path.split('.').next().unwrap_or("");
            if !ALLOWED_MODULES.contains(&root) || path.contains('.') {
                return reject(Stage::Modules, at(t.pos, format!("import of '{path}' is not allowed")));
            }
            if n == "import" {
                // `import re, os`
                let mut k = j;
                while toks.get(k).map(|x| &x.tok) == Some(&Tok::Op(",")) {
                    match toks.get(k + 1).map(|x| &x.tok) {
                        Some(Tok::Name(m)) if !ALLOWED_MODULES.contains(&m.as_str()) => {
                            return reject(Stage::Modules, at(toks[k + 1].pos, format!("import of '{m}' is not allowed")))
                        }
                        _ => {}
                    }
                    k += 2;
                    if toks.get(k).map(|x| &x.tok) == Some(&Tok::Name("as".into())) {
                        k += 2;
                    }
                }
            }
            continue;
        }
        if n.starts_with("__") && n.ends_with("__") && n.len() > 4 {
            return reject(Stage::Modules, at(t.pos, format!("reference to '{n}' is not allowed")));
        }
        if !prev_dot && FORBIDDEN_NAMES.contains(&n.as_str()) {
            return reject(Stage::Modules, at(t.pos, format!("reference to '{n}' is not allowed")));
        }
    }
    Ok(())
}

/// Stage 2: parse, whitelist the tree, resolve names.
pub fn stage2(name: &str, src: &str) -> Result<Program, Rejection> {
    if !is_identifier(name) {
        return reject(Stage::Ast, format!("invalid name '{name}'"));
    }
    if is_protected(name) {
        return reject(Stage::Ast, format!("protected-name: '{name}' may not be redefined"));
    }
    let module = parse_module(src).map_err(|e| match e {
        ParseError::Syntax { msg, pos } => Rejection {
            stage: Stage::Ast,
            reason: format!("parse error at {pos}: {msg}"),
        },
        ParseError::Disallowed { kind, pos } => Rejection {
            stage: Stage::Ast,
            reason: format!("disallowed node {kind} at {pos}"),
        },
    })?;
    let mut imports = Vec::new();
    let mut func = None;
    for s in module.body {
        match s.kind {
            StmtKind::Import(aliases) => imports.extend(aliases),
            StmtKind::Def(f) => {
                if func.is_some() {
                    return reject(Stage::Ast, format!("disallowed node FunctionDef at {}: only one function may be defined", s.pos));
                }
                if is_protected(&f.name) {
                    return reject(Stage::Ast, format!("protected-name: '{}' may not be redefined", f.name));
                }
                func = Some((f, s.pos));
            }
            StmtKind::Pass => {}
            StmtKind::Expr(Expr { kind: ExprKind::Const(Const::Str(_)), .. }) => {}
            other => {
                return reject(Stage::Ast, format!("disallowed node {} at {}: only imports and one function at module level", other.kind_name(), s.pos))
            }
        }
    }
    let Some((func, pos)) = func else {
        return reject(Stage::Ast, "no function definition found");
    };
    if func.name != name {
        return reject(Stage::Ast, format!("function at {pos} is named '{}' but the program is named '{name}'", func.name));
    }
    check_signature(&func, pos)?;
    let prog = Program { func, imports };
    Resolver::new(&prog)?.block(&prog.func.body)?;
    Ok(prog)
}

fn check_signature(f: &FuncDef, pos: Pos) -> Result<(), Rejection> {
    let want = ["prompts", "completions", "answer"];
    let ps = &f.params;
    let head_ok = ps.len() >= 3 && ps[..3].iter().zip(want).all(|(p, w)| p.name == w && p.kind == ParamKind::Plain);
    let tail = &ps[ps.len().min(3)..];
    let tail_ok = !tail.is_empty()
        && tail.len() <= 2
        && tail.iter().all(|p| matches!(p.kind, ParamKind::VarArgs | ParamKind::VarKw))
        && tail.windows(2).all(|w| w[0].kind == ParamKind::VarArgs && w[1].kind == ParamKind::VarKw);
    if head_ok && tail_ok {
        return Ok(());
    }
    let got: Vec<String> = ps
        .iter()
        .map(|p| match p.kind {
            ParamKind::VarArgs => format!("*{}", p.name),
            ParamKind::VarKw => format!("**{}", p.name),
            ParamKind::Defaulted => format!("{}=...", p.name),
            ParamKind::Plain => p.name.clone(),
        })
        .collect();
    reject(
        Stage::Ast,
        format!("bad signature at {pos}: expected (prompts, completions, answer, **kwargs), got ({})", got.join(", ")),
    )
}

struct Resolver {
    known: HashSet<String>,
}

impl Resolver {
    fn new(prog: &Program) -> Result<Resolver, Rejection> {
        let mut known: HashSet<String> = interp::assigned_names(&prog.func);
        known.extend(interp::BUILTINS.iter().map(|s| s.to_string()));
        known.extend(EXCEPTION_CLASSES.iter().map(|s| s.to_string()));
        known.extend(interp::TAG_CONSTANTS.iter().map(|(n, _)| n.to_string()));
        for a in &prog.imports {
            known.insert(a.asname.clone().unwrap_or_else(|| a.name.clone()));
        }
        let r = Resolver { known };
        for a in &prog.imports {
            r.module(&a.name, Pos { line: 1, col: 1 })?;
        }
        Ok(r)
    }

    fn module(&self, m: &str, pos: Pos) -> Result<(), Rejection> {
        if ALLOWED_MODULES.contains(&m) {
            Ok(())
        } else {
            reject(Stage::Modules, format!("import of '{m}' is not allowed at {pos}"))
        }
    }

    fn block(&self, stmts: &[Stmt]) -> Result<(), Rejection> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn stmt(&self, s: &Stmt) -> Result<(), Rejection> {
        match &s.kind {
            StmtKind::Def(_) => reject(Stage::Ast, format!("disallowed node NestedFunctionDef at {}", s.pos)),
            StmtKind::Import(aliases) => aliases.iter().try_for_each(|a| self.module(&a.name, s.pos)),
            StmtKind::ImportFrom { module, names } => {
                self.module(module, s.pos)?;
                for a in names {
                    if !interp::known_attribute(&a.name) {
                        return reject(Stage::Ast, format!("unknown name '{}' imported from {module} at {}", a.name, s.pos));
                    }
                }
                Ok(())
            }
            StmtKind::Assign { targets, value } => {
                targets.iter().try_for_each(|t| self.target(t))?;
                self.expr(value)
            }
            StmtKind::AugAssign { target, value, .. } => {
                self.target(target)?;
                self.expr(value)
            }
            StmtKind::Expr(e) => self.expr(e),
            StmtKind::Return(e) => e.as_ref().map_or(Ok(()), |e| self.expr(e)),
            StmtKind::If { branches, orelse } => {
                for (c, b) in branches {
                    self.expr(c)?;
                    self.block(b)?;
                }
                self.block(orelse)
            }
            StmtKind::For { target, iter, body } => {
                self.target(target)?;
                self.expr(iter)?;
                self.block(body)
            }
            StmtKind::Try { body, handlers } => {
                self.block(body)?;
                for h in handlers {
                    if let Some(t) = &h.types {
                        self.expr(t)?;
                    }
                    self.block(&h.body)?;
                }
                Ok(())
            }
            StmtKind::Continue | StmtKind::Break | StmtKind::Pass => Ok(()),
        }
    }

    fn target(&self, t: &Target) -> Result<(), Rejection> {
        match t {
            Target::Name(..) => Ok(()),
            Target::Tuple(ts, _) => ts.iter().try_for_each(|t| self.target(t)),
            Target::Subscript(v, i, _) => {
                self.expr(v)?;
                self.expr(i)
            }
        }
    }

    fn expr(&self, e: &Expr) -> Result<(), Rejection> {
        let sub = |b: &Option<Box<Expr>>| b.as_deref().map_or(Ok(()), |x| self.expr(x));
        match &e.kind {
            ExprKind::Name(n) => {
                if self.known.contains(n) {
                    Ok(())
                } else {
                    reject(Stage::Ast, format!("unknown name '{n}' at {}", e.pos))
                }
            }
            ExprKind::Const(_) => Ok(()),
            ExprKind::List(xs) | ExprKind::Tuple(xs) => xs.iter().try_for_each(|x| self.expr(x)),
            ExprKind::ListComp { elt, gens } => {
                for g in gens {
                    self.target(&g.target)?;
                }
                // comprehension variables are local to the comprehension
                let mut inner = Resolver { known: self.known.clone() };
                for g in gens {
                    let mut names = Vec::new();
                    g.target.bound_names(&mut names);
                    inner.known.extend(names.into_iter().map(String::from));
                }
                for g in gens {
                    inner.expr(&g.iter)?;
                    g.ifs.iter().try_for_each(|x| inner.expr(x))?;
                }
                inner.expr(elt)
            }
            ExprKind::BinOp { left, right, .. } => {
                self.expr(left)?;
                self.expr(right)
            }
            ExprKind::Unary { operand, .. } => self.expr(operand),
            ExprKind::BoolOp { values, .. } => values.iter().try_for_each(|x| self.expr(x)),
            ExprKind::Compare { left, ops } => {
                self.expr(left)?;
                ops.iter().try_for_each(|(_, x)| self.expr(x))
            }
            ExprKind::IfExp { test, body, orelse } => {
                self.expr(test)?;
                self.expr(body)?;
                self.expr(orelse)
            }
            ExprKind::Call { func, args, kwargs } => {
                if !matches!(func.kind, ExprKind::Name(_) | ExprKind::Attribute { .. }) {
                    return reject(Stage::Ast, format!("disallowed call target at {}", func.pos));
                }
                self.expr(func)?;
                args.iter().try_for_each(|x| self.expr(x))?;
                kwargs.iter().try_for_each(|(_, x)| self.expr(x))
            }
            ExprKind::Attribute { value, attr } => {
                if !interp::known_attribute(attr) {
                    return reject(Stage::Ast, format!("disallowed attribute '{attr}' at {}", e.pos));
                }
                self.expr(value)
            }
            ExprKind::Subscript { value, index } => {
                self.expr(value)?;
                self.expr(index)
            }
            ExprKind::Slice { lower, upper, step } => {
                sub(lower)?;
                sub(upper)?;
                sub(step)
            }
        }
    }
}

/// A validated program behind resource limits.
#[derive(Debug, Clone)]
pub struct GuardedProgram {
    name: String,
    prog: Program,
    limits: SandboxLimits,
}

/// Structured failure of one guarded call.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CallError {
    #[error("{0}")]
    Fault(interp::Fault),
    #[error("uncaught {0}")]
    Exception(crate::value::Exc),
    #[error("bad result shape: {0}")]
    Shape(String),
    #[error("interpreter panic: {0}")]
    Panic(String),
}

/// Stage 3: size limit and the guarded wrapper.
pub fn stage3(name: &str, prog: Program, limits: SandboxLimits) -> Result<GuardedProgram, Rejection> {
    let nodes = count_nodes(&prog.func.body) + prog.func.params.len() + 1;
    if nodes > limits.max_ast_nodes {
        return reject(Stage::Limits, format!("ast-size: {nodes} nodes exceeds limit {}", limits.max_ast_nodes));
    }
    Ok(GuardedProgram {
        name: name.to_string(),
        prog,
        limits,
    })
}

fn chat(role: &str, content: &str) -> Value {
    let msg = Value::Dict(Rc::new(vec![
        (Value::str("role"), Value::str(role)),
        (Value::str("content"), Value::str(content)),
    ]));
    Value::list(vec![msg])
}

impl GuardedProgram {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn limits(&self) -> SandboxLimits {
        self.limits
    }

    /// Runs the program on one batch; the result is checked to be `n` finite reals.
    pub fn call(&self, prompts: &[String], completions: &[String], answers: &[String]) -> Result<Vec<f64>, CallError> {
        let n = completions.len();
        let run = || {
            let p = Value::list(prompts.iter().map(|q| chat("user", q)).collect());
            let c = Value::list(completions.iter().map(|t| chat("assistant", t)).collect());
            let a = Value::list(answers.iter().map(|s| Value::str(s.as_str())).collect());
            match interp::call(&self.prog, [p, c, a], self.limits.run_limits()) {
                Ok(v) => shape(&v, n),
                Err(Unwind::Fault(f)) => Err(CallError::Fault(f)),
                Err(Unwind::Exc(e)) => Err(CallError::Exception(e)),
            }
        };
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(r) => r,
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<&str>()
                    .map(|s| s.to_string())
                    .or_else(|| payload.downcast_ref::<String>().cloned())
                    .unwrap_or_else(|| "unknown".into());
                Err(CallError::Panic(msg))
            }
        }
    }
}

fn shape(v: &Value, n: usize) -> Result<Vec<f64>, CallError> {
    let Value::List(items) = v else {
        return Err(CallError::Shape(format!("expected list of {n} floats, got {}", v.type_name())));
    };
    let items = items.borrow();
    if items.len() != n {
        return Err(CallError::Shape(format!("expected list of {n} floats, got list of length {}", items.len())));
    }
    items
        .iter()
        .enumerate()
        .map(|(i, x)| match x {
            Value::Int(k) => Ok(*k as f64),
            Value::Float(f) if f.is_finite() => Ok(*f),
            Value::Float(f) => Err(CallError::Shape(format!("element {i} is non-finite ({f})"))),
            other => Err(CallError::Shape(format!("element {i} is {}, not a float", other.type_name()))),
        })
        .collect()
}

impl RewardFn for GuardedProgram {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, batch: &RewardBatch<'_>) -> Result<Vec<f64>, RewardFault> {
        let answers: Vec<String> = batch.answers.iter().map(Decimal::to_string).collect();
        let prompts: Vec<String> = if batch.prompts.len() == batch.len() {
            batch.prompts.to_vec()
        } else {
            vec![String::new(); batch.len()]
        };
        self.call(&prompts, batch.completions, &answers).map_err(|e| RewardFault {
            reward: self.name.clone(),
            reason: e.to_string(),
        })
    }
}

/// The fixed dry-run batch: canonical, malformed and empty outputs.
pub fn probe_batch() -> (Vec<String>, Vec<String>, Vec<String>) {
    let prompts = vec![
        "Tom has 3 apples and buys 4 more. How many apples does he have?".to_string(),
        "A box holds 6 pens. How many pens are in 2 boxes?".to_string(),
        "Sara had 10 coins and spent 4. How many coins are left?".to_string(),
    ];
    let completions = vec![
        "<thinking>\n3 + 4 = 7\n</thinking>\n<solution>7</solution>".to_string(),
        "<thinking>6 * 2 = 12\n<solution>12</solution></solution>".to_string(),
        String::new(),
    ];
    let answers = vec!["7".to_string(), "12".to_string(), "6".to_string()];
    (prompts, completions, answers)
}

/// Stage 4: dry run on the probe batch.
pub fn stage4(g: &GuardedProgram) -> Result<(), Rejection> {
    let (p, c, a) = probe_batch();
    match g.call(&p, &c, &a) {
        Ok(_) => Ok(()),
        Err(CallError::Shape(s)) => reject(Stage::Probe, format!("shape: {s}")),
        Err(e) => reject(Stage::Probe, format!("fault: {e}")),
    }
}

/// Runs all four stages, stopping at the first rejection.
pub fn check(name: &str, src: &str, limits: SandboxLimits) -> Result<GuardedProgram, Rejection> {
    stage1(src)?;
    let prog = stage2(name, src)?;
    let g = stage3(name, prog, limits)?;
    stage4(&g)?;
    Ok(g)
}

/// Validates a program in place and returns the guarded callable when accepted.
pub fn validate(program: &mut RewardProgram, limits: SandboxLimits) -> Option<GuardedProgram> {
    match check(&program.name, &program.source, limits) {
        Ok(g) => {
            program.status = Status::Valid;
            Some(g)
        }
        Err(r) => {
            program.status = Status::Rejected {
                stage: r.stage,
                reason: r.reason,
            };
            None
        }
    }
}

/// Rebuilds the guarded callable of an already accepted program.
pub fn load(program: &RewardProgram, limits: SandboxLimits) -> Result<GuardedProgram, Rejection> {
    stage1(&program.source)?;
    let prog = stage2(&program.name, &program.source)?;
    stage3(&program.name, prog, limits)
}
