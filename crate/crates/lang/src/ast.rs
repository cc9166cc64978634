//! Syntax tree of the reward language.

use crate::lexer::Pos;

#[derive(Debug, Clone, PartialEq)]
pub enum Const {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    FloorDiv,
    Mod,
    Pow,
    BitOr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Pos,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
    Is,
    IsNot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comprehension {
    pub target: Target,
    pub iter: Expr,
    pub ifs: Vec<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Name(String),
    Const(Const),
    List(Vec<Expr>),
    Tuple(Vec<Expr>),
    ListComp {
        elt: Box<Expr>,
        gens: Vec<Comprehension>,
    },
    BinOp {
        op: BinOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    /// `and` when `is_and`, else `or`.
    BoolOp {
        is_and: bool,
        values: Vec<Expr>,
    },
    Compare {
        left: Box<Expr>,
        ops: Vec<(CmpOp, Expr)>,
    },
    IfExp {
        test: Box<Expr>,
        body: Box<Expr>,
        orelse: Box<Expr>,
    },
    Call {
        func: Box<Expr>,
        args: Vec<Expr>,
        kwargs: Vec<(String, Expr)>,
    },
    Attribute {
        value: Box<Expr>,
        attr: String,
    },
    Subscript {
        value: Box<Expr>,
        index: Box<Expr>,
    },
    Slice {
        lower: Option<Box<Expr>>,
        upper: Option<Box<Expr>>,
        step: Option<Box<Expr>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Name(String, Pos),
    Tuple(Vec<Target>, Pos),
    Subscript(Box<Expr>, Box<Expr>, Pos),
}

impl Target {
    pub fn pos(&self) -> Pos {
        match self {
            Target::Name(_, p) | Target::Tuple(_, p) | Target::Subscript(_, _, p) => *p,
        }
    }

    /// Names bound by assigning to this target.
    pub fn bound_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Target::Name(n, _) => out.push(n),
            Target::Tuple(ts, _) => ts.iter().for_each(|t| t.bound_names(out)),
            Target::Subscript(..) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Plain,
    /// `*args`
    VarArgs,
    /// `**kwargs`
    VarKw,
    /// A parameter carrying a default value.
    Defaulted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuncDef {
    pub name: String,
    pub params: Vec<Param>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Handler {
    pub types: Option<Expr>,
    pub name: Option<String>,
    pub body: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alias {
    pub name: String,
    pub asname: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Def(FuncDef),
    Import(Vec<Alias>),
    ImportFrom {
        module: String,
        names: Vec<Alias>,
    },
    Assign {
        targets: Vec<Target>,
        value: Expr,
    },
    AugAssign {
        target: Target,
        op: BinOp,
        value: Expr,
    },
    Expr(Expr),
    Return(Option<Expr>),
    If {
        branches: Vec<(Expr, Vec<Stmt>)>,
        orelse: Vec<Stmt>,
    },
    For {
        target: Target,
        iter: Expr,
        body: Vec<Stmt>,
    },
    Try {
        body: Vec<Stmt>,
        handlers: Vec<Handler>,
    },
    Continue,
    Break,
    Pass,
}

impl StmtKind {
    pub fn kind_name(&self) -> &'static str {
        match self {
            StmtKind::Def(_) => "FunctionDef",
            StmtKind::Import(_) => "Import",
            StmtKind::ImportFrom { .. } => "ImportFrom",
            StmtKind::Assign { .. } => "Assign",
            StmtKind::AugAssign { .. } => "AugAssign",
            StmtKind::Expr(_) => "Expr",
            StmtKind::Return(_) => "Return",
            StmtKind::If { .. } => "If",
            StmtKind::For { .. } => "For",
            StmtKind::Try { .. } => "Try",
            StmtKind::Continue => "Continue",
            StmtKind::Break => "Break",
            StmtKind::Pass => "Pass",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Module {
    pub body: Vec<Stmt>,
}

/// Counts statements and expressions in a tree.
pub fn count_nodes(stmts: &[Stmt]) -> usize {
    stmts.iter().map(stmt_nodes).sum()
}

fn target_nodes(t: &Target) -> usize {
    match t {
        Target::Name(..) => 1,
        Target::Tuple(ts, _) => 1 + ts.iter().map(target_nodes).sum::<usize>(),
        Target::Subscript(v, i, _) => 1 + expr_nodes(v) + expr_nodes(i),
    }
}

fn stmt_nodes(s: &Stmt) -> usize {
    1 + match &s.kind {
        StmtKind::Def(f) => f.params.len() + count_nodes(&f.body),
        StmtKind::Import(a) => a.len(),
        StmtKind::ImportFrom { names, .. } => names.len(),
        StmtKind::Assign { targets, value } => targets.iter().map(target_nodes).sum::<usize>() + expr_nodes(value),
        StmtKind::AugAssign { target, value, .. } => target_nodes(target) + expr_nodes(value),
        StmtKind::Expr(e) => expr_nodes(e),
        StmtKind::Return(e) => e.as_ref().map_or(0, expr_nodes),
        StmtKind::If { branches, orelse } => {
            branches
                .iter()
                .map(|(c, b)| expr_nodes(c) + count_nodes(b))
                .sum::<usize>()
                + count_nodes(orelse)
        }
        StmtKind::For { target, iter, body } => target_nodes(target) + expr_nodes(iter) + count_nodes(body),
        StmtKind::Try { body, handlers } => {
            count_nodes(body)
                + handlers
                    .iter()
                    .map(|h| 1 + h.types.as_ref().map_or(0, expr_nodes) + count_nodes(&h.body))
                    .sum::<usize>()
        }
        StmtKind::Continue | StmtKind::Break | StmtKind::Pass => 0,
    }
}

pub fn expr_nodes(e: &Expr) -> usize {
    let boxed = |b: &Option<Box<Expr>>| b.as_deref().map_or(0, expr_nodes);
    1 + match &e.kind {
        ExprKind::Name(_) | ExprKind::Const(_) => 0,
        ExprKind::List(xs) | ExprKind::Tuple(xs) => xs.iter().map(expr_nodes).sum(),
        ExprKind::ListComp { elt, gens } => {
            expr_nodes(elt)
                + gens
                    .iter()
                    .map(|g| target_nodes(&g.target) + expr_nodes(&g.iter) + g.ifs.iter().map(expr_nodes).sum::<usize>())
                    .sum::<usize>()
        }
        ExprKind::BinOp { left, right, .. } => expr_nodes(left) + expr_nodes(right),
        ExprKind::Unary { operand, .. } => expr_nodes(operand),
        ExprKind::BoolOp { values, .. } => values.iter().map(expr_nodes).sum(),
        ExprKind::Compare { left, ops } => expr_nodes(left) + ops.iter().map(|(_, e)| expr_nodes(e)).sum::<usize>(),
        ExprKind::IfExp { test, body, orelse } => expr_nodes(test) + expr_nodes(body) + expr_nodes(orelse),
        ExprKind::Call { func, args, kwargs } => {
            expr_nodes(func) + args.iter().map(expr_nodes).sum::<usize>() + kwargs.iter().map(|(_, e)| expr_nodes(e)).sum::<usize>()
        }
        ExprKind::Attribute { value, .. } => expr_nodes(value),
        ExprKind::Subscript { value, index } => expr_nodes(value) + expr_nodes(index),
        ExprKind::Slice { lower, upper, step } => boxed(lower) + boxed(upper) + boxed(step),
    }
}
