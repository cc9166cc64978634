//! Recursive-descent parser producing [`Module`] trees.
//!
//! Constructs outside the language (while, class, lambda, ...) are recognised
//! just far enough to report them as disallowed nodes.

use crate::ast::*;
use crate::lexer::{tokenize, Pos, Tok, Token};

/// Guard against stack exhaustion on adversarially nested input.
pub const MAX_NESTING: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    Syntax { msg: String, pos: Pos },
    #[error("disallowed construct {kind} at {pos}")]
    Disallowed { kind: String, pos: Pos },
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        match self {
            ParseError::Syntax { pos, .. } | ParseError::Disallowed { pos, .. } => *pos,
        }
    }
}

type PResult<T> = Result<T, ParseError>;

pub fn parse_module(src: &str) -> PResult<Module> {
    let toks = tokenize(src).map_err(|e| ParseError::Syntax { msg: e.msg, pos: e.pos })?;
    let mut p = Parser { toks, i: 0, depth: 0, loops: 0, in_def: false };
    let mut body = Vec::new();
    p.skip_newlines();
    while !p.at(&Tok::Eof) {
        body.extend(p.statement()?);
        p.skip_newlines();
    }
    Ok(Module { body })
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    depth: usize,
    loops: usize,
    in_def: bool,
}

const FORBIDDEN_STMT: &[(&str, &str)] = &[
    ("while", "While"),
    ("class", "ClassDef"),
    ("with", "With"),
    ("async", "AsyncFunctionDef"),
    ("await", "Await"),
    ("global", "Global"),
    ("nonlocal", "Nonlocal"),
    ("del", "Delete"),
    ("raise", "Raise"),
    ("assert", "Assert"),
    ("yield", "Yield"),
    ("lambda", "Lambda"),
    ("match", "Match"),
];

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda",
    "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

fn is_keyword(name: &str) -> bool {
    KEYWORDS.contains(&name)
}

impl Parser {
    fn tok(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn at(&self, t: &Tok) -> bool {
        self.tok() == t
    }

    fn at_op(&self, op: &str) -> bool {
        matches!(self.tok(), Tok::Op(o) if *o == op)
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.tok(), Tok::Name(n) if n == kw)
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(ParseError::Syntax { msg: msg.into(), pos: self.pos() })
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        self.syntax(format!("expected {wanted}, found {}", self.tok()))
    }

    fn disallowed<T>(&self, kind: &str) -> PResult<T> {
        Err(ParseError::Disallowed { kind: kind.to_string(), pos: self.pos() })
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.unexpected(&format!("'{op}'"))
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.unexpected(&format!("'{kw}'"))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.tok().clone() {
            Tok::Name(n) if !is_keyword(&n) => {
                self.advance();
                Ok(n)
            }
            _ => self.unexpected("identifier"),
        }
    }

    fn skip_newlines(&mut self) {
        while self.at(&Tok::Newline) {
            self.advance();
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return self.syntax("nesting too deep");
        }
        Ok(())
    }

    fn leave(&mut self) {
        self.depth -= 1;
    }

    // ---- statements ----

    fn statement(&mut self) -> PResult<Vec<Stmt>> {
        self.enter()?;
        let r = self.statement_inner();
        self.leave();
        r
    }

    fn statement_inner(&mut self) -> PResult<Vec<Stmt>> {
        if let Tok::Name(n) = self.tok() {
            if let Some((_, kind)) = FORBIDDEN_STMT.iter().find(|(k, _)| k == n) {
                // `match` is a soft keyword; only flag it at statement start
                // when it is not used as an ordinary name
                let soft = *n == "match"
                    && matches!(self.toks.get(self.i + 1).map(|t| &t.tok), Some(Tok::Op("=" | "." | "(" | "[")) | Some(Tok::Newline));
                if !soft {
                    return self.disallowed(kind);
                }
            }
            match n.as_str() {
                "def" => return Ok(vec![self.funcdef()?]),
                "if" => return Ok(vec![self.if_stmt()?]),
                "for" => return Ok(vec![self.for_stmt()?]),
                "try" => return Ok(vec![self.try_stmt()?]),
                _ => {}
            }
        }
        if self.at_op("@") {
            return self.disallowed("Decorator");
        }
        self.simple_line()
    }

    fn simple_line(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = vec![self.small_stmt()?];
        while self.eat_op(";") {
            if self.at(&Tok::Newline) {
                break;
            }
            out.push(self.small_stmt()?);
        }
        if !self.at(&Tok::Eof) {
            if !self.at(&Tok::Newline) {
                return self.unexpected("end of line");
            }
            self.advance();
        }
        Ok(out)
    }

    fn small_stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        if let Tok::Name(n) = self.tok() {
            if let Some((_, kind)) = FORBIDDEN_STMT.iter().find(|(k, _)| k == n && *k != "match") {
                return self.disallowed(kind);
            }
        }
        let kind = if self.eat_kw("pass") {
            StmtKind::Pass
        } else if self.at_kw("break") || self.at_kw("continue") {
            if self.loops == 0 {
                return self.syntax("'break' or 'continue' outside loop");
            }
            if self.eat_kw("break") {
                StmtKind::Break
            } else {
                self.advance();
                StmtKind::Continue
            }
        } else if self.eat_kw("return") {
            if !self.in_def {
                return Err(ParseError::Syntax { msg: "'return' outside function".into(), pos });
            }
            if self.at(&Tok::Newline) || self.at_op(";") || self.at(&Tok::Eof) {
                StmtKind::Return(None)
            } else {
                StmtKind::Return(Some(self.exprlist()?))
            }
        } else if self.eat_kw("import") {
            let mut names = vec![self.alias()?];
            while self.eat_op(",") {
                names.push(self.alias()?);
            }
            StmtKind::Import(names)
        } else if self.eat_kw("from") {
            let module = self.dotted()?;
            self.expect_kw("import")?;
            if self.at_op("*") {
                return self.disallowed("ImportStar");
            }
            let paren = self.eat_op("(");
            let mut names = vec![self.plain_alias()?];
            while self.eat_op(",") {
                if paren && self.at_op(")") {
                    break;
                }
                names.push(self.plain_alias()?);
            }
            if paren {
                self.expect_op(")")?;
            }
            StmtKind::ImportFrom { module, names }
        } else {
            return self.expr_stmt();
        };
        Ok(Stmt { kind, pos })
    }

    fn dotted(&mut self) -> PResult<String> {
        if self.at_op(".") {
            return self.disallowed("RelativeImport");
        }
        let mut name = self.ident()?;
        while self.eat_op(".") {
            name.push('.');
            name.push_str(&self.ident()?);
        }
        Ok(name)
    }

    fn alias(&mut self) -> PResult<Alias> {
        let name = self.dotted()?;
        let asname = if self.eat_kw("as") { Some(self.ident()?) } else { None };
        Ok(Alias { name, asname })
    }

    fn plain_alias(&mut self) -> PResult<Alias> {
        let name = self.ident()?;
        let asname = if self.eat_kw("as") { Some(self.ident()?) } else { None };
        Ok(Alias { name, asname })
    }

    fn expr_stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        let first = self.exprlist()?;
        const AUG: &[(&str, BinOp)] = &[
            ("+=", BinOp::Add),
            ("-=", BinOp::Sub),
            ("*=", BinOp::Mul),
            ("/=", BinOp::Div),
            ("//=", BinOp::FloorDiv),
            ("%=", BinOp::Mod),
            ("**=", BinOp::Pow),
            ("|=", BinOp::BitOr),
        ];
        for (tok, op) in AUG {
            if self.eat_op(tok) {
                let target = to_target(first)?;
                if matches!(target, Target::Tuple(..)) {
                    return Err(ParseError::Syntax { msg: "illegal target for augmented assignment".into(), pos });
                }
                let value = self.exprlist()?;
                return Ok(Stmt { kind: StmtKind::AugAssign { target, op: *op, value }, pos });
            }
        }
        if self.at_op(":") {
            return self.disallowed("AnnAssign");
        }
        if self.at_op(":=") {
            return self.disallowed("NamedExpr");
        }
        if !self.at_op("=") {
            return Ok(Stmt { kind: StmtKind::Expr(first), pos });
        }
        let mut exprs = vec![first];
        while self.eat_op("=") {
            exprs.push(self.exprlist()?);
        }
        let value = exprs.pop().unwrap();
        let targets = exprs.into_iter().map(to_target).collect::<PResult<Vec<_>>>()?;
        Ok(Stmt { kind: StmtKind::Assign { targets, value }, pos })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.expect_op(":")?;
        if !self.at(&Tok::Newline) {
            return self.simple_line();
        }
        self.advance();
        self.skip_newlines();
        if !self.at(&Tok::Indent) {
            return self.unexpected("an indented block");
        }
        self.advance();
        let mut body = Vec::new();
        while !self.at(&Tok::Dedent) && !self.at(&Tok::Eof) {
            body.extend(self.statement()?);
            self.skip_newlines();
        }
        if self.at(&Tok::Dedent) {
            self.advance();
        }
        Ok(body)
    }

    fn funcdef(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        self.expect_kw("def")?;
        if self.in_def {
            return Err(ParseError::Disallowed { kind: "NestedFunctionDef".into(), pos });
        }
        let name = self.ident()?;
        self.expect_op("(")?;
        let mut params = Vec::new();
        while !self.at_op(")") {
            let kind = if self.eat_op("**") {
                ParamKind::VarKw
            } else if self.eat_op("*") {
                ParamKind::VarArgs
            } else {
                ParamKind::Plain
            };
            if self.at_op("/") || (kind == ParamKind::VarArgs && self.at_op(",")) {
                return self.disallowed("PositionalMarker");
            }
            let pname = self.ident()?;
            if self.at_op(":") {
                return self.disallowed("Annotation");
            }
            let kind = if self.eat_op("=") {
                self.expr()?;
                ParamKind::Defaulted
            } else {
                kind
            };
            params.push(Param { name: pname, kind });
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        if self.at_op("->") {
            return self.disallowed("Annotation");
        }
        self.in_def = true;
        let saved_loops = std::mem::replace(&mut self.loops, 0);
        let body = self.block();
        self.loops = saved_loops;
        self.in_def = false;
        Ok(Stmt { kind: StmtKind::Def(FuncDef { name, params, body: body? }), pos })
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        self.expect_kw("if")?;
        let mut branches = vec![(self.expr()?, self.block()?)];
        let mut orelse = Vec::new();
        loop {
            if self.eat_kw("elif") {
                branches.push((self.expr()?, self.block()?));
            } else if self.eat_kw("else") {
                orelse = self.block()?;
                break;
            } else {
                break;
            }
        }
        Ok(Stmt { kind: StmtKind::If { branches, orelse }, pos })
    }

    fn for_stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        self.expect_kw("for")?;
        let target = self.target_list()?;
        self.expect_kw("in")?;
        let iter = self.exprlist()?;
        self.loops += 1;
        let body = self.block();
        self.loops -= 1;
        let body = body?;
        if self.at_kw("else") {
            return self.disallowed("ForElse");
        }
        Ok(Stmt { kind: StmtKind::For { target, iter, body }, pos })
    }

    fn try_stmt(&mut self) -> PResult<Stmt> {
        let pos = self.pos();
        self.expect_kw("try")?;
        let body = self.block()?;
        let mut handlers = Vec::new();
        while self.at_kw("except") {
            let hpos = self.pos();
            self.advance();
            if self.at_op("*") {
                return self.disallowed("ExceptStar");
            }
            let (types, name) = if self.at_op(":") {
                (None, None)
            } else {
                let t = self.expr()?;
                let n = if self.eat_kw("as") { Some(self.ident()?) } else { None };
                (Some(t), n)
            };
            let hbody = self.block()?;
            handlers.push(Handler { types, name, body: hbody, pos: hpos });
        }
        if self.at_kw("finally") {
            return self.disallowed("TryFinally");
        }
        if self.at_kw("else") {
            return self.disallowed("TryElse");
        }
        if handlers.is_empty() {
            return self.unexpected("'except'");
        }
        Ok(Stmt { kind: StmtKind::Try { body, handlers }, pos })
    }

    fn target_list(&mut self) -> PResult<Target> {
        let pos = self.pos();
        let mut items = vec![self.target_atom()?];
        let mut tuple = false;
        while self.eat_op(",") {
            tuple = true;
            if self.at_kw("in") || self.at_op("=") {
                break;
            }
            items.push(self.target_atom()?);
        }
        if tuple {
            Ok(Target::Tuple(items, pos))
        } else {
            Ok(items.pop().unwrap())
        }
    }

    fn target_atom(&mut self) -> PResult<Target> {
        let e = self.bitor()?;
        to_target(e)
    }

    // ---- expressions ----

    /// Comma-separated expressions; a trailing or inner comma builds a tuple.
    fn exprlist(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let first = self.expr()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.ends_exprlist() {
                break;
            }
            items.push(self.expr()?);
        }
        Ok(Expr { kind: ExprKind::Tuple(items), pos })
    }

    fn ends_exprlist(&self) -> bool {
        matches!(self.tok(), Tok::Newline | Tok::Eof | Tok::Op(")" | "]" | "=" | ";" | ":"))
            || matches!(self.tok(), Tok::Op(o) if o.ends_with('=') && *o != "==" && *o != "!=" && *o != "<=" && *o != ">=")
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.ternary();
        self.leave();
        r
    }

    fn ternary(&mut self) -> PResult<Expr> {
        if self.at_kw("lambda") {
            return self.disallowed("Lambda");
        }
        if self.at_kw("yield") {
            return self.disallowed("Yield");
        }
        if self.at_kw("await") {
            return self.disallowed("Await");
        }
        let pos = self.pos();
        let body = self.or_expr()?;
        if !self.at_kw("if") {
            return Ok(body);
        }
        self.advance();
        let test = self.or_expr()?;
        self.expect_kw("else")?;
        let orelse = self.expr()?;
        Ok(Expr {
            kind: ExprKind::IfExp { test: Box::new(test), body: Box::new(body), orelse: Box::new(orelse) },
            pos,
        })
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        self.bool_chain(false)
    }

    fn bool_chain(&mut self, is_and: bool) -> PResult<Expr> {
        let pos = self.pos();
        let kw = if is_and { "and" } else { "or" };
        let sub = |p: &mut Self| if is_and { p.not_expr() } else { p.bool_chain(true) };
        let first = sub(self)?;
        if !self.at_kw(kw) {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw(kw) {
            values.push(sub(self)?);
        }
        Ok(Expr { kind: ExprKind::BoolOp { is_and, values }, pos })
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        if self.eat_kw("not") {
            self.enter()?;
            let operand = self.not_expr();
            self.leave();
            return Ok(Expr { kind: ExprKind::Unary { op: UnaryOp::Not, operand: Box::new(operand?) }, pos });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let left = self.bitor()?;
        let mut ops = Vec::new();
        loop {
            let op = match self.tok() {
                Tok::Op("==") => CmpOp::Eq,
                Tok::Op("!=") => CmpOp::Ne,
                Tok::Op("<") => CmpOp::Lt,
                Tok::Op("<=") => CmpOp::Le,
                Tok::Op(">") => CmpOp::Gt,
                Tok::Op(">=") => CmpOp::Ge,
                Tok::Name(n) if n == "in" => CmpOp::In,
                Tok::Name(n) if n == "is" => {
                    self.advance();
                    let op = if self.eat_kw("not") { CmpOp::IsNot } else { CmpOp::Is };
                    ops.push((op, self.bitor()?));
                    continue;
                }
                Tok::Name(n) if n == "not" => {
                    let next_in = matches!(self.toks.get(self.i + 1).map(|t| &t.tok), Some(Tok::Name(n)) if n == "in");
                    if !next_in {
                        break;
                    }
                    self.advance();
                    CmpOp::NotIn
                }
                _ => break,
            };
            self.advance();
            ops.push((op, self.bitor()?));
        }
        if ops.is_empty() {
            Ok(left)
        } else {
            Ok(Expr { kind: ExprKind::Compare { left: Box::new(left), ops }, pos })
        }
    }

    fn bitor(&mut self) -> PResult<Expr> {
        let mut left = self.arith()?;
        loop {
            if self.at_op("&") || self.at_op("^") || self.at_op("<<") || self.at_op(">>") {
                return self.disallowed("BitwiseOp");
            }
            if !self.at_op("|") {
                return Ok(left);
            }
            let pos = self.pos();
            self.advance();
            let right = self.arith()?;
            left = Expr { kind: ExprKind::BinOp { op: BinOp::BitOr, left: Box::new(left), right: Box::new(right) }, pos };
        }
    }

    fn arith(&mut self) -> PResult<Expr> {
        let mut left = self.term()?;
        loop {
            let op = match self.tok() {
                Tok::Op("+") => BinOp::Add,
                Tok::Op("-") => BinOp::Sub,
                _ => return Ok(left),
            };
            let pos = self.pos();
            self.advance();
            let right = self.term()?;
            left = Expr { kind: ExprKind::BinOp { op, left: Box::new(left), right: Box::new(right) }, pos };
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut left = self.factor()?;
        loop {
            let op = match self.tok() {
                Tok::Op("*") => BinOp::Mul,
                Tok::Op("/") => BinOp::Div,
                Tok::Op("//") => BinOp::FloorDiv,
                Tok::Op("%") => BinOp::Mod,
                Tok::Op("@") => return self.disallowed("MatMult"),
                _ => return Ok(left),
            };
            let pos = self.pos();
            self.advance();
            let right = self.factor()?;
            left = Expr { kind: ExprKind::BinOp { op, left: Box::new(left), right: Box::new(right) }, pos };
        }
    }

    fn factor(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let op = match self.tok() {
            Tok::Op("-") => UnaryOp::Neg,
            Tok::Op("+") => UnaryOp::Pos,
            Tok::Op("~") => return self.disallowed("Invert"),
            _ => return self.power(),
        };
        self.advance();
        self.enter()?;
        let operand = self.factor();
        self.leave();
        Ok(Expr { kind: ExprKind::Unary { op, operand: Box::new(operand?) }, pos })
    }

    fn power(&mut self) -> PResult<Expr> {
        let base = self.primary()?;
        if !self.at_op("**") {
            return Ok(base);
        }
        let pos = self.pos();
        self.advance();
        self.enter()?;
        let exp = self.factor();
        self.leave();
        Ok(Expr { kind: ExprKind::BinOp { op: BinOp::Pow, left: Box::new(base), right: Box::new(exp?) }, pos })
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.depth;
        let r = self.primary_inner();
        self.depth = start;
        r
    }

    fn primary_inner(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        loop {
            let pos = self.pos();
            if self.eat_op("(") {
                let (args, kwargs) = self.call_args()?;
                e = Expr { kind: ExprKind::Call { func: Box::new(e), args, kwargs }, pos };
            } else if self.eat_op("[") {
                let index = self.subscript()?;
                self.expect_op("]")?;
                e = Expr { kind: ExprKind::Subscript { value: Box::new(e), index: Box::new(index) }, pos };
            } else if self.eat_op(".") {
                let attr = self.ident()?;
                e = Expr { kind: ExprKind::Attribute { value: Box::new(e), attr }, pos };
            } else {
                return Ok(e);
            }
            self.enter()?;
        }
    }

    fn call_args(&mut self) -> PResult<(Vec<Expr>, Vec<(String, Expr)>)> {
        let mut args = Vec::new();
        let mut kwargs: Vec<(String, Expr)> = Vec::new();
        while !self.at_op(")") {
            if self.at_op("*") || self.at_op("**") {
                return self.disallowed("Starred");
            }
            let is_kw = matches!(self.tok(), Tok::Name(n) if !is_keyword(n))
                && matches!(self.toks.get(self.i + 1).map(|t| &t.tok), Some(Tok::Op("=")));
            if is_kw {
                let name = self.ident()?;
                self.advance();
                if kwargs.iter().any(|(k, _)| *k == name) {
                    return self.syntax(format!("repeated keyword argument {name}"));
                }
                kwargs.push((name, self.expr()?));
            } else {
                if !kwargs.is_empty() {
                    return self.syntax("positional argument follows keyword argument");
                }
                let pos = self.pos();
                let a = self.expr()?;
                if self.at_kw("for") {
                    // bare generator argument, e.g. sum(x for x in xs)
                    let gens = self.comp_clauses()?;
                    args.push(Expr { kind: ExprKind::ListComp { elt: Box::new(a), gens }, pos });
                    if !self.at_op(")") {
                        return self.unexpected("')'");
                    }
                    break;
                }
                args.push(a);
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok((args, kwargs))
    }

    fn subscript(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let lower = if self.at_op(":") { None } else { Some(self.expr()?) };
        if !self.at_op(":") {
            if self.at_op(",") {
                return self.disallowed("ExtSlice");
            }
            return lower.ok_or_else(|| ParseError::Syntax { msg: "empty subscript".into(), pos });
        }
        self.advance();
        let upper = if self.at_op(":") || self.at_op("]") { None } else { Some(Box::new(self.expr()?)) };
        let step = if self.eat_op(":") && !self.at_op("]") { Some(Box::new(self.expr()?)) } else { None };
        Ok(Expr { kind: ExprKind::Slice { lower: lower.map(Box::new), upper, step }, pos })
    }

    fn comp_clauses(&mut self) -> PResult<Vec<Comprehension>> {
        let mut gens = Vec::new();
        while self.eat_kw("for") {
            let target = self.target_list()?;
            self.expect_kw("in")?;
            let iter = self.or_expr()?;
            let mut ifs = Vec::new();
            while self.eat_kw("if") {
                ifs.push(self.or_expr_no_ternary()?);
            }
            gens.push(Comprehension { target, iter, ifs });
        }
        Ok(gens)
    }

    fn or_expr_no_ternary(&mut self) -> PResult<Expr> {
        self.enter()?;
        let r = self.or_expr();
        self.leave();
        r
    }

    fn atom(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        let kind = match self.tok().clone() {
            Tok::Int(v) => {
                self.advance();
                ExprKind::Const(Const::Int(v))
            }
            Tok::Float(v) => {
                self.advance();
                ExprKind::Const(Const::Float(v))
            }
            Tok::Str(s) => {
                self.advance();
                ExprKind::Const(Const::Str(s))
            }
            Tok::Name(n) => match n.as_str() {
                "True" => {
                    self.advance();
                    ExprKind::Const(Const::Bool(true))
                }
                "False" => {
                    self.advance();
                    ExprKind::Const(Const::Bool(false))
                }
                "None" => {
                    self.advance();
                    ExprKind::Const(Const::None)
                }
                "lambda" => return self.disallowed("Lambda"),
                "yield" => return self.disallowed("Yield"),
                "await" => return self.disallowed("Await"),
                _ if is_keyword(&n) => return self.unexpected("an expression"),
                _ => {
                    self.advance();
                    ExprKind::Name(n)
                }
            },
            Tok::Op("(") => {
                self.advance();
                if self.eat_op(")") {
                    ExprKind::Tuple(Vec::new())
                } else {
                    let first = self.expr()?;
                    if self.at_kw("for") {
                        return self.disallowed("GeneratorExp");
                    }
                    if self.eat_op(")") {
                        return Ok(first);
                    }
                    let mut items = vec![first];
                    while self.eat_op(",") {
                        if self.at_op(")") {
                            break;
                        }
                        items.push(self.expr()?);
                    }
                    self.expect_op(")")?;
                    ExprKind::Tuple(items)
                }
            }
            Tok::Op("[") => {
                self.advance();
                if self.eat_op("]") {
                    ExprKind::List(Vec::new())
                } else {
                    let first = self.expr()?;
                    if self.at_kw("for") {
                        let gens = self.comp_clauses()?;
                        self.expect_op("]")?;
                        ExprKind::ListComp { elt: Box::new(first), gens }
                    } else {
                        let mut items = vec![first];
                        while self.eat_op(",") {
                            if self.at_op("]") {
                                break;
                            }
                            items.push(self.expr()?);
                        }
                        self.expect_op("]")?;
                        ExprKind::List(items)
                    }
                }
            }
            Tok::Op("{") => return self.disallowed("Dict"),
            Tok::Op("...") => return self.disallowed("Ellipsis"),
            _ => return self.unexpected("an expression"),
        };
        Ok(Expr { kind, pos })
    }
}

fn to_target(e: Expr) -> PResult<Target> {
    let pos = e.pos;
    match e.kind {
        ExprKind::Name(n) => Ok(Target::Name(n, pos)),
        ExprKind::Tuple(items) | ExprKind::List(items) => {
            Ok(Target::Tuple(items.into_iter().map(to_target).collect::<PResult<_>>()?, pos))
        }
        ExprKind::Subscript { value, index } => Ok(Target::Subscript(value, index, pos)),
        ExprKind::Attribute { .. } => Err(ParseError::Disallowed { kind: "AttributeAssign".into(), pos }),
        _ => Err(ParseError::Syntax { msg: "cannot assign to expression".into(), pos }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simple_function() {
        let m = parse_module("def f(prompts, completions, answer, **kwargs):\n    x = [1, 2]\n    return x\n").unwrap();
        let StmtKind::Def(f) = &m.body[0].kind else { panic!() };
        assert_eq!(f.params.len(), 4);
        assert_eq!(f.params[3].kind, ParamKind::VarKw);
        assert_eq!(f.body.len(), 2);
    }

    #[test]
    fn inline_suites_and_elif() {
        let src = "def f(a, b, c, **k):\n    if a: x = 1\n    elif b: x = 2\n    else: x = 3\n    return x\n";
        let m = parse_module(src).unwrap();
        let StmtKind::Def(f) = &m.body[0].kind else { panic!() };
        let StmtKind::If { branches, orelse } = &f.body[0].kind else { panic!() };
        assert_eq!(branches.len(), 2);
        assert_eq!(orelse.len(), 1);
    }

    #[test]
    fn while_is_disallowed() {
        let err = parse_module("def f(a, b, c, **k):\n    while True:\n        pass\n").unwrap_err();
        assert_eq!(err, ParseError::Disallowed { kind: "While".into(), pos: Pos { line: 2, col: 5 } });
    }

    #[test]
    fn lambda_and_dict_are_disallowed() {
        assert!(matches!(parse_module("x = lambda: 1\n"), Err(ParseError::Disallowed { kind, .. }) if kind == "Lambda"));
        assert!(matches!(parse_module("x = {}\n"), Err(ParseError::Disallowed { kind, .. }) if kind == "Dict"));
    }

    #[test]
    fn deep_nesting_is_an_error() {
        let src = format!("x = {}1{}\n", "(".repeat(500), ")".repeat(500));
        assert!(matches!(parse_module(&src), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn comprehension_with_filter() {
        let m = parse_module("y = [s for s in xs if s.strip()]\n").unwrap();
        let StmtKind::Assign { value, .. } = &m.body[0].kind else { panic!() };
        assert!(matches!(value.kind, ExprKind::ListComp { .. }));
    }

    #[test]
    fn tuple_targets_and_slices() {
        let m = parse_module("for a, _ in zip(x, y):\n    z = a[1:-1]\n").unwrap();
        let StmtKind::For { target, .. } = &m.body[0].kind else { panic!() };
        assert!(matches!(target, Target::Tuple(t, _) if t.len() == 2));
    }

    #[test]
    fn break_outside_loop() {
        assert!(parse_module("break\n").is_err());
    }
}
