//! Interruptible backtracking regex engine for interpreted programs.
//!
//! Supports the usual dialect: literals, classes, `.`, anchors, groups
//! (capturing, non-capturing, named), alternation and greedy/lazy quantifiers.
//! Backreferences and lookaround are rejected at compile time. Matching
//! charges a [`Budget`] so pathological patterns end in a timeout instead of
//! hanging the host.

use std::time::Instant;

pub const IGNORECASE: i64 = 2;
pub const MULTILINE: i64 = 8;
pub const DOTALL: i64 = 16;
const KNOWN_FLAGS: i64 = IGNORECASE | MULTILINE | DOTALL | 32 /* unicode */;

const MAX_PROGRAM: usize = 20_000;
const MAX_DEPTH: usize = 100;
const MAX_BACKTRACK: usize = 4_000_000;
const MAX_REPEAT: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("bad pattern at offset {offset}: {msg}")]
pub struct RegexError {
    pub msg: String,
    pub offset: usize,
}

/// Why a match was abandoned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Abort {
    Timeout,
    Memory,
}

/// Wall-clock allowance shared by the interpreter and the matcher.
#[derive(Debug, Clone)]
pub struct Budget {
    deadline: Option<Instant>,
    ticks: u64,
}

impl Budget {
    pub fn new(deadline: Option<Instant>) -> Self {
        Budget { deadline, ticks: 0 }
    }

    pub fn unlimited() -> Self {
        Budget::new(None)
    }

    #[inline]
    pub fn tick(&mut self) -> Result<(), Abort> {
        self.ticks += 1;
        if self.ticks & 1023 == 0 {
            self.check()?;
        }
        Ok(())
    }

    /// Accounts for `n` units of linear work done outside the step loop.
    pub fn tick_n(&mut self, n: usize) -> Result<(), Abort> {
        let before = self.ticks >> 10;
        self.ticks += n as u64;
        if self.ticks >> 10 != before {
            self.check()?;
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), Abort> {
        match self.deadline {
            Some(d) if Instant::now() >= d => Err(Abort::Timeout),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ClassItem {
    Range(char, char),
    Digit(bool),
    Word(bool),
    Space(bool),
}

#[derive(Debug, Clone, PartialEq)]
struct Class {
    items: Vec<ClassItem>,
    negated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Look {
    LineStart,
    LineEnd,
    TextStart,
    TextEnd,
    WordBoundary,
    NotWordBoundary,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Empty,
    Char(char),
    Any,
    Class(Class),
    Look(Look),
    Group(Box<Node>, Option<usize>),
    Concat(Vec<Node>),
    Alt(Vec<Node>),
    Repeat { node: Box<Node>, min: u32, max: Option<u32>, greedy: bool },
}

#[derive(Debug, Clone, PartialEq)]
enum Inst {
    Char(char),
    Any,
    AnyNoNewline,
    Class(usize),
    Look(Look),
    Save(usize),
    Split(usize, usize),
    Jmp(usize),
    LoopMark(usize),
    /// Leaves the loop at `exit` when the iteration consumed nothing.
    LoopCheck(usize, usize),
    Match,
}

pub fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

pub fn is_digit(c: char) -> bool {
    c.is_ascii_digit() || (!c.is_ascii() && c.is_numeric())
}

pub fn is_space(c: char) -> bool {
    matches!(c, ' ' | '\t' | '\n' | '\r' | '\x0b' | '\x0c' | '\x1c'..='\x1f') || (!c.is_ascii() && c.is_whitespace())
}

fn fold(c: char) -> char {
    let mut l = c.to_lowercase();
    match (l.next(), l.next()) {
        (Some(x), None) => x,
        _ => c,
    }
}

impl Class {
    fn matches(&self, c: char, ignore_case: bool) -> bool {
        let hit = |c: char| {
            self.items.iter().any(|it| match *it {
                ClassItem::Range(a, b) => a <= c && c <= b,
                ClassItem::Digit(neg) => is_digit(c) != neg,
                ClassItem::Word(neg) => is_word(c) != neg,
                ClassItem::Space(neg) => is_space(c) != neg,
            })
        };
        let mut found = hit(c);
        if !found && ignore_case {
            found = hit(fold(c)) || c.to_uppercase().any(hit);
        }
        found != self.negated
    }
}

struct PatternParser {
    chars: Vec<char>,
    i: usize,
    groups: usize,
    names: Vec<(String, usize)>,
    depth: usize,
    flags: i64,
}

impl PatternParser {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T, RegexError> {
        Err(RegexError { msg: msg.into(), offset: self.i })
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn leading_flags(&mut self) -> Result<(), RegexError> {
        // global inline flags such as (?s) or (?im) at the very start
        while self.chars[self.i..].starts_with(&['(', '?']) {
            let mut j = self.i + 2;
            let mut f = 0;
            while let Some(&c) = self.chars.get(j) {
                match c {
                    'i' => f |= IGNORECASE,
                    'm' => f |= MULTILINE,
                    's' => f |= DOTALL,
                    'u' => {}
                    _ => break,
                }
                j += 1;
            }
            if j > self.i + 2 && self.chars.get(j) == Some(&')') {
                self.flags |= f;
                self.i = j + 1;
            } else {
                break;
            }
        }
        Ok(())
    }

    fn alternation(&mut self) -> Result<Node, RegexError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return self.err("pattern nested too deeply");
        }
        let mut alts = vec![self.concat()?];
        while self.eat('|') {
            alts.push(self.concat()?);
        }
        self.depth -= 1;
        Ok(if alts.len() == 1 { alts.pop().unwrap() } else { Node::Alt(alts) })
    }

    fn concat(&mut self) -> Result<Node, RegexError> {
        let mut items = Vec::new();
        while let Some(c) = self.peek() {
            if c == '|' || c == ')' {
                break;
            }
            let atom = self.atom()?;
            let atom = self.quantified(atom)?;
            items.push(atom);
        }
        Ok(match items.len() {
            0 => Node::Empty,
            1 => items.pop().unwrap(),
            _ => Node::Concat(items),
        })
    }

    fn quantified(&mut self, atom: Node) -> Result<Node, RegexError> {
        let start = self.i;
        let (min, max) = match self.peek() {
            Some('*') => {
                self.i += 1;
                (0, None)
            }
            Some('+') => {
                self.i += 1;
                (1, None)
            }
            Some('?') => {
                self.i += 1;
                (0, Some(1))
            }
            Some('{') => match self.braces() {
                Some(r) => r,
                None => return Ok(atom),
            },
            _ => return Ok(atom),
        };
        if matches!(atom, Node::Look(_) | Node::Empty) {
            self.i = start;
            return self.err("nothing to repeat");
        }
        if let Some(m) = max {
            if m < min {
                return self.err("min repeat greater than max repeat");
            }
        }
        if min > MAX_REPEAT || max.is_some_and(|m| m > MAX_REPEAT) {
            return self.err("repeat count too large");
        }
        let greedy = !self.eat('?');
        if self.peek() == Some('+') {
            return self.err("possessive quantifiers are not supported");
        }
        if matches!(self.peek(), Some('*' | '+' | '{')) && !(self.peek() == Some('{') && self.brace_lookahead().is_none()) {
            return self.err("multiple repeat");
        }
        Ok(Node::Repeat { node: Box::new(atom), min, max, greedy })
    }

    fn brace_lookahead(&self) -> Option<(u32, Option<u32>, usize)> {
        let mut j = self.i + 1;
        let num = |j: &mut usize| -> Option<u32> {
            let s = *j;
            while self.chars.get(*j).is_some_and(|c| c.is_ascii_digit()) {
                *j += 1;
            }
            if *j == s {
                None
            } else {
                self.chars[s..*j].iter().collect::<String>().parse().ok().or(Some(u32::MAX))
            }
        };
        let lo = num(&mut j);
        let (lo, hi) = if self.chars.get(j) == Some(&',') {
            j += 1;
            (lo.unwrap_or(0), num(&mut j))
        } else {
            let lo = lo?;
            (lo, Some(lo))
        };
        if self.chars.get(j) != Some(&'}') {
            return None;
        }
        Some((lo, hi, j + 1))
    }

    /// `{m}`, `{m,}`, `{,n}`, `{m,n}`; anything else is a literal brace.
    fn braces(&mut self) -> Option<(u32, Option<u32>)> {
        let (lo, hi, end) = self.brace_lookahead()?;
        self.i = end;
        Some((lo, hi))
    }

    fn atom(&mut self) -> Result<Node, RegexError> {
        let c = self.peek().unwrap();
        self.i += 1;
        Ok(match c {
            '.' => Node::Any,
            '^' => Node::Look(Look::LineStart),
            '$' => Node::Look(Look::LineEnd),
            '[' => Node::Class(self.class()?),
            '(' => self.group()?,
            '\\' => self.escape(false)?.into_node(),
            '*' | '+' | '?' => {
                self.i -= 1;
                return self.err("nothing to repeat");
            }
            '{' => {
                self.i -= 1;
                if self.brace_lookahead().is_some() {
                    return self.err("nothing to repeat");
                }
                self.i += 1;
                Node::Char('{')
            }
            c => Node::Char(c),
        })
    }

    fn group(&mut self) -> Result<Node, RegexError> {
        let mut capture = true;
        let mut name = None;
        if self.eat('?') {
            match self.peek() {
                Some(':') => {
                    self.i += 1;
                    capture = false;
                }
                Some('P') if self.chars.get(self.i + 1) == Some(&'<') => {
                    self.i += 2;
                    let s = self.i;
                    while self.peek().is_some_and(|c| c != '>') {
                        self.i += 1;
                    }
                    let n: String = self.chars[s..self.i].iter().collect();
                    if !self.eat('>') || n.is_empty() || !n.chars().all(is_word) || n.starts_with(|c: char| c.is_ascii_digit()) {
                        return self.err("bad group name");
                    }
                    if self.names.iter().any(|(x, _)| *x == n) {
                        return self.err("redefinition of group name");
                    }
                    name = Some(n);
                }
                Some('=' | '!') => return self.err("lookahead is not supported"),
                Some('<') => return self.err("lookbehind is not supported"),
                Some('P') => return self.err("backreferences are not supported"),
                Some('#') => return self.err("comments are not supported"),
                _ => return self.err("unsupported group flags"),
            }
        }
        let index = if capture {
            self.groups += 1;
            if let Some(n) = name {
                self.names.push((n, self.groups));
            }
            Some(self.groups)
        } else {
            None
        };
        let inner = self.alternation()?;
        if !self.eat(')') {
            return self.err("missing ), unterminated subpattern");
        }
        Ok(Node::Group(Box::new(inner), index))
    }

    fn escape(&mut self, in_class: bool) -> Result<Escaped, RegexError> {
        let Some(c) = self.peek() else {
            return self.err("bad escape (end of pattern)");
        };
        self.i += 1;
        Ok(match c {
            'd' => Escaped::Item(ClassItem::Digit(false)),
            'D' => Escaped::Item(ClassItem::Digit(true)),
            'w' => Escaped::Item(ClassItem::Word(false)),
            'W' => Escaped::Item(ClassItem::Word(true)),
            's' => Escaped::Item(ClassItem::Space(false)),
            'S' => Escaped::Item(ClassItem::Space(true)),
            'n' => Escaped::Char('\n'),
            't' => Escaped::Char('\t'),
            'r' => Escaped::Char('\r'),
            'f' => Escaped::Char('\x0c'),
            'v' => Escaped::Char('\x0b'),
            'a' => Escaped::Char('\x07'),
            'b' if in_class => Escaped::Char('\x08'),
            'b' => Escaped::Look(Look::WordBoundary),
            'B' if !in_class => Escaped::Look(Look::NotWordBoundary),
            'A' if !in_class => Escaped::Look(Look::TextStart),
            'Z' if !in_class => Escaped::Look(Look::TextEnd),
            '0' => Escaped::Char(self.octal(0)),
            'x' => Escaped::Char(self.hex(2)?),
            'u' => Escaped::Char(self.hex(4)?),
            'U' => Escaped::Char(self.hex(8)?),
            '1'..='9' => return self.err("backreferences are not supported"),
            c if c.is_ascii_alphanumeric() => return self.err(format!("bad escape \\{c}")),
            c => Escaped::Char(c),
        })
    }

    fn octal(&mut self, mut v: u32) -> char {
        for _ in 0..2 {
            match self.peek().and_then(|c| c.to_digit(8)) {
                Some(d) => {
                    v = v * 8 + d;
                    self.i += 1;
                }
                None => break,
            }
        }
        char::from_u32(v).unwrap_or('\0')
    }

    fn hex(&mut self, n: usize) -> Result<char, RegexError> {
        let mut v = 0u32;
        for _ in 0..n {
            let Some(d) = self.peek().and_then(|c| c.to_digit(16)) else {
                return self.err("incomplete hex escape");
            };
            v = v * 16 + d;
            self.i += 1;
        }
        char::from_u32(v).map_or_else(|| self.err("bad character code"), Ok)
    }

    fn class(&mut self) -> Result<Class, RegexError> {
        let negated = self.eat('^');
        let mut items = Vec::new();
        let mut first = true;
        loop {
            let Some(c) = self.peek() else {
                return self.err("unterminated character set");
            };
            self.i += 1;
            if c == ']' && !first {
                break;
            }
            first = false;
            let lo = match c {
                '\\' => match self.escape(true)? {
                    Escaped::Char(ch) => ch,
                    Escaped::Item(it) => {
                        items.push(it);
                        continue;
                    }
                    Escaped::Look(_) => return self.err("bad escape in set"),
                },
                '[' if self.peek() == Some(':') => return self.err("POSIX classes are not supported"),
                c => c,
            };
            if self.peek() == Some('-') && self.chars.get(self.i + 1).is_some_and(|&c| c != ']') {
                self.i += 1;
                let hc = self.peek().unwrap();
                self.i += 1;
                let hi = if hc == '\\' {
                    match self.escape(true)? {
                        Escaped::Char(ch) => ch,
                        _ => return self.err("bad character range"),
                    }
                } else {
                    hc
                };
                if hi < lo {
                    return self.err("bad character range");
                }
                items.push(ClassItem::Range(lo, hi));
            } else {
                items.push(ClassItem::Range(lo, lo));
            }
        }
        Ok(Class { items, negated })
    }
}

enum Escaped {
    Char(char),
    Item(ClassItem),
    Look(Look),
}

impl Escaped {
    fn into_node(self) -> Node {
        match self {
            Escaped::Char(c) => Node::Char(c),
            Escaped::Item(it) => Node::Class(Class { items: vec![it], negated: false }),
            Escaped::Look(l) => Node::Look(l),
        }
    }
}

struct Compiler {
    prog: Vec<Inst>,
    classes: Vec<Class>,
    loops: usize,
    ignore_case: bool,
    dotall: bool,
}

impl Compiler {
    fn emit(&mut self, inst: Inst) -> Result<usize, RegexError> {
        if self.prog.len() >= MAX_PROGRAM {
            return Err(RegexError { msg: "pattern too large".into(), offset: 0 });
        }
        self.prog.push(inst);
        Ok(self.prog.len() - 1)
    }

    fn node(&mut self, n: &Node) -> Result<(), RegexError> {
        match n {
            Node::Empty => {}
            Node::Char(c) => {
                let c = if self.ignore_case { fold(*c) } else { *c };
                self.emit(Inst::Char(c))?;
            }
            Node::Any => {
                self.emit(if self.dotall { Inst::Any } else { Inst::AnyNoNewline })?;
            }
            Node::Class(cls) => {
                self.classes.push(cls.clone());
                self.emit(Inst::Class(self.classes.len() - 1))?;
            }
            Node::Look(l) => {
                self.emit(Inst::Look(*l))?;
            }
            Node::Group(inner, idx) => {
                if let Some(i) = idx {
                    self.emit(Inst::Save(2 * i))?;
                    self.node(inner)?;
                    self.emit(Inst::Save(2 * i + 1))?;
                } else {
                    self.node(inner)?;
                }
            }
            Node::Concat(items) => {
                for it in items {
                    self.node(it)?;
                }
            }
            Node::Alt(alts) => {
                let mut jumps = Vec::new();
                for (k, a) in alts.iter().enumerate() {
                    if k + 1 < alts.len() {
                        let split = self.emit(Inst::Split(0, 0))?;
                        self.node(a)?;
                        jumps.push(self.emit(Inst::Jmp(0))?);
                        let next = self.prog.len();
                        self.prog[split] = Inst::Split(split + 1, next);
                    } else {
                        self.node(a)?;
                    }
                }
                let end = self.prog.len();
                for j in jumps {
                    self.prog[j] = Inst::Jmp(end);
                }
            }
            Node::Repeat { node, min, max, greedy } => {
                for _ in 0..*min {
                    self.node(node)?;
                }
                match max {
                    None => self.star(node, *greedy)?,
                    Some(m) => {
                        // nested optionals: (e(e(e)?)?)?
                        let mut splits = Vec::new();
                        for _ in *min..*m {
                            splits.push(self.emit(Inst::Split(0, 0))?);
                            self.node(node)?;
                        }
                        let end = self.prog.len();
                        for s in splits {
                            self.prog[s] = self.split(s + 1, end, *greedy);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn split(&self, body: usize, exit: usize, greedy: bool) -> Inst {
        if greedy {
            Inst::Split(body, exit)
        } else {
            Inst::Split(exit, body)
        }
    }

    fn star(&mut self, node: &Node, greedy: bool) -> Result<(), RegexError> {
        let reg = self.loops;
        self.loops += 1;
        let head = self.emit(Inst::Split(0, 0))?;
        self.emit(Inst::LoopMark(reg))?;
        self.node(node)?;
        // an iteration that consumed nothing ends the loop
        let check = self.emit(Inst::LoopCheck(reg, 0))?;
        self.emit(Inst::Jmp(head))?;
        let exit = self.prog.len();
        self.prog[check] = Inst::LoopCheck(reg, exit);
        self.prog[head] = self.split(head + 1, exit, greedy);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Regex {
    prog: Vec<Inst>,
    classes: Vec<Class>,
    loops: usize,
    groups: usize,
    names: Vec<(String, usize)>,
    flags: i64,
    first: Option<char>,
}

/// Capture spans in character offsets; index 0 is the whole match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Captures {
    slots: Vec<Option<usize>>,
}

impl Captures {
    pub fn get(&self, i: usize) -> Option<(usize, usize)> {
        match (self.slots.get(2 * i)?, self.slots.get(2 * i + 1)?) {
            (Some(a), Some(b)) => Some((*a, *b)),
            _ => None,
        }
    }

    pub fn span(&self) -> (usize, usize) {
        self.get(0).expect("match always has group 0")
    }

    pub fn len(&self) -> usize {
        self.slots.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Anchor {
    /// Try every start position from the given one.
    Search,
    /// Only at the given position.
    Start,
    /// At the given position and ending at the end of input.
    Full,
}

impl Regex {
    pub fn new(pattern: &str, flags: i64) -> Result<Regex, RegexError> {
        if flags & !KNOWN_FLAGS != 0 {
            return Err(RegexError { msg: format!("unsupported flags {flags}"), offset: 0 });
        }
        let mut p = PatternParser {
            chars: pattern.chars().collect(),
            i: 0,
            groups: 0,
            names: Vec::new(),
            depth: 0,
            flags,
        };
        p.leading_flags()?;
        let ast = p.alternation()?;
        if p.i < p.chars.len() {
            return p.err("unbalanced parenthesis");
        }
        let flags = p.flags;
        let mut c = Compiler {
            prog: Vec::new(),
            classes: Vec::new(),
            loops: 0,
            ignore_case: flags & IGNORECASE != 0,
            dotall: flags & DOTALL != 0,
        };
        c.emit(Inst::Save(0))?;
        c.node(&ast)?;
        c.emit(Inst::Save(1))?;
        c.emit(Inst::Match)?;
        let first = match c.prog.get(1) {
            Some(Inst::Char(ch)) if !c.ignore_case => Some(*ch),
            _ => None,
        };
        Ok(Regex {
            prog: c.prog,
            classes: c.classes,
            loops: c.loops,
            groups: p.groups,
            names: p.names,
            flags,
            first,
        })
    }

    /// Number of capturing groups, not counting the whole match.
    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.names.iter().find(|(n, _)| n == name).map(|(_, i)| *i)
    }

    pub fn flags(&self) -> i64 {
        self.flags
    }

    /// Leftmost match starting at or after `pos`. With `must_advance`, an
    /// empty match at exactly `pos` is not accepted.
    pub fn search(&self, hay: &[char], pos: usize, must_advance: bool, budget: &mut Budget) -> Result<Option<Captures>, Abort> {
        self.find(hay, pos, must_advance, Anchor::Search, budget)
    }

    pub fn match_at(&self, hay: &[char], pos: usize, budget: &mut Budget) -> Result<Option<Captures>, Abort> {
        self.find(hay, pos, false, Anchor::Start, budget)
    }

    pub fn fullmatch(&self, hay: &[char], budget: &mut Budget) -> Result<Option<Captures>, Abort> {
        self.find(hay, 0, false, Anchor::Full, budget)
    }

    /// All successive non-overlapping matches, with the usual rule that an
    /// empty match may not start where the previous match ended if that one
    /// was empty too.
    pub fn find_all(&self, hay: &[char], limit: Option<usize>, budget: &mut Budget) -> Result<Vec<Captures>, Abort> {
        let mut out = Vec::new();
        let mut pos = 0;
        let mut must_advance = false;
        while pos <= hay.len() {
            if limit.is_some_and(|l| out.len() >= l) {
                break;
            }
            let Some(m) = self.search(hay, pos, must_advance, budget)? else {
                break;
            };
            let (s, e) = m.span();
            must_advance = s == e;
            pos = e;
            out.push(m);
            if out.len() > MAX_BACKTRACK {
                return Err(Abort::Memory);
            }
        }
        Ok(out)
    }

    fn find(&self, hay: &[char], pos: usize, must_advance: bool, anchor: Anchor, budget: &mut Budget) -> Result<Option<Captures>, Abort> {
        if pos > hay.len() {
            return Ok(None);
        }
        let mut vm = Vm {
            re: self,
            hay,
            slots: vec![None; 2 * (self.groups + 1)],
            regs: vec![usize::MAX; self.loops],
            stack: Vec::new(),
        };
        let last = if anchor == Anchor::Search { hay.len() } else { pos };
        for start in pos..=last {
            if let Some(f) = self.first {
                if hay.get(start) != Some(&f) {
                    budget.tick()?;
                    continue;
                }
            }
            let forbid_empty = must_advance && start == pos;
            if vm.run(start, forbid_empty, anchor == Anchor::Full, budget)? {
                return Ok(Some(Captures { slots: vm.slots }));
            }
        }
        Ok(None)
    }
}

enum Frame {
    Branch { pc: usize, pos: usize },
    Slot { slot: usize, old: Option<usize> },
    Reg { reg: usize, old: usize },
}

struct Vm<'a> {
    re: &'a Regex,
    hay: &'a [char],
    slots: Vec<Option<usize>>,
    regs: Vec<usize>,
    stack: Vec<Frame>,
}

impl Vm<'_> {
    fn look(&self, l: Look, pos: usize) -> bool {
        let hay = self.hay;
        let multiline = self.re.flags & MULTILINE != 0;
        match l {
            Look::TextStart => pos == 0,
            Look::TextEnd => pos == hay.len(),
            Look::LineStart => pos == 0 || (multiline && hay[pos - 1] == '\n'),
            Look::LineEnd => {
                pos == hay.len()
                    || (hay[pos] == '\n' && (multiline || pos + 1 == hay.len()))
            }
            Look::WordBoundary | Look::NotWordBoundary => {
                let before = pos > 0 && is_word(hay[pos - 1]);
                let after = pos < hay.len() && is_word(hay[pos]);
                (before != after) == (l == Look::WordBoundary)
            }
        }
    }

    fn run(&mut self, start: usize, forbid_empty: bool, need_end: bool, budget: &mut Budget) -> Result<bool, Abort> {
        self.slots.iter_mut().for_each(|s| *s = None);
        self.stack.clear();
        let ignore_case = self.re.flags & IGNORECASE != 0;
        let prog = &self.re.prog;
        let mut pc = 0;
        let mut pos = start;
        loop {
            budget.tick()?;
            let ok = match &prog[pc] {
                Inst::Char(c) => {
                    let hit = pos < self.hay.len() && {
                        let h = self.hay[pos];
                        h == *c || (ignore_case && fold(h) == *c)
                    };
                    if hit {
                        pos += 1;
                        pc += 1;
                    }
                    hit
                }
                Inst::Any => {
                    let hit = pos < self.hay.len();
                    if hit {
                        pos += 1;
                        pc += 1;
                    }
                    hit
                }
                Inst::AnyNoNewline => {
                    let hit = pos < self.hay.len() && self.hay[pos] != '\n';
                    if hit {
                        pos += 1;
                        pc += 1;
                    }
                    hit
                }
                Inst::Class(k) => {
                    let hit = pos < self.hay.len() && self.re.classes[*k].matches(self.hay[pos], ignore_case);
                    if hit {
                        pos += 1;
                        pc += 1;
                    }
                    hit
                }
                Inst::Look(l) => {
                    let hit = self.look(*l, pos);
                    pc += 1;
                    hit
                }
                Inst::Save(s) => {
                    self.stack.push(Frame::Slot { slot: *s, old: self.slots[*s] });
                    self.slots[*s] = Some(pos);
                    pc += 1;
                    true
                }
                Inst::Split(a, b) => {
                    self.stack.push(Frame::Branch { pc: *b, pos });
                    pc = *a;
                    true
                }
                Inst::Jmp(t) => {
                    pc = *t;
                    true
                }
                Inst::LoopMark(r) => {
                    self.stack.push(Frame::Reg { reg: *r, old: self.regs[*r] });
                    self.regs[*r] = pos;
                    pc += 1;
                    true
                }
                Inst::LoopCheck(r, exit) => {
                    pc = if pos == self.regs[*r] { *exit } else { pc + 1 };
                    true
                }
                Inst::Match => {
                    if (forbid_empty && pos == start) || (need_end && pos != self.hay.len()) {
                        false
                    } else {
                        return Ok(true);
                    }
                }
            };
            if self.stack.len() > MAX_BACKTRACK {
                return Err(Abort::Memory);
            }
            if ok {
                continue;
            }
            // backtrack
            loop {
                match self.stack.pop() {
                    None => return Ok(false),
                    Some(Frame::Slot { slot, old }) => self.slots[slot] = old,
                    Some(Frame::Reg { reg, old }) => self.regs[reg] = old,
                    Some(Frame::Branch { pc: p, pos: q }) => {
                        pc = p;
                        pos = q;
                        break;
                    }
                }
            }
        }
    }
}
