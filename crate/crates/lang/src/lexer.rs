//! Indentation-aware tokenizer for the reward language.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    /// Operators and delimiters, e.g. `+=` or `(`.
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Name(n) => write!(f, "{n}"),
            Tok::Int(v) => write!(f, "{v}"),
            Tok::Float(v) => write!(f, "{v}"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Op(o) => write!(f, "{o}"),
            Tok::Newline => write!(f, "newline"),
            Tok::Indent => write!(f, "indent"),
            Tok::Dedent => write!(f, "dedent"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{msg} at {pos}")]
pub struct LexError {
    pub msg: String,
    pub pos: Pos,
}

const OPS3: &[&str] = &["**=", "//=", "..."];
const OPS2: &[&str] = &[
    "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "->", "<<", ">>", "|=", "&=", ":=",
];
const OPS1: &[&str] = &[
    "+", "-", "*", "/", "%", "<", ">", "=", "(", ")", "[", "]", "{", "}", ",", ":", ".", "|", "&", "^", "~",
    "@", ";",
];

struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: u32,
    col: u32,
    out: Vec<Token>,
    indents: Vec<u32>,
    depth: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let mut lx = Lexer {
        chars: src.chars().collect(),
        i: 0,
        line: 1,
        col: 1,
        out: Vec::new(),
        indents: vec![0],
        depth: 0,
    };
    lx.run()?;
    Ok(lx.out)
}

impl Lexer {
    fn peek(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, LexError> {
        Err(LexError {
            msg: msg.into(),
            pos: self.pos(),
        })
    }

    fn push(&mut self, tok: Tok, pos: Pos) {
        self.out.push(Token { tok, pos });
    }

    fn run(&mut self) -> Result<(), LexError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                if !self.indentation()? {
                    break;
                }
                at_line_start = false;
            }
            let Some(c) = self.peek(0) else { break };
            let pos = self.pos();
            match c {
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        self.push(Tok::Newline, pos);
                        at_line_start = true;
                    }
                }
                ' ' | '\t' | '\r' | '\x0c' => {
                    self.bump();
                }
                '#' => {
                    while matches!(self.peek(0), Some(c) if c != '\n') {
                        self.bump();
                    }
                }
                '\\' if self.peek(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '\\' if self.peek(1) == Some('\r') && self.peek(2) == Some('\n') => {
                    self.bump();
                    self.bump();
                    self.bump();
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut name = String::new();
                    while let Some(c) = self.peek(0) {
                        if c.is_ascii_alphanumeric() || c == '_' {
                            name.push(c);
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    if matches!(self.peek(0), Some('\'' | '"')) && is_string_prefix(&name) {
                        self.string(&name, pos)?;
                    } else if matches!(self.peek(0), Some(c) if !c.is_ascii() && c.is_alphanumeric()) {
                        return self.err("non-ASCII identifier");
                    } else {
                        self.push(Tok::Name(name), pos);
                    }
                }
                c if c.is_ascii_digit() || (c == '.' && matches!(self.peek(1), Some(d) if d.is_ascii_digit())) => {
                    self.number(pos)?;
                }
                '\'' | '"' => self.string("", pos)?,
                _ => self.operator(pos)?,
            }
        }
        let pos = self.pos();
        if self.depth > 0 {
            return self.err("unclosed bracket at end of input");
        }
        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
            self.push(Tok::Newline, pos);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, pos);
        }
        self.push(Tok::Eof, pos);
        Ok(())
    }

    /// Measures leading whitespace of the next non-blank line and emits
    /// indent/dedent tokens. Returns false at end of input.
    fn indentation(&mut self) -> Result<bool, LexError> {
        loop {
            let mut width = 0u32;
            while let Some(c) = self.peek(0) {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' | '\r' => {}
                    _ => break,
                }
                self.bump();
            }
            match self.peek(0) {
                None => return Ok(false),
                Some('\n') => {
                    self.bump();
                    continue;
                }
                Some('#') => {
                    while matches!(self.peek(0), Some(c) if c != '\n') {
                        self.bump();
                    }
                    continue;
                }
                _ => {}
            }
            let pos = self.pos();
            let top = *self.indents.last().unwrap();
            if width > top {
                self.indents.push(width);
                self.push(Tok::Indent, pos);
            } else {
                while width < *self.indents.last().unwrap() {
                    self.indents.pop();
                    self.push(Tok::Dedent, pos);
                }
                if width != *self.indents.last().unwrap() {
                    return self.err("inconsistent dedent");
                }
            }
            return Ok(true);
        }
    }

    fn number(&mut self, pos: Pos) -> Result<(), LexError> {
        let mut text = String::new();
        let mut is_float = false;
        let digits = |lx: &mut Self, text: &mut String| {
            while let Some(c) = lx.peek(0) {
                if c.is_ascii_digit() {
                    text.push(c);
                } else if c == '_' && matches!(lx.peek(1), Some(d) if d.is_ascii_digit()) {
                } else {
                    break;
                }
                lx.bump();
            }
        };
        digits(self, &mut text);
        if self.peek(0) == Some('.') {
            is_float = true;
            text.push('.');
            self.bump();
            digits(self, &mut text);
        }
        if matches!(self.peek(0), Some('e' | 'E')) {
            let sign = matches!(self.peek(1), Some('+' | '-'));
            let d = if sign { self.peek(2) } else { self.peek(1) };
            if matches!(d, Some(c) if c.is_ascii_digit()) {
                is_float = true;
                text.push('e');
                self.bump();
                if sign {
                    text.push(self.bump().unwrap());
                }
                digits(self, &mut text);
            }
        }
        if matches!(self.peek(0), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
            return self.err("malformed number literal");
        }
        if is_float {
            let v: f64 = text.parse().map_err(|_| LexError {
                msg: format!("bad float literal {text}"),
                pos,
            })?;
            self.push(Tok::Float(v), pos);
        } else {
            if text.len() > 1 && text.starts_with('0') && text.bytes().any(|b| b != b'0') {
                return self.err("leading zeros in integer literal");
            }
            let v: i64 = text.parse().map_err(|_| LexError {
                msg: format!("integer literal out of range: {text}"),
                pos,
            })?;
            self.push(Tok::Int(v), pos);
        }
        Ok(())
    }

    fn string(&mut self, prefix: &str, pos: Pos) -> Result<(), LexError> {
        let lower = prefix.to_ascii_lowercase();
        if lower.contains('f') {
            return self.err("f-strings are not supported");
        }
        if lower.contains('b') {
            return self.err("bytes literals are not supported");
        }
        let raw = lower.contains('r');
        let quote = self.bump().unwrap();
        let triple = self.peek(0) == Some(quote) && self.peek(1) == Some(quote);
        if triple {
            self.bump();
            self.bump();
        }
        let mut s = String::new();
        loop {
            let Some(c) = self.peek(0) else {
                return self.err("unterminated string literal");
            };
            if c == quote {
                if !triple {
                    self.bump();
                    break;
                }
                if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                    self.bump();
                    self.bump();
                    self.bump();
                    break;
                }
                s.push(c);
                self.bump();
                continue;
            }
            if c == '\n' && !triple {
                return self.err("newline in string literal");
            }
            if c == '\\' {
                self.bump();
                let Some(e) = self.bump() else {
                    return self.err("unterminated string literal");
                };
                if raw {
                    s.push('\\');
                    s.push(e);
                    continue;
                }
                match e {
                    '\n' => {}
                    'n' => s.push('\n'),
                    't' => s.push('\t'),
                    'r' => s.push('\r'),
                    '0' => s.push('\0'),
                    'a' => s.push('\x07'),
                    'b' => s.push('\x08'),
                    'f' => s.push('\x0c'),
                    'v' => s.push('\x0b'),
                    '\\' | '\'' | '"' => s.push(e),
                    'x' => s.push(self.hex_escape(2)?),
                    'u' => s.push(self.hex_escape(4)?),
                    'U' => s.push(self.hex_escape(8)?),
                    other => {
                        s.push('\\');
                        s.push(other);
                    }
                }
                continue;
            }
            s.push(c);
            self.bump();
        }
        // adjacent literals concatenate
        if let Some(Token {
            tok: Tok::Str(prev), ..
        }) = self.out.last_mut()
        {
            prev.push_str(&s);
            return Ok(());
        }
        self.push(Tok::Str(s), pos);
        Ok(())
    }

    fn hex_escape(&mut self, n: usize) -> Result<char, LexError> {
        let mut v = 0u32;
        for _ in 0..n {
            let Some(d) = self.peek(0).and_then(|c| c.to_digit(16)) else {
                return self.err("bad hex escape");
            };
            v = v * 16 + d;
            self.bump();
        }
        char::from_u32(v).map_or_else(|| self.err("escape is not a valid character"), Ok)
    }

    fn operator(&mut self, pos: Pos) -> Result<(), LexError> {
        let rest: String = self.chars[self.i..].iter().take(3).collect();
        let op = OPS3
            .iter()
            .chain(OPS2)
            .chain(OPS1)
            .find(|o| rest.starts_with(**o))
            .copied();
        let Some(op) = op else {
            return self.err(format!("unexpected character {:?}", self.peek(0).unwrap()));
        };
        for _ in 0..op.chars().count() {
            self.bump();
        }
        match op {
            "(" | "[" | "{" => self.depth += 1,
            ")" | "]" | "}" => {
                if self.depth == 0 {
                    return Err(LexError {
                        msg: format!("unmatched {op}"),
                        pos,
                    });
                }
                self.depth -= 1;
            }
            _ => {}
        }
        self.push(Tok::Op(op), pos);
        Ok(())
    }
}

fn is_string_prefix(name: &str) -> bool {
    matches!(
        name.to_ascii_lowercase().as_str(),
        "r" | "u" | "f" | "b" | "rb" | "br" | "fr" | "rf"
    )
}
