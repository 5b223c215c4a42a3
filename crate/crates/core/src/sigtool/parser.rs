//! Recursive-descent parser for the cycle-body DSL.
//!
//! ```text
//! program   := statement*
//! statement := "input" IDENT ";"
//!            | "const" IDENT "=" ["-"] INT ";"
//!            | "output" IDENT ";"
//!            | IDENT "=" expr ";"
//! expr      := term (("+" | "-") term)*
//! term      := factor ("*" factor)*
//! factor    := IDENT | ["-"] INT | "(" expr ")"
//! ```
//!
//! `#` starts a comment running to the end of the line. Expressions are
//! flattened into three-address instructions; the last instruction of a
//! statement writes the assigned variable directly.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use super::ir::{Instruction, Opcode, ProgramIR, VarId, VarKind, Variable};

const MAX_DEPTH: usize = 200;
const MAX_IDENT: usize = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Position {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{pos}: syntax error: {message}")]
    SyntaxError { pos: Position, message: String },
    #[error("{pos}: undefined variable `{name}`")]
    UndefinedVariable { pos: Position, name: String },
    #[error("{pos}: `{name}` is already defined")]
    DuplicateDefinition { pos: Position, name: String },
}

impl ParseError {
    pub fn position(&self) -> Position {
        match self {
            ParseError::SyntaxError { pos, .. }
            | ParseError::UndefinedVariable { pos, .. }
            | ParseError::DuplicateDefinition { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Input,
    Const,
    Output,
    Eq,
    Semi,
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Int(n) => write!(f, "integer {n}"),
            Tok::Input => f.write_str("`input`"),
            Tok::Const => f.write_str("`const`"),
            Tok::Output => f.write_str("`output`"),
            Tok::Eq => f.write_str("`=`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Plus => f.write_str("`+`"),
            Tok::Minus => f.write_str("`-`"),
            Tok::Star => f.write_str("`*`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn syntax(pos: Position, message: impl Into<String>) -> ParseError {
    ParseError::SyntaxError {
        pos,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Position)>, ParseError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1u32, 1u32);
    while let Some(&ch) = chars.peek() {
        let pos = Position { line, column };
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
        };
        match ch {
            '\n' | ' ' | '\t' | '\r' => bump(&mut chars),
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    bump(&mut chars);
                }
            }
            '=' | ';' | '+' | '-' | '*' | '(' | ')' => {
                bump(&mut chars);
                out.push((
                    match ch {
                        '=' => Tok::Eq,
                        ';' => Tok::Semi,
                        '+' => Tok::Plus,
                        '-' => Tok::Minus,
                        '*' => Tok::Star,
                        '(' => Tok::LParen,
                        _ => Tok::RParen,
                    },
                    pos,
                ));
            }
            '0'..='9' => {
                let mut digits = String::new();
                while let Some(&c) = chars.peek() {
                    if !c.is_ascii_digit() {
                        break;
                    }
                    digits.push(c);
                    bump(&mut chars);
                }
                let n: u64 = digits
                    .parse()
                    .map_err(|_| syntax(pos, format!("integer literal {digits} is too large")))?;
                out.push((Tok::Int(n), pos));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&c) = chars.peek() {
                    if !(c.is_ascii_alphanumeric() || c == '_') {
                        break;
                    }
                    ident.push(c);
                    bump(&mut chars);
                }
                if ident.len() > MAX_IDENT {
                    return Err(syntax(pos, "identifier longer than 255 characters"));
                }
                out.push((
                    match ident.as_str() {
                        "input" => Tok::Input,
                        "const" => Tok::Const,
                        "output" => Tok::Output,
                        _ => Tok::Ident(ident),
                    },
                    pos,
                ));
            }
            other => return Err(syntax(pos, format!("unexpected character {other:?}"))),
        }
    }
    out.push((Tok::Eof, Position { line, column }));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Position)>,
    at: usize,
    vars: Vec<Variable>,
    names: HashMap<String, VarId>,
    instructions: Vec<Instruction>,
    outputs: Vec<(VarId, Position)>,
    pending_outputs: Vec<(String, Position)>,
    temps: u32,
    literals: u32,
}

/// Operand produced while lowering an expression.
enum Lowered {
    Var(VarId),
    /// A binary node not yet materialized; the caller picks its destination.
    Pending(Opcode, VarId, VarId),
}

impl Parser {
    fn peek(&self) -> &(Tok, Position) {
        &self.toks[self.at]
    }

    fn next(&mut self) -> (Tok, Position) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Position, ParseError> {
        let (tok, pos) = self.next();
        if tok == want {
            Ok(pos)
        } else {
            Err(syntax(pos, format!("expected {want}, found {tok}")))
        }
    }

    fn ident(&mut self) -> Result<(String, Position), ParseError> {
        match self.next() {
            (Tok::Ident(name), pos) => Ok((name, pos)),
            (tok, pos) => Err(syntax(pos, format!("expected identifier, found {tok}"))),
        }
    }

    fn declare(&mut self, name: String, kind: VarKind, pos: Position) -> Result<VarId, ParseError> {
        if self.names.contains_key(&name) {
            return Err(ParseError::DuplicateDefinition { pos, name });
        }
        let id = self.push_var(name.clone(), kind);
        self.names.insert(name, id);
        Ok(id)
    }

    fn push_var(&mut self, name: String, kind: VarKind) -> VarId {
        let id = VarId(self.vars.len() as u32);
        self.vars.push(Variable { name, kind });
        id
    }

    fn literal(&mut self, value: i64) -> VarId {
        let name = format!("%c{}", self.literals);
        self.literals += 1;
        self.push_var(name, VarKind::Const(value))
    }

    fn temp(&mut self) -> VarId {
        let name = format!("%t{}", self.temps);
        self.temps += 1;
        self.push_var(name, VarKind::Temp)
    }

    fn signed_int(&mut self) -> Result<i64, ParseError> {
        let negative = if self.peek().0 == Tok::Minus {
            self.next();
            true
        } else {
            false
        };
        match self.next() {
            (Tok::Int(n), pos) => {
                let value = if negative {
                    0i64.checked_sub_unsigned(n)
                } else {
                    i64::try_from(n).ok()
                };
                value.ok_or_else(|| syntax(pos, "integer literal out of 64-bit range"))
            }
            (tok, pos) => Err(syntax(pos, format!("expected integer, found {tok}"))),
        }
    }

    fn program(mut self) -> Result<ProgramIR, ParseError> {
        loop {
            let (tok, pos) = self.peek().clone();
            match tok {
                Tok::Eof => break,
                Tok::Input => {
                    self.next();
                    let (name, pos) = self.ident()?;
                    self.declare(name, VarKind::Input, pos)?;
                    self.expect(Tok::Semi)?;
                }
                Tok::Const => {
                    self.next();
                    let (name, pos) = self.ident()?;
                    self.expect(Tok::Eq)?;
                    let value = self.signed_int()?;
                    self.declare(name, VarKind::Const(value), pos)?;
                    self.expect(Tok::Semi)?;
                }
                Tok::Output => {
                    self.next();
                    let (name, pos) = self.ident()?;
                    if self.pending_outputs.iter().any(|(n, _)| *n == name) {
                        return Err(ParseError::DuplicateDefinition { pos, name });
                    }
                    self.pending_outputs.push((name, pos));
                    self.expect(Tok::Semi)?;
                }
                Tok::Ident(_) => self.assignment()?,
                other => {
                    return Err(syntax(pos, format!("expected a statement, found {other}")));
                }
            }
        }
        for (name, pos) in std::mem::take(&mut self.pending_outputs) {
            match self.names.get(&name) {
                Some(&id) => self.outputs.push((id, pos)),
                None => return Err(ParseError::UndefinedVariable { pos, name }),
            }
        }
        let ir = ProgramIR {
            vars: self.vars,
            instructions: self.instructions,
            outputs: self.outputs.into_iter().map(|(id, _)| id).collect(),
        };
        debug_assert_eq!(ir.validate(), Ok(()));
        Ok(ir)
    }

    fn assignment(&mut self) -> Result<(), ParseError> {
        let (name, pos) = self.ident()?;
        if self.names.contains_key(&name) {
            return Err(ParseError::DuplicateDefinition { pos, name });
        }
        self.expect(Tok::Eq)?;
        let value = self.expr(0)?;
        self.expect(Tok::Semi)?;
        // Declared only now so the right-hand side cannot refer to it.
        let dst = self.declare(name, VarKind::Named, pos)?;
        let ins = match value {
            Lowered::Var(src) => Instruction {
                opcode: Opcode::Move,
                dst,
                operands: vec![src],
            },
            Lowered::Pending(opcode, a, b) => Instruction {
                opcode,
                dst,
                operands: vec![a, b],
            },
        };
        self.instructions.push(ins);
        Ok(())
    }

    fn materialize(&mut self, l: Lowered) -> VarId {
        match l {
            Lowered::Var(v) => v,
            Lowered::Pending(opcode, a, b) => {
                let dst = self.temp();
                self.instructions.push(Instruction {
                    opcode,
                    dst,
                    operands: vec![a, b],
                });
                dst
            }
        }
    }

    fn expr(&mut self, depth: usize) -> Result<Lowered, ParseError> {
        let mut lhs = self.term(depth)?;
        loop {
            let opcode = match self.peek().0 {
                Tok::Plus => Opcode::Add,
                Tok::Minus => Opcode::Sub,
                _ => return Ok(lhs),
            };
            self.next();
            let a = self.materialize(lhs);
            let rhs = self.term(depth)?;
            let b = self.materialize(rhs);
            lhs = Lowered::Pending(opcode, a, b);
        }
    }

    fn term(&mut self, depth: usize) -> Result<Lowered, ParseError> {
        let mut lhs = self.factor(depth)?;
        while self.peek().0 == Tok::Star {
            self.next();
            let a = self.materialize(lhs);
            let rhs = self.factor(depth)?;
            let b = self.materialize(rhs);
            lhs = Lowered::Pending(Opcode::Mul, a, b);
        }
        Ok(lhs)
    }

    fn factor(&mut self, depth: usize) -> Result<Lowered, ParseError> {
        let (tok, pos) = self.peek().clone();
        match tok {
            Tok::Ident(name) => {
                self.next();
                match self.names.get(&name) {
                    Some(&id) => Ok(Lowered::Var(id)),
                    None => Err(ParseError::UndefinedVariable { pos, name }),
                }
            }
            Tok::Int(_) | Tok::Minus => {
                let value = self.signed_int()?;
                Ok(Lowered::Var(self.literal(value)))
            }
            Tok::LParen => {
                if depth >= MAX_DEPTH {
                    return Err(syntax(pos, "expression nested too deeply"));
                }
                self.next();
                let inner = self.expr(depth + 1)?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            other => Err(syntax(pos, format!("expected an operand, found {other}"))),
        }
    }
}

pub fn parse_program(text: &str) -> Result<ProgramIR, ParseError> {
    let toks = lex(text)?;
    Parser {
        toks,
        at: 0,
        vars: Vec::new(),
        names: HashMap::new(),
        instructions: Vec::new(),
        outputs: Vec::new(),
        pending_outputs: Vec::new(),
        temps: 0,
        literals: 0,
    }
    .program()
}
