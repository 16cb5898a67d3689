//! Sandboxed arithmetic: numbers, `+ - * /` (and `− × ÷`), unary minus,
//! parentheses, one comparison, and named references bound by the caller.
//! There are no functions and no way to reach anything but the bindings.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::CmpOp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalcError {
    #[error("syntax error at {position}: expected {expected}")]
    Syntax { position: usize, expected: String },
    #[error("division by zero")]
    DivideByZero,
    #[error("unbound reference `{0}`")]
    UnboundReference(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CalcExpr {
    Num(f64),
    Bool(bool),
    Ref(String),
    Neg(Box<CalcExpr>),
    Bin(BinOp, Box<CalcExpr>, Box<CalcExpr>),
    Cmp(CmpOp, Box<CalcExpr>, Box<CalcExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CalcValue {
    Num(f64),
    Bool(bool),
}

impl CalcValue {
    pub fn as_f64(self) -> Option<f64> {
        match self {
            CalcValue::Num(n) => Some(n),
            CalcValue::Bool(_) => None,
        }
    }
}

impl fmt::Display for CalcValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CalcValue::Num(n) => write!(f, "{n}"),
            CalcValue::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    Cmp(CmpOp),
    LParen,
    RParen,
}

fn syntax(position: usize, expected: &str) -> CalcError {
    CalcError::Syntax {
        position,
        expected: expected.into(),
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, CalcError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let next = chars.get(i + 1).map(|(_, c)| *c);
        let (tok, len) = match c {
            '0'..='9' | '.' => {
                let mut j = i;
                while j < chars.len() && (chars[j].1.is_ascii_digit() || chars[j].1 == '.') {
                    j += 1;
                }
                if j < chars.len() && matches!(chars[j].1, 'e' | 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && matches!(chars[k].1, '+' | '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].1.is_ascii_digit() {
                        while k < chars.len() && chars[k].1.is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let end = chars.get(j).map_or(src.len(), |(p, _)| *p);
                let n: f64 = src[pos..end].parse().map_err(|_| syntax(pos, "number"))?;
                (Tok::Num(n), j - i)
            }
            c if c.is_alphabetic() || c == '_' || c == '$' => {
                let mut j = i + 1;
                while j < chars.len() && (chars[j].1.is_alphanumeric() || matches!(chars[j].1, '_' | '.')) {
                    j += 1;
                }
                let end = chars.get(j).map_or(src.len(), |(p, _)| *p);
                (Tok::Ident(src[pos..end].to_string()), j - i)
            }
            '+' => (Tok::Op('+'), 1),
            '-' | '−' => (Tok::Op('-'), 1),
            '*' | '×' => (Tok::Op('*'), 1),
            '/' | '÷' => (Tok::Op('/'), 1),
            '(' => (Tok::LParen, 1),
            ')' => (Tok::RParen, 1),
            '≤' => (Tok::Cmp(CmpOp::Le), 1),
            '≥' => (Tok::Cmp(CmpOp::Ge), 1),
            '≠' => (Tok::Cmp(CmpOp::Ne), 1),
            '<' if next == Some('=') => (Tok::Cmp(CmpOp::Le), 2),
            '>' if next == Some('=') => (Tok::Cmp(CmpOp::Ge), 2),
            '!' if next == Some('=') => (Tok::Cmp(CmpOp::Ne), 2),
            '=' if next == Some('=') => (Tok::Cmp(CmpOp::Eq), 2),
            '<' => (Tok::Cmp(CmpOp::Lt), 1),
            '>' => (Tok::Cmp(CmpOp::Gt), 1),
            '=' => (Tok::Cmp(CmpOp::Eq), 1),
            _ => return Err(syntax(pos, "expression")),
        };
        out.push((tok, pos));
        i += len;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |(_, p)| *p)
    }

    fn comparison(&mut self) -> Result<CalcExpr, CalcError> {
        let left = self.sum()?;
        if let Some(Tok::Cmp(op)) = self.peek().cloned() {
            self.idx += 1;
            let right = self.sum()?;
            return Ok(CalcExpr::Cmp(op, Box::new(left), Box::new(right)));
        }
        Ok(left)
    }

    fn sum(&mut self) -> Result<CalcExpr, CalcError> {
        let mut left = self.product()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.idx += 1;
            let right = self.product()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            left = CalcExpr::Bin(op, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn product(&mut self) -> Result<CalcExpr, CalcError> {
        let mut left = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.idx += 1;
            let right = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            left = CalcExpr::Bin(op, Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<CalcExpr, CalcError> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.idx += 1;
                Ok(CalcExpr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.idx += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<CalcExpr, CalcError> {
        let pos = self.pos();
        let tok = self.peek().cloned();
        self.idx += 1;
        match tok {
            Some(Tok::Num(n)) => Ok(CalcExpr::Num(n)),
            Some(Tok::Ident(name)) if name == "true" => Ok(CalcExpr::Bool(true)),
            Some(Tok::Ident(name)) if name == "false" => Ok(CalcExpr::Bool(false)),
            Some(Tok::Ident(name)) => Ok(CalcExpr::Ref(name)),
            Some(Tok::LParen) => {
                let inner = self.comparison()?;
                let close = self.pos();
                if self.peek() != Some(&Tok::RParen) {
                    return Err(syntax(close, ")"));
                }
                self.idx += 1;
                Ok(inner)
            }
            _ => Err(syntax(pos, "number, reference or (")),
        }
    }
}

pub fn parse_calc(text: &str) -> Result<CalcExpr, CalcError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        idx: 0,
        end: text.len(),
    };
    let e = p.comparison()?;
    if p.idx < p.toks.len() {
        return Err(syntax(p.pos(), "end of expression"));
    }
    Ok(e)
}

fn num(v: CalcValue, what: &str) -> Result<f64, CalcError> {
    v.as_f64()
        .ok_or_else(|| CalcError::TypeMismatch(format!("{what} needs a number")))
}

pub fn calculate(expr: &CalcExpr, env: &BTreeMap<String, f64>) -> Result<CalcValue, CalcError> {
    match expr {
        CalcExpr::Num(n) => Ok(CalcValue::Num(*n)),
        CalcExpr::Bool(b) => Ok(CalcValue::Bool(*b)),
        CalcExpr::Ref(name) => env
            .get(name)
            .copied()
            .map(CalcValue::Num)
            .ok_or_else(|| CalcError::UnboundReference(name.clone())),
        CalcExpr::Neg(inner) => Ok(CalcValue::Num(-num(calculate(inner, env)?, "negation")?)),
        CalcExpr::Bin(op, a, b) => {
            let x = num(calculate(a, env)?, "arithmetic")?;
            let y = num(calculate(b, env)?, "arithmetic")?;
            Ok(CalcValue::Num(match op {
                BinOp::Add => x + y,
                BinOp::Sub => x - y,
                BinOp::Mul => x * y,
                BinOp::Div if y == 0.0 => return Err(CalcError::DivideByZero),
                BinOp::Div => x / y,
            }))
        }
        CalcExpr::Cmp(op, a, b) => {
            let (x, y) = (calculate(a, env)?, calculate(b, env)?);
            let ord = match (x, y) {
                (CalcValue::Num(x), CalcValue::Num(y)) => x.partial_cmp(&y),
                (CalcValue::Bool(x), CalcValue::Bool(y)) if matches!(op, CmpOp::Eq | CmpOp::Ne) => Some(x.cmp(&y)),
                _ => return Err(CalcError::TypeMismatch("comparison operands differ in type".into())),
            };
            let Some(o) = ord else {
                return Ok(CalcValue::Bool(matches!(op, CmpOp::Ne)));
            };
            use std::cmp::Ordering::*;
            Ok(CalcValue::Bool(match op {
                CmpOp::Eq => o == Equal,
                CmpOp::Ne => o != Equal,
                CmpOp::Lt => o == Less,
                CmpOp::Le => o != Greater,
                CmpOp::Gt => o == Greater,
                CmpOp::Ge => o != Less,
            }))
        }
    }
}

/// Parses and evaluates in one go.
pub fn eval_str(text: &str, env: &BTreeMap<String, f64>) -> Result<CalcValue, CalcError> {
    calculate(&parse_calc(text)?, env)
}
