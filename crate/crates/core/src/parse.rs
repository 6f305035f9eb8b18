//! Tokenizer and recursive-descent parser producing a raw syntax tree.
//!
//! The tree is deliberately unnormalized; [`crate::EquationSystem::lower`]
//! resolves names against a system and builds the normal form.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;

use crate::error::{Error, Result};

/// Byte offsets `start..end` into the parsed text.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]

pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    fn to(self, other: Span) -> Span {
        Span { start: self.start, end: other.end }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

pub const RESERVED: &[&str] = &["sin", "cos", "exp", "ln", "arctan", "sqrt", "inv", "tr", "comm", "D", "I"];

/// Splits a derivative suffix into variable names with their spans.
pub type SuffixSplit<'a> = dyn Fn(&str, Span) -> Result<Vec<(String, Span)>> + 'a;

#[derive(Clone, Debug, PartialEq)]
pub enum Ast {
    Num(BigInt, Span),
    /// A name with an optional derivative suffix (`u_xt`).
    Name {
        name: String,
        suffix: Option<(String, Span)>,
        span: Span,
    },
    Identity(Span),
    /// Function, `inv`, `tr`, `comm`, `sqrt` or macro application.
    Call {
        name: String,
        args: Vec<Ast>,
        span: Span,
    },
    Deriv {
        expr: Box<Ast>,
        vars: Vec<(String, Span)>,
        span: Span,
    },
    Neg(Box<Ast>, Span),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, i32, Span),
}

impl Ast {
    pub fn span(&self) -> Span {
        match self {
            Ast::Num(_, s) | Ast::Identity(s) | Ast::Neg(_, s) | Ast::Pow(_, _, s) => *s,
            Ast::Name { span, .. } | Ast::Call { span, .. } | Ast::Deriv { span, .. } => *span,
            Ast::Add(a, b) | Ast::Sub(a, b) | Ast::Mul(a, b) | Ast::Div(a, b) => a.span().to(b.span()),
        }
    }

    /// Replaces every bare occurrence of a name by a tree. A suffixed
    /// occurrence `P_xy` becomes `D[arg; x, y]` using `split` on the suffix.
    pub fn replace_names(&self, bindings: &[(String, Ast)], split: &SuffixSplit<'_>) -> Result<Ast> {
        let rec = |a: &Ast| a.replace_names(bindings, split).map(Box::new);
        Ok(match self {
            Ast::Name { name, suffix, span } => match bindings.iter().find(|(n, _)| n == name) {
                Some((_, arg)) => match suffix {
                    None => arg.clone(),
                    Some((s, sspan)) => {
                        Ast::Deriv { expr: Box::new(arg.clone()), vars: split(s, *sspan)?, span: *span }
                    }
                },
                None => self.clone(),
            },
            Ast::Num(..) | Ast::Identity(_) => self.clone(),
            Ast::Call { name, args, span } => Ast::Call {
                name: name.clone(),
                args: args.iter().map(|a| a.replace_names(bindings, split)).collect::<Result<_>>()?,
                span: *span,
            },
            Ast::Deriv { expr, vars, span } => Ast::Deriv { expr: rec(expr)?, vars: vars.clone(), span: *span },
            Ast::Neg(a, s) => Ast::Neg(rec(a)?, *s),
            Ast::Add(a, b) => Ast::Add(rec(a)?, rec(b)?),
            Ast::Sub(a, b) => Ast::Sub(rec(a)?, rec(b)?),
            Ast::Mul(a, b) => Ast::Mul(rec(a)?, rec(b)?),
            Ast::Div(a, b) => Ast::Div(rec(a)?, rec(b)?),
            Ast::Pow(a, k, s) => Ast::Pow(rec(a)?, *k, *s),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Punct(char),
    End,
}

struct Lexer<'a> {
    text: &'a str,
    toks: Vec<(Tok, Span)>,
}

fn syntax(message: impl Into<String>, span: Span) -> Error {
    Error::SyntaxError { message: message.into(), span }
}

impl<'a> Lexer<'a> {
    fn run(text: &'a str) -> Result<Vec<(Tok, Span)>> {
        let mut lx = Lexer { text, toks: Vec::new() };
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            if c.is_ascii_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let n: BigInt = text[start..i].parse().expect("digits");
                lx.toks.push((Tok::Num(n), Span::new(start, i)));
            } else if c.is_ascii_alphabetic() {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                lx.toks.push((Tok::Ident(text[start..i].to_string()), Span::new(start, i)));
            } else if b"+-*/^()[],;_".contains(&c) {
                lx.toks.push((Tok::Punct(c as char), Span::new(i, i + 1)));
                i += 1;
            } else {
                let ch = lx.text[i..].chars().next().unwrap();
                return Err(syntax(format!("unexpected character '{ch}'"), Span::new(i, i + ch.len_utf8())));
            }
        }
        lx.toks.push((Tok::End, Span::new(text.len(), text.len())));
        Ok(lx.toks)
    }
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Span) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Punct(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<Span> {
        if *self.peek() == Tok::Punct(c) {
            Ok(self.bump().1)
        } else {
            Err(syntax(format!("expected '{c}'"), self.span()))
        }
    }

    fn sum(&mut self) -> Result<Ast> {
        let mut lhs = self.prod()?;
        loop {
            if self.eat('+') {
                lhs = Ast::Add(Box::new(lhs), Box::new(self.prod()?));
            } else if self.eat('-') {
                lhs = Ast::Sub(Box::new(lhs), Box::new(self.prod()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn prod(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Ast::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Ast::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Ast> {
        let start = self.span();
        if self.eat('-') {
            let inner = self.unary()?;
            let span = start.to(inner.span());
            return Ok(Ast::Neg(Box::new(inner), span));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast> {
        let mut base = self.atom()?;
        while self.eat('^') {
            let neg = self.eat('-');
            let (tok, span) = self.bump();
            let Tok::Num(n) = tok else {
                return Err(syntax("expected integer exponent", span));
            };
            let k: i32 = n.try_into().map_err(|_| syntax("exponent too large", span))?;
            let k = if neg { -k } else { k };
            let s = base.span().to(span);
            base = Ast::Pow(Box::new(base), k, s);
        }
        Ok(base)
    }

    fn args(&mut self) -> Result<(Vec<Ast>, Span)> {
        self.expect('(')?;
        let mut args = Vec::new();
        if *self.peek() != Tok::Punct(')') {
            args.push(self.sum()?);
            while self.eat(',') {
                args.push(self.sum()?);
            }
        }
        let end = self.expect(')')?;
        Ok((args, end))
    }

    fn atom(&mut self) -> Result<Ast> {
        let (tok, span) = self.bump();
        match tok {
            Tok::Num(n) => Ok(Ast::Num(n, span)),
            Tok::Punct('(') => {
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) if name == "I" => Ok(Ast::Identity(span)),
            Tok::Ident(name) if name == "D" => {
                self.expect('[')?;
                let expr = self.sum()?;
                if !self.eat(';') {
                    self.expect(',')?;
                }
                let mut vars = Vec::new();
                loop {
                    let (t, s) = self.bump();
                    match t {
                        Tok::Ident(v) => vars.push((v, s)),
                        _ => return Err(syntax("expected variable name", s)),
                    }
                    if !self.eat(',') {
                        break;
                    }
                }
                let end = self.expect(']')?;
                Ok(Ast::Deriv { expr: Box::new(expr), vars, span: span.to(end) })
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Punct('(') {
                    let (args, end) = self.args()?;
                    return Ok(Ast::Call { name, args, span: span.to(end) });
                }
                if *self.peek() == Tok::Punct('_') {
                    let us = self.bump().1;
                    let (t, s) = self.bump();
                    return match t {
                        Tok::Ident(suffix) => Ok(Ast::Name { name, suffix: Some((suffix, s)), span: span.to(s) }),
                        _ => Err(syntax("expected derivative letters after '_'", us.to(s))),
                    };
                }
                if RESERVED.contains(&name.as_str()) {
                    return Err(syntax(format!("'{name}' needs arguments"), span));
                }
                Ok(Ast::Name { name, suffix: None, span })
            }
            Tok::End => Err(syntax("unexpected end of input", span)),
            Tok::Punct(c) => Err(syntax(format!("unexpected '{c}'"), span)),
        }
    }
}

/// Parses an expression into a raw tree.
pub fn parse_ast(text: &str) -> Result<Ast> {
    let toks = Lexer::run(text)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.sum()?;
    if *p.peek() != Tok::End {
        return Err(syntax("unexpected trailing input", p.span()));
    }
    Ok(e)
}

/// Is `name` a valid user identifier?
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric())
        && !RESERVED.contains(&name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let a = parse_ast("-u^2 + a*b/c").unwrap();
        match a {
            Ast::Add(l, r) => {
                assert!(matches!(*l, Ast::Neg(ref p, _) if matches!(**p, Ast::Pow(_, 2, _))));
                assert!(matches!(*r, Ast::Div(..)));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn suffix_and_calls() {
        let a = parse_ast("comm(inv(J)*D[J,y], J_zzb)").unwrap();
        let Ast::Call { name, args, .. } = a else { panic!() };
        assert_eq!(name, "comm");
        assert_eq!(args.len(), 2);
        assert!(matches!(&args[1], Ast::Name { suffix: Some((s, _)), .. } if s == "zzb"));
    }

    #[test]
    fn errors_carry_spans() {
        let text = "D? garbage";
        match parse_ast(text) {
            Err(Error::SyntaxError { span, .. }) => assert!(span.end <= text.len() && span.start <= span.end),
            other => panic!("{other:?}"),
        }
        for bad in ["", "u +", "(u", "u^x", "sin", "u $ v", "D[u; 1]"] {
            match parse_ast(bad) {
                Err(Error::SyntaxError { span, .. }) => assert!(span.end <= bad.len(), "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }
}
