//! Deterministic text rendering in the input grammar.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::{One, Signed};

use crate::expr::{Expr, MatrixAtom, Monomial, Rational, ScalarAtom};
use crate::symbol::{Class, MultiIndex, Symbol};

/// Splits a derivative suffix into variable positions by greedy longest match.
pub fn split_suffix(suffix: &str, vars: &[Symbol]) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    let mut rest = suffix;
    while !rest.is_empty() {
        let (pos, len) = vars
            .iter()
            .enumerate()
            .filter(|(_, v)| rest.starts_with(v.name()))
            .map(|(i, v)| (i, v.name().len()))
            .max_by_key(|&(_, l)| l)?;
        out.push(pos);
        rest = &rest[len..];
    }
    Some(out)
}

pub fn index_from_positions(positions: &[usize]) -> MultiIndex {
    positions.iter().fold(MultiIndex::zero(), |acc, &p| acc.incremented(p))
}

fn jet_text(name: &str, index: &MultiIndex, vars: &[Symbol]) -> String {
    if index.is_zero() {
        return String::from(name);
    }
    let steps = index.steps();
    let suffix: String = steps.iter().map(|&p| vars[p].name()).collect();
    if split_suffix(&suffix, vars).map(|ps| index_from_positions(&ps)).as_ref() == Some(index) {
        format!("{name}_{suffix}")
    } else {
        let list: Vec<&str> = steps.iter().map(|&p| vars[p].name()).collect();
        format!("D[{name}; {}]", list.join(", "))
    }
}

fn scalar_atom(a: &ScalarAtom, vars: &[Symbol]) -> String {
    match a {
        ScalarAtom::Radical(n) => format!("sqrt({n})"),
        ScalarAtom::Param(s) | ScalarAtom::Var(s) => String::from(s.name()),
        ScalarAtom::Jet(s, i) => jet_text(s.name(), i, vars),
        ScalarAtom::Func(f, x) => format!("{}({})", f.name(), render(x, vars)),
        ScalarAtom::Group(x) => format!("({})", render(x, vars)),
    }
}

fn matrix_atom(a: &MatrixAtom, vars: &[Symbol]) -> String {
    let mut s = jet_text(a.symbol.name(), &a.index, vars);
    if a.transpose {
        s = format!("tr({s})");
    }
    if a.inverse {
        s = format!("inv({s})");
    }
    s
}

fn term(m: &Monomial, c: &Rational, class: Class, vars: &[Symbol]) -> String {
    let mut factors: Vec<String> = Vec::new();
    for (a, e) in &m.scalars {
        let base = scalar_atom(a, vars);
        factors.push(if *e == 1 { base } else { format!("{base}^{e}") });
    }
    for w in &m.word {
        factors.push(matrix_atom(w, vars));
    }
    if class == Class::Matrix && m.word.is_empty() {
        factors.push(String::from("I"));
    }
    let coeff = if c.is_integer() { format!("{}", c.numer()) } else { format!("{}/{}", c.numer(), c.denom()) };
    if factors.is_empty() {
        return coeff;
    }
    let body = factors.join("*");
    if c.is_one() {
        body
    } else {
        format!("{coeff}*{body}")
    }
}

/// Renders an expression; variable names are needed for jet suffixes.
pub fn render(e: &Expr, vars: &[Symbol]) -> String {
    if e.is_zero() {
        return String::from("0");
    }
    let mut out = String::new();
    for (i, (m, c)) in e.terms().enumerate() {
        let negative = c.is_negative();
        let text = term(m, &c.abs(), e.class(), vars);
        match (i, negative) {
            (0, false) => {}
            (0, true) => out.push('-'),
            (_, false) => out.push_str(" + "),
            (_, true) => out.push_str(" - "),
        }
        out.push_str(&text);
    }
    out
}
