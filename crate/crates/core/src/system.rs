//! Equation systems: declarations, name resolution and expression lowering.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::calculus::{total_derivative_pos, Characteristic};
use crate::compat::{BTSystem, ConservationLaw, LaxPair, SymmetryTemplate};
use crate::error::{Error, Result};
use crate::expr::{Expr, Func, Rational};
use crate::parse::{is_identifier, parse_ast, Ast, Span};
use crate::render::{index_from_positions, render, split_suffix};
use crate::symbol::{Class, MultiIndex, Symbol};

/// What the calculus needs to know about the ambient system.
pub trait JetContext {
    fn variables(&self) -> &[Symbol];
    /// Whether a dependent symbol varies with the variable at `pos`.
    fn depends_on(&self, symbol: &Symbol, pos: usize) -> bool;
    fn is_symmetric(&self, symbol: &Symbol) -> bool;
    fn is_invertible(&self, symbol: &Symbol) -> bool;
    /// Symbols annihilated by every Lie derivative.
    fn is_lie_constant(&self, symbol: &Symbol) -> bool;

    fn variable_position(&self, var: &Symbol) -> Option<usize> {
        self.variables().iter().position(|v| v == var)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dependent {
    pub symbol: Symbol,
    pub class: Class,
    pub invertible: bool,
    pub symmetric: bool,
    /// Constant in every variable.
    pub constant: bool,
    /// Positions of the variables it does not depend on.
    pub constant_in: Vec<usize>,
}

/// An equation `expr = 0` with the jet it is solved for.
#[derive(Clone, Debug, PartialEq)]
pub struct Equation {
    pub name: String,
    pub expr: Expr,
    pub lead: (Symbol, MultiIndex),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Macro {
    pub params: Vec<String>,
    pub body: Ast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Variable(usize),
    Parameter,
    Dependent(usize),
}

#[derive(Clone, Debug, Default)]
pub struct EquationSystem {
    names: BTreeMap<String, (Symbol, Kind)>,
    next_rank: u32,
    variables: Vec<Symbol>,
    parameters: Vec<Symbol>,
    dependents: Vec<Dependent>,
    macros: BTreeMap<String, Macro>,
    pub equations: Vec<Equation>,
    /// Auxiliary substitution rules such as potential definitions.
    pub rules: Vec<Equation>,
    pub characteristics: Vec<Characteristic>,
    pub laws: Vec<ConservationLaw>,
    pub lax_pairs: Vec<LaxPair>,
    pub bts: Vec<BTSystem>,
    pub template: Option<SymmetryTemplate>,
}

impl EquationSystem {
    pub fn new() -> Self {
        Self::default()
    }

    fn declare(&mut self, name: &str, kind: Kind) -> Result<Symbol> {
        if !is_identifier(name) {
            return Err(Error::Invalid(format!("'{name}' is not a valid identifier")));
        }
        if self.names.contains_key(name) || self.macros.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        let s = Symbol::new(self.next_rank, name);
        self.next_rank += 1;
        self.names.insert(name.to_string(), (s.clone(), kind));
        Ok(s)
    }

    pub fn add_variable(&mut self, name: &str) -> Result<Symbol> {
        let s = self.declare(name, Kind::Variable(self.variables.len()))?;
        self.variables.push(s.clone());
        Ok(s)
    }

    pub fn add_parameter(&mut self, name: &str) -> Result<Symbol> {
        let s = self.declare(name, Kind::Parameter)?;
        self.parameters.push(s.clone());
        Ok(s)
    }

    pub fn add_dependent(&mut self, name: &str, class: Class) -> Result<Symbol> {
        let s = self.declare(name, Kind::Dependent(self.dependents.len()))?;
        self.dependents.push(Dependent {
            symbol: s.clone(),
            class,
            invertible: false,
            symmetric: false,
            constant: false,
            constant_in: Vec::new(),
        });
        Ok(s)
    }

    /// Declares a dependent with the properties of `like`, choosing an unused
    /// name that starts with `base`.
    pub fn fresh_dependent(&mut self, base: &str, like: &Symbol) -> Result<Symbol> {
        let template = self.dependent(like).ok_or_else(|| Error::UnknownSymbol(like.name().into()))?.clone();
        let mut name = String::from(base);
        let mut k = 1;
        while self.names.contains_key(&name) || self.macros.contains_key(&name) {
            name = format!("{base}{k}");
            k += 1;
        }
        let s = self.add_dependent(&name, template.class)?;
        let d = self.dependent_mut(&s).expect("just declared");
        d.invertible = template.invertible;
        d.symmetric = template.symmetric;
        d.constant = template.constant;
        d.constant_in = template.constant_in;
        Ok(s)
    }

    pub fn add_macro(&mut self, name: &str, params: &[&str], body: &str) -> Result<()> {
        if !is_identifier(name) {
            return Err(Error::Invalid(format!("'{name}' is not a valid macro name")));
        }
        if self.names.contains_key(name) || self.macros.contains_key(name) {
            return Err(Error::DuplicateName(name.to_string()));
        }
        let body = parse_ast(body)?;
        self.macros.insert(name.to_string(), Macro { params: params.iter().map(|p| p.to_string()).collect(), body });
        Ok(())
    }

    pub fn variables(&self) -> &[Symbol] {
        &self.variables
    }

    pub fn parameters(&self) -> &[Symbol] {
        &self.parameters
    }

    pub fn dependents(&self) -> &[Dependent] {
        &self.dependents
    }

    pub fn macros(&self) -> &BTreeMap<String, Macro> {
        &self.macros
    }

    pub fn dependent(&self, s: &Symbol) -> Option<&Dependent> {
        match self.names.get(s.name()) {
            Some((sym, Kind::Dependent(i))) if sym == s => Some(&self.dependents[*i]),
            _ => None,
        }
    }

    pub fn dependent_mut(&mut self, s: &Symbol) -> Option<&mut Dependent> {
        match self.names.get(s.name()) {
            Some((sym, Kind::Dependent(i))) if sym == s => Some(&mut self.dependents[*i]),
            _ => None,
        }
    }

    pub fn lookup(&self, name: &str) -> Option<&Symbol> {
        self.names.get(name).map(|(s, _)| s)
    }

    pub fn is_parameter(&self, s: &Symbol) -> bool {
        matches!(self.names.get(s.name()), Some((sym, Kind::Parameter)) if sym == s)
    }

    pub fn is_variable(&self, s: &Symbol) -> bool {
        matches!(self.names.get(s.name()), Some((sym, Kind::Variable(_))) if sym == s)
    }

    pub fn class_of(&self, s: &Symbol) -> Option<Class> {
        self.dependent(s).map(|d| d.class)
    }

    pub fn parse(&self, text: &str) -> Result<Expr> {
        self.lower(&parse_ast(text)?)
    }

    /// Parses a single jet reference such as `u_xt` or `J_yyb`.
    pub fn parse_jet(&self, text: &str) -> Result<(Symbol, MultiIndex)> {
        let ast = parse_ast(text)?;
        let span = ast.span();
        let Ast::Name { name, suffix, span: nspan } = ast else {
            return Err(Error::SyntaxError { message: "expected a jet".into(), span });
        };
        let symbol = match self.names.get(&name) {
            Some((s, Kind::Dependent(_))) => s.clone(),
            _ => return Err(Error::UndeclaredSymbol { name, span: nspan }),
        };
        let index = match suffix {
            None => MultiIndex::zero(),
            Some((s, sspan)) => self.suffix_index(&s, sspan)?,
        };
        Ok((symbol, index))
    }

    pub fn render(&self, e: &Expr) -> String {
        render(e, &self.variables)
    }

    pub fn add_equation(&mut self, name: &str, text: &str, lead: &str) -> Result<()> {
        let expr = self.parse(text)?;
        let lead = self.parse_jet(lead)?;
        self.equations.push(Equation { name: name.to_string(), expr, lead });
        Ok(())
    }

    pub fn add_rule(&mut self, name: &str, text: &str, lead: &str) -> Result<()> {
        let expr = self.parse(text)?;
        let lead = self.parse_jet(lead)?;
        self.rules.push(Equation { name: name.to_string(), expr, lead });
        Ok(())
    }

    /// The first equation solved for a derivative of `target`.
    pub fn equation_for(&self, target: &Symbol) -> Option<&Equation> {
        self.equations.iter().find(|e| &e.lead.0 == target)
    }

    pub fn equation(&self, name: &str) -> Option<&Equation> {
        self.equations.iter().find(|e| e.name == name)
    }

    pub fn characteristic(&self, name: &str) -> Option<&Characteristic> {
        self.characteristics.iter().find(|c| c.name == name)
    }

    pub fn law(&self, name: &str) -> Option<&ConservationLaw> {
        self.laws.iter().find(|c| c.name == name)
    }

    pub fn lax_pair(&self, name: &str) -> Option<&LaxPair> {
        self.lax_pairs.iter().find(|c| c.name == name)
    }

    pub fn bt(&self, name: &str) -> Option<&BTSystem> {
        self.bts.iter().find(|c| c.name == name)
    }

    fn split(&self, suffix: &str, span: Span) -> Result<Vec<(String, Span)>> {
        let positions = split_suffix(suffix, &self.variables).ok_or_else(|| Error::SyntaxError {
            message: format!("'{suffix}' is not a sequence of declared variables"),
            span,
        })?;
        Ok(positions.into_iter().map(|p| (self.variables[p].name().to_string(), span)).collect())
    }

    /// The multi-index spelled by a derivative suffix such as `xt`.
    pub fn suffix_index(&self, suffix: &str, span: Span) -> Result<MultiIndex> {
        let positions = split_suffix(suffix, &self.variables).ok_or_else(|| Error::SyntaxError {
            message: format!("'{suffix}' is not a sequence of declared variables"),
            span,
        })?;
        Ok(index_from_positions(&positions))
    }

    fn one_arg<'a>(&self, name: &str, args: &'a [Ast], span: Span) -> Result<&'a Ast> {
        match args {
            [a] => Ok(a),
            _ => Err(Error::SyntaxError { message: format!("{name} takes one argument"), span }),
        }
    }

    /// Resolves names and builds the normal form of a raw tree.
    pub fn lower(&self, ast: &Ast) -> Result<Expr> {
        match ast {
            Ast::Num(n, _) => Ok(Expr::constant(Rational::from_integer(n.clone()))),
            Ast::Identity(_) => Ok(Expr::identity()),
            Ast::Name { name, suffix, span } => {
                let Some((sym, kind)) = self.names.get(name) else {
                    return Err(Error::UndeclaredSymbol { name: name.clone(), span: *span });
                };
                match (kind, suffix) {
                    (Kind::Dependent(i), _) => {
                        let index = match suffix {
                            None => MultiIndex::zero(),
                            Some((s, sspan)) => self.suffix_index(s, *sspan)?,
                        };
                        Ok(Expr::jet(sym, index, self.dependents[*i].class))
                    }
                    (_, Some((_, sspan))) => Err(Error::SyntaxError {
                        message: format!("'{name}' is not a dependent symbol and takes no derivative suffix"),
                        span: *sspan,
                    }),
                    (Kind::Variable(_), None) => Ok(Expr::var(sym)),
                    (Kind::Parameter, None) => Ok(Expr::param(sym)),
                }
            }
            Ast::Call { name, args, span } => {
                if let Some(f) = Func::from_name(name) {
                    let a = self.lower(self.one_arg(name, args, *span)?)?;
                    return Expr::func(f, &a);
                }
                match name.as_str() {
                    "inv" => self.lower(self.one_arg(name, args, *span)?)?.inverse(),
                    "tr" => {
                        let a = self.lower(self.one_arg(name, args, *span)?)?;
                        Ok(a.transpose(&|s| self.is_symmetric(s)))
                    }
                    "sqrt" => {
                        let a = self.lower(self.one_arg(name, args, *span)?)?;
                        let q = a.as_constant().ok_or_else(|| Error::SyntaxError {
                            message: "sqrt takes a rational constant".into(),
                            span: *span,
                        })?;
                        Expr::sqrt_rational(&q)
                    }
                    "comm" => match args.as_slice() {
                        [a, b] => {
                            let (a, b) = (self.lower(a)?, self.lower(b)?);
                            (&a * &b).try_sub(&(&b * &a))
                        }
                        _ => Err(Error::SyntaxError { message: "comm takes two arguments".into(), span: *span }),
                    },
                    _ => {
                        let Some(m) = self.macros.get(name) else {
                            return Err(Error::UndeclaredSymbol {
                                name: name.clone(),
                                span: Span::new(span.start, span.start + name.len()),
                            });
                        };
                        if m.params.len() != args.len() {
                            return Err(Error::SyntaxError {
                                message: format!("{name} takes {} arguments", m.params.len()),
                                span: *span,
                            });
                        }
                        let bindings: Vec<(String, Ast)> = m.params.iter().cloned().zip(args.iter().cloned()).collect();
                        let expanded = m.body.replace_names(&bindings, &|s, sp| self.split(s, sp))?;
                        self.lower(&expanded)
                    }
                }
            }
            Ast::Deriv { expr, vars, .. } => {
                let mut e = self.lower(expr)?;
                for (v, vspan) in vars {
                    let pos = match self.names.get(v) {
                        Some((_, Kind::Variable(p))) => *p,
                        _ => {
                            return Err(Error::SyntaxError {
                                message: format!("'{v}' is not an independent variable"),
                                span: *vspan,
                            })
                        }
                    };
                    e = total_derivative_pos(&e, pos, self)?;
                }
                Ok(e)
            }
            Ast::Neg(a, _) => Ok(-self.lower(a)?),
            Ast::Add(a, b) => self.lower(a)?.try_add(&self.lower(b)?),
            Ast::Sub(a, b) => self.lower(a)?.try_sub(&self.lower(b)?),
            Ast::Mul(a, b) => Ok(self.lower(a)? * self.lower(b)?),
            Ast::Div(a, b) => {
                let d = self.lower(b)?;
                if d.class() == Class::Matrix {
                    return Err(Error::ClassMismatch("division by a matrix; use inv".into()));
                }
                Ok(self.lower(a)? * d.reciprocal()?)
            }
            Ast::Pow(a, k, _) => self.lower(a)?.pow(*k),
        }
    }

    /// Expands every macro call, leaving a tree of built-in operations.
    pub fn expand_macros(&self, ast: &Ast) -> Result<Ast> {
        let rec = |a: &Ast| self.expand_macros(a).map(alloc::boxed::Box::new);
        Ok(match ast {
            Ast::Call { name, args, span } => {
                let args: Vec<Ast> = args.iter().map(|a| self.expand_macros(a)).collect::<Result<_>>()?;
                match self.macros.get(name) {
                    Some(m) if m.params.len() == args.len() => {
                        let bindings: Vec<(String, Ast)> = m.params.iter().cloned().zip(args).collect();
                        self.expand_macros(&m.body.replace_names(&bindings, &|s, sp| self.split(s, sp))?)?
                    }
                    Some(m) => {
                        return Err(Error::SyntaxError {
                            message: format!("{name} takes {} arguments", m.params.len()),
                            span: *span,
                        })
                    }
                    None => Ast::Call { name: name.clone(), args, span: *span },
                }
            }
            Ast::Num(..) | Ast::Identity(_) | Ast::Name { .. } => ast.clone(),
            Ast::Deriv { expr, vars, span } => Ast::Deriv { expr: rec(expr)?, vars: vars.clone(), span: *span },
            Ast::Neg(a, s) => Ast::Neg(rec(a)?, *s),
            Ast::Add(a, b) => Ast::Add(rec(a)?, rec(b)?),
            Ast::Sub(a, b) => Ast::Sub(rec(a)?, rec(b)?),
            Ast::Mul(a, b) => Ast::Mul(rec(a)?, rec(b)?),
            Ast::Div(a, b) => Ast::Div(rec(a)?, rec(b)?),
            Ast::Pow(a, k, s) => Ast::Pow(rec(a)?, *k, *s),
        })
    }

    pub fn symmetric_fn(&self) -> impl Fn(&Symbol) -> bool + '_ {
        move |s| self.is_symmetric(s)
    }
}

impl JetContext for EquationSystem {
    fn variables(&self) -> &[Symbol] {
        &self.variables
    }

    fn depends_on(&self, symbol: &Symbol, pos: usize) -> bool {
        match self.dependent(symbol) {
            Some(d) => !d.constant && !d.constant_in.contains(&pos),
            None => false,
        }
    }

    fn is_symmetric(&self, symbol: &Symbol) -> bool {
        self.dependent(symbol).is_some_and(|d| d.symmetric)
    }

    fn is_invertible(&self, symbol: &Symbol) -> bool {
        self.dependent(symbol).is_some_and(|d| d.invertible)
    }

    fn is_lie_constant(&self, symbol: &Symbol) -> bool {
        self.dependent(symbol).is_some_and(|d| d.constant || !d.constant_in.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kdv() -> EquationSystem {
        let mut s = EquationSystem::new();
        s.add_variable("x").unwrap();
        s.add_variable("t").unwrap();
        s.add_dependent("u", Class::Scalar).unwrap();
        s
    }

    #[test]
    fn undeclared_symbol_has_span() {
        let s = kdv();
        match s.parse("u + w") {
            Err(Error::UndeclaredSymbol { name, span }) => {
                assert_eq!(name, "w");
                assert_eq!(span, Span::new(4, 5));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = kdv();
        assert_eq!(s.add_parameter("u"), Err(Error::DuplicateName("u".into())));
    }

    #[test]
    fn suffix_round_trip() {
        let s = kdv();
        let e = s.parse("u_t - 6*u*u_x + u_xxx").unwrap();
        let text = s.render(&e);
        assert_eq!(s.parse(&text).unwrap(), e);
        assert_eq!(s.parse("D[u; x, x, x]").unwrap(), s.parse("u_xxx").unwrap());
    }

    #[test]
    fn class_mismatch_detected() {
        let mut s = kdv();
        s.add_dependent("A", Class::Matrix).unwrap();
        assert!(matches!(s.parse("A + u"), Err(Error::ClassMismatch(_))));
        assert!(matches!(s.parse("sin(A)"), Err(Error::ClassMismatch(_))));
        assert_eq!(s.parse("inv(u)"), Err(Error::InverseOfNonMatrix));
    }

    #[test]
    fn macros_expand_with_suffixes() {
        let mut s = kdv();
        s.add_macro("Dx", &["P"], "P_x").unwrap();
        assert_eq!(s.parse("Dx(u*u)").unwrap(), s.parse("2*u*u_x").unwrap());
    }
}
