//! Reduction modulo an equation system by oriented rewriting.
//!
//! Each equation is solved for its leading jet. A jet that dominates a rule's
//! lead componentwise is replaced by the matching total derivative of the
//! rule's right-hand side; passes repeat until no jet is reducible.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::calculus::Prolongation;
use crate::error::{Error, Result};
use crate::expr::{AtomMap, Expr, MatrixAtom, ScalarAtom};
use crate::symbol::{Class, MultiIndex, Symbol};
use crate::system::{Equation, EquationSystem, JetContext};

pub const DEFAULT_PASS_LIMIT: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub name: String,
    pub symbol: Symbol,
    pub lead: MultiIndex,
    pub rhs: Expr,
}

#[derive(Clone, Debug)]
pub struct RuleSet {
    rules: Vec<Rule>,
    pub pass_limit: usize,
}

/// Outcome of a reduction run.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduced {
    pub residual: Expr,
    pub passes: usize,
    /// Set when the pass limit stopped a run that could still rewrite.
    pub exhausted: bool,
}

fn lead_text(symbol: &Symbol, lead: &MultiIndex, vars: &[Symbol]) -> String {
    crate::render::render(&Expr::jet(symbol, lead.clone(), Class::Scalar), vars)
}

fn word_invertible(word: &[MatrixAtom], ctx: &dyn JetContext) -> bool {
    word.iter().all(|a| a.inverse || (a.index.is_zero() && ctx.is_invertible(&a.symbol)))
}

/// Solves `expr = 0` for the jet `symbol_lead`, which must occur exactly once
/// in each term containing it, with invertible cofactors common to all such
/// terms.
pub fn solve_for(expr: &Expr, symbol: &Symbol, lead: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr> {
    let name = || lead_text(symbol, lead, ctx.variables());
    let mut rest = Expr::zero();
    let mut coeff = Expr::zero();
    let mut sides: Option<(Vec<MatrixAtom>, Vec<MatrixAtom>)> = None;
    let mut matrix = false;
    for (m, c) in expr.terms() {
        let in_scalars =
            m.scalars.iter().position(|(a, _)| matches!(a, ScalarAtom::Jet(s, i) if s == symbol && i == lead));
        let in_word: Vec<usize> = m
            .word
            .iter()
            .enumerate()
            .filter(|(_, w)| &w.symbol == symbol && &w.index == lead)
            .map(|(i, _)| i)
            .collect();
        let term = Expr::from_parts(expr.class(), c.clone(), m.scalars.clone(), m.word.clone());
        match (in_scalars, in_word.as_slice()) {
            (None, []) => rest.add_in_place(term),
            (Some(i), []) => {
                if m.scalars[i].1 != 1 {
                    return Err(Error::NonlinearInLeading(name()));
                }
                let mut scalars = m.scalars.clone();
                scalars.remove(i);
                let cof = Expr::from_parts(expr.class(), c.clone(), scalars, m.word.clone());
                coeff.add_in_place(cof);
            }
            (None, [j]) => {
                let w = &m.word[*j];
                if w.inverse || w.transpose {
                    return Err(Error::NonlinearInLeading(name()));
                }
                let left = m.word[..*j].to_vec();
                let right = m.word[*j + 1..].to_vec();
                match &sides {
                    None => sides = Some((left, right)),
                    Some((l, r)) if *l == left && *r == right => {}
                    Some(_) => return Err(Error::NonlinearInLeading(name())),
                }
                matrix = true;
                coeff.add_in_place(Expr::from_parts(Class::Scalar, c.clone(), m.scalars.clone(), Vec::new()));
            }
            _ => return Err(Error::NonlinearInLeading(name())),
        }
    }
    if coeff.is_zero() {
        return Err(Error::LeadingAbsent(name()));
    }
    let dominated = |e: &Expr| e.jets().iter().any(|(s, i)| s == symbol && i.dominates(lead));
    if dominated(&coeff) {
        return Err(Error::NonlinearInLeading(name()));
    }
    let solved = if matrix {
        let (left, right) = sides.expect("matrix lead");
        if !word_invertible(&left, ctx) || !word_invertible(&right, ctx) {
            return Err(Error::NonlinearInLeading(format!("{} (cofactor not invertible)", name())));
        }
        let li = Expr::word(left).inverse()?;
        let ri = Expr::word(right).inverse()?;
        -(coeff.reciprocal()? * li * &rest * ri)
    } else {
        if coeff.class() == Class::Matrix {
            return Err(Error::NonlinearInLeading(format!("{} (matrix cofactor of a scalar lead)", name())));
        }
        -(&rest * coeff.reciprocal()?)
    };
    if dominated(&solved) {
        return Err(Error::NonDecreasingRule(name()));
    }
    Ok(solved)
}

impl Rule {
    pub fn from_equation(eq: &Equation, ctx: &dyn JetContext) -> Result<Rule> {
        let (symbol, lead) = eq.lead.clone();
        let rhs = solve_for(&eq.expr, &symbol, &lead, ctx)?;
        Ok(Rule { name: eq.name.clone(), symbol, lead, rhs })
    }
}

/// Orients every equation and auxiliary rule of the system.
pub fn orient(system: &EquationSystem) -> Result<RuleSet> {
    let mut rules = Vec::new();
    for eq in system.equations.iter().chain(system.rules.iter()) {
        rules.push(Rule::from_equation(eq, system)?);
    }
    Ok(RuleSet::new(rules))
}

struct Rewrite<'a> {
    map: &'a BTreeMap<(Symbol, MultiIndex), Expr>,
}

impl AtomMap for Rewrite<'_> {
    fn jet(&mut self, s: &Symbol, i: &MultiIndex, _: Class) -> Result<Option<Expr>> {
        Ok(self.map.get(&(s.clone(), i.clone())).cloned())
    }
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        RuleSet { rules, pass_limit: DEFAULT_PASS_LIMIT }
    }

    pub fn empty() -> Self {
        RuleSet::new(Vec::new())
    }

    pub fn with_pass_limit(mut self, limit: usize) -> Self {
        self.pass_limit = limit;
        self
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn push(&mut self, rule: Rule) {
        self.rules.push(rule);
    }

    pub fn extend(&mut self, other: &RuleSet) {
        self.rules.extend(other.rules.iter().cloned());
    }

    /// The rule applied to a jet: the highest dominated lead, first declared on ties.
    pub fn rule_for(&self, s: &Symbol, i: &MultiIndex) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (k, r) in self.rules.iter().enumerate() {
            if &r.symbol != s || !i.dominates(&r.lead) {
                continue;
            }
            if best.is_none_or(|b| r.lead.order() > self.rules[b].lead.order()) {
                best = Some(k);
            }
        }
        best
    }

    pub fn is_reducible(&self, e: &Expr) -> bool {
        e.jets().iter().any(|(s, i)| self.rule_for(s, i).is_some())
    }

    /// Rewrites until no jet is reducible or the pass limit is hit.
    pub fn reduce(&self, e: &Expr, ctx: &dyn JetContext) -> Result<Reduced> {
        let mut prolongations: BTreeMap<usize, Prolongation> = BTreeMap::new();
        let mut current = e.clone();
        let sym = |s: &Symbol| ctx.is_symmetric(s);
        for pass in 0..=self.pass_limit {
            let mut map = BTreeMap::new();
            for (s, i) in current.jets() {
                let Some(k) = self.rule_for(&s, &i) else { continue };
                let rule = &self.rules[k];
                let p = prolongations.entry(k).or_insert_with(|| Prolongation::new(rule.rhs.clone()));
                let diff = i.minus(&rule.lead).expect("dominated");
                map.insert((s, i), p.get(&diff, ctx)?);
            }
            if map.is_empty() {
                return Ok(Reduced { residual: current, passes: pass, exhausted: false });
            }
            if pass == self.pass_limit {
                break;
            }
            current = current.map_atoms(&mut Rewrite { map: &map }, &sym)?;
        }
        Ok(Reduced { residual: current, passes: self.pass_limit, exhausted: true })
    }

    /// Like [`RuleSet::reduce`], but a hit pass limit is an error.
    pub fn reduce_expr(&self, e: &Expr, ctx: &dyn JetContext) -> Result<Expr> {
        let r = self.reduce(e, ctx)?;
        if r.exhausted {
            return Err(Error::PassLimitExceeded { limit: self.pass_limit });
        }
        Ok(r.residual)
    }

    /// Describes every rule as `lead -> rhs`.
    pub fn describe(&self, system: &EquationSystem) -> Vec<String> {
        self.rules
            .iter()
            .map(|r| {
                let lead = Expr::jet(&r.symbol, r.lead.clone(), system.class_of(&r.symbol).unwrap_or(Class::Scalar));
                format!("{}: {} -> {}", r.name, system.render(&lead), system.render(&r.rhs))
            })
            .collect()
    }
}

/// Reduces `e` modulo the rules and packages the outcome as a report.
pub fn reduce_mod(id: &str, e: &Expr, rules: &RuleSet, system: &EquationSystem) -> crate::report::CheckReport {
    match rules.reduce(e, system) {
        Ok(r) => crate::report::CheckReport::from_reduction(id, r, system),
        Err(err) => crate::report::CheckReport::failure(id, &err),
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
        s.add_equation("kdv", "u_t - 6*u*u_x + u_xxx", "u_t").unwrap();
        s
    }

    #[test]
    fn kdv_rule() {
        let s = kdv();
        let rs = orient(&s).unwrap();
        assert_eq!(rs.rules()[0].rhs, s.parse("6*u*u_x - u_xxx").unwrap());
        let f = s.equations[0].expr.clone();
        let x = s.lookup("x").unwrap().clone();
        let dxf = crate::calculus::total_derivative(&f, &x, &s).unwrap();
        let r = rs.reduce(&dxf, &s).unwrap();
        assert!(r.residual.is_zero());
        assert!(!r.exhausted);
    }

    #[test]
    fn irreducible_is_fixed() {
        let s = kdv();
        let rs = orient(&s).unwrap();
        let e = s.parse("u_xx*u + x").unwrap();
        let r = rs.reduce(&e, &s).unwrap();
        assert_eq!(r.residual, e);
        assert_eq!(r.passes, 0);
    }

    #[test]
    fn orientation_errors() {
        let mut s = kdv();
        s.add_equation("bad", "u_t^2 - u", "u_t").unwrap();
        s.add_equation("absent", "u_x - u", "u_t").unwrap();
        assert!(matches!(Rule::from_equation(&s.equations[1], &s), Err(Error::NonlinearInLeading(_))));
        assert!(matches!(Rule::from_equation(&s.equations[2], &s), Err(Error::LeadingAbsent(_))));
    }

    #[test]
    fn matrix_lead_with_invertible_cofactor() {
        let mut s = EquationSystem::new();
        s.add_variable("y").unwrap();
        s.add_variable("z").unwrap();
        let j = s.add_dependent("J", Class::Matrix).unwrap();
        s.dependent_mut(&j).unwrap().invertible = true;
        s.add_dependent("X", Class::Matrix).unwrap();
        s.add_equation("bt", "inv(J)*J_y - X_z", "J_y").unwrap();
        let r = Rule::from_equation(&s.equations[0], &s).unwrap();
        assert_eq!(r.rhs, s.parse("J*X_z").unwrap());
    }

    #[test]
    fn pass_limit_reported() {
        let mut s = EquationSystem::new();
        s.add_variable("x").unwrap();
        s.add_variable("t").unwrap();
        s.add_dependent("u", Class::Scalar).unwrap();
        s.add_equation("a", "u_x - u_t", "u_x").unwrap();
        s.add_equation("b", "u_t - u_x", "u_t").unwrap();
        let rs = orient(&s).unwrap().with_pass_limit(5);
        let r = rs.reduce(&s.parse("u_x").unwrap(), &s).unwrap();
        assert!(r.exhausted);
        assert_eq!(rs.reduce_expr(&s.parse("u_x").unwrap(), &s), Err(Error::PassLimitExceeded { limit: 5 }));
    }
}
