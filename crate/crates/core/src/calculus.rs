//! Total derivatives, the Lie derivative along a characteristic and Lie brackets.
//!
//! All three operators are derivations that differ only in how they act on
//! jets and independent variables, so they share one Leibniz engine.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::expr::{AtomMap, Expr, Func, MatrixAtom, Rational, ScalarAtom};
use crate::symbol::{Class, MultiIndex, Symbol};
use crate::system::JetContext;

/// A symmetry characteristic `Q` for the dependent symbol `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct Characteristic {
    pub name: String,
    pub target: Symbol,
    pub expr: Expr,
}

impl Characteristic {
    pub fn new(name: impl Into<String>, target: Symbol, expr: Expr) -> Self {
        Characteristic { name: name.into(), target, expr }
    }
}

trait AtomRule {
    fn scalar_jet(&mut self, s: &Symbol, i: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr>;
    fn matrix_jet(&mut self, s: &Symbol, i: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr>;
    fn var(&mut self, s: &Symbol, ctx: &dyn JetContext) -> Expr;
}

fn derive(e: &Expr, rule: &mut dyn AtomRule, ctx: &dyn JetContext) -> Result<Expr> {
    let mut out = Expr::zero();
    for (m, c) in e.terms() {
        for (i, (a, k)) in m.scalars.iter().enumerate() {
            let d = derive_scalar(a, rule, ctx)?;
            if d.is_zero() {
                continue;
            }
            let mut scalars = m.scalars.clone();
            scalars[i].1 -= 1;
            let coeff = c * Rational::from_integer(BigInt::from(*k));
            let rest = Expr::from_parts(e.class(), coeff, scalars, m.word.clone());
            out.add_in_place(rest.mul(&d));
        }
        for (j, w) in m.word.iter().enumerate() {
            let d = derive_matrix(w, rule, ctx)?;
            if d.is_zero() {
                continue;
            }
            let left = Expr::from_parts(Class::Matrix, c.clone(), m.scalars.clone(), m.word[..j].to_vec());
            let right = Expr::word(m.word[j + 1..].to_vec());
            out.add_in_place(left.mul(&d).mul(&right));
        }
    }
    Ok(out)
}

fn derive_scalar(a: &ScalarAtom, rule: &mut dyn AtomRule, ctx: &dyn JetContext) -> Result<Expr> {
    Ok(match a {
        ScalarAtom::Radical(_) | ScalarAtom::Param(_) => Expr::zero(),
        ScalarAtom::Var(s) => rule.var(s, ctx),
        ScalarAtom::Jet(s, i) => rule.scalar_jet(s, i, ctx)?,
        ScalarAtom::Group(x) => derive(x, rule, ctx)?,
        ScalarAtom::Func(f, x) => {
            let dx = derive(x, rule, ctx)?;
            if dx.is_zero() {
                return Ok(dx);
            }
            let outer = match f {
                Func::Sin => Expr::func(Func::Cos, x)?,
                Func::Cos => -Expr::func(Func::Sin, x)?,
                Func::Exp => Expr::func(Func::Exp, x)?,
                Func::Ln => x.reciprocal()?,
                Func::Arctan => (Expr::one() + x * x).reciprocal()?,
            };
            outer.mul(&dx)
        }
    })
}

fn derive_matrix(w: &MatrixAtom, rule: &mut dyn AtomRule, ctx: &dyn JetContext) -> Result<Expr> {
    let mut base = rule.matrix_jet(&w.symbol, &w.index, ctx)?;
    if base.is_zero() {
        return Ok(base);
    }
    if w.transpose {
        base = base.transpose(&|s| ctx.is_symmetric(s));
    }
    if w.inverse {
        let a = Expr::word(vec![w.clone()]);
        base = -(&a * &base * &a);
    }
    Ok(base)
}

struct TotalD {
    pos: usize,
}

impl AtomRule for TotalD {
    fn scalar_jet(&mut self, s: &Symbol, i: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr> {
        Ok(if ctx.depends_on(s, self.pos) {
            Expr::jet(s, i.incremented(self.pos), Class::Scalar)
        } else {
            Expr::zero()
        })
    }

    fn matrix_jet(&mut self, s: &Symbol, i: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr> {
        Ok(if ctx.depends_on(s, self.pos) {
            Expr::jet(s, i.incremented(self.pos), Class::Matrix)
        } else {
            Expr::zero()
        })
    }

    fn var(&mut self, s: &Symbol, ctx: &dyn JetContext) -> Expr {
        if ctx.variables().get(self.pos) == Some(s) {
            Expr::one()
        } else {
            Expr::zero()
        }
    }
}

/// `D_v e` for the variable at position `pos`.
pub fn total_derivative_pos(e: &Expr, pos: usize, ctx: &dyn JetContext) -> Result<Expr> {
    derive(e, &mut TotalD { pos }, ctx)
}

/// `D_v e`.
pub fn total_derivative(e: &Expr, var: &Symbol, ctx: &dyn JetContext) -> Result<Expr> {
    let pos = ctx.variable_position(var).ok_or_else(|| Error::UnknownVariable(var.name().into()))?;
    total_derivative_pos(e, pos, ctx)
}

/// `D_I e` for a multi-index `I`.
pub fn total_derivative_multi(e: &Expr, index: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr> {
    let mut out = e.clone();
    for pos in index.steps() {
        out = total_derivative_pos(&out, pos, ctx)?;
    }
    Ok(out)
}

/// Memoized `D_I q` for one expression, built up one derivative at a time.
pub(crate) struct Prolongation {
    base: Expr,
    cache: BTreeMap<MultiIndex, Expr>,
}

impl Prolongation {
    pub(crate) fn new(base: Expr) -> Self {
        Prolongation { base, cache: BTreeMap::new() }
    }

    pub(crate) fn get(&mut self, index: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr> {
        if index.is_zero() {
            return Ok(self.base.clone());
        }
        if let Some(e) = self.cache.get(index) {
            return Ok(e.clone());
        }
        let pos = index.counts().iter().position(|&c| c > 0).expect("nonzero index");
        let mut prev_counts = index.counts().to_vec();
        prev_counts[pos] -= 1;
        let prev = self.get(&MultiIndex::from_counts(&prev_counts), ctx)?;
        let e = total_derivative_pos(&prev, pos, ctx)?;
        self.cache.insert(index.clone(), e.clone());
        Ok(e)
    }
}

struct Lie {
    prolongations: BTreeMap<Symbol, Prolongation>,
}

impl Lie {
    fn jet(&mut self, s: &Symbol, i: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr> {
        match self.prolongations.get_mut(s) {
            Some(p) => p.get(i, ctx),
            None if ctx.is_lie_constant(s) => Ok(Expr::zero()),
            None => Err(Error::NotLieConstant(s.name().into())),
        }
    }
}

impl AtomRule for Lie {
    fn scalar_jet(&mut self, s: &Symbol, i: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr> {
        self.jet(s, i, ctx)
    }

    fn matrix_jet(&mut self, s: &Symbol, i: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr> {
        self.jet(s, i, ctx)
    }

    fn var(&mut self, _: &Symbol, _: &dyn JetContext) -> Expr {
        Expr::zero()
    }
}

fn check_class(q: &Characteristic, class: Class) -> Result<()> {
    if !q.expr.is_zero() && q.expr.class() != class {
        return Err(Error::ClassMismatch(format!(
            "characteristic {} does not match the class of {}",
            q.name, q.target
        )));
    }
    Ok(())
}

/// Applies the Lie derivative of several characteristics at once; for
/// systems with more than one dependent symbol the derivation is additive.
pub fn lie_apply_many(chars: &[&Characteristic], e: &Expr, ctx: &dyn JetContext) -> Result<Expr> {
    let mut prolongations = BTreeMap::new();
    for q in chars {
        prolongations.insert(q.target.clone(), Prolongation::new(q.expr.clone()));
    }
    derive(e, &mut Lie { prolongations }, ctx)
}

/// `L e` for the characteristic `q`.
pub fn lie_apply(q: &Characteristic, e: &Expr, ctx: &dyn JetContext) -> Result<Expr> {
    lie_apply_many(&[q], e, ctx)
}

/// Like [`lie_apply`], also checking the class of `q` against its target.
pub fn lie_apply_checked(q: &Characteristic, target_class: Class, e: &Expr, ctx: &dyn JetContext) -> Result<Expr> {
    check_class(q, target_class)?;
    lie_apply(q, e, ctx)
}

/// `[Q1, Q2] = L1 Q2 - L2 Q1`.
pub fn lie_bracket(q1: &Characteristic, q2: &Characteristic, ctx: &dyn JetContext) -> Result<Characteristic> {
    if q1.target != q2.target {
        return Err(Error::TargetMismatch(q1.target.name().into(), q2.target.name().into()));
    }
    let expr = lie_apply(q1, &q2.expr, ctx)? - lie_apply(q2, &q1.expr, ctx)?;
    Ok(Characteristic::new(format!("[{},{}]", q1.name, q2.name), q1.target.clone(), expr))
}

struct PartialJet<'a> {
    symbol: &'a Symbol,
    index: &'a MultiIndex,
}

impl AtomRule for PartialJet<'_> {
    fn scalar_jet(&mut self, s: &Symbol, i: &MultiIndex, _: &dyn JetContext) -> Result<Expr> {
        Ok(if s == self.symbol && i == self.index { Expr::one() } else { Expr::zero() })
    }

    fn matrix_jet(&mut self, s: &Symbol, _: &MultiIndex, _: &dyn JetContext) -> Result<Expr> {
        if s == self.symbol {
            return Err(Error::MatrixClassUnsupported);
        }
        Ok(Expr::zero())
    }

    fn var(&mut self, _: &Symbol, _: &dyn JetContext) -> Expr {
        Expr::zero()
    }
}

/// Partial derivative with respect to the scalar jet coordinate `u_I`.
pub fn partial_jet(e: &Expr, symbol: &Symbol, index: &MultiIndex, ctx: &dyn JetContext) -> Result<Expr> {
    derive(e, &mut PartialJet { symbol, index }, ctx)
}

/// Replaces dependent symbols by expressions; jets of a replaced symbol
/// become total derivatives of its replacement.
pub fn substitute(e: &Expr, bindings: &BTreeMap<Symbol, Expr>, ctx: &dyn JetContext) -> Result<Expr> {
    struct Sub<'a> {
        bindings: &'a BTreeMap<Symbol, Expr>,
        prolongations: BTreeMap<Symbol, Prolongation>,
        ctx: &'a dyn JetContext,
    }
    impl AtomMap for Sub<'_> {
        fn jet(&mut self, s: &Symbol, i: &MultiIndex, _: Class) -> Result<Option<Expr>> {
            if !self.bindings.contains_key(s) {
                return Ok(None);
            }
            let p = self.prolongations.entry(s.clone()).or_insert_with(|| Prolongation::new(self.bindings[s].clone()));
            p.get(i, self.ctx).map(Some)
        }
        fn param(&mut self, s: &Symbol) -> Result<Option<Expr>> {
            Ok(self.bindings.get(s).cloned())
        }
    }
    e.map_atoms(&mut Sub { bindings, prolongations: BTreeMap::new(), ctx }, &|s| ctx.is_symmetric(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::EquationSystem;

    fn sys(matrix: bool) -> EquationSystem {
        let mut s = EquationSystem::new();
        s.add_variable("x").unwrap();
        s.add_variable("t").unwrap();
        let class = if matrix { Class::Matrix } else { Class::Scalar };
        s.add_dependent("u", class).unwrap();
        s.add_dependent("Q", class).unwrap();
        if matrix {
            s.add_dependent("A", Class::Matrix).unwrap();
        }
        s
    }

    #[test]
    fn product_rule_example() {
        let s = sys(false);
        let x = s.lookup("x").unwrap().clone();
        let e = s.parse("3*x*t*u^2").unwrap();
        let d = total_derivative(&e, &x, &s).unwrap();
        assert_eq!(d, s.parse("3*t*u^2 + 6*x*t*u*u_x").unwrap());
    }

    #[test]
    fn inverse_derivative() {
        let s = sys(true);
        let x = s.lookup("x").unwrap().clone();
        let d = total_derivative(&s.parse("inv(A)").unwrap(), &x, &s).unwrap();
        assert_eq!(d, s.parse("-inv(A)*A_x*inv(A)").unwrap());
    }

    #[test]
    fn matrix_order_preserved() {
        let s = sys(true);
        let t = s.lookup("t").unwrap().clone();
        let d = total_derivative(&s.parse("x*t*u_x*u_x").unwrap(), &t, &s).unwrap();
        assert_eq!(d, s.parse("x*u_x^2 + x*t*(u_xt*u_x + u_x*u_xt)").unwrap());
    }

    #[test]
    fn lie_examples() {
        let s = sys(true);
        let u = s.lookup("u").unwrap().clone();
        let q = Characteristic::new("Q", u.clone(), s.parse("Q").unwrap());
        let l = lie_apply(&q, &s.parse("x*t*u_x*u_x").unwrap(), &s).unwrap();
        assert_eq!(l, s.parse("x*t*(Q_x*u_x + u_x*Q_x)").unwrap());
        assert!(lie_apply(&q, &s.parse("x*t + sin(x)").unwrap(), &s).unwrap().is_zero());
        let l = lie_apply(&q, &s.parse("inv(u)").unwrap(), &s).unwrap();
        assert_eq!(l, s.parse("-inv(u)*Q*inv(u)").unwrap());
        assert!(matches!(lie_apply(&q, &s.parse("A").unwrap(), &s), Err(Error::NotLieConstant(_))));
    }

    #[test]
    fn brackets() {
        let s = sys(false);
        let u = s.lookup("u").unwrap().clone();
        let c = |name: &str, t: &str| Characteristic::new(name, u.clone(), s.parse(t).unwrap());
        assert!(lie_bracket(&c("a", "u_x"), &c("b", "u_t"), &s).unwrap().expr.is_zero());
        assert_eq!(lie_bracket(&c("a", "u_t"), &c("b", "t*u_x - 1"), &s).unwrap().expr, s.parse("-u_x").unwrap());
        assert_eq!(
            lie_bracket(&c("a", "u_x"), &c("b", "x*u_x + 3*t*u_t + 2*u"), &s).unwrap().expr,
            s.parse("-u_x").unwrap()
        );
    }

    #[test]
    fn substitution_examples() {
        let s = sys(false);
        let u = s.lookup("u").unwrap().clone();
        let mut b = BTreeMap::new();
        b.insert(u.clone(), s.parse("x*t").unwrap());
        assert_eq!(substitute(&s.parse("u_x").unwrap(), &b, &s).unwrap(), s.parse("t").unwrap());
        let mut b = BTreeMap::new();
        b.insert(u.clone(), s.parse("u + Q").unwrap());
        let e = substitute(&s.parse("u^2").unwrap(), &b, &s).unwrap() - s.parse("u^2 + 2*u*Q").unwrap();
        assert_eq!(e, s.parse("Q^2").unwrap());
    }
}
