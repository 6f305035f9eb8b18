//! Normal-form expressions over commuting scalars and ordered matrix symbols.
//!
//! An [`Expr`] is a finite sum of terms `coefficient * monomial * word`, where the
//! monomial is a sorted product of scalar atoms with integer exponents and the
//! word is an ordered product of matrix atoms. Construction always goes through
//! the normalizing constructors below, so two structurally equal values denote
//! the same expression and every stored coefficient is nonzero.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Pow, Signed, Zero};

use crate::error::{Error, Result};
use crate::symbol::{Class, MultiIndex, Symbol};

pub type Rational = BigRational;

type Terms = BTreeMap<Monomial, Rational>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Ln,
    Arctan,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Arctan => "arctan",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "arctan" => Func::Arctan,
            _ => return None,
        })
    }
}

/// A commuting factor of a monomial.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScalarAtom {
    /// Square root of a squarefree integer greater than one.
    Radical(u64),
    Param(Symbol),
    Var(Symbol),
    Jet(Symbol, MultiIndex),
    Func(Func, Expr),
    /// A sum of several terms, scaled so its first coefficient is one.
    /// Only ever stored with a negative exponent.
    Group(Expr),
}

/// A matrix factor: a derivative of a matrix symbol, possibly inverted or transposed.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatrixAtom {
    pub symbol: Symbol,
    pub index: MultiIndex,
    pub inverse: bool,
    pub transpose: bool,
}

impl MatrixAtom {
    pub fn plain(symbol: Symbol, index: MultiIndex) -> Self {
        MatrixAtom { symbol, index, inverse: false, transpose: false }
    }

    fn cancels(&self, other: &MatrixAtom) -> bool {
        self.symbol == other.symbol
            && self.index == other.index
            && self.transpose == other.transpose
            && self.inverse != other.inverse
    }

    fn inverted(&self) -> MatrixAtom {
        MatrixAtom { inverse: !self.inverse, ..self.clone() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub scalars: Vec<(ScalarAtom, i32)>,
    pub word: Vec<MatrixAtom>,
}

impl Monomial {
    pub fn is_unit(&self) -> bool {
        self.scalars.is_empty() && self.word.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Expr {
    class: Class,
    terms: Terms,
}

/// Borrowed view of an atom, used by visitors.
#[derive(Clone, Copy, Debug)]
pub enum AtomRef<'a> {
    Scalar(&'a ScalarAtom),
    Matrix(&'a MatrixAtom),
}

/// Replacement hook for [`Expr::map_atoms`]. Returning `None` keeps the atom.
pub trait AtomMap {
    /// Called with the plain symbol of a jet; inverse and transpose flags of
    /// matrix atoms are applied to the replacement afterwards.
    fn jet(&mut self, symbol: &Symbol, index: &MultiIndex, class: Class) -> Result<Option<Expr>>;

    fn param(&mut self, _symbol: &Symbol) -> Result<Option<Expr>> {
        Ok(None)
    }

    fn var(&mut self, _symbol: &Symbol) -> Result<Option<Expr>> {
        Ok(None)
    }
}

fn accumulate(acc: &mut Terms, key: Monomial, c: Rational) {
    use alloc::collections::btree_map::Entry;
    if c.is_zero() {
        return;
    }
    match acc.entry(key) {
        Entry::Vacant(v) => {
            v.insert(c);
        }
        Entry::Occupied(mut o) => {
            let s = o.get() + &c;
            if s.is_zero() {
                o.remove();
            } else {
                *o.get_mut() = s;
            }
        }
    }
}

fn merge_scalars(v: &mut Vec<(ScalarAtom, i32)>) {
    v.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(ScalarAtom, i32)> = Vec::with_capacity(v.len());
    for (a, e) in v.drain(..) {
        if let Some(last) = out.last_mut() {
            if last.0 == a {
                last.1 += e;
                continue;
            }
        }
        out.push((a, e));
    }
    out.retain(|(_, e)| *e != 0);
    *v = out;
}

fn concat_words(a: &[MatrixAtom], b: &[MatrixAtom]) -> Vec<MatrixAtom> {
    let mut out: Vec<MatrixAtom> = a.to_vec();
    for w in b {
        if out.last().is_some_and(|top| top.cancels(w)) {
            out.pop();
        } else {
            out.push(w.clone());
        }
    }
    out
}

fn rational_int(n: u64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Splits `n` as `outside^2 * inside` with `inside` squarefree.
fn square_split(mut n: u64) -> (u64, u64) {
    let mut outside = 1u64;
    let mut p = 2u64;
    while p * p <= n {
        while n.is_multiple_of(p * p) {
            n /= p * p;
            outside *= p;
        }
        p += 1;
    }
    (outside, n)
}

fn is_trig(a: &ScalarAtom) -> bool {
    matches!(a, ScalarAtom::Func(Func::Sin | Func::Cos, _))
}

fn take_one(scalars: &mut Vec<(ScalarAtom, i32)>, i: usize) -> ScalarAtom {
    let atom = scalars[i].0.clone();
    scalars[i].1 -= 1;
    if scalars[i].1 == 0 {
        scalars.remove(i);
    }
    atom
}

fn half() -> Rational {
    Rational::new(BigInt::from(1), BigInt::from(2))
}

/// Rewrites a product of two sines/cosines as a sum of single ones.
fn product_to_sum(a: &ScalarAtom, b: &ScalarAtom) -> Expr {
    let (ScalarAtom::Func(fa, x), ScalarAtom::Func(fb, y)) = (a, b) else {
        unreachable!("product_to_sum on non-trig atoms")
    };
    let sum = x + y;
    let diff = x - y;
    let sin = |e: &Expr| Expr::func(Func::Sin, e).expect("scalar argument");
    let cos = |e: &Expr| Expr::func(Func::Cos, e).expect("scalar argument");
    let out = match (fa, fb) {
        (Func::Sin, Func::Sin) => cos(&diff) - cos(&sum),
        (Func::Cos, Func::Cos) => cos(&diff) + cos(&sum),
        (Func::Sin, Func::Cos) => sin(&sum) + sin(&diff),
        (Func::Cos, Func::Sin) => sin(&sum) - sin(&diff),
        _ => unreachable!(),
    };
    out.scale(&half())
}

/// Normalizes one product and adds it to `acc`. The word must already be free
/// of adjacent inverse pairs.
fn push_term(
    acc: &mut Terms,
    class: Class,
    mut coeff: Rational,
    mut scalars: Vec<(ScalarAtom, i32)>,
    word: Vec<MatrixAtom>,
) {
    if coeff.is_zero() {
        return;
    }
    merge_scalars(&mut scalars);

    if scalars.iter().any(|(a, _)| matches!(a, ScalarAtom::Radical(_))) {
        let mut keep = Vec::with_capacity(scalars.len());
        let mut under = 1u64;
        for (a, e) in scalars.drain(..) {
            if let ScalarAtom::Radical(n) = a {
                coeff *= Pow::pow(rational_int(n), e.div_euclid(2));
                if e.rem_euclid(2) == 1 {
                    under = under.checked_mul(n).expect("radicand overflow");
                }
            } else {
                keep.push((a, e));
            }
        }
        let (outside, inside) = square_split(under);
        coeff *= rational_int(outside);
        if inside > 1 {
            keep.insert(0, (ScalarAtom::Radical(inside), 1));
        }
        scalars = keep;
    }

    let exps = scalars.iter().filter(|(a, _)| matches!(a, ScalarAtom::Func(Func::Exp, _))).count();
    if exps > 1 || scalars.iter().any(|(a, e)| matches!(a, ScalarAtom::Func(Func::Exp, _)) && *e != 1) {
        let mut arg = Expr::zero();
        let mut keep = Vec::with_capacity(scalars.len());
        for (a, e) in scalars.drain(..) {
            match a {
                ScalarAtom::Func(Func::Exp, x) => arg.add_in_place(x.scale(&Rational::from_integer(BigInt::from(e)))),
                other => keep.push((other, e)),
            }
        }
        if !arg.is_zero() {
            keep.push((ScalarAtom::Func(Func::Exp, arg), 1));
        }
        scalars = keep;
        merge_scalars(&mut scalars);
    }

    if let Some(i) = scalars.iter().position(|(a, e)| matches!(a, ScalarAtom::Group(_)) && *e > 0) {
        let (a, e) = scalars.remove(i);
        let ScalarAtom::Group(g) = a else { unreachable!() };
        let rest = Expr::from_parts(class, coeff, scalars, word);
        let expanded = rest.mul(&g.pow(e).expect("nonnegative power"));
        for (k, c) in expanded.terms {
            accumulate(acc, k, c);
        }
        return;
    }

    let trig: i32 = scalars.iter().filter(|(a, e)| is_trig(a) && *e > 0).map(|(_, e)| *e).sum();
    if trig >= 2 {
        let i = scalars.iter().position(|(a, e)| is_trig(a) && *e > 0).unwrap();
        let a1 = take_one(&mut scalars, i);
        let j = scalars.iter().position(|(a, e)| is_trig(a) && *e > 0).unwrap();
        let a2 = take_one(&mut scalars, j);
        let rest = Expr::from_parts(class, coeff, scalars, word);
        for (k, c) in rest.mul(&product_to_sum(&a1, &a2)).terms {
            accumulate(acc, k, c);
        }
        return;
    }

    accumulate(acc, Monomial { scalars, word }, coeff);
}

impl Expr {
    fn from_terms(class: Class, terms: Terms) -> Expr {
        if terms.is_empty() {
            Expr::zero()
        } else {
            Expr { class, terms }
        }
    }

    /// Builds `coeff * scalars * word` and normalizes it.
    pub fn from_parts(class: Class, coeff: Rational, scalars: Vec<(ScalarAtom, i32)>, word: Vec<MatrixAtom>) -> Expr {
        let class = if word.is_empty() { class } else { Class::Matrix };
        let word = concat_words(&[], &word);
        let mut acc = Terms::new();
        push_term(&mut acc, class, coeff, scalars, word);
        Expr::from_terms(class, acc)
    }

    pub fn zero() -> Expr {
        Expr { class: Class::Scalar, terms: Terms::new() }
    }

    pub fn one() -> Expr {
        Expr::constant(Rational::one())
    }

    pub fn constant(q: Rational) -> Expr {
        let mut terms = Terms::new();
        accumulate(&mut terms, Monomial::default(), q);
        Expr::from_terms(Class::Scalar, terms)
    }

    pub fn integer(n: i64) -> Expr {
        Expr::constant(Rational::from_integer(BigInt::from(n)))
    }

    pub fn identity() -> Expr {
        let mut terms = Terms::new();
        terms.insert(Monomial::default(), Rational::one());
        Expr { class: Class::Matrix, terms }
    }

    pub fn scalar_atom(atom: ScalarAtom, exp: i32) -> Expr {
        Expr::from_parts(Class::Scalar, Rational::one(), vec![(atom, exp)], Vec::new())
    }

    pub fn param(symbol: &Symbol) -> Expr {
        Expr::scalar_atom(ScalarAtom::Param(symbol.clone()), 1)
    }

    pub fn var(symbol: &Symbol) -> Expr {
        Expr::scalar_atom(ScalarAtom::Var(symbol.clone()), 1)
    }

    pub fn jet(symbol: &Symbol, index: MultiIndex, class: Class) -> Expr {
        match class {
            Class::Scalar => Expr::scalar_atom(ScalarAtom::Jet(symbol.clone(), index), 1),
            Class::Matrix => Expr::word(vec![MatrixAtom::plain(symbol.clone(), index)]),
        }
    }

    /// Ordered product of matrix atoms; the empty word is the identity.
    pub fn word(word: Vec<MatrixAtom>) -> Expr {
        Expr::from_parts(Class::Matrix, Rational::one(), Vec::new(), word)
    }

    /// Square root of a nonnegative rational, as coefficient times radical.
    pub fn sqrt_rational(q: &Rational) -> Result<Expr> {
        use num_traits::ToPrimitive;
        if q.is_negative() {
            return Err(Error::Invalid(format!("sqrt of negative constant {q}")));
        }
        if q.is_zero() {
            return Ok(Expr::zero());
        }
        let radicand =
            (q.numer() * q.denom()).to_u64().ok_or_else(|| Error::Invalid(format!("sqrt argument {q} too large")))?;
        let coeff = Rational::new(BigInt::one(), q.denom().clone());
        Ok(Expr::from_parts(Class::Scalar, coeff, vec![(ScalarAtom::Radical(radicand), 1)], Vec::new()))
    }

    pub fn class(&self) -> Class {
        self.class
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.class == Class::Scalar && self.as_constant().is_some_and(|q| q.is_one())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn into_terms(self) -> impl Iterator<Item = (Monomial, Rational)> {
        self.terms.into_iter()
    }

    /// The single term of a one-term expression.
    pub fn single_term(&self) -> Option<(&Monomial, &Rational)> {
        if self.terms.len() == 1 {
            self.terms.iter().next()
        } else {
            None
        }
    }

    /// The value of a (scalar) constant expression; zero counts as constant.
    pub fn as_constant(&self) -> Option<Rational> {
        if self.is_zero() {
            return Some(Rational::zero());
        }
        match self.single_term() {
            Some((m, c)) if m.is_unit() => Some(c.clone()),
            _ => None,
        }
    }

    /// Coefficient of the first term in canonical order.
    pub fn leading_coefficient(&self) -> Option<&Rational> {
        self.terms.values().next()
    }

    pub fn try_add(&self, other: &Expr) -> Result<Expr> {
        if self.is_zero() {
            return Ok(other.clone());
        }
        if other.is_zero() {
            return Ok(self.clone());
        }
        if self.class != other.class {
            return Err(Error::ClassMismatch("sum of scalar and matrix terms".into()));
        }
        let mut terms = self.terms.clone();
        for (k, c) in &other.terms {
            accumulate(&mut terms, k.clone(), c.clone());
        }
        Ok(Expr::from_terms(self.class, terms))
    }

    /// Adds `other` into `self`. Panics on a class mismatch, which internal
    /// callers rule out by construction.
    pub fn add_in_place(&mut self, other: Expr) {
        if other.is_zero() {
            return;
        }
        if self.is_zero() {
            *self = other;
            return;
        }
        assert_eq!(self.class, other.class, "sum of scalar and matrix terms");
        for (k, c) in other.terms {
            accumulate(&mut self.terms, k, c);
        }
        if self.terms.is_empty() {
            self.class = Class::Scalar;
        }
    }

    pub fn try_sub(&self, other: &Expr) -> Result<Expr> {
        self.try_add(&other.neg_ref())
    }

    pub fn mul(&self, other: &Expr) -> Expr {
        if self.is_zero() || other.is_zero() {
            return Expr::zero();
        }
        let class =
            if self.class == Class::Scalar && other.class == Class::Scalar { Class::Scalar } else { Class::Matrix };
        let mut acc = Terms::new();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                let mut scalars = ka.scalars.clone();
                scalars.extend(kb.scalars.iter().cloned());
                let word = concat_words(&ka.word, &kb.word);
                push_term(&mut acc, class, ca * cb, scalars, word);
            }
        }
        Expr::from_terms(class, acc)
    }

    pub fn scale(&self, q: &Rational) -> Expr {
        if q.is_zero() {
            return Expr::zero();
        }
        let terms = self.terms.iter().map(|(k, c)| (k.clone(), c * q)).collect();
        Expr::from_terms(self.class, terms)
    }

    pub fn scale_int(&self, n: i64) -> Expr {
        self.scale(&Rational::from_integer(BigInt::from(n)))
    }

    fn neg_ref(&self) -> Expr {
        let terms = self.terms.iter().map(|(k, c)| (k.clone(), -c)).collect();
        Expr::from_terms(self.class, terms)
    }

    /// Reciprocal of a scalar expression. Sums become a single grouped atom.
    pub fn reciprocal(&self) -> Result<Expr> {
        if self.class == Class::Matrix {
            return Err(Error::ClassMismatch("reciprocal of a matrix; use inv".into()));
        }
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        if let Some((m, c)) = self.single_term() {
            let scalars = m.scalars.iter().map(|(a, e)| (a.clone(), -e)).collect();
            return Ok(Expr::from_parts(Class::Scalar, c.recip(), scalars, Vec::new()));
        }
        let lead = self.leading_coefficient().expect("nonzero").clone();
        let base = self.scale(&lead.recip());
        Ok(Expr::from_parts(Class::Scalar, lead.recip(), vec![(ScalarAtom::Group(base), -1)], Vec::new()))
    }

    /// Inverse of a matrix expression that is a single product.
    pub fn inverse(&self) -> Result<Expr> {
        if self.class == Class::Scalar && !self.is_zero() {
            return Err(Error::InverseOfNonMatrix);
        }
        if self.is_zero() {
            return Err(Error::DivisionByZero);
        }
        let Some((m, c)) = self.single_term() else {
            return Err(Error::NonAtomicInverse(format!("sum of {} terms", self.len())));
        };
        let scalar = Expr::from_parts(Class::Scalar, c.clone(), m.scalars.clone(), Vec::new()).reciprocal()?;
        let word: Vec<MatrixAtom> = m.word.iter().rev().map(MatrixAtom::inverted).collect();
        Ok(scalar.mul(&Expr::word(word)))
    }

    /// Transpose, with transposition pushed onto the atoms.
    pub fn transpose(&self, symmetric: &dyn Fn(&Symbol) -> bool) -> Expr {
        if self.class == Class::Scalar {
            return self.clone();
        }
        let mut terms = Terms::new();
        for (k, c) in &self.terms {
            let word = k
                .word
                .iter()
                .rev()
                .map(|a| MatrixAtom { transpose: if symmetric(&a.symbol) { false } else { !a.transpose }, ..a.clone() })
                .collect();
            accumulate(&mut terms, Monomial { scalars: k.scalars.clone(), word }, c.clone());
        }
        Expr::from_terms(self.class, terms)
    }

    pub fn pow(&self, k: i32) -> Result<Expr> {
        if k < 0 {
            let base = match self.class {
                Class::Scalar => self.reciprocal()?,
                Class::Matrix => self.inverse()?,
            };
            return base.pow(-k);
        }
        let mut result = match self.class {
            Class::Scalar => Expr::one(),
            Class::Matrix => Expr::identity(),
        };
        let mut base = self.clone();
        let mut k = k as u32;
        while k > 0 {
            if k & 1 == 1 {
                result = result.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        Ok(result)
    }

    /// Applies an elementary function, with the few built-in simplifications.
    pub fn func(f: Func, arg: &Expr) -> Result<Expr> {
        if arg.class == Class::Matrix && !arg.is_zero() {
            return Err(Error::ClassMismatch(format!("{} of a matrix", f.name())));
        }
        let negative = arg.leading_coefficient().is_some_and(|c| c.is_negative());
        match f {
            Func::Sin | Func::Arctan if arg.is_zero() => return Ok(Expr::zero()),
            Func::Cos | Func::Exp if arg.is_zero() => return Ok(Expr::one()),
            Func::Ln if arg.is_one() => return Ok(Expr::zero()),
            Func::Sin if negative => return Ok(-Expr::scalar_atom(ScalarAtom::Func(Func::Sin, -arg), 1)),
            Func::Cos if negative => return Ok(Expr::scalar_atom(ScalarAtom::Func(Func::Cos, -arg), 1)),
            _ => {}
        }
        Ok(Expr::scalar_atom(ScalarAtom::Func(f, arg.clone()), 1))
    }

    pub fn commutator(a: &Expr, b: &Expr) -> Expr {
        a * b - b * a
    }

    /// Visits every atom, including those inside function arguments and groups.
    pub fn visit_atoms<'a>(&'a self, f: &mut dyn FnMut(AtomRef<'a>)) {
        for k in self.terms.keys() {
            for (a, _) in &k.scalars {
                f(AtomRef::Scalar(a));
                match a {
                    ScalarAtom::Func(_, x) | ScalarAtom::Group(x) => x.visit_atoms(f),
                    _ => {}
                }
            }
            for w in &k.word {
                f(AtomRef::Matrix(w));
            }
        }
    }

    pub fn contains_symbol(&self, symbol: &Symbol) -> bool {
        let mut found = false;
        self.visit_atoms(&mut |a| {
            found |= match a {
                AtomRef::Scalar(ScalarAtom::Param(s) | ScalarAtom::Var(s) | ScalarAtom::Jet(s, _)) => s == symbol,
                AtomRef::Matrix(m) => &m.symbol == symbol,
                _ => false,
            }
        });
        found
    }

    /// All jets (symbol, multi-index) occurring anywhere in the expression.
    pub fn jets(&self) -> BTreeSet<(Symbol, MultiIndex)> {
        let mut out = BTreeSet::new();
        self.visit_atoms(&mut |a| match a {
            AtomRef::Scalar(ScalarAtom::Jet(s, i)) => {
                out.insert((s.clone(), i.clone()));
            }
            AtomRef::Matrix(m) => {
                out.insert((m.symbol.clone(), m.index.clone()));
            }
            _ => {}
        });
        out
    }

    /// Rebuilds the expression with some atoms replaced, then renormalizes.
    pub fn map_atoms(&self, m: &mut dyn AtomMap, symmetric: &dyn Fn(&Symbol) -> bool) -> Result<Expr> {
        enum Piece {
            Atom(MatrixAtom),
            Expr(Expr),
        }
        let check = |r: &Expr, want: Class| -> Result<()> {
            if !r.is_zero() && r.class != want {
                return Err(Error::ClassMismatch("replacement class differs from the replaced symbol".into()));
            }
            Ok(())
        };
        let mut untouched = Terms::new();
        let mut out = Expr::zero();
        for (key, c) in &self.terms {
            let mut changed = false;
            let mut kept = Vec::new();
            let mut factors = Vec::new();
            for (a, e) in &key.scalars {
                let rep = match a {
                    ScalarAtom::Radical(_) => None,
                    ScalarAtom::Param(s) => m.param(s)?,
                    ScalarAtom::Var(s) => m.var(s)?,
                    ScalarAtom::Jet(s, i) => m.jet(s, i, Class::Scalar)?,
                    ScalarAtom::Func(f, x) => {
                        let y = x.map_atoms(m, symmetric)?;
                        if &y != x {
                            Some(Expr::func(*f, &y)?)
                        } else {
                            None
                        }
                    }
                    ScalarAtom::Group(x) => {
                        let y = x.map_atoms(m, symmetric)?;
                        (&y != x).then_some(y)
                    }
                };
                match rep {
                    Some(r) => {
                        check(&r, Class::Scalar)?;
                        changed = true;
                        factors.push(r.pow(*e)?);
                    }
                    None => kept.push((a.clone(), *e)),
                }
            }
            let mut pieces = Vec::with_capacity(key.word.len());
            for w in &key.word {
                match m.jet(&w.symbol, &w.index, Class::Matrix)? {
                    Some(mut r) => {
                        check(&r, Class::Matrix)?;
                        changed = true;
                        if w.transpose {
                            r = r.transpose(symmetric);
                        }
                        if w.inverse {
                            r = r.inverse()?;
                        }
                        pieces.push(Piece::Expr(r));
                    }
                    None => pieces.push(Piece::Atom(w.clone())),
                }
            }
            if !changed {
                accumulate(&mut untouched, key.clone(), c.clone());
                continue;
            }
            let mut prod = Expr::from_parts(Class::Scalar, c.clone(), kept, Vec::new());
            for f in &factors {
                prod = prod.mul(f);
            }
            let mut run = Vec::new();
            for p in pieces {
                match p {
                    Piece::Atom(a) => run.push(a),
                    Piece::Expr(r) => {
                        if !run.is_empty() {
                            prod = prod.mul(&Expr::word(core::mem::take(&mut run)));
                        }
                        prod = prod.mul(&r);
                    }
                }
            }
            if !run.is_empty() {
                prod = prod.mul(&Expr::word(run));
            }
            if self.class == Class::Matrix && prod.class == Class::Scalar {
                prod = prod.mul(&Expr::identity());
            }
            out.add_in_place(prod);
        }
        let mut result = Expr::from_terms(self.class, untouched);
        result.add_in_place(out);
        Ok(result)
    }

    /// Replaces parameters and variables by expressions.
    pub fn substitute_symbols(&self, map: &BTreeMap<Symbol, Expr>) -> Result<Expr> {
        struct Sub<'a>(&'a BTreeMap<Symbol, Expr>);
        impl AtomMap for Sub<'_> {
            fn jet(&mut self, _: &Symbol, _: &MultiIndex, _: Class) -> Result<Option<Expr>> {
                Ok(None)
            }
            fn param(&mut self, s: &Symbol) -> Result<Option<Expr>> {
                Ok(self.0.get(s).cloned())
            }
            fn var(&mut self, s: &Symbol) -> Result<Option<Expr>> {
                Ok(self.0.get(s).cloned())
            }
        }
        self.map_atoms(&mut Sub(map), &|_| false)
    }

    /// Splits a finite Laurent polynomial in `p` (a parameter or variable)
    /// into its coefficients.
    pub fn coefficients_in(&self, p: &Symbol) -> Result<BTreeMap<i32, Expr>> {
        let mut out: BTreeMap<i32, Terms> = BTreeMap::new();
        for (k, c) in &self.terms {
            let mut degree = 0;
            let mut scalars = Vec::with_capacity(k.scalars.len());
            for (a, e) in &k.scalars {
                match a {
                    ScalarAtom::Param(s) | ScalarAtom::Var(s) if s == p => degree = *e,
                    ScalarAtom::Func(_, x) | ScalarAtom::Group(x) if x.contains_symbol(p) => {
                        return Err(Error::NotPolynomialInParameter(p.name().into()));
                    }
                    _ => scalars.push((a.clone(), *e)),
                }
            }
            accumulate(out.entry(degree).or_default(), Monomial { scalars, word: k.word.clone() }, c.clone());
        }
        Ok(out.into_iter().filter(|(_, t)| !t.is_empty()).map(|(d, t)| (d, Expr::from_terms(self.class, t))).collect())
    }

    /// Multiplies every term by the largest negative power of each grouped
    /// denominator, so that no `Group` atom is left.
    pub fn clear_denominators(&self) -> Expr {
        let mut need: BTreeMap<ScalarAtom, i32> = BTreeMap::new();
        for k in self.terms.keys() {
            for (a, e) in &k.scalars {
                if matches!(a, ScalarAtom::Group(_)) && *e < 0 {
                    let slot = need.entry(a.clone()).or_insert(0);
                    *slot = (*slot).max(-e);
                }
            }
        }
        if need.is_empty() {
            return self.clone();
        }
        let factor: Vec<(ScalarAtom, i32)> = need.into_iter().collect();
        let mut out = Expr::zero();
        for (k, c) in &self.terms {
            let mut scalars = k.scalars.clone();
            scalars.extend(factor.iter().cloned());
            out.add_in_place(Expr::from_parts(self.class, c.clone(), scalars, k.word.clone()));
        }
        out
    }

    /// Divides out the lowest power of `p` common to all terms.
    pub fn strip_power(&self, p: &Symbol) -> Expr {
        let degree = |k: &Monomial| {
            k.scalars
                .iter()
                .find_map(|(a, e)| match a {
                    ScalarAtom::Param(s) | ScalarAtom::Var(s) if s == p => Some(*e),
                    _ => None,
                })
                .unwrap_or(0)
        };
        let Some(low) = self.terms.keys().map(degree).min() else {
            return self.clone();
        };
        if low == 0 {
            return self.clone();
        }
        let atom =
            if self.terms.keys().any(|k| k.scalars.iter().any(|(a, _)| matches!(a, ScalarAtom::Var(s) if s == p))) {
                ScalarAtom::Var(p.clone())
            } else {
                ScalarAtom::Param(p.clone())
            };
        let mut out = Expr::zero();
        for (k, c) in &self.terms {
            let mut scalars = k.scalars.clone();
            scalars.push((atom.clone(), -low));
            out.add_in_place(Expr::from_parts(self.class, c.clone(), scalars, k.word.clone()));
        }
        out
    }

    /// Divides by the rational content so the first coefficient is one.
    pub fn monic(&self) -> Expr {
        match self.leading_coefficient() {
            Some(c) => self.scale(&c.recip()),
            None => Expr::zero(),
        }
    }

    /// True when `self = q * other` for some nonzero rational `q`.
    pub fn proportional_to(&self, other: &Expr) -> bool {
        if self.is_zero() || other.is_zero() {
            return self.is_zero() && other.is_zero();
        }
        self.monic() == other.monic()
    }
}

impl From<i64> for Expr {
    fn from(n: i64) -> Expr {
        Expr::integer(n)
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $trait::$method(&self, &rhs)
            }
        }
        impl $trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                $trait::$method(&self, rhs)
            }
        }
        impl $trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                $trait::$method(self, &rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| a.try_add(b).expect("sum of scalar and matrix terms"));
binop!(Sub, sub, |a, b| a.try_sub(b).expect("sum of scalar and matrix terms"));
binop!(Mul, mul, |a, b| Expr::mul(a, b));

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.neg_ref()
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.neg_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rank: u32, name: &str) -> Symbol {
        Symbol::new(rank, name)
    }

    fn m(s: &Symbol) -> Expr {
        Expr::jet(s, MultiIndex::zero(), Class::Matrix)
    }

    #[test]
    fn inverse_pairs_cancel() {
        let a = sym(0, "A");
        let e = m(&a) * m(&a).inverse().unwrap();
        assert_eq!(e, Expr::identity());
        let f = m(&a).inverse().unwrap() * m(&a);
        assert_eq!(f, Expr::identity());
    }

    #[test]
    fn scalar_collection() {
        let u = Expr::jet(&sym(0, "u"), MultiIndex::zero(), Class::Scalar);
        let e = Expr::integer(2) * &u * Expr::integer(3) * &u;
        assert_eq!(e, (&u * &u).scale_int(6));
        assert_eq!(e.len(), 1);
        assert_eq!(e.single_term().unwrap().0.scalars[0].1, 2);
    }

    #[test]
    fn inverse_of_product_reverses() {
        let a = sym(0, "A");
        let b = sym(1, "B");
        let ab = m(&a) * m(&b);
        let inv = ab.inverse().unwrap();
        assert_eq!(inv, m(&b).inverse().unwrap() * m(&a).inverse().unwrap());
        assert!(matches!((m(&a) + m(&b)).inverse(), Err(Error::NonAtomicInverse(_))));
        assert_eq!(Expr::integer(2).inverse(), Err(Error::InverseOfNonMatrix));
    }

    #[test]
    fn transpose_is_an_involution() {
        let a = sym(0, "A");
        let b = sym(1, "B");
        let e = m(&a) * m(&b).inverse().unwrap() + m(&b);
        let t = e.transpose(&|_| false);
        assert_ne!(t, e);
        assert_eq!(t.transpose(&|_| false), e);
        assert_eq!(e.transpose(&|_| true), m(&b).inverse().unwrap() * m(&a) + m(&b));
    }

    #[test]
    fn function_rules() {
        let u = Expr::jet(&sym(0, "u"), MultiIndex::zero(), Class::Scalar);
        assert!(Expr::func(Func::Sin, &Expr::zero()).unwrap().is_zero());
        assert!(Expr::func(Func::Cos, &Expr::zero()).unwrap().is_one());
        assert!(Expr::func(Func::Exp, &Expr::zero()).unwrap().is_one());
        assert!(Expr::func(Func::Ln, &Expr::one()).unwrap().is_zero());
        let e1 = Expr::func(Func::Exp, &u).unwrap();
        let e2 = Expr::func(Func::Exp, &-&u).unwrap();
        assert!((e1 * e2).is_one());
        let s = Expr::func(Func::Sin, &-&u).unwrap();
        assert_eq!(s, -Expr::func(Func::Sin, &u).unwrap());
        let a = sym(1, "A");
        assert!(matches!(Expr::func(Func::Sin, &m(&a)), Err(Error::ClassMismatch(_))));
    }

    #[test]
    fn trig_products_linearize() {
        let u = Expr::jet(&sym(0, "u"), MultiIndex::zero(), Class::Scalar);
        let s = Expr::func(Func::Sin, &u).unwrap();
        let c = Expr::func(Func::Cos, &u).unwrap();
        let pythagoras = &s * &s + &c * &c;
        assert!(pythagoras.is_one());
    }

    #[test]
    fn radicals_merge() {
        let two = Expr::sqrt_rational(&Rational::from_integer(2.into())).unwrap();
        assert_eq!(&two * &two, Expr::integer(2));
        let eight = Expr::sqrt_rational(&Rational::from_integer(8.into())).unwrap();
        assert_eq!(eight, two.scale_int(2));
        let half = Expr::sqrt_rational(&Rational::new(1.into(), 2.into())).unwrap();
        assert_eq!(half, two.scale(&Rational::new(1.into(), 2.into())));
        assert!((two.reciprocal().unwrap() * &two).is_one());
    }

    #[test]
    fn grouped_reciprocal() {
        let l = sym(0, "lambda");
        let e = Expr::one() - Expr::param(&l);
        let r = e.reciprocal().unwrap();
        assert_eq!(r.len(), 1);
        assert!((r.clear_denominators() - Expr::one()).is_zero());
        let c = (e.clone() * Expr::param(&sym(1, "c"))).coefficients_in(&l).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[&1], -Expr::param(&sym(1, "c")));
    }

    #[test]
    fn zero_terms_vanish() {
        let u = Expr::jet(&sym(0, "u"), MultiIndex::zero(), Class::Scalar);
        assert!((&u - &u).is_zero());
        let a = sym(1, "A");
        assert!(Expr::commutator(&m(&a), &m(&a)).is_zero());
    }
}
