//! Numeric validation: evaluation of expressions on truncated Taylor
//! series, either exactly over the rationals or in binary floating point.
//!
//! A dependent symbol is represented by a truncated multivariate series
//! around a sample point; a jet `u_I` is then read off by differentiating
//! the series. Raw parse trees are evaluated directly, without going
//! through the symbolic normal form, so agreement between the two is an
//! independent check.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use jetcheck_core::parse::Ast;
use jetcheck_core::system::EquationSystem;
use jetcheck_core::{Class, Expr, Func, MultiIndex, Rational, ScalarAtom, Symbol};

use crate::error::{Error, Result};

/// Number systems the evaluator runs over.
pub trait Field:
    Clone + Debug + PartialEq + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(q: &Rational) -> Self;
    fn recip(&self) -> Option<Self>;
    fn is_zero(&self) -> bool;
    fn magnitude(&self) -> f64;
    /// `sqrt(n)`, when representable.
    fn radical(n: u64) -> Option<Self>;
    /// `f(x), f'(x), ..., f^(k)(x)`, when representable.
    fn derivatives(f: Func, x: &Self, k: usize) -> Option<Vec<Self>>;
    fn exact() -> bool;
}

impl Field for Rational {
    fn zero() -> Self {
        <Rational as Zero>::zero()
    }
    fn one() -> Self {
        <Rational as One>::one()
    }
    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }
    fn recip(&self) -> Option<Self> {
        (!Zero::is_zero(self)).then(|| Rational::recip(self))
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn magnitude(&self) -> f64 {
        self.abs().to_f64().unwrap_or(f64::INFINITY)
    }
    fn radical(_: u64) -> Option<Self> {
        None
    }
    fn derivatives(_: Func, _: &Self, _: usize) -> Option<Vec<Self>> {
        None
    }
    fn exact() -> bool {
        true
    }
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_rational(q: &Rational) -> Self {
        q.to_f64().unwrap_or(f64::NAN)
    }
    fn recip(&self) -> Option<Self> {
        (*self != 0.0).then(|| 1.0 / self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn radical(n: u64) -> Option<Self> {
        Some((n as f64).sqrt())
    }
    fn derivatives(f: Func, x: &Self, k: usize) -> Option<Vec<Self>> {
        let x = *x;
        let mut out = Vec::with_capacity(k + 1);
        match f {
            Func::Sin | Func::Cos => {
                let cycle = match f {
                    Func::Sin => [x.sin(), x.cos(), -x.sin(), -x.cos()],
                    _ => [x.cos(), -x.sin(), -x.cos(), x.sin()],
                };
                out.extend((0..=k).map(|j| cycle[j % 4]));
            }
            Func::Exp => out.extend(std::iter::repeat_n(x.exp(), k + 1)),
            Func::Ln => {
                if x <= 0.0 {
                    return None;
                }
                out.push(x.ln());
                let mut fact = 1.0;
                for j in 1..=k {
                    if j > 1 {
                        fact *= (j - 1) as f64;
                    }
                    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                    out.push(sign * fact / x.powi(j as i32));
                }
            }
            Func::Arctan => {
                let theta = x.atan();
                out.push(theta);
                let mut fact = 1.0;
                for j in 1..=k {
                    if j > 1 {
                        fact *= (j - 1) as f64;
                    }
                    let jf = j as f64;
                    out.push(fact * theta.cos().powi(j as i32) * (jf * (theta + std::f64::consts::FRAC_PI_2)).sin());
                }
            }
        }
        Some(out)
    }
    fn exact() -> bool {
        false
    }
}

/// Enumeration of multi-indices of total order at most `order` in `n`
/// variables, with a precomputed product table.
#[derive(Debug)]
pub struct Layout {
    n: usize,
    order: usize,
    indices: Vec<Vec<u16>>,
    lookup: HashMap<Vec<u16>, usize>,
    products: Vec<(usize, usize, usize)>,
}

impl Layout {
    pub fn new(n: usize, order: usize) -> Arc<Layout> {
        let mut indices = vec![vec![0u16; n]];
        for _ in 0..order {
            let mut next = Vec::new();
            for idx in &indices {
                for v in 0..n {
                    let mut i = idx.clone();
                    i[v] += 1;
                    next.push(i);
                }
            }
            indices.extend(next);
            indices.sort_by_key(|i| (i.iter().map(|&c| c as usize).sum::<usize>(), std::cmp::Reverse(i.clone())));
            indices.dedup();
        }
        indices.retain(|i| i.iter().map(|&c| c as usize).sum::<usize>() <= order);
        let lookup: HashMap<Vec<u16>, usize> = indices.iter().cloned().enumerate().map(|(k, i)| (i, k)).collect();
        let mut products = Vec::new();
        for (a, ia) in indices.iter().enumerate() {
            for (b, ib) in indices.iter().enumerate() {
                let sum: Vec<u16> = ia.iter().zip(ib).map(|(x, y)| x + y).collect();
                if let Some(&c) = lookup.get(&sum) {
                    products.push((a, b, c));
                }
            }
        }
        Arc::new(Layout { n, order, indices, lookup, products })
    }

    fn degree(&self, k: usize) -> usize {
        self.indices[k].iter().map(|&c| c as usize).sum()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// A truncated series `sum_I c_I e^I`, exact up to order `valid`.
#[derive(Clone, Debug)]
pub struct Taylor<T> {
    layout: Arc<Layout>,
    coeffs: Vec<T>,
    valid: usize,
}

impl<T: Field> Taylor<T> {
    pub fn constant(layout: &Arc<Layout>, c: T) -> Self {
        let mut coeffs = vec![T::zero(); layout.len()];
        coeffs[0] = c;
        Taylor { layout: layout.clone(), coeffs, valid: layout.order }
    }

    /// The coordinate `x0 + e_v`.
    pub fn variable(layout: &Arc<Layout>, v: usize, x0: T) -> Self {
        let mut t = Taylor::constant(layout, x0);
        if layout.order > 0 {
            let mut i = vec![0u16; layout.n];
            i[v] = 1;
            t.coeffs[layout.lookup[&i]] = T::one();
        }
        t
    }

    pub fn from_coeffs(layout: &Arc<Layout>, coeffs: Vec<T>) -> Self {
        Taylor { layout: layout.clone(), coeffs, valid: layout.order }
    }

    pub fn value(&self) -> &T {
        &self.coeffs[0]
    }

    fn zip(&self, other: &Self, f: impl Fn(&T, &T) -> T) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| f(a, b)).collect();
        Taylor { layout: self.layout.clone(), coeffs, valid: self.valid.min(other.valid) }.truncated()
    }

    fn truncated(mut self) -> Self {
        for k in 0..self.coeffs.len() {
            if self.layout.degree(k) > self.valid {
                self.coeffs[k] = T::zero();
            }
        }
        self
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a.clone() + b.clone())
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip(o, |a, b| a.clone() - b.clone())
    }

    pub fn neg(&self) -> Self {
        Taylor {
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().map(|c| -c.clone()).collect(),
            valid: self.valid,
        }
    }

    pub fn scale(&self, s: &T) -> Self {
        Taylor {
            layout: self.layout.clone(),
            coeffs: self.coeffs.iter().map(|c| c.clone() * s.clone()).collect(),
            valid: self.valid,
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        let valid = self.valid.min(o.valid);
        let mut coeffs = vec![T::zero(); self.coeffs.len()];
        for &(a, b, c) in &self.layout.products {
            if self.layout.degree(c) <= valid && !self.coeffs[a].is_zero() && !o.coeffs[b].is_zero() {
                coeffs[c] = coeffs[c].clone() + self.coeffs[a].clone() * o.coeffs[b].clone();
            }
        }
        Taylor { layout: self.layout.clone(), coeffs, valid }
    }

    /// Partial derivative along variable `v`; the exact order drops by one.
    pub fn derivative(&self, v: usize) -> Result<Self> {
        if self.valid == 0 {
            return Err(Error::Format("series truncated below the requested derivative order".into()));
        }
        let mut coeffs = vec![T::zero(); self.coeffs.len()];
        for (k, idx) in self.layout.indices.iter().enumerate() {
            let mut up = idx.clone();
            up[v] += 1;
            if let Some(&j) = self.layout.lookup.get(&up) {
                coeffs[k] = self.coeffs[j].clone() * T::from_rational(&Rational::from_integer(BigInt::from(up[v])));
            }
        }
        Ok(Taylor { layout: self.layout.clone(), coeffs, valid: self.valid - 1 }.truncated())
    }

    pub fn derivative_multi(&self, index: &MultiIndex) -> Result<Self> {
        let mut t = self.clone();
        for pos in index.steps() {
            t = t.derivative(pos)?;
        }
        Ok(t)
    }

    /// `sum_j c_j h^j` where `h` is the non-constant part.
    fn compose(&self, derivs: &[T]) -> Self {
        let mut h = self.clone();
        h.coeffs[0] = T::zero();
        let mut out = Taylor::constant(&self.layout, derivs[0].clone());
        out.valid = self.valid;
        let mut power = Taylor::constant(&self.layout, T::one());
        power.valid = self.valid;
        let mut fact = T::one();
        for (j, d) in derivs.iter().enumerate().skip(1) {
            power = power.mul(&h);
            fact = fact * T::from_rational(&Rational::from_integer(BigInt::from(j)));
            let c = d.clone() * fact.recip().expect("factorial is nonzero");
            out = out.add(&power.scale(&c));
        }
        out
    }

    pub fn recip(&self) -> Result<Self> {
        let a0 = self.value().recip().ok_or_else(|| Error::SingularPoint("division by zero".into()))?;
        let mut derivs = Vec::with_capacity(self.valid + 1);
        let mut d = a0.clone();
        for j in 0..=self.valid {
            derivs.push(d.clone());
            let factor = T::from_rational(&Rational::from_integer(BigInt::from(j as i64 + 1)));
            d = -(d * a0.clone()) * factor;
        }
        Ok(self.compose(&derivs))
    }

    pub fn func(&self, f: Func) -> Result<Self> {
        let derivs = T::derivatives(f, self.value(), self.valid).ok_or_else(|| {
            Error::Format(format!("{} cannot be evaluated in this number system or at this point", f.name()))
        })?;
        if derivs.iter().any(|d| !d.magnitude().is_finite()) {
            return Err(Error::SingularPoint(format!("{} is not finite", f.name())));
        }
        Ok(self.compose(&derivs))
    }
}

/// A scalar series or a square matrix of series.
#[derive(Clone, Debug)]
pub enum Value<T> {
    Scalar(Taylor<T>),
    Matrix(usize, Vec<Taylor<T>>),
}

impl<T: Field> Value<T> {
    fn layout(&self) -> &Arc<Layout> {
        match self {
            Value::Scalar(t) => &t.layout,
            Value::Matrix(_, m) => &m[0].layout,
        }
    }

    pub fn identity(layout: &Arc<Layout>, n: usize) -> Self {
        let mut m = vec![Taylor::constant(layout, T::zero()); n * n];
        for i in 0..n {
            m[i * n + i] = Taylor::constant(layout, T::one());
        }
        Value::Matrix(n, m)
    }

    fn map(&self, f: impl Fn(&Taylor<T>) -> Result<Taylor<T>>) -> Result<Self> {
        Ok(match self {
            Value::Scalar(t) => Value::Scalar(f(t)?),
            Value::Matrix(n, m) => Value::Matrix(*n, m.iter().map(f).collect::<Result<_>>()?),
        })
    }

    pub fn add(&self, o: &Self) -> Result<Self> {
        match (self, o) {
            (Value::Scalar(a), Value::Scalar(b)) => Ok(Value::Scalar(a.add(b))),
            (Value::Matrix(n, a), Value::Matrix(_, b)) => {
                Ok(Value::Matrix(*n, a.iter().zip(b).map(|(x, y)| x.add(y)).collect()))
            }
            // The normal form of a cancelled matrix expression is a classless zero.
            (Value::Scalar(z), m @ Value::Matrix(..)) | (m @ Value::Matrix(..), Value::Scalar(z))
                if z.coeffs.iter().all(T::is_zero) =>
            {
                Ok(m.clone())
            }
            _ => Err(jetcheck_core::Error::ClassMismatch("numeric sum of a scalar and a matrix".into()).into()),
        }
    }

    pub fn neg(&self) -> Self {
        self.map(|t| Ok(t.neg())).expect("negation is total")
    }

    pub fn sub(&self, o: &Self) -> Result<Self> {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Self) -> Self {
        match (self, o) {
            (Value::Scalar(a), Value::Scalar(b)) => Value::Scalar(a.mul(b)),
            (Value::Scalar(s), m @ Value::Matrix(..)) | (m @ Value::Matrix(..), Value::Scalar(s)) => {
                m.map(|t| Ok(t.mul(s))).expect("total")
            }
            (Value::Matrix(n, a), Value::Matrix(_, b)) => {
                let n = *n;
                let mut out = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = a[i * n].mul(&b[j]);
                        for k in 1..n {
                            acc = acc.add(&a[i * n + k].mul(&b[k * n + j]));
                        }
                        out.push(acc);
                    }
                }
                Value::Matrix(n, out)
            }
        }
    }

    pub fn derivative(&self, v: usize) -> Result<Self> {
        self.map(|t| t.derivative(v))
    }

    pub fn derivative_multi(&self, index: &MultiIndex) -> Result<Self> {
        self.map(|t| t.derivative_multi(index))
    }

    pub fn transpose(&self) -> Self {
        match self {
            Value::Scalar(_) => self.clone(),
            Value::Matrix(n, m) => {
                let n = *n;
                Value::Matrix(n, (0..n * n).map(|k| m[(k % n) * n + k / n].clone()).collect())
            }
        }
    }

    /// Inverse of a scalar series or of a matrix of series.
    pub fn inverse(&self) -> Result<Self> {
        match self {
            Value::Scalar(t) => Ok(Value::Scalar(t.recip()?)),
            Value::Matrix(n, m) => {
                let n = *n;
                let layout = self.layout().clone();
                let a0: Vec<T> = m.iter().map(|t| t.value().clone()).collect();
                let inv0 = invert_constant(n, &a0).ok_or_else(|| Error::SingularPoint("singular matrix".into()))?;
                let inv0 = Value::Matrix(n, inv0.into_iter().map(|c| Taylor::constant(&layout, c)).collect());
                let nil = Value::Matrix(
                    n,
                    m.iter()
                        .map(|t| {
                            let mut h = t.clone();
                            h.coeffs[0] = T::zero();
                            h
                        })
                        .collect(),
                );
                let step = inv0.mul(&nil).neg();
                let valid = m.iter().map(|t| t.valid).min().unwrap_or(0);
                let mut term = Value::identity(&layout, n);
                let mut sum = Value::identity(&layout, n);
                for _ in 0..valid {
                    term = term.mul(&step);
                    sum = sum.add(&term)?;
                }
                let out = sum.mul(&inv0);
                out.map(|t| {
                    let mut t = t.clone();
                    t.valid = t.valid.min(valid);
                    Ok(t.truncated())
                })
            }
        }
    }

    pub fn pow(&self, k: i32) -> Result<Self> {
        let base = if k < 0 { self.inverse()? } else { self.clone() };
        let mut out = match self {
            Value::Scalar(_) => Value::Scalar(Taylor::constant(self.layout(), T::one())),
            Value::Matrix(n, _) => Value::identity(self.layout(), *n),
        };
        for _ in 0..k.unsigned_abs() {
            out = out.mul(&base);
        }
        Ok(out)
    }

    /// Largest magnitude among the point values.
    pub fn max_magnitude(&self) -> f64 {
        match self {
            Value::Scalar(t) => t.value().magnitude(),
            Value::Matrix(_, m) => m.iter().map(|t| t.value().magnitude()).fold(0.0, f64::max),
        }
    }

    pub fn is_exact_zero(&self) -> bool {
        match self {
            Value::Scalar(t) => t.value().is_zero(),
            Value::Matrix(_, m) => m.iter().all(|t| t.value().is_zero()),
        }
    }
}

fn invert_constant<T: Field>(n: usize, a: &[T]) -> Option<Vec<T>> {
    let mut m: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let mut row: Vec<T> = a[i * n..(i + 1) * n].to_vec();
            row.extend((0..n).map(|j| if i == j { T::one() } else { T::zero() }));
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| m[x][col].magnitude().total_cmp(&m[y][col].magnitude()))?;
        if m[pivot][col].is_zero() || (!T::exact() && m[pivot][col].magnitude() < 1e-14) {
            return None;
        }
        m.swap(col, pivot);
        let inv = m[col][col].recip()?;
        for x in m[col].iter_mut() {
            *x = x.clone() * inv.clone();
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..2 * n {
                    let d = f.clone() * m[col][c].clone();
                    m[r][c] = m[r][c].clone() - d;
                }
            }
        }
    }
    Some(m.into_iter().flat_map(|row| row[n..].to_vec()).collect())
}

/// Values for every symbol an expression may mention.
#[derive(Clone, Debug)]
pub struct Env<T> {
    pub layout: Arc<Layout>,
    pub order: usize,
    pub point: Vec<T>,
    pub params: BTreeMap<Symbol, T>,
    pub fields: BTreeMap<Symbol, Value<T>>,
    pub matrix_order: usize,
}

impl<T: Field> Env<T> {
    pub fn new(nvars: usize, order: usize, point: Vec<T>, matrix_order: usize) -> Self {
        Env {
            layout: Layout::new(nvars, order),
            order,
            point,
            params: BTreeMap::new(),
            fields: BTreeMap::new(),
            matrix_order,
        }
    }

    fn var(&self, pos: usize) -> Value<T> {
        Value::Scalar(Taylor::variable(&self.layout, pos, self.point[pos].clone()))
    }

    fn constant(&self, q: &Rational) -> Value<T> {
        Value::Scalar(Taylor::constant(&self.layout, T::from_rational(q)))
    }

    fn param(&self, s: &Symbol) -> Result<Value<T>> {
        let v = self.params.get(s).ok_or_else(|| Error::UnboundSymbol(s.name().to_string()))?;
        Ok(Value::Scalar(Taylor::constant(&self.layout, v.clone())))
    }

    fn jet(&self, s: &Symbol, index: &MultiIndex) -> Result<Value<T>> {
        let v = self.fields.get(s).ok_or_else(|| Error::UnboundSymbol(s.name().to_string()))?;
        v.derivative_multi(index)
    }

    fn func(&self, f: Func, a: &Value<T>) -> Result<Value<T>> {
        match a {
            Value::Scalar(t) => Ok(Value::Scalar(t.func(f)?)),
            Value::Matrix(..) => Err(jetcheck_core::Error::ClassMismatch("function of a matrix".into()).into()),
        }
    }
}

fn variable_pos(system: &EquationSystem, s: &Symbol) -> Option<usize> {
    system.variables().iter().position(|v| v == s)
}

/// Evaluates a normal-form expression.
pub fn eval_expr<T: Field>(e: &Expr, system: &EquationSystem, env: &Env<T>) -> Result<Value<T>> {
    let zero = match e.class() {
        Class::Scalar => Value::Scalar(Taylor::constant(&env.layout, T::zero())),
        Class::Matrix => {
            Value::Matrix(env.matrix_order, vec![Taylor::constant(&env.layout, T::zero()); env.matrix_order.pow(2)])
        }
    };
    let mut total = zero;
    for (m, c) in e.terms() {
        let mut term = env.constant(c);
        for (atom, k) in &m.scalars {
            let v = match atom {
                ScalarAtom::Radical(n) => Value::Scalar(Taylor::constant(
                    &env.layout,
                    T::radical(*n).ok_or_else(|| Error::Format("radicals need floating point".into()))?,
                )),
                ScalarAtom::Param(s) => env.param(s)?,
                ScalarAtom::Var(s) => {
                    env.var(variable_pos(system, s).ok_or_else(|| Error::UnboundSymbol(s.name().into()))?)
                }
                ScalarAtom::Jet(s, i) => env.jet(s, i)?,
                ScalarAtom::Func(f, x) => env.func(*f, &eval_expr(x, system, env)?)?,
                ScalarAtom::Group(x) => eval_expr(x, system, env)?,
            };
            term = term.mul(&v.pow(*k)?);
        }
        if e.class() == Class::Matrix {
            let mut word = Value::identity(&env.layout, env.matrix_order);
            for a in &m.word {
                let mut v = env.jet(&a.symbol, &a.index)?;
                if a.transpose {
                    v = v.transpose();
                }
                if a.inverse {
                    v = v.inverse()?;
                }
                word = word.mul(&v);
            }
            term = term.mul(&word);
        }
        total = total.add(&term)?;
    }
    Ok(total)
}

/// Evaluates a raw parse tree (with macros expanded).
pub fn eval_ast<T: Field>(ast: &Ast, system: &EquationSystem, env: &Env<T>) -> Result<Value<T>> {
    let rec = |a: &Ast| eval_ast(a, system, env);
    match ast {
        Ast::Num(n, _) => Ok(env.constant(&Rational::from_integer(n.clone()))),
        Ast::Identity(_) => Ok(Value::identity(&env.layout, env.matrix_order)),
        Ast::Name { name, suffix, span } => {
            let s = system.lookup(name).cloned().ok_or_else(|| Error::UnboundSymbol(name.clone()))?;
            if let Some(pos) = variable_pos(system, &s) {
                return Ok(env.var(pos));
            }
            if system.is_parameter(&s) {
                return env.param(&s);
            }
            let index = match suffix {
                Some((text, sspan)) => system.suffix_index(text, *sspan)?,
                None => MultiIndex::zero(),
            };
            let _ = span;
            env.jet(&s, &index)
        }
        Ast::Call { name, args, .. } => {
            let vals: Vec<Value<T>> = args.iter().map(rec).collect::<Result<_>>()?;
            if let Some(f) = Func::from_name(name) {
                return env.func(f, &vals[0]);
            }
            match (name.as_str(), vals.as_slice()) {
                ("inv", [a]) => a.inverse(),
                ("tr", [a]) => Ok(a.transpose()),
                ("comm", [a, b]) => a.mul(b).sub(&b.mul(a)),
                ("sqrt", [a]) => match a {
                    Value::Scalar(t) if !T::exact() => {
                        let x = t.value().magnitude();
                        Ok(Value::Scalar(Taylor::constant(&env.layout, f64_to::<T>(x.sqrt()))))
                    }
                    _ => Err(Error::Format("sqrt needs floating point".into())),
                },
                _ => Err(Error::Format(format!("cannot evaluate call to {name}"))),
            }
        }
        Ast::Deriv { expr, vars, .. } => {
            let mut v = rec(expr)?;
            for (name, _) in vars {
                let s = system.lookup(name).ok_or_else(|| Error::UnboundSymbol(name.clone()))?;
                let pos = variable_pos(system, s).ok_or_else(|| Error::Format(format!("{name} is not a variable")))?;
                v = v.derivative(pos)?;
            }
            Ok(v)
        }
        Ast::Neg(a, _) => Ok(rec(a)?.neg()),
        Ast::Add(a, b) => rec(a)?.add(&rec(b)?),
        Ast::Sub(a, b) => rec(a)?.sub(&rec(b)?),
        Ast::Mul(a, b) => Ok(rec(a)?.mul(&rec(b)?)),
        Ast::Div(a, b) => Ok(rec(a)?.mul(&rec(b)?.inverse()?)),
        Ast::Pow(a, k, _) => rec(a)?.pow(*k),
    }
}

fn f64_to<T: Field>(x: f64) -> T {
    let q = Rational::from_float(x).unwrap_or_else(<Rational as Zero>::zero);
    T::from_rational(&q)
}

/// Series order needed to evaluate a tree exactly at the point.
pub fn ast_order(ast: &Ast, system: &EquationSystem) -> usize {
    let rec = |a: &Ast| ast_order(a, system);
    match ast {
        Ast::Num(..) | Ast::Identity(_) => 0,
        Ast::Name { suffix, .. } => {
            suffix.as_ref().and_then(|(s, sp)| system.suffix_index(s, *sp).ok()).map_or(0, |i| i.order() as usize)
        }
        Ast::Call { args, .. } => args.iter().map(rec).max().unwrap_or(0),
        Ast::Deriv { expr, vars, .. } => rec(expr) + vars.len(),
        Ast::Neg(a, _) | Ast::Pow(a, _, _) => rec(a),
        Ast::Add(a, b) | Ast::Sub(a, b) | Ast::Mul(a, b) | Ast::Div(a, b) => rec(a).max(rec(b)),
    }
}

/// Highest jet order in a normal-form expression.
pub fn expr_order(e: &Expr) -> usize {
    e.jets().iter().map(|(_, i)| i.order() as usize).max().unwrap_or(0)
}

fn random_rational(rng: &mut ChaCha8Rng) -> Rational {
    let n: i64 = rng.gen_range(-6..=6);
    let d: i64 = rng.gen_range(1..=4);
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Random truncated series for every dependent symbol, respecting declared
/// constancy, symmetry and invertibility.
pub fn random_env<T: Field>(
    system: &EquationSystem,
    order: usize,
    matrix_order: usize,
    rng: &mut ChaCha8Rng,
) -> Env<T> {
    let nv = system.variables().len();
    let point = (0..nv).map(|_| T::from_rational(&random_rational(rng))).collect();
    let mut env = Env::new(nv, order, point, matrix_order);
    for p in system.parameters() {
        let mut q = random_rational(rng);
        if Zero::is_zero(&q) {
            q = <Rational as num_traits::One>::one();
        }
        env.params.insert(p.clone(), T::from_rational(&q));
    }
    let layout = env.layout.clone();
    for d in system.dependents() {
        let allowed = |k: usize| {
            let idx = &layout.indices[k];
            if d.constant && k != 0 {
                return false;
            }
            d.constant_in.iter().all(|&p| idx[p] == 0)
        };
        let mut series = |diag_boost: bool| {
            let coeffs: Vec<T> = (0..layout.len())
                .map(|k| {
                    let mut q = if allowed(k) { random_rational(rng) } else { <Rational as Zero>::zero() };
                    if k == 0 && diag_boost {
                        q += Rational::from_integer(BigInt::from(8));
                    }
                    T::from_rational(&q)
                })
                .collect();
            Taylor::from_coeffs(&layout, coeffs)
        };
        let value = match d.class {
            Class::Scalar => Value::Scalar(series(false)),
            Class::Matrix => {
                let n = matrix_order;
                let mut m: Vec<Option<Taylor<T>>> = vec![None; n * n];
                for i in 0..n {
                    for j in 0..n {
                        if d.symmetric && j < i {
                            m[i * n + j] = m[j * n + i].clone();
                        } else {
                            m[i * n + j] = Some(series(d.invertible && i == j));
                        }
                    }
                }
                Value::Matrix(n, m.into_iter().map(|t| t.expect("filled")).collect())
            }
        };
        env.fields.insert(d.symbol.clone(), value);
    }
    env
}

/// Outcome of a randomized identity check.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    pub trials: usize,
    pub max_deviation: f64,
    pub exact_zero: bool,
}

/// Evaluates `text` as a raw tree at random points with random matrix
/// data of order `n`; the identity holds when every value vanishes.
pub fn random_matrix_check(
    system: &EquationSystem,
    text: &str,
    n: usize,
    trials: usize,
    exact: bool,
    seed: u64,
) -> Result<TrialReport> {
    let ast = system.expand_macros(&jetcheck_core::parse::parse_ast(text)?)?;
    let order = ast_order(&ast, system);
    let mut rng = crate::rng(seed);
    let mut max_deviation: f64 = 0.0;
    let mut exact_zero = true;
    let mut done = 0;
    let mut attempts = 0;
    while done < trials {
        attempts += 1;
        if attempts > trials * 10 + 10 {
            return Err(Error::SingularSample(attempts));
        }
        let outcome = if exact {
            let env = random_env::<Rational>(system, order, n, &mut rng);
            eval_ast(&ast, system, &env).map(|v| (v.max_magnitude(), v.is_exact_zero()))
        } else {
            let env = random_env::<f64>(system, order, n, &mut rng);
            eval_ast(&ast, system, &env).map(|v| (v.max_magnitude(), v.max_magnitude() <= 1e-10))
        };
        match outcome {
            Ok((dev, zero)) => {
                max_deviation = max_deviation.max(dev);
                exact_zero &= zero;
                done += 1;
            }
            Err(Error::SingularPoint(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(TrialReport { trials, max_deviation, exact_zero })
}

/// Evaluates a normal-form expression on random data (floating point).
pub fn random_residual(system: &EquationSystem, e: &Expr, n: usize, seed: u64) -> Result<f64> {
    let mut rng = crate::rng(seed);
    for _ in 0..20 {
        let env = random_env::<f64>(system, expr_order(e), n, &mut rng);
        match eval_expr(e, system, &env) {
            Ok(v) => return Ok(v.max_magnitude()),
            Err(Error::SingularPoint(_)) => continue,
            Err(err) => return Err(err),
        }
    }
    Err(Error::SingularSample(20))
}

/// Sample points drawn uniformly from the closed form's box.
pub fn sample_points(
    system: &EquationSystem,
    form: &crate::deffile::ClosedForm,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = crate::rng(seed);
    let nv = system.variables().len();
    (0..count)
        .map(|_| {
            (0..nv)
                .map(|p| {
                    let (lo, hi) =
                        form.domain.iter().find(|(q, _, _)| *q == p).map_or((-1.0, 1.0), |&(_, a, b)| (a, b));
                    rng.gen_range(lo..=hi)
                })
                .collect()
        })
        .collect()
}

/// Substitutes the closed form into `e`; derivatives of the bound symbols
/// come from exact symbolic differentiation of the closed form.
pub fn bind(e: &Expr, system: &EquationSystem, form: &crate::deffile::ClosedForm) -> Result<Expr> {
    let bindings: BTreeMap<Symbol, Expr> = form.bindings.iter().cloned().collect();
    Ok(jetcheck_core::calculus::substitute(e, &bindings, system)?)
}

/// Result of sampling a residual on a closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleReport {
    pub points: usize,
    pub max_abs: f64,
    /// Evaluated in exact rational arithmetic.
    pub exact: bool,
}

/// Max |e| over seeded points, in exact arithmetic when the bound
/// expression is rational in the variables and parameters.
pub fn sample_residual(
    e: &Expr,
    system: &EquationSystem,
    form: &crate::deffile::ClosedForm,
    count: usize,
    seed: u64,
) -> Result<SampleReport> {
    let bound = bind(e, system, form)?;
    if let Some(s) = bound.jets().into_iter().next() {
        return Err(Error::UnboundSymbol(s.0.name().to_string()));
    }
    let points = sample_points(system, form, count, seed);
    let mut max_abs: f64 = 0.0;
    let rational_ok = is_rational_expr(&bound);
    for p in &points {
        let v = if rational_ok {
            let point: Vec<Rational> = p.iter().map(|x| Rational::from_float(*x).expect("finite")).collect();
            let mut env = Env::<Rational>::new(p.len(), 0, point, 1);
            for (s, v) in &form.params {
                env.params.insert(s.clone(), Rational::from_float(*v).expect("finite"));
            }
            eval_expr(&bound, system, &env)?.max_magnitude()
        } else {
            let mut env = Env::<f64>::new(p.len(), 0, p.clone(), 1);
            for (s, v) in &form.params {
                env.params.insert(s.clone(), *v);
            }
            let v = eval_expr(&bound, system, &env)?.max_magnitude();
            if !v.is_finite() {
                return Err(Error::SingularPoint(format!("{p:?}")));
            }
            v
        };
        max_abs = max_abs.max(v);
    }
    Ok(SampleReport { points: points.len(), max_abs, exact: rational_ok })
}

fn is_rational_expr(e: &Expr) -> bool {
    e.terms().all(|(m, _)| {
        m.scalars.iter().all(|(a, _)| match a {
            ScalarAtom::Param(_) | ScalarAtom::Var(_) => true,
            ScalarAtom::Group(x) => is_rational_expr(x),
            _ => false,
        })
    })
}

/// Errors of central differences against the symbolic derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    /// Observed orders between consecutive steps.
    pub orders: Vec<f64>,
}

/// Compares `D_v e` (symbolic, then evaluated) with central differences of
/// `e` on the closed form, at `point`, for each step in `steps`.
pub fn finite_difference_cross_check(
    e: &Expr,
    var: &Symbol,
    system: &EquationSystem,
    form: &crate::deffile::ClosedForm,
    point: &[f64],
    steps: &[f64],
) -> Result<ConvergenceReport> {
    let pos = variable_pos(system, var).ok_or_else(|| Error::UnboundSymbol(var.name().into()))?;
    let symbolic = bind(&jetcheck_core::calculus::total_derivative_pos(e, pos, system)?, system, form)?;
    let plain = bind(e, system, form)?;
    let eval_at = |x: &Expr, p: &[f64]| -> Result<f64> {
        let mut env = Env::<f64>::new(p.len(), 0, p.to_vec(), 1);
        for (s, v) in &form.params {
            env.params.insert(s.clone(), *v);
        }
        match eval_expr(x, system, &env)? {
            Value::Scalar(t) => Ok(*t.value()),
            Value::Matrix(..) => Err(Error::Format("finite differences need a scalar expression".into())),
        }
    };
    let exact = eval_at(&symbolic, point)?;
    let mut errors = Vec::new();
    for &h in steps {
        let mut up = point.to_vec();
        let mut down = point.to_vec();
        up[pos] += h;
        down[pos] -= h;
        let fd = (eval_at(&plain, &up)? - eval_at(&plain, &down)?) / (2.0 * h);
        errors.push((fd - exact).abs());
    }
    let orders: Vec<f64> = errors
        .windows(2)
        .zip(steps.windows(2))
        .map(|(e, h)| if e[1] <= 1e-13 { f64::INFINITY } else { (e[0] / e[1]).ln() / (h[0] / h[1]).ln() })
        .collect();
    let floor = 1e-12 * exact.abs().max(1.0);
    let converged = errors.iter().all(|&x| x <= floor) || orders.iter().all(|&o| o >= 1.8);
    if !converged {
        return Err(Error::NoConvergence(format!("errors {errors:?}")));
    }
    Ok(ConvergenceReport { steps: steps.to_vec(), errors, orders })
}

/// The axisymmetric Ernst residual pair for scalar potentials `f`, `omega`
/// in the variables `(rho, z)`, and the residual of the matrix form built
/// from them; returns `(scalar, matrix)` maxima over the points.
pub fn ernst_bridge(
    system: &EquationSystem,
    f: &Ast,
    omega: &Ast,
    params: &[(Symbol, f64)],
    points: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let g = system.lookup("g").cloned().ok_or_else(|| Error::UnboundSymbol("g".into()))?;
    let eq = system
        .equation_for(&g)
        .ok_or_else(|| Error::UnknownName { kind: "equation for", name: "g".into() })?
        .expr
        .clone();
    let mut scalar_max: f64 = 0.0;
    let mut matrix_max: f64 = 0.0;
    for p in points {
        let mut env = Env::<f64>::new(system.variables().len(), 2, p.clone(), 2);
        for (s, v) in params {
            env.params.insert(s.clone(), *v);
        }
        let fv = eval_ast(f, system, &env)?;
        let wv = eval_ast(omega, system, &env)?;
        let (Value::Scalar(ft), Value::Scalar(wt)) = (&fv, &wv) else {
            return Err(Error::Format("Ernst potentials are scalars".into()));
        };
        let rho = p[0];
        let d = |t: &Taylor<f64>, v: usize| t.derivative(v);
        let lap = |t: &Taylor<f64>| -> Result<f64> {
            Ok(*d(&d(t, 0)?, 0)?.value() + *d(t, 0)?.value() / rho + *d(&d(t, 1)?, 1)?.value())
        };
        let f0 = *ft.value();
        let (fr, fz, wr, wz) = (*d(ft, 0)?.value(), *d(ft, 1)?.value(), *d(wt, 0)?.value(), *d(wt, 1)?.value());
        let re = f0 * lap(ft)? - (fr * fr + fz * fz - wr * wr - wz * wz);
        let im = f0 * lap(wt)? - 2.0 * (fr * wr + fz * wz);
        scalar_max = scalar_max.max(re.abs()).max(im.abs());
        let finv = ft.recip()?;
        let entries = vec![finv.clone(), wt.mul(&finv), wt.mul(&finv), ft.mul(ft).add(&wt.mul(wt)).mul(&finv)];
        env.fields.insert(g.clone(), Value::Matrix(2, entries));
        matrix_max = matrix_max.max(eval_expr(&eq, system, &env)?.max_magnitude());
    }
    Ok((scalar_max, matrix_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts() {
        assert_eq!(Layout::new(2, 2).len(), 6);
        assert_eq!(Layout::new(3, 0).len(), 1);
    }

    #[test]
    fn series_of_exp() {
        let layout = Layout::new(1, 4);
        let x = Taylor::variable(&layout, 0, 0.5);
        let e = x.func(Func::Exp).unwrap();
        let d3 = e.derivative(0).unwrap().derivative(0).unwrap().derivative(0).unwrap();
        assert!((d3.value() - 0.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn arctan_derivatives_match_rational_function() {
        let x = 0.7f64;
        let d = f64::derivatives(Func::Arctan, &x, 3).unwrap();
        assert!((d[1] - 1.0 / (1.0 + x * x)).abs() < 1e-12);
        assert!((d[2] + 2.0 * x / (1.0 + x * x).powi(2)).abs() < 1e-12);
        assert!((d[3] - (6.0 * x * x - 2.0) / (1.0 + x * x).powi(3)).abs() < 1e-12);
    }

    #[test]
    fn matrix_inverse_series_is_exact() {
        let layout = Layout::new(1, 3);
        let mut rng = crate::rng(7);
        let n = 2;
        let m: Vec<Taylor<Rational>> = (0..n * n)
            .map(|k| {
                let mut c: Vec<Rational> = (0..layout.len()).map(|_| random_rational(&mut rng)).collect();
                if k % 3 == 0 {
                    c[0] += Rational::from_integer(BigInt::from(9));
                }
                Taylor::from_coeffs(&layout, c)
            })
            .collect();
        let a = Value::Matrix(n, m);
        let prod = a.mul(&a.inverse().unwrap());
        let id = Value::identity(&layout, n);
        let diff = prod.sub(&id).unwrap();
        let Value::Matrix(_, entries) = diff else { unreachable!() };
        assert!(entries.iter().all(|t| t.coeffs.iter().all(Zero::is_zero)));
    }
}
