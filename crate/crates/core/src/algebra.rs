//! Exact linear algebra over the rationals, structure constants of
//! symmetry algebras and the Euler operator.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::calculus::{lie_bracket, partial_jet, total_derivative_pos, Characteristic};
use crate::error::{Error, Result};
use crate::expr::{Expr, Monomial, Rational};
use crate::reduce::RuleSet;
use crate::symbol::{Class, MultiIndex, Symbol};
use crate::system::{EquationSystem, JetContext};

/// Row-reduces `m` in place and returns the pivot column of each pivot row.
fn row_reduce(m: &mut [Vec<Rational>], cols: usize) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        let Some(p) = (row..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(row, p);
        let inv = Rational::one() / &m[row][col];
        for x in m[row].iter_mut() {
            *x = &*x * &inv;
        }
        for r in 0..m.len() {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..m[r].len() {
                    let d = &f * &m[row][c];
                    m[r][c] -= d;
                }
            }
        }
        pivots.push(col);
        row += 1;
        if row == m.len() {
            break;
        }
    }
    pivots
}

/// Rank of a list of rational vectors.
pub fn rank(vectors: &[Vec<Rational>]) -> usize {
    let Some(cols) = vectors.first().map(Vec::len) else {
        return 0;
    };
    let mut m = vectors.to_vec();
    row_reduce(&mut m, cols).len()
}

type Key = (usize, Monomial);

fn coordinates(components: &[&Expr], keys: &mut BTreeMap<Key, usize>) -> BTreeMap<usize, Rational> {
    let mut out = BTreeMap::new();
    for (k, e) in components.iter().enumerate() {
        for (m, c) in e.terms() {
            let n = keys.len();
            let idx = *keys.entry((k, m.clone())).or_insert(n);
            out.insert(idx, c.clone());
        }
    }
    out
}

/// Solves `target = sum_i c_i basis_i` for vectors of expressions.
pub fn span_solve_vectors(target: &[Expr], basis: &[Vec<Expr>]) -> Result<Vec<Rational>> {
    let mut keys = BTreeMap::new();
    let cols: Vec<BTreeMap<usize, Rational>> =
        basis.iter().map(|b| coordinates(&b.iter().collect::<Vec<_>>(), &mut keys)).collect();
    let rhs = coordinates(&target.iter().collect::<Vec<_>>(), &mut keys);
    let n = basis.len();
    let mut m: Vec<Vec<Rational>> = vec![vec![Rational::zero(); n + 1]; keys.len()];
    for (j, col) in cols.iter().enumerate() {
        for (&r, c) in col {
            m[r][j] = c.clone();
        }
    }
    for (&r, c) in &rhs {
        m[r][n] = c.clone();
    }
    let pivots = row_reduce(&mut m, n + 1);
    let basis_rank = pivots.iter().filter(|&&c| c < n).count();
    if basis_rank < n {
        return Err(Error::RankDeficientBasis { rank: basis_rank, size: n });
    }
    if pivots.contains(&n) {
        return Err(Error::NotInSpan);
    }
    let mut out = vec![Rational::zero(); n];
    for (row, &col) in pivots.iter().enumerate() {
        out[col] = m[row][n].clone();
    }
    Ok(out)
}

/// Solves `target = sum_i c_i basis_i` exactly.
pub fn span_solve(target: &Expr, basis: &[Expr]) -> Result<Vec<Rational>> {
    let basis: Vec<Vec<Expr>> = basis.iter().map(|b| vec![b.clone()]).collect();
    span_solve_vectors(core::slice::from_ref(target), &basis)
}

/// Structure constants `c[i][j][k]` with `[Q_i, Q_j] = sum_k c[i][j][k] Q_k`
/// modulo the equation.
pub fn structure_constants(
    basis: &[Characteristic],
    system: &EquationSystem,
    rules: &RuleSet,
) -> Result<Vec<Vec<Vec<Rational>>>> {
    let reduced: Vec<Expr> = basis.iter().map(|q| rules.reduce_expr(&q.expr, system)).collect::<Result<_>>()?;
    let n = basis.len();
    let mut c = vec![vec![vec![Rational::zero(); n]; n]; n];
    for i in 0..n {
        for j in 0..n {
            let b = lie_bracket(&basis[i], &basis[j], system)?;
            let b = rules.reduce_expr(&b.expr, system)?;
            c[i][j] = match span_solve(&b, &reduced) {
                Ok(v) => v,
                Err(Error::NotInSpan) => {
                    return Err(Error::NotClosed { i: i + 1, j: j + 1, residual: system.render(&b) });
                }
                Err(e) => return Err(e),
            };
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                if c[i][j][k] != -c[j][i][k].clone() {
                    return Err(Error::Invalid("bracket table is not antisymmetric".into()));
                }
            }
        }
    }
    Ok(c)
}

/// `sum_k (-D_v)^k dP/du_{v^k}`; zero exactly when `P` is a total
/// `v`-derivative (for `P` depending on `v`-derivatives of `u` only).
pub fn euler_test(p: &Expr, u: &Symbol, v: &Symbol, ctx: &dyn JetContext) -> Result<Expr> {
    if p.class() == Class::Matrix {
        return Err(Error::MatrixClassUnsupported);
    }
    let pos = ctx.variable_position(v).ok_or_else(|| Error::UnknownVariable(v.name().into()))?;
    let top = p.jets().into_iter().filter(|(s, _)| s == u).map(|(_, i)| i.count(pos)).max().unwrap_or(0);
    let mut out = Expr::zero();
    for k in 0..=top {
        let mut counts = vec![0u16; pos + 1];
        counts[pos] = k;
        let mut term = partial_jet(p, u, &MultiIndex::from_counts(&counts), ctx)?;
        for _ in 0..k {
            term = -total_derivative_pos(&term, pos, ctx)?;
        }
        out = out + term;
    }
    Ok(out)
}
