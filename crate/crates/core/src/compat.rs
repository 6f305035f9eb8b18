//! Symmetry conditions, conservation laws, Bäcklund transformations, Lax
//! pairs and formal series in the spectral parameter.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;

use crate::algebra::{euler_test, span_solve_vectors};
use crate::calculus::{lie_apply, substitute, total_derivative_multi, total_derivative_pos, Characteristic};
use crate::error::{Error, Result};
use crate::expr::{Expr, MatrixAtom, Rational, ScalarAtom};
use crate::reduce::{reduce_mod, solve_for, Rule, RuleSet};
use crate::report::{CheckReport, Status};
use crate::symbol::{Class, MultiIndex, Symbol};
use crate::system::{EquationSystem, JetContext};

/// The symmetry condition `S(P)` of the equation for `target`, written for a
/// placeholder `P` with `Q = form(P)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetryTemplate {
    pub target: Symbol,
    pub placeholder: Symbol,
    pub form: Expr,
    pub condition: Expr,
}

/// Declares the placeholder and generates the condition by applying the Lie
/// derivative to the target's equation.
pub fn build_template(
    system: &mut EquationSystem,
    target: &Symbol,
    placeholder: &str,
    form: Option<&str>,
) -> Result<SymmetryTemplate> {
    let p = match system.lookup(placeholder) {
        Some(s) if system.dependent(s).is_some() => s.clone(),
        Some(_) => return Err(Error::DuplicateName(placeholder.into())),
        None => {
            let s = system.add_dependent(
                placeholder,
                system.class_of(target).ok_or_else(|| Error::UnknownSymbol(target.name().into()))?,
            )?;
            let constant_in = system.dependent(target).map(|d| d.constant_in.clone()).unwrap_or_default();
            system.dependent_mut(&s).expect("declared").constant_in = constant_in;
            s
        }
    };
    let form = match form {
        Some(text) => system.parse(text)?,
        None => Expr::jet(&p, MultiIndex::zero(), system.class_of(&p).expect("dependent")),
    };
    let eq = system.equation_for(target).ok_or_else(|| Error::MissingOrientation(target.name().into()))?;
    let q = Characteristic::new("template", target.clone(), form.clone());
    let condition = lie_apply(&q, &eq.expr, system)?;
    Ok(SymmetryTemplate { target: target.clone(), placeholder: p, form, condition })
}

impl SymmetryTemplate {
    /// The condition with the placeholder solved from `Q = form(P)`.
    pub fn instantiate(&self, q: &Expr, ctx: &dyn JetContext) -> Result<Expr> {
        let p = solve_for(&(&self.form - q), &self.placeholder, &MultiIndex::zero(), ctx)?;
        let mut b = BTreeMap::new();
        b.insert(self.placeholder.clone(), p);
        substitute(&self.condition, &b, ctx)
    }
}

/// Reduces the symmetry condition of `q` modulo the rules.
pub fn symmetry_check(q: &Characteristic, system: &EquationSystem, rules: &RuleSet) -> CheckReport {
    let id = format!("symmetry:{}", q.name);
    let condition = match &system.template {
        Some(t) if t.target == q.target => t.instantiate(&q.expr, system),
        _ => match system.equation_for(&q.target) {
            Some(eq) => lie_apply(q, &eq.expr, system),
            None => Err(Error::MissingOrientation(q.target.name().into())),
        },
    };
    match condition {
        Ok(c) => reduce_mod(&id, &c, rules, system),
        Err(e) => CheckReport::failure(&id, &e),
    }
}

/// `D_{v1} P_1 + D_{v2} P_2 + ... = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConservationLaw {
    pub name: String,
    pub components: Vec<(Symbol, Expr)>,
}

impl ConservationLaw {
    pub fn divergence(&self, ctx: &dyn JetContext) -> Result<Expr> {
        let mut out = Expr::zero();
        for (v, c) in &self.components {
            let pos = ctx.variable_position(v).ok_or_else(|| Error::UnknownVariable(v.name().into()))?;
            let d = total_derivative_pos(c, pos, ctx)?;
            out = out.try_add(&d)?;
        }
        Ok(out)
    }

    pub fn density(&self) -> Option<&Expr> {
        self.components.first().map(|(_, e)| e)
    }

    fn derivative(&self, pos: usize, ctx: &dyn JetContext) -> Result<ConservationLaw> {
        let components = self
            .components
            .iter()
            .map(|(v, c)| Ok((v.clone(), total_derivative_pos(c, pos, ctx)?)))
            .collect::<Result<_>>()?;
        Ok(ConservationLaw { name: format!("D({})", self.name), components })
    }
}

pub fn conservation_check(law: &ConservationLaw, system: &EquationSystem, rules: &RuleSet) -> CheckReport {
    let id = format!("conslaw:{}", law.name);
    match law.divergence(system) {
        Ok(d) => reduce_mod(&id, &d, rules, system),
        Err(e) => CheckReport::failure(&id, &e),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Triviality {
    /// Every component vanishes modulo the equation.
    Type1,
    /// The divergence vanishes identically.
    Type2,
    /// A rational combination of known laws and their first x-derivatives.
    Type3(Vec<Rational>),
    /// The density is a total derivative in the flux variable.
    Type4,
    NontrivialSoFar,
}

/// Classifies a law against the four common kinds of triviality, in order.
pub fn triviality_classify(
    law: &ConservationLaw,
    system: &EquationSystem,
    rules: &RuleSet,
    known: &[ConservationLaw],
) -> Result<Triviality> {
    let mut reduced = Vec::new();
    for (_, c) in &law.components {
        reduced.push(rules.reduce_expr(c, system)?);
    }
    if reduced.iter().all(Expr::is_zero) {
        return Ok(Triviality::Type1);
    }
    if law.divergence(system)?.is_zero() {
        return Ok(Triviality::Type2);
    }
    let vars: Vec<&Symbol> = law.components.iter().map(|(v, _)| v).collect();
    let flux_pos = vars.last().and_then(|v| system.variable_position(v));
    if let Some(pos) = flux_pos {
        let mut basis = Vec::new();
        for k in known {
            let same_layout = k.components.len() == law.components.len()
                && k.components.iter().zip(&law.components).all(|(a, b)| a.0 == b.0);
            if !same_layout {
                continue;
            }
            for candidate in [k.clone(), k.derivative(pos, system)?] {
                let v = candidate
                    .components
                    .iter()
                    .map(|(_, c)| rules.reduce_expr(c, system))
                    .collect::<Result<Vec<_>>>()?;
                if v.iter().any(|e| !e.is_zero()) {
                    basis.push(v);
                }
            }
        }
        if !basis.is_empty() {
            match span_solve_vectors(&reduced, &basis) {
                Ok(c) => return Ok(Triviality::Type3(c)),
                Err(Error::NotInSpan) | Err(Error::RankDeficientBasis { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let density = law.density().expect("at least one component");
    if density.class() == Class::Matrix {
        return Err(Error::Type4Unsupported);
    }
    let (Some(pos), 2) = (flux_pos, law.components.len()) else {
        return Ok(Triviality::NontrivialSoFar);
    };
    let p = rules.reduce_expr(density, system)?;
    let only_flux_variable =
        p.jets().iter().all(|(_, i)| i.counts().iter().enumerate().all(|(k, &c)| k == pos || c == 0));
    if !only_flux_variable {
        return Ok(Triviality::NontrivialSoFar);
    }
    let mut symbols: BTreeSet<Symbol> = BTreeSet::new();
    for (s, _) in p.jets() {
        symbols.insert(s);
    }
    let var = system.variables()[pos].clone();
    for s in &symbols {
        if !euler_test(&p, s, &var, system)?.is_zero() {
            return Ok(Triviality::NontrivialSoFar);
        }
    }
    Ok(Triviality::Type4)
}

/// A Bäcklund transformation: relations `B_i = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BTSystem {
    pub name: String,
    pub relations: Vec<Expr>,
    pub eliminate: Vec<Symbol>,
}

fn pair_text(vars: &[Symbol], a: usize, b: usize) -> String {
    format!("{}/{}", vars[a].name(), vars[b].name())
}

/// Removes invertible matrix factors common to every term, on either side.
pub fn strip_invertible_factors(e: &Expr, ctx: &dyn JetContext) -> Expr {
    let mut e = e.clone();
    if e.class() == Class::Scalar {
        return e;
    }
    let invertible = |a: &MatrixAtom| a.inverse || (a.index.is_zero() && ctx.is_invertible(&a.symbol));
    loop {
        let first = e.terms().next().and_then(|(m, _)| m.word.first()).cloned();
        if let Some(a) = first.filter(|a| invertible(a) && e.terms().all(|(m, _)| m.word.first() == Some(a))) {
            e = Expr::word(vec![MatrixAtom { inverse: !a.inverse, ..a }]) * e;
            continue;
        }
        let last = e.terms().next().and_then(|(m, _)| m.word.last()).cloned();
        if let Some(a) = last.filter(|a| invertible(a) && e.terms().all(|(m, _)| m.word.last() == Some(a))) {
            e = e * Expr::word(vec![MatrixAtom { inverse: !a.inverse, ..a }]);
            continue;
        }
        return e;
    }
}

/// Solves each relation for the single first-order jet of `w` it contains.
fn first_order_rules(relations: &[Expr], w: &Symbol, ctx: &dyn JetContext) -> Result<Vec<(usize, Rule)>> {
    let mut out = Vec::new();
    for (k, r) in relations.iter().enumerate() {
        let jets: Vec<MultiIndex> =
            r.jets().into_iter().filter(|(s, i)| s == w && !i.is_zero()).map(|(_, i)| i).collect();
        let [lead] = jets.as_slice() else {
            return Err(Error::NotSolvable(format!(
                "{} (relation {} has {} derivatives of it)",
                w.name(),
                k + 1,
                jets.len()
            )));
        };
        if lead.order() != 1 {
            return Err(Error::NotSolvable(format!("{} (relation {} is not first order)", w.name(), k + 1)));
        }
        let pos = lead.steps()[0];
        if out.iter().any(|(p, _)| *p == pos) {
            return Err(Error::NotSolvable(format!("{} (two relations give the same derivative)", w.name())));
        }
        let rhs = solve_for(r, w, lead, ctx).map_err(|e| Error::NotSolvable(format!("{}: {e}", w.name())))?;
        out.push((pos, Rule { name: format!("{}#{}", w.name(), k + 1), symbol: w.clone(), lead: lead.clone(), rhs }));
    }
    if out.len() < 2 {
        return Err(Error::NotSolvable(format!("{} (need two relations)", w.name())));
    }
    Ok(out)
}

/// The compatibility condition obtained by eliminating `w`.
pub fn bt_eliminate(bt: &BTSystem, w: &Symbol, ctx: &dyn JetContext) -> Result<Expr> {
    let solved = first_order_rules(&bt.relations, w, ctx)?;
    let (p0, r0) = &solved[0];
    let (p1, r1) = &solved[1];
    let mismatch = total_derivative_pos(&r0.rhs, *p1, ctx)? - total_derivative_pos(&r1.rhs, *p0, ctx)?;
    let rules = RuleSet::new(solved.iter().map(|(_, r)| r.clone()).collect());
    let reduced = rules.reduce_expr(&mismatch, ctx)?;
    let cleared = strip_invertible_factors(&reduced.clear_denominators(), ctx).monic();
    if cleared.contains_symbol(w) {
        return Err(Error::MixedDerivativeMismatch {
            symbol: w.name().to_string(),
            residual: format!(
                "{} terms after cross-differentiating {}",
                cleared.len(),
                pair_text(ctx.variables(), *p0, *p1)
            ),
        });
    }
    Ok(cleared)
}

/// Eliminates each designated symbol in turn.
pub fn bt_compatibility(bt: &BTSystem, ctx: &dyn JetContext) -> Result<BTreeMap<Symbol, Expr>> {
    let mut out = BTreeMap::new();
    for w in &bt.eliminate {
        out.insert(w.clone(), bt_eliminate(bt, w, ctx)?);
    }
    Ok(out)
}

/// Two linear relations `rel_i = 0` for the auxiliary field, each solved for
/// its leading jet.
#[derive(Clone, Debug, PartialEq)]
pub struct LaxPair {
    pub name: String,
    pub aux: Symbol,
    pub parameter: Option<Symbol>,
    pub relations: Vec<(Expr, MultiIndex)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaxReport {
    /// Cross-derivative mismatch after eliminating the auxiliary field's derivatives.
    pub mismatch: Expr,
    /// The mismatch with denominators cleared and the parameter power and
    /// auxiliary factor divided out where they are common.
    pub residual: Expr,
    pub by_degree: BTreeMap<i32, Expr>,
    pub degree_reports: Vec<(i32, CheckReport)>,
    pub status: Status,
}

fn strip_aux(e: &Expr, aux: &Symbol) -> Expr {
    if e.is_zero() {
        return e.clone();
    }
    let scalar_factor = |m: &crate::expr::Monomial| {
        m.scalars.iter().any(|(a, k)| *k == 1 && matches!(a, ScalarAtom::Jet(s, i) if s == aux && i.is_zero()))
    };
    let right_factor = |m: &crate::expr::Monomial| {
        m.word.last().is_some_and(|w| &w.symbol == aux && w.index.is_zero() && !w.inverse && !w.transpose)
    };
    if e.terms().all(|(m, _)| scalar_factor(m)) {
        let mut out = Expr::zero();
        for (m, c) in e.terms() {
            let scalars = m
                .scalars
                .iter()
                .filter(|(a, k)| !(*k == 1 && matches!(a, ScalarAtom::Jet(s, i) if s == aux && i.is_zero())))
                .cloned()
                .collect();
            out.add_in_place(Expr::from_parts(e.class(), c.clone(), scalars, m.word.clone()));
        }
        return out;
    }
    if e.class() == Class::Matrix && e.terms().all(|(m, _)| right_factor(m)) {
        let mut out = Expr::zero();
        for (m, c) in e.terms() {
            let word = m.word[..m.word.len() - 1].to_vec();
            out.add_in_place(Expr::from_parts(Class::Matrix, c.clone(), m.scalars.clone(), word));
        }
        return out;
    }
    let left_factor = |m: &crate::expr::Monomial| {
        m.word.first().is_some_and(|w| &w.symbol == aux && w.index.is_zero() && !w.inverse && !w.transpose)
    };
    if e.class() == Class::Matrix && e.terms().all(|(m, _)| left_factor(m)) {
        let mut out = Expr::zero();
        for (m, c) in e.terms() {
            out.add_in_place(Expr::from_parts(Class::Matrix, c.clone(), m.scalars.clone(), m.word[1..].to_vec()));
        }
        return out;
    }
    e.clone()
}

/// Cross-differentiates the pair, eliminates the auxiliary field and reduces
/// each parameter degree of the result modulo the system.
pub fn lax_compatibility(pair: &LaxPair, system: &EquationSystem, rules: &RuleSet) -> Result<LaxReport> {
    let [(e0, l0), (e1, l1)] = pair.relations.as_slice() else {
        return Err(Error::EliminationFailure(format!("{} needs exactly two relations", pair.name)));
    };
    let mut aux_rules = Vec::new();
    for (k, (e, l)) in pair.relations.iter().enumerate() {
        let rhs = solve_for(e, &pair.aux, l, system).map_err(|err| Error::EliminationFailure(err.to_string()))?;
        aux_rules.push(Rule {
            name: format!("{}#{}", pair.name, k + 1),
            symbol: pair.aux.clone(),
            lead: l.clone(),
            rhs,
        });
    }
    let _ = (e0, e1);
    let lcm = l0.join(l1);
    let d0 = total_derivative_multi(&aux_rules[0].rhs, &lcm.minus(l0).expect("join dominates"), system)?;
    let d1 = total_derivative_multi(&aux_rules[1].rhs, &lcm.minus(l1).expect("join dominates"), system)?;
    let aux_set = RuleSet::new(aux_rules).with_pass_limit(rules.pass_limit);
    let reduced = aux_set.reduce(&(d0 - d1), system)?;
    if reduced.exhausted {
        return Err(Error::EliminationFailure(format!(
            "{}: pass limit while eliminating {}",
            pair.name,
            pair.aux.name()
        )));
    }
    let mismatch = reduced.residual;
    let mut residual = mismatch.clear_denominators();
    if let Some(p) = &pair.parameter {
        residual = residual.strip_power(p);
    }
    residual = strip_aux(&residual, &pair.aux);
    let by_degree = match &pair.parameter {
        Some(p) => residual.coefficients_in(p)?,
        None => {
            let mut m = BTreeMap::new();
            if !residual.is_zero() {
                m.insert(0, residual.clone());
            }
            m
        }
    };
    let mut degree_reports = Vec::new();
    let mut status = Status::Zero;
    for (d, e) in &by_degree {
        let r = reduce_mod(&format!("lax:{}:deg{}", pair.name, d), e, rules, system);
        status = status.max(r.status);
        degree_reports.push((*d, r));
    }
    Ok(LaxReport { mismatch, residual, by_degree, degree_reports, status })
}

/// Name of the `n`-th series coefficient symbol.
pub fn series_name(prefix: &str, n: i32) -> String {
    if n < 0 {
        format!("{prefix}m{}", -n)
    } else {
        format!("{prefix}{n}")
    }
}

/// Declares (or finds) the coefficient symbols `prefix_n` for `n` in `range`.
pub fn series_symbols(
    system: &mut EquationSystem,
    aux: &Symbol,
    parameter: Option<&Symbol>,
    prefix: &str,
    lo: i32,
    hi: i32,
) -> Result<BTreeMap<i32, Symbol>> {
    let mut out = BTreeMap::new();
    let like = system.dependent(aux).ok_or_else(|| Error::UnknownSymbol(aux.name().into()))?.clone();
    let param_pos = parameter.and_then(|p| system.variable_position(p));
    for n in lo..=hi {
        let name = series_name(prefix, n);
        let s = match system.lookup(&name) {
            Some(s) if system.dependent(s).is_some() => s.clone(),
            Some(_) => return Err(Error::DuplicateName(name)),
            None => {
                let s = system.add_dependent(&name, like.class)?;
                let d = system.dependent_mut(&s).expect("declared");
                d.constant_in = like.constant_in.clone();
                if let Some(p) = param_pos {
                    if !d.constant_in.contains(&p) {
                        d.constant_in.push(p);
                    }
                }
                s
            }
        };
        out.insert(n, s);
    }
    Ok(out)
}

/// A relation pair obtained from one power of the spectral parameter,
/// linking the coefficients `n` and `n + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesRelation {
    pub n: i32,
    pub bt: BTSystem,
}

/// Substitutes `aux = sum_n p^n Phi_n` over `lo..=hi` and collects, for each
/// relation, the coefficients of powers of `p` whose contributions all come
/// from indices inside the range.
pub fn series_extract(
    pair: &LaxPair,
    system: &mut EquationSystem,
    prefix: &str,
    lo: i32,
    hi: i32,
) -> Result<Vec<SeriesRelation>> {
    let p = pair.parameter.clone().ok_or_else(|| Error::NotLaurent(format!("{} has no parameter", pair.name)))?;
    let symbols = series_symbols(system, &pair.aux, Some(&p), prefix, lo, hi)?;
    let lam = if system.is_variable(&p) { Expr::var(&p) } else { Expr::param(&p) };
    let class = system.class_of(&pair.aux).expect("aux is dependent");
    let mut series = Expr::zero();
    for (n, s) in &symbols {
        series.add_in_place(lam.pow(*n)? * Expr::jet(s, MultiIndex::zero(), class));
    }
    let mut b = BTreeMap::new();
    b.insert(pair.aux.clone(), series);
    let index_of: BTreeMap<&Symbol, i32> = symbols.iter().map(|(n, s)| (s, *n)).collect();

    let mut per_relation: Vec<BTreeMap<i32, Expr>> = Vec::new();
    for (rel, _) in &pair.relations {
        let expanded = substitute(rel, &b, &*system)?;
        let degrees = expanded.coefficients_in(&p).map_err(|e| Error::NotLaurent(e.to_string()))?;
        let mut shifts = BTreeSet::new();
        for (d, e) in &degrees {
            for (s, _) in e.jets() {
                if let Some(n) = index_of.get(&s) {
                    shifts.insert(d - n);
                }
            }
        }
        let Some(&top) = shifts.iter().next_back() else {
            return Err(Error::NotLaurent(format!("{} does not involve {}", pair.name, pair.aux.name())));
        };
        let mut labelled = BTreeMap::new();
        for (d, e) in degrees {
            if shifts.iter().all(|s| (lo..=hi).contains(&(d - s))) {
                labelled.insert(d - top, e);
            }
        }
        per_relation.push(labelled);
    }
    let mut out = Vec::new();
    let first = per_relation.first().cloned().unwrap_or_default();
    for n in first.keys() {
        if !per_relation.iter().all(|m| m.contains_key(n)) {
            continue;
        }
        let relations = per_relation.iter().map(|m| m[n].clone()).collect();
        let eliminate = symbols.get(&(n + 1)).cloned().into_iter().collect();
        out.push(SeriesRelation {
            n: *n,
            bt: BTSystem { name: format!("{}[{}]", pair.name, n), relations, eliminate },
        });
    }
    Ok(out)
}

/// `q` as a rational number.
pub fn rational(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduce::orient;

    fn sine_gordon() -> EquationSystem {
        let mut s = EquationSystem::new();
        s.add_variable("x").unwrap();
        s.add_variable("t").unwrap();
        s.add_parameter("a").unwrap();
        s.add_dependent("u", Class::Scalar).unwrap();
        s.add_dependent("v", Class::Scalar).unwrap();
        s.add_equation("sg", "u_xt - sin(u)", "u_xt").unwrap();
        s
    }

    #[test]
    fn sine_gordon_bt_both_ways() {
        let s = sine_gordon();
        let bt = BTSystem {
            name: "bt".into(),
            relations: vec![
                s.parse("u_x + v_x - 2*a*sin((u - v)/2)").unwrap(),
                s.parse("u_t - v_t - 2/a*sin((u + v)/2)").unwrap(),
            ],
            eliminate: vec![s.lookup("v").unwrap().clone(), s.lookup("u").unwrap().clone()],
        };
        let out = bt_compatibility(&bt, &s).unwrap();
        assert_eq!(out[s.lookup("v").unwrap()], s.parse("u_xt - sin(u)").unwrap());
        assert_eq!(out[s.lookup("u").unwrap()], s.parse("v_xt - sin(v)").unwrap());
    }

    #[test]
    fn symmetry_and_conservation() {
        let s = sine_gordon();
        let rules = orient(&s).unwrap();
        let u = s.lookup("u").unwrap().clone();
        let q = Characteristic::new("ut", u.clone(), s.parse("u_t").unwrap());
        assert!(symmetry_check(&q, &s, &rules).is_zero());
        let q = Characteristic::new("bad", u.clone(), s.parse("u_x + u").unwrap());
        assert_eq!(symmetry_check(&q, &s, &rules).status, Status::Residual);
        let x = s.lookup("x").unwrap().clone();
        let t = s.lookup("t").unwrap().clone();
        let law = ConservationLaw {
            name: "energy".into(),
            components: vec![(t.clone(), s.parse("1 - cos(u)").unwrap()), (x.clone(), s.parse("-1/2*u_t^2").unwrap())],
        };
        assert!(conservation_check(&law, &s, &rules).is_zero());
    }

    #[test]
    fn series_name_scheme() {
        assert_eq!(series_name("Q", 2), "Q2");
        assert_eq!(series_name("Q", -1), "Qm1");
    }
}
