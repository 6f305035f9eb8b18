//! Runs the `[checks]` lines of a definition.
//!
//! Each line starts with a keyword; see `docs/format.md` for the grammar.

use std::collections::BTreeMap;
use std::time::Instant;

use jetcheck_core::algebra::{span_solve, structure_constants};
use jetcheck_core::calculus::{lie_apply, lie_bracket, substitute, Characteristic};
use jetcheck_core::compat::{
    bt_eliminate, conservation_check, lax_compatibility, series_extract, strip_invertible_factors, symmetry_check,
    triviality_classify, BTSystem, Triviality,
};
use jetcheck_core::reduce::{orient, reduce_mod, RuleSet};
use jetcheck_core::system::EquationSystem;
use jetcheck_core::{CheckReport, Expr, MultiIndex, Rational, Status, Symbol};
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::deffile::{parse_number, parse_relation, split_top, ClosedForm, Definition};
use crate::error::{Error, Result};
use crate::numeric;

pub const DEFAULT_SEED: u64 = 0x6a65_7463;
pub const DEFAULT_POINTS: usize = 20;
/// Tolerance for equations and transformation relations on closed forms.
pub const CLOSED_FORM_TOL: f64 = 1e-10;
/// Tolerance for derived quantities (divergences, symmetry conditions).
pub const DERIVED_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Options {
    pub seed: u64,
    pub pass_limit: usize,
    pub points: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options { seed: DEFAULT_SEED, pass_limit: jetcheck_core::reduce::DEFAULT_PASS_LIMIT, points: DEFAULT_POINTS }
    }
}

/// One finished check, in the serialized report shape.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub check_id: String,
    pub status: &'static str,
    pub residual_text: String,
    pub passes: usize,
    pub millis: u64,
    /// Detail shown in text reports only.
    #[serde(skip)]
    pub message: Option<String>,
}

impl Outcome {
    pub fn from_report(prefix: &str, r: CheckReport, millis: u64) -> Self {
        Outcome {
            check_id: if prefix.is_empty() { r.check_id } else { format!("{prefix}:{}", r.check_id) },
            status: r.status.as_str(),
            residual_text: r.residual_text,
            passes: r.passes,
            millis,
            message: r.message,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.status == Status::Zero.as_str()
    }
}

fn verdict(id: String, ok: bool, detail: String) -> CheckReport {
    CheckReport::verdict(&id, ok, detail)
}

/// Clears denominators, strips invertible factors and scales to monic,
/// as done for compatibility conditions.
pub fn canonical(e: &Expr, system: &EquationSystem) -> Expr {
    strip_invertible_factors(&e.clear_denominators(), system).monic()
}

fn characteristic<'a>(system: &'a EquationSystem, name: &str) -> Result<&'a Characteristic> {
    system.characteristic(name).ok_or_else(|| Error::UnknownName { kind: "characteristic", name: name.into() })
}

fn bt<'a>(system: &'a EquationSystem, name: &str) -> Result<&'a BTSystem> {
    system.bt(name).ok_or_else(|| Error::UnknownName { kind: "transformation", name: name.into() })
}

fn symbol(system: &EquationSystem, name: &str) -> Result<Symbol> {
    system.lookup(name.trim()).cloned().ok_or_else(|| Error::UnknownName { kind: "symbol", name: name.trim().into() })
}

fn list(text: &str) -> Vec<&str> {
    text.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect()
}

fn rationals(text: &str) -> Result<Vec<Rational>> {
    list(text).into_iter().map(parse_rational).collect()
}

fn parse_rational(t: &str) -> Result<Rational> {
    let t = t.trim();
    let (p, q) = t.split_once('/').unwrap_or((t, "1"));
    let p: num_bigint::BigInt = p.trim().parse().map_err(|_| Error::Format(format!("'{t}' is not a rational")))?;
    let q: num_bigint::BigInt = q.trim().parse().map_err(|_| Error::Format(format!("'{t}' is not a rational")))?;
    if q.is_zero() {
        return Err(Error::Format(format!("'{t}' has a zero denominator")));
    }
    Ok(Rational::new(p, q))
}

fn show_rationals(v: &[Rational]) -> String {
    format!("({})", v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "))
}

/// Parses `S := e, T := f` (or `;`-separated) into bindings.
fn bindings(system: &EquationSystem, text: &str, sep: &str) -> Result<BTreeMap<Symbol, Expr>> {
    let mut out = BTreeMap::new();
    for part in split_top(text, sep) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (s, e) =
            part.split_once(":=").ok_or_else(|| Error::Format(format!("binding '{part}' needs 'S := expr'")))?;
        out.insert(symbol(system, s)?, system.parse(e.trim())?);
    }
    Ok(out)
}

/// Optional `[p = value]` prefix; returns parameter bindings and the rest.
fn param_prefix<'a>(system: &EquationSystem, text: &'a str) -> Result<(BTreeMap<Symbol, Expr>, &'a str)> {
    let text = text.trim_start();
    let Some(rest) = text.strip_prefix('[') else {
        return Ok((BTreeMap::new(), text));
    };
    let (inner, rest) = rest.split_once(']').ok_or_else(|| Error::Format("unclosed '['".into()))?;
    let mut out = BTreeMap::new();
    for part in inner.split(',').filter(|p| !p.trim().is_empty()) {
        let (p, v) = part.split_once('=').ok_or_else(|| Error::Format(format!("'{part}' needs 'p = value'")))?;
        out.insert(symbol(system, p)?, Expr::constant(parse_rational(v)?));
    }
    Ok((out, rest))
}

fn substitute_bt(bt: &BTSystem, b: &BTreeMap<Symbol, Expr>, system: &EquationSystem) -> Result<BTSystem> {
    let relations = bt.relations.iter().map(|r| substitute(r, b, system)).collect::<jetcheck_core::Result<_>>()?;
    Ok(BTSystem { name: bt.name.clone(), relations, eliminate: bt.eliminate.clone() })
}

fn triviality_text(t: &Triviality) -> String {
    match t {
        Triviality::Type1 => "Type1".into(),
        Triviality::Type2 => "Type2".into(),
        Triviality::Type3(c) => format!("Type3({})", c.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(", ")),
        Triviality::Type4 => "Type4".into(),
        Triviality::NontrivialSoFar => "NontrivialSoFar".into(),
    }
}

/// Runs the checks of a definition under the given options.
pub struct Runner<'a> {
    def: &'a Definition,
    rules: RuleSet,
    opts: Options,
}

impl<'a> Runner<'a> {
    pub fn new(def: &'a Definition, opts: &Options) -> Result<Self> {
        let rules = orient(&def.system)?.with_pass_limit(opts.pass_limit);
        Ok(Runner { def, rules, opts: opts.clone() })
    }

    fn system(&self) -> &EquationSystem {
        &self.def.system
    }

    fn parse(&self, text: &str) -> Result<Expr> {
        let t = text.trim();
        if t == "template" {
            let tpl = self.system().template.as_ref().ok_or_else(|| Error::Format("no template declared".into()))?;
            return Ok(tpl.condition.clone());
        }
        Ok(self.system().parse(t)?)
    }

    /// Every check of the definition, each prefixed with the definition name.
    pub fn run_all(&self) -> Vec<Outcome> {
        let mut out = Vec::new();
        for line in &self.def.checks {
            let start = Instant::now();
            let reports = self.run_line(&line.text).unwrap_or_else(|e| {
                let id = format!("line{}", line.line);
                vec![CheckReport::failure(
                    &id,
                    &jetcheck_core::Error::Invalid(e.at(&self.def.name, line.line).to_string()),
                )]
            });
            let millis = start.elapsed().as_millis() as u64;
            let share = millis / reports.len().max(1) as u64;
            out.extend(reports.into_iter().map(|r| Outcome::from_report(&self.def.name, r, share)));
        }
        out
    }

    /// Runs one check line.
    pub fn run_line(&self, text: &str) -> Result<Vec<CheckReport>> {
        let (kw, rest) = text.trim().split_once(char::is_whitespace).unwrap_or((text.trim(), ""));
        let rest = rest.trim();
        match kw {
            "symmetry" => self.symmetry(rest),
            "symmetry-residual" => self.symmetry_residual(rest),
            "conslaw" => self.conslaw(rest),
            "trivial" => self.trivial(rest).map(|r| vec![r]),
            "bt" => self.bt(rest).map(|r| vec![r]),
            "lax" => self.lax(rest),
            "identity" => self.identity(rest).map(|r| vec![r]),
            "equal" => self.equal(rest).map(|r| vec![r]),
            "reduces" => self.reduces(rest).map(|r| vec![r]),
            "lie" => self.lie(rest).map(|r| vec![r]),
            "template" => self.template(rest).map(|r| vec![r]),
            "bracket" => self.bracket(rest).map(|r| vec![r]),
            "structure" => self.structure().map(|r| vec![r]),
            "span" => self.span(rest).map(|r| vec![r]),
            "series" => self.series(rest),
            "chain" => self.chain(rest),
            "numeric" => self.numeric(rest),
            "matrix" => self.matrix(rest).map(|r| vec![r]),
            "nonsolution" => self.nonsolution(rest).map(|r| vec![r]),
            "bridge" => self.bridge(rest).map(|r| vec![r]),
            "fd" => self.fd(rest).map(|r| vec![r]),
            other => Err(Error::Format(format!("unknown check '{other}'"))),
        }
    }

    fn characteristics(&self, rest: &str) -> Result<Vec<&Characteristic>> {
        if rest.trim() == "*" {
            return Ok(self.system().characteristics.iter().collect());
        }
        list(rest).into_iter().map(|n| characteristic(self.system(), n)).collect()
    }

    fn symmetry(&self, rest: &str) -> Result<Vec<CheckReport>> {
        Ok(self.characteristics(rest)?.into_iter().map(|q| symmetry_check(q, self.system(), &self.rules)).collect())
    }

    fn symmetry_residual(&self, rest: &str) -> Result<Vec<CheckReport>> {
        let mut out = Vec::new();
        for q in self.characteristics(rest)? {
            let r = symmetry_check(q, self.system(), &self.rules);
            let ok = r.status == Status::Residual;
            let detail = format!("expected a residual, got {}: {}", r.status.as_str(), r.residual_text);
            out.push(verdict(format!("negative:symmetry:{}", q.name), ok, if ok { String::new() } else { detail }));
        }
        Ok(out)
    }

    fn conslaw(&self, rest: &str) -> Result<Vec<CheckReport>> {
        let laws: Vec<_> = if rest.trim() == "*" {
            self.system().laws.iter().collect()
        } else {
            list(rest)
                .into_iter()
                .map(|n| self.system().law(n).ok_or_else(|| Error::UnknownName { kind: "law", name: n.into() }))
                .collect::<Result<_>>()?
        };
        Ok(laws.into_iter().map(|l| conservation_check(l, self.system(), &self.rules)).collect())
    }

    fn trivial(&self, rest: &str) -> Result<CheckReport> {
        let (head, expected) = rest.split_once("=>").ok_or_else(|| Error::Format("trivial needs '=> TypeN'".into()))?;
        let (expected, known) = match expected.split_once(';') {
            Some((e, k)) => {
                let k = k.trim().strip_prefix("known:").ok_or_else(|| Error::Format("expected 'known: ...'".into()))?;
                (e.trim(), list(k))
            }
            None => (expected.trim(), Vec::new()),
        };
        let name = head.trim();
        let law = self.system().law(name).ok_or_else(|| Error::UnknownName { kind: "law", name: name.into() })?;
        let known = known
            .into_iter()
            .map(|n| self.system().law(n).cloned().ok_or_else(|| Error::UnknownName { kind: "law", name: n.into() }))
            .collect::<Result<Vec<_>>>()?;
        let got = triviality_text(&triviality_classify(law, self.system(), &self.rules, &known)?);
        let ok = got.replace(' ', "") == expected.replace(' ', "");
        Ok(verdict(
            format!("trivial:{name}"),
            ok,
            if ok { String::new() } else { format!("classified {got}, expected {expected}") },
        ))
    }

    fn bt(&self, rest: &str) -> Result<CheckReport> {
        let (head, expected) = rest.split_once("=>").ok_or_else(|| Error::Format("bt needs '=> expr'".into()))?;
        let words: Vec<&str> = head.split_whitespace().collect();
        let [name, "eliminate", w, tail @ ..] = words.as_slice() else {
            return Err(Error::Format("expected 'bt name eliminate S [p = k] => expr'".into()));
        };
        let (params, _) = param_prefix(self.system(), &tail.join(" "))?;
        let sys = substitute_bt(bt(self.system(), name)?, &params, self.system())?;
        let w = symbol(self.system(), w)?;
        let id = format!("bt:{name}:{}", w.name());
        let got = match bt_eliminate(&sys, &w, self.system()) {
            Ok(e) => e,
            Err(e) => return Ok(CheckReport::failure(&id, &e)),
        };
        let want = canonical(&substitute(&self.parse(expected)?, &params, self.system())?, self.system());
        let ok = got.proportional_to(&want);
        Ok(verdict(id, ok, if ok { String::new() } else { format!("got {}", self.system().render(&got)) }))
    }

    fn lax(&self, rest: &str) -> Result<Vec<CheckReport>> {
        let (head, expected) = match rest.split_once("=>") {
            Some((h, e)) => (h.trim(), Some(e.trim())),
            None => (rest.trim(), None),
        };
        let words: Vec<&str> = head.split_whitespace().collect();
        let name = *words.first().ok_or_else(|| Error::Format("lax needs a pair name".into()))?;
        let pair =
            self.system().lax_pair(name).ok_or_else(|| Error::UnknownName { kind: "Lax pair", name: name.into() })?;
        let report = match lax_compatibility(pair, self.system(), &self.rules) {
            Ok(r) => r,
            Err(e) => return Ok(vec![CheckReport::failure(&format!("lax:{name}"), &e)]),
        };
        let render = |e: &Expr| self.system().render(e);
        match (&words[1..], expected) {
            ([], None) => {
                let mut out = vec![CheckReport {
                    check_id: format!("lax:{name}"),
                    status: report.status,
                    residual: report.residual.clone(),
                    residual_text: render(&report.residual),
                    passes: report.degree_reports.iter().map(|(_, r)| r.passes).sum(),
                    message: None,
                }];
                out.extend(report.degree_reports.into_iter().map(|(_, r)| r));
                Ok(out)
            }
            (["residual"], Some(e)) => {
                let want = self.parse(e)?;
                let ok = report.mismatch == want;
                Ok(vec![verdict(
                    format!("lax:{name}:mismatch"),
                    ok,
                    if ok { String::new() } else { format!("got {}", render(&report.mismatch)) },
                )])
            }
            (["degree", d], Some(e)) => {
                let d: i32 = d.parse().map_err(|_| Error::Format(format!("'{d}' is not a degree")))?;
                let got = report.by_degree.get(&d).cloned().unwrap_or_else(Expr::zero);
                let ok = got.proportional_to(&self.parse(e)?);
                Ok(vec![verdict(
                    format!("lax:{name}:degree{d}"),
                    ok,
                    if ok { String::new() } else { format!("got {}", render(&got)) },
                )])
            }
            _ => Err(Error::Format("expected 'lax name', 'lax name residual => e' or 'lax name degree d => e'".into())),
        }
    }

    fn labelled<'t>(&self, rest: &'t str) -> Result<(&'t str, &'t str)> {
        let (label, body) = rest.split_once(':').ok_or_else(|| Error::Format("expected 'label: expr'".into()))?;
        Ok((label.trim(), body.trim()))
    }

    fn identity(&self, rest: &str) -> Result<CheckReport> {
        let (label, body) = self.labelled(rest)?;
        Ok(CheckReport::from_expr(&format!("identity:{label}"), self.parse(body)?, self.system()))
    }

    fn equal(&self, rest: &str) -> Result<CheckReport> {
        let (label, body) = self.labelled(rest)?;
        let (body, with) = match body.split_once(" with ") {
            Some((b, w)) => (b, bindings(self.system(), w, ",")?),
            None => (body, BTreeMap::new()),
        };
        let (a, b) = body.split_once("==").ok_or_else(|| Error::Format("equal needs 'a == b'".into()))?;
        let a = substitute(&self.parse(a)?, &with, self.system())?;
        let b = substitute(&self.parse(b)?, &with, self.system())?;
        let ok = a == b;
        let detail = format!("difference {}", self.system().render(&(a - b)));
        Ok(verdict(format!("equal:{label}"), ok, if ok { String::new() } else { detail }))
    }

    fn reduces(&self, rest: &str) -> Result<CheckReport> {
        let (label, body) = self.labelled(rest)?;
        Ok(reduce_mod(&format!("reduces:{label}"), &self.parse(body)?, &self.rules, self.system()))
    }

    fn lie(&self, rest: &str) -> Result<CheckReport> {
        let (head, expected) = rest.split_once("=>").ok_or_else(|| Error::Format("lie needs '=> expr'".into()))?;
        let words: Vec<&str> = head.split_whitespace().collect();
        let [q, eq] = words.as_slice() else {
            return Err(Error::Format("expected 'lie Q equation => expr'".into()));
        };
        let q = characteristic(self.system(), q)?;
        let eq =
            self.system().equation(eq).ok_or_else(|| Error::UnknownName { kind: "equation", name: eq.to_string() })?;
        let got = lie_apply(q, &eq.expr, self.system())?;
        let ok = got == self.parse(expected)?;
        let detail = format!("L F = {}", self.system().render(&got));
        Ok(verdict(format!("lie:{}:{}", q.name, eq.name), ok, if ok { String::new() } else { detail }))
    }

    fn template(&self, rest: &str) -> Result<CheckReport> {
        let expected =
            rest.trim().strip_prefix("=>").ok_or_else(|| Error::Format("template needs '=> expr'".into()))?;
        let tpl = self.system().template.as_ref().ok_or_else(|| Error::Format("no template declared".into()))?;
        let ok = tpl.condition == self.parse(expected)?;
        let detail = format!("generated {}", self.system().render(&tpl.condition));
        Ok(verdict("template".into(), ok, if ok { String::new() } else { detail }))
    }

    /// Bracket coefficients of `[Q_i, Q_j]` over all characteristics.
    pub fn bracket_coefficients(&self, i: &str, j: &str) -> Result<Vec<Rational>> {
        let (a, b) = (characteristic(self.system(), i)?, characteristic(self.system(), j)?);
        let br = lie_bracket(a, b, self.system())?;
        let br = self.rules.reduce_expr(&br.expr, self.system())?;
        let basis: Vec<Expr> = self
            .system()
            .characteristics
            .iter()
            .map(|q| self.rules.reduce_expr(&q.expr, self.system()))
            .collect::<jetcheck_core::Result<_>>()?;
        Ok(span_solve(&br, &basis)?)
    }

    fn bracket(&self, rest: &str) -> Result<CheckReport> {
        let (head, expected) =
            rest.split_once("=>").ok_or_else(|| Error::Format("bracket needs '=> c1, c2, ...'".into()))?;
        let words: Vec<&str> = head.split_whitespace().collect();
        let [i, j] = words.as_slice() else {
            return Err(Error::Format("expected 'bracket Qi Qj => ...'".into()));
        };
        let id = format!("bracket:{i}:{j}");
        let got = match self.bracket_coefficients(i, j) {
            Ok(c) => c,
            Err(Error::Core(e)) => return Ok(CheckReport::failure(&id, &e)),
            Err(e) => return Err(e),
        };
        let ok = got == rationals(expected)?;
        Ok(verdict(id, ok, if ok { String::new() } else { format!("c = {}", show_rationals(&got)) }))
    }

    fn structure(&self) -> Result<CheckReport> {
        let basis = &self.system().characteristics;
        let c = match structure_constants(basis, self.system(), &self.rules) {
            Ok(c) => c,
            Err(e) => return Ok(CheckReport::failure("structure", &e)),
        };
        let n = basis.len();
        let diagonal = (0..n).all(|i| c[i][i].iter().all(Zero::is_zero));
        Ok(verdict(
            "structure".into(),
            diagonal,
            if diagonal { String::new() } else { "diagonal brackets are not zero".into() },
        ))
    }

    fn span(&self, rest: &str) -> Result<CheckReport> {
        let (label, body) = self.labelled(rest)?;
        let (target, rhs) =
            body.split_once("=>").ok_or_else(|| Error::Format("span needs '=> Q, ... = c, ...'".into()))?;
        let (names, coeffs) =
            rhs.split_once('=').ok_or_else(|| Error::Format("span needs 'Q, ... = c, ...'".into()))?;
        let basis: Vec<Expr> = list(names)
            .into_iter()
            .map(|n| Ok(self.rules.reduce_expr(&characteristic(self.system(), n)?.expr, self.system())?))
            .collect::<Result<_>>()?;
        let target = self.rules.reduce_expr(&self.parse(target)?, self.system())?;
        let id = format!("span:{label}");
        match span_solve(&target, &basis) {
            Ok(got) => {
                let ok = got == rationals(coeffs)?;
                Ok(verdict(id, ok, if ok { String::new() } else { format!("c = {}", show_rationals(&got)) }))
            }
            Err(e) => Ok(CheckReport::failure(&id, &e)),
        }
    }

    fn series(&self, rest: &str) -> Result<Vec<CheckReport>> {
        let (head, target) =
            rest.split_once("=>").ok_or_else(|| Error::Format("series needs '=> bt(cur, next)'".into()))?;
        let words: Vec<&str> = head.split_whitespace().collect();
        let [pair, prefix, range] = words.as_slice() else {
            return Err(Error::Format("expected 'series pair prefix lo..hi => bt(cur, next)'".into()));
        };
        let (lo, hi) = range.split_once("..").ok_or_else(|| Error::Format("range needs 'lo..hi'".into()))?;
        let lo: i32 = lo.parse().map_err(|_| Error::Format(format!("bad range '{range}'")))?;
        let hi: i32 = hi.parse().map_err(|_| Error::Format(format!("bad range '{range}'")))?;
        let target = target.trim();
        let open = target.find('(').ok_or_else(|| Error::Format("expected 'bt(cur, next)'".into()))?;
        let args = list(target[open + 1..].trim_end_matches(')'));
        let [cur, next] = args.as_slice() else {
            return Err(Error::Format("expected 'bt(cur, next)'".into()));
        };
        let mut system = self.system().clone();
        let lax = system
            .lax_pair(pair)
            .cloned()
            .ok_or_else(|| Error::UnknownName { kind: "Lax pair", name: pair.to_string() })?;
        let template = bt(&system, target[..open].trim())?.clone();
        let (cur, next) = (symbol(&system, cur)?, symbol(&system, next)?);
        let extracted = series_extract(&lax, &mut system, prefix, lo, hi)?;
        let n_param = system.lookup("n").filter(|s| system.is_parameter(s)).cloned();
        let mut out = Vec::new();
        for rel in &extracted {
            let class = system.class_of(&cur).expect("dependent");
            let sym = |k: i32| -> Result<Expr> {
                let s = symbol(&system, &jetcheck_core::compat::series_name(prefix, k))?;
                Ok(Expr::jet(&s, MultiIndex::zero(), class))
            };
            let mut b = BTreeMap::new();
            b.insert(cur.clone(), sym(rel.n)?);
            b.insert(next.clone(), sym(rel.n + 1)?);
            if let Some(p) = &n_param {
                b.insert(p.clone(), Expr::integer(rel.n as i64));
            }
            let expected = substitute_bt(&template, &b, &system)?;
            let id = format!("series:{pair}:n={}", rel.n);
            let ok = expected.relations == rel.bt.relations;
            let detail = rel.bt.relations.iter().map(|r| system.render(r)).collect::<Vec<_>>().join(" ; ");
            out.push(verdict(id, ok, if ok { String::new() } else { format!("extracted {detail}") }));
        }
        if out.is_empty() {
            out.push(verdict(format!("series:{pair}"), false, "no complete degree in range".into()));
        }
        Ok(out)
    }

    fn chain(&self, rest: &str) -> Result<Vec<CheckReport>> {
        let (head, body) = rest.split_once(':').ok_or_else(|| Error::Format("chain needs ': S := e ; ...'".into()))?;
        let head = head.trim();
        let (name, params) = match head.find('[') {
            Some(i) => (head[..i].trim(), &head[i..]),
            None => (head, ""),
        };
        let (mut b, _) = param_prefix(self.system(), params)?;
        b.extend(bindings(self.system(), body, ";")?);
        let sys = substitute_bt(bt(self.system(), name)?, &b, self.system())?;
        let tag = params.trim_matches(|c| c == '[' || c == ']').replace(' ', "");
        Ok(sys
            .relations
            .iter()
            .enumerate()
            .map(|(k, r)| reduce_mod(&format!("chain:{name}[{tag}]:{}", k + 1), r, &self.rules, self.system()))
            .collect())
    }

    fn closed(&self, name: &str) -> Result<&ClosedForm> {
        self.def.closed_form(name).ok_or_else(|| Error::UnknownName { kind: "closed form", name: name.into() })
    }

    /// Expressions expected to vanish on a closed form, with labels and tolerances.
    fn default_targets(&self, form: &ClosedForm) -> Result<Vec<(String, Expr, f64)>> {
        let system = self.system();
        let negative: Vec<String> = self
            .def
            .checks
            .iter()
            .filter_map(|c| c.text.strip_prefix("symmetry-residual"))
            .flat_map(|r| list(r).into_iter().map(str::to_string).collect::<Vec<_>>())
            .collect();
        let bound: Vec<&Symbol> = form.bindings.iter().map(|(s, _)| s).collect();
        let covered = |e: &Expr| e.jets().iter().all(|(s, _)| bound.contains(&s));
        let mut out = Vec::new();
        for eq in &system.equations {
            if covered(&eq.expr) {
                out.push((format!("eq:{}", eq.name), eq.expr.clone(), CLOSED_FORM_TOL));
            }
        }
        for b in &system.bts {
            for (k, r) in b.relations.iter().enumerate() {
                if covered(r) {
                    out.push((format!("bt:{}:{}", b.name, k + 1), r.clone(), CLOSED_FORM_TOL));
                }
            }
        }
        for law in &system.laws {
            let d = law.divergence(system)?;
            if covered(&d) {
                out.push((format!("conslaw:{}", law.name), d, DERIVED_TOL));
            }
        }
        for q in &system.characteristics {
            if negative.contains(&q.name) {
                continue;
            }
            let Some(eq) = system.equation_for(&q.target) else { continue };
            let Ok(c) = lie_apply(q, &eq.expr, system) else { continue };
            if covered(&c) {
                out.push((format!("symmetry:{}", q.name), c, DERIVED_TOL));
            }
        }
        Ok(out)
    }

    fn numeric(&self, rest: &str) -> Result<Vec<CheckReport>> {
        let (name, explicit) = match rest.split_once("=>") {
            Some((n, e)) => (n.trim(), Some(e)),
            None => (rest.trim(), None),
        };
        let form = self.closed(name)?;
        let targets = match explicit {
            Some(text) => split_top(text, ";")
                .into_iter()
                .enumerate()
                .map(|(k, t)| Ok((format!("{}", k + 1), parse_relation(self.system(), t)?, CLOSED_FORM_TOL)))
                .collect::<Result<Vec<_>>>()?,
            None => self.default_targets(form)?,
        };
        let mut out = Vec::new();
        for (label, e, tol) in targets {
            let id = format!("numeric:{name}:{label}");
            match numeric::sample_residual(&e, self.system(), form, self.opts.points, self.opts.seed) {
                Ok(r) => {
                    let ok = if r.exact { r.max_abs == 0.0 } else { r.max_abs <= tol };
                    let mode = if r.exact { "exact" } else { "float" };
                    let detail = format!(
                        "max |r| = {:.3e} over {} points ({mode}, seed {})",
                        r.max_abs, r.points, self.opts.seed
                    );
                    out.push(verdict(id, ok, detail));
                }
                Err(Error::Core(e)) => out.push(CheckReport::failure(&id, &e)),
                Err(e) => out.push(CheckReport::failure(&id, &jetcheck_core::Error::Invalid(e.to_string()))),
            }
        }
        Ok(out)
    }

    fn options(&self, text: &str) -> Result<BTreeMap<String, String>> {
        text.split_whitespace()
            .map(|w| {
                w.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::Format(format!("option '{w}' needs 'key=value'")))
            })
            .collect()
    }

    fn matrix(&self, rest: &str) -> Result<CheckReport> {
        let (head, body) =
            rest.split_once(':').ok_or_else(|| Error::Format("matrix needs 'label n=.. trials=..: expr'".into()))?;
        let (label, opts) = head.trim().split_once(char::is_whitespace).unwrap_or((head.trim(), ""));
        let opts = self.options(opts)?;
        let n: usize = opts.get("n").map_or(Ok(2), |v| v.parse()).map_err(|_| Error::Format("bad n".into()))?;
        let trials: usize =
            opts.get("trials").map_or(Ok(100), |v| v.parse()).map_err(|_| Error::Format("bad trials".into()))?;
        let exact = opts.get("mode").is_none_or(|m| m == "exact");
        let r = numeric::random_matrix_check(self.system(), body.trim(), n, trials, exact, self.opts.seed)?;
        let ok = if exact { r.exact_zero } else { r.max_deviation <= 1e-10 };
        let detail = format!(
            "max deviation {:.3e} over {} trials (n = {n}, seed {})",
            r.max_deviation, r.trials, self.opts.seed
        );
        Ok(verdict(format!("matrix:{label}:n={n}"), ok, detail))
    }

    fn nonsolution(&self, rest: &str) -> Result<CheckReport> {
        let (opts, threshold) =
            rest.split_once('>').ok_or_else(|| Error::Format("nonsolution needs '> threshold'".into()))?;
        let opts = self.options(opts)?;
        let n: usize = opts.get("n").map_or(Ok(2), |v| v.parse()).map_err(|_| Error::Format("bad n".into()))?;
        let threshold = parse_number(threshold)?;
        let eq = self.system().equations.first().ok_or_else(|| Error::Format("no equation".into()))?;
        let r = numeric::random_residual(self.system(), &eq.expr, n, self.opts.seed)?;
        let ok = r > threshold;
        Ok(verdict(
            format!("nonsolution:{}", eq.name),
            ok,
            format!("residual {r:.3e} on random data (seed {})", self.opts.seed),
        ))
    }

    fn bridge(&self, rest: &str) -> Result<CheckReport> {
        let (params, rest) = param_prefix(self.system(), rest)?;
        let (kind, body) = self.labelled(rest)?;
        let mut f = None;
        let mut omega = None;
        for part in split_top(body, ";") {
            let (k, v) =
                part.split_once('=').ok_or_else(|| Error::Format("bridge needs 'f = ... ; omega = ...'".into()))?;
            let ast = self.system().expand_macros(&jetcheck_core::parse::parse_ast(v.trim())?)?;
            match k.trim() {
                "f" => f = Some(ast),
                "omega" => omega = Some(ast),
                other => return Err(Error::Format(format!("unknown potential '{other}'"))),
            }
        }
        let (Some(f), Some(omega)) = (f, omega) else {
            return Err(Error::Format("bridge needs both f and omega".into()));
        };
        let params: Vec<(Symbol, f64)> = params
            .into_iter()
            .map(|(s, e)| (s, e.as_constant().and_then(|q| q.to_f64()).unwrap_or(f64::NAN)))
            .collect();
        let mut rng = crate::rng(self.opts.seed);
        let nv = self.system().variables().len();
        let points: Vec<Vec<f64>> = (0..self.opts.points)
            .map(|_| {
                use rand::Rng;
                let mut p = vec![0.0; nv];
                p[0] = rng.gen_range(0.5..2.0);
                if nv > 1 {
                    p[1] = rng.gen_range(-1.0..1.0);
                }
                p
            })
            .collect();
        let (scalar, matrix) = numeric::ernst_bridge(self.system(), &f, &omega, &params, &points)?;
        let ok = match kind {
            "solution" => scalar <= DERIVED_TOL && matrix <= DERIVED_TOL,
            "nonsolution" => scalar > 1e-6 && matrix > 1e-6,
            other => return Err(Error::Format(format!("bridge kind must be solution or nonsolution, not '{other}'"))),
        };
        let detail = format!("scalar residual {scalar:.3e}, matrix residual {matrix:.3e}");
        Ok(verdict(format!("bridge:{kind}"), ok, detail))
    }

    fn fd(&self, rest: &str) -> Result<CheckReport> {
        let (head, body) =
            rest.split_once(':').ok_or_else(|| Error::Format("fd needs 'form var (p, ...): expr'".into()))?;
        let head = head.trim();
        let open = head.find('(').ok_or_else(|| Error::Format("fd needs a point '(p, ...)'".into()))?;
        let words: Vec<&str> = head[..open].split_whitespace().collect();
        let [form, var] = words.as_slice() else {
            return Err(Error::Format("expected 'fd form var (p, ...): expr'".into()));
        };
        let point: Vec<f64> =
            head[open + 1..].trim_end_matches(')').split(',').map(parse_number).collect::<Result<_>>()?;
        let form = self.closed(form)?;
        let var = symbol(self.system(), var)?;
        let e = self.parse(body)?;
        let steps = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let id = format!("fd:{}:{}", form.name, var.name());
        match numeric::finite_difference_cross_check(&e, &var, self.system(), form, &point, &steps) {
            Ok(r) => {
                let orders = r.orders.iter().map(|o| format!("{o:.2}")).collect::<Vec<_>>().join(", ");
                Ok(verdict(id, true, format!("observed orders {orders}")))
            }
            Err(err @ Error::NoConvergence(_)) => Ok(verdict(id, false, err.to_string())),
            Err(e) => Err(e),
        }
    }
}

/// Runs every check of a definition.
pub fn run_definition(def: &Definition, opts: &Options) -> Result<Vec<Outcome>> {
    Ok(Runner::new(def, opts)?.run_all())
}
