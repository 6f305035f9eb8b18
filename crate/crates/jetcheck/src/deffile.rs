//! The line-oriented definition-file format.
//!
//! A file is a sequence of `[section]` headers, each followed by entries,
//! one per line. `#` starts a comment. See `docs/format.md` for the full
//! reference.

use jetcheck_core::calculus::Characteristic;
use jetcheck_core::compat::{build_template, BTSystem, ConservationLaw, LaxPair};
use jetcheck_core::system::EquationSystem;
use jetcheck_core::{Class, Expr, Symbol};

use crate::error::{Error, Result};

/// A closed-form solution used by the numeric oracle.
#[derive(Clone, Debug)]
pub struct ClosedForm {
    pub name: String,
    /// Numeric values of parameters.
    pub params: Vec<(Symbol, f64)>,
    /// Sampling box per variable position; unspecified variables use [-1, 1].
    pub domain: Vec<(usize, f64, f64)>,
    pub bindings: Vec<(Symbol, Expr)>,
}

/// A `[checks]` line, kept as text until the suite runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckLine {
    pub line: usize,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct Definition {
    pub name: String,
    pub meta: Vec<(String, String)>,
    pub system: EquationSystem,
    pub closed_forms: Vec<ClosedForm>,
    pub checks: Vec<CheckLine>,
}

impl Definition {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn empty(name: &str) -> Self {
        Definition {
            name: name.to_string(),
            meta: Vec::new(),
            system: EquationSystem::new(),
            closed_forms: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn closed_form(&self, name: &str) -> Option<&ClosedForm> {
        self.closed_forms.iter().find(|c| c.name == name)
    }
}

/// Splits at `sep` occurrences outside brackets and parentheses.
pub fn split_top<'a>(text: &'a str, sep: &str) -> Vec<&'a str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' | b'[' => depth += 1,
            b')' | b']' => depth -= 1,
            _ if depth == 0 && text[i..].starts_with(sep) => {
                out.push(&text[start..i]);
                i += sep.len();
                start = i;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    out.push(&text[start..]);
    out
}

/// Splits `head: body` at the first top-level colon.
fn head_body(line: &str) -> Result<(&str, &str)> {
    let parts = split_top(line, ":");
    if parts.len() < 2 {
        return Err(Error::Format(format!("expected 'name: ...', found '{line}'")));
    }
    let head = parts[0];
    Ok((head.trim(), line[head.len() + 1..].trim()))
}

/// Splits `name[a, b]` into the name and its bracketed arguments.
fn name_args(head: &str) -> Result<(&str, Vec<&str>)> {
    match head.find('[') {
        None => Ok((head.trim(), Vec::new())),
        Some(i) => {
            let rest = head[i + 1..].trim_end();
            let inner = rest.strip_suffix(']').ok_or_else(|| Error::Format(format!("unclosed '[' in '{head}'")))?;
            let args = inner.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            Ok((head[..i].trim(), args))
        }
    }
}

/// Parses `lhs = rhs` as `lhs - rhs`, or a bare expression.
pub fn parse_relation(system: &EquationSystem, text: &str) -> Result<Expr> {
    let parts = split_top(text, "=");
    match parts.as_slice() {
        [e] => Ok(system.parse(e.trim())?),
        [l, r] => Ok(system.parse(l.trim())?.try_sub(&system.parse(r.trim())?)?),
        _ => Err(Error::Format(format!("more than one '=' in '{text}'"))),
    }
}

/// Parses a number written as an integer, a decimal or `p/q`.
pub fn parse_number(text: &str) -> Result<f64> {
    let t = text.trim();
    if let Some((p, q)) = t.split_once('/') {
        let (p, q) = (parse_number(p)?, parse_number(q)?);
        return Ok(p / q);
    }
    t.parse::<f64>().map_err(|_| Error::Format(format!("'{t}' is not a number")))
}

fn symbol(system: &EquationSystem, name: &str) -> Result<Symbol> {
    system.lookup(name).cloned().ok_or_else(|| Error::UnknownName { kind: "symbol", name: name.to_string() })
}

fn dependent(system: &EquationSystem, name: &str) -> Result<Symbol> {
    let s = symbol(system, name)?;
    if system.dependent(&s).is_none() {
        return Err(Error::Format(format!("'{name}' is not a dependent symbol")));
    }
    Ok(s)
}

fn names(body: &str) -> impl Iterator<Item = &str> {
    body.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty())
}

fn dependent_line(system: &mut EquationSystem, line: &str) -> Result<()> {
    let (name, body) = head_body(line)?;
    let mut words = body.splitn(2, char::is_whitespace);
    let class = match words.next() {
        Some("scalar") => Class::Scalar,
        Some("matrix") => Class::Matrix,
        other => return Err(Error::Format(format!("expected 'scalar' or 'matrix', found {other:?}"))),
    };
    let s = system.add_dependent(name, class)?;
    let mut rest = words.next().unwrap_or("").trim();
    let mut invertible = false;
    let mut symmetric = false;
    let mut constant = false;
    let mut constant_in = Vec::new();
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix("constant-in") {
            let r = r.trim_start();
            let inner_end = r.find(')').filter(|_| r.starts_with('('));
            let Some(end) = inner_end else {
                return Err(Error::Format("expected 'constant-in(v, ...)'".into()));
            };
            for v in names(&r[1..end]) {
                let vs = symbol(system, v)?;
                let pos = system
                    .variables()
                    .iter()
                    .position(|x| *x == vs)
                    .ok_or_else(|| Error::Format(format!("'{v}' is not a variable")))?;
                constant_in.push(pos);
            }
            rest = r[end + 1..].trim_start();
            continue;
        }
        let (word, r) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
        match word {
            "invertible" => invertible = true,
            "symmetric" => symmetric = true,
            "constant" => constant = true,
            other => return Err(Error::Format(format!("unknown property '{other}'"))),
        }
        rest = r.trim_start();
    }
    if (invertible || symmetric) && class == Class::Scalar {
        return Err(Error::Format(format!("'{name}': invertible and symmetric apply to matrices")));
    }
    let d = system.dependent_mut(&s).expect("declared");
    d.invertible = invertible;
    d.symmetric = symmetric;
    d.constant = constant;
    d.constant_in = constant_in;
    Ok(())
}

fn macro_line(system: &mut EquationSystem, line: &str) -> Result<()> {
    let (head, body) = line.split_once(":=").ok_or_else(|| Error::Format("expected 'Name(P, ...) := body'".into()))?;
    let head = head.trim();
    let open = head.find('(').ok_or_else(|| Error::Format("macro head needs '(' ... ')'".into()))?;
    let inner =
        head[open + 1..].strip_suffix(')').ok_or_else(|| Error::Format("macro head needs '(' ... ')'".into()))?;
    let params: Vec<&str> = names(inner).collect();
    system.add_macro(head[..open].trim(), &params, body.trim())?;
    Ok(())
}

fn oriented_line(system: &mut EquationSystem, line: &str, rule: bool) -> Result<()> {
    let (name, body) = head_body(line)?;
    let (rel, lead) =
        body.rsplit_once("->").ok_or_else(|| Error::Format(format!("'{name}' needs an orientation '-> lead'")))?;
    let expr = parse_relation(system, rel)?;
    let lead = system.parse_jet(lead.trim())?;
    let eq = jetcheck_core::system::Equation { name: name.to_string(), expr, lead };
    if rule {
        system.rules.push(eq);
    } else {
        system.equations.push(eq);
    }
    Ok(())
}

/// Target of characteristics without an explicit one: the first equation's dependent.
pub fn default_target(system: &EquationSystem) -> Result<Symbol> {
    system
        .equations
        .first()
        .map(|e| e.lead.0.clone())
        .ok_or_else(|| Error::Format("no equation to take a default target from".into()))
}

fn characteristic_line(system: &mut EquationSystem, line: &str) -> Result<()> {
    let (head, body) = head_body(line)?;
    let (name, args) = name_args(head)?;
    let target = match args.as_slice() {
        [] => default_target(system)?,
        [t] => dependent(system, t)?,
        _ => return Err(Error::Format("a characteristic has one target".into())),
    };
    let expr = system.parse(body)?;
    let class = system.class_of(&target).expect("dependent");
    if !expr.is_zero() && expr.class() != class {
        return Err(
            jetcheck_core::Error::ClassMismatch(format!("characteristic {name} and its target {target}")).into()
        );
    }
    system.characteristics.push(Characteristic::new(name, target, expr));
    Ok(())
}

fn law_line(system: &mut EquationSystem, line: &str) -> Result<()> {
    let (name, body) = head_body(line)?;
    let mut components = Vec::new();
    for part in split_top(body, ";") {
        let (v, e) = part
            .split_once("=>")
            .ok_or_else(|| Error::Format(format!("law component '{}' needs 'var => expr'", part.trim())))?;
        let v = symbol(system, v.trim())?;
        if !system.is_variable(&v) {
            return Err(jetcheck_core::Error::UnknownVariable(v.name().into()).into());
        }
        components.push((v, system.parse(e.trim())?));
    }
    system.laws.push(ConservationLaw { name: name.to_string(), components });
    Ok(())
}

fn lax_line(system: &mut EquationSystem, line: &str) -> Result<()> {
    let (head, body) = head_body(line)?;
    let (name, args) = name_args(head)?;
    let (aux, parameter) = match args.as_slice() {
        [a] => (dependent(system, a)?, None),
        [a, p] => (dependent(system, a)?, Some(symbol(system, p)?)),
        _ => return Err(Error::Format("lax pair header is name[aux] or name[aux, parameter]".into())),
    };
    let mut relations = Vec::new();
    for part in split_top(body, ";") {
        let (rel, lead) =
            part.rsplit_once("->").ok_or_else(|| Error::Format("each Lax relation needs '-> lead'".into()))?;
        let expr = parse_relation(system, rel)?;
        let (s, i) = system.parse_jet(lead.trim())?;
        if s != aux {
            return Err(Error::Format(format!("lead {} is not a derivative of {}", lead.trim(), aux)));
        }
        relations.push((expr, i));
    }
    system.lax_pairs.push(LaxPair { name: name.to_string(), aux, parameter, relations });
    Ok(())
}

fn bt_line(system: &mut EquationSystem, line: &str) -> Result<()> {
    let (head, body) = head_body(line)?;
    let (name, args) = name_args(head)?;
    let eliminate = args.iter().map(|a| dependent(system, a)).collect::<Result<_>>()?;
    let relations = split_top(body, ";").into_iter().map(|r| parse_relation(system, r)).collect::<Result<_>>()?;
    system.bts.push(BTSystem { name: name.to_string(), relations, eliminate });
    Ok(())
}

fn closed_form_line(system: &EquationSystem, line: &str) -> Result<ClosedForm> {
    let (head, body) = head_body(line)?;
    let (name, args) = name_args(head)?;
    let mut params = Vec::new();
    let mut domain = Vec::new();
    for a in args {
        if let Some((v, range)) = a.split_once(" in ") {
            let vs = symbol(system, v.trim())?;
            let pos = system
                .variables()
                .iter()
                .position(|x| *x == vs)
                .ok_or_else(|| Error::Format(format!("'{}' is not a variable", v.trim())))?;
            let (lo, hi) =
                range.split_once("..").ok_or_else(|| Error::Format(format!("range '{range}' needs 'lo..hi'")))?;
            domain.push((pos, parse_number(lo)?, parse_number(hi)?));
        } else if let Some((p, value)) = a.split_once('=') {
            let ps = symbol(system, p.trim())?;
            if !system.is_parameter(&ps) {
                return Err(Error::Format(format!("'{}' is not a parameter", p.trim())));
            }
            params.push((ps, parse_number(value)?));
        } else {
            return Err(Error::Format(format!("closed-form option '{a}' is neither 'p = value' nor 'v in lo..hi'")));
        }
    }
    let mut bindings = Vec::new();
    for part in split_top(body, ";") {
        let (s, e) =
            part.split_once('=').ok_or_else(|| Error::Format("closed-form binding needs 'u = expr'".into()))?;
        bindings.push((dependent(system, s.trim())?, system.parse(e.trim())?));
    }
    Ok(ClosedForm { name: name.to_string(), params, domain, bindings })
}

/// Parses a definition file. `include` resolves names listed in an
/// `[include]` section to their text.
pub fn parse_definition(name: &str, text: &str, include: &dyn Fn(&str) -> Option<String>) -> Result<Definition> {
    let mut def = Definition::empty(name);
    load_into(&mut def, name, text, include)?;
    Ok(def)
}

/// Adds the contents of `text` to an existing definition.
pub fn load_into(def: &mut Definition, file: &str, text: &str, include: &dyn Fn(&str) -> Option<String>) -> Result<()> {
    let mut section = String::new();
    let mut template: Option<(usize, String)> = None;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.split_once('#').map_or(raw, |(l, _)| l).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(s) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if !line[1..].contains('[') {
                section = s.trim().to_string();
                continue;
            }
        }
        let system = &mut def.system;
        let step = match section.as_str() {
            "meta" => match line.split_once('=') {
                Some((k, v)) => {
                    def.meta.push((k.trim().to_string(), v.trim().to_string()));
                    Ok(())
                }
                None => Err(Error::Format("meta entries are 'key = value'".into())),
            },
            "include" => {
                let mut r = Ok(());
                for n in names(line) {
                    r = match include(n) {
                        Some(t) => load_into(def, n, &t, include),
                        None => Err(Error::UnknownEntry(n.to_string())),
                    };
                    if r.is_err() {
                        break;
                    }
                }
                r
            }
            "variables" => names(line).try_for_each(|n| system.add_variable(n).map(drop).map_err(Error::from)),
            "parameters" => names(line).try_for_each(|n| system.add_parameter(n).map(drop).map_err(Error::from)),
            "dependents" => dependent_line(system, line),
            "macros" => macro_line(system, line),
            "equations" => oriented_line(system, line, false),
            "rules" => oriented_line(system, line, true),
            "template" => {
                template = Some((line_no, line.to_string()));
                Ok(())
            }
            "characteristics" => characteristic_line(system, line),
            "conservation_laws" => law_line(system, line),
            "lax_pairs" => lax_line(system, line),
            "bts" => bt_line(system, line),
            "closed_forms" => closed_form_line(system, line).map(|c| def.closed_forms.push(c)),
            "checks" => {
                def.checks.push(CheckLine { line: line_no, text: line.to_string() });
                Ok(())
            }
            "" => Err(Error::Format("entry before the first section header".into())),
            other => Err(Error::Format(format!("unknown section [{other}]"))),
        };
        step.map_err(|e| e.at(file, line_no))?;
    }
    if let Some((line_no, line)) = template {
        let mut build = || -> Result<()> {
            let (head, body) = head_body(&line)?;
            let (placeholder, args) = name_args(head)?;
            let target = match args.as_slice() {
                [] => default_target(&def.system)?,
                [t] => dependent(&def.system, t)?,
                _ => return Err(Error::Format("template header is P[target]".into())),
            };
            let form = if body.is_empty() { None } else { Some(body) };
            def.system.template = Some(build_template(&mut def.system, &target, placeholder, form)?);
            Ok(())
        };
        build().map_err(|e| e.at(file, line_no))?;
    }
    Ok(())
}

/// Reads a definition file from disk, resolving includes beside it.
pub fn read_definition(path: &std::path::Path) -> Result<Definition> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let dir = path.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("definition").to_string();
    let include = move |n: &str| {
        std::fs::read_to_string(dir.join(n)).ok().or_else(|| crate::catalog::source(n).map(str::to_string))
    };
    parse_definition(&name, &text, &include)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none(_: &str) -> Option<String> {
        None
    }

    #[test]
    fn splits_outside_brackets() {
        assert_eq!(split_top("a; D[u; x] ; b", ";"), vec!["a", " D[u; x] ", " b"]);
        assert_eq!(split_top("f(x: y): z", ":"), vec!["f(x: y)", " z"]);
    }

    #[test]
    fn minimal_file() {
        let text = "[variables]\nx t\n[dependents]\nu: scalar\n[equations]\nheat: u_t = u_xx -> u_t\n";
        let d = parse_definition("heat", text, &none).unwrap();
        let eq = &d.system.equations[0];
        assert_eq!(d.system.render(&eq.expr), "u_t - u_xx");
    }

    #[test]
    fn errors_carry_lines() {
        let text = "[variables]\nx t\n[dependents]\nu: scalar\n[equations]\nbad: u_t - w -> u_t\n";
        let err = parse_definition("bad", text, &none).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("bad:6:"), "{msg}");
        assert!(
            matches!(err, Error::At { ref source, .. } if matches!(**source, Error::Core(jetcheck_core::Error::UndeclaredSymbol { .. })))
        );
    }

    #[test]
    fn dependent_properties() {
        let text = "[variables]\ny z yb zb\n[dependents]\nJ: matrix invertible\nA: matrix constant-in(y, z)\n";
        let d = parse_definition("p", text, &none).unwrap();
        let a = d.system.lookup("A").unwrap().clone();
        assert_eq!(d.system.dependent(&a).unwrap().constant_in, vec![0, 1]);
        let j = d.system.lookup("J").unwrap().clone();
        assert!(d.system.dependent(&j).unwrap().invertible);
    }
}
