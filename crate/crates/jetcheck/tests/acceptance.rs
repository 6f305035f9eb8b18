//! One line per acceptance criterion, run against the bundled catalogue.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeMap;

use jetcheck::catalog;
use jetcheck::core::algebra::structure_constants;
use jetcheck::core::compat::bt_compatibility;
use jetcheck::core::reduce::orient;
use jetcheck::core::Rational;
use jetcheck::suite::{Options, Outcome};

/// Tolerance for closed-form residuals.
const CLOSED_FORM_TOL: f64 = 1e-10;
/// Sample points for closed-form checks.
const POINTS: usize = 20;
/// Lower bound on the SDYM residual of random data.
const RANDOM_RESIDUAL_MIN: f64 = 0.1;
/// Trials per random matrix identity.
const MATRIX_TRIALS: usize = 100;

struct Results(BTreeMap<String, Outcome>);

impl Results {
    fn load(entries: &[&str]) -> Self {
        let opts = Options { points: POINTS, ..Options::default() };
        let mut all = BTreeMap::new();
        for e in entries {
            for o in catalog::run_suite(e, &opts).expect("entry runs") {
                all.insert(o.check_id.clone(), o);
            }
        }
        Results(all)
    }

    /// Every listed id exists and is zero; returns the first failure.
    fn zero(&self, ids: &[&str]) -> Result<(), String> {
        for id in ids {
            match self.0.get(*id) {
                None => return Err(format!("{id} missing")),
                Some(o) if !o.is_zero() => return Err(format!("{id}: {} {}", o.status, o.residual_text)),
                _ => {}
            }
        }
        Ok(())
    }

    /// Every id with this prefix is zero, and there are at least `min` of them.
    fn all_zero(&self, prefix: &str, min: usize) -> Result<(), String> {
        let hits: Vec<&Outcome> = self.0.values().filter(|o| o.check_id.starts_with(prefix)).collect();
        if hits.len() < min {
            return Err(format!("{} checks under {prefix}, expected at least {min}", hits.len()));
        }
        match hits.iter().find(|o| !o.is_zero()) {
            Some(o) => Err(format!("{}: {} {}", o.check_id, o.status, o.message.clone().unwrap_or_default())),
            None => Ok(()),
        }
    }

    /// Numeric checks under a prefix stay within `tol`, reading the recorded maximum.
    fn numeric_within(&self, prefix: &str, tol: f64) -> Result<(), String> {
        for o in self.0.values().filter(|o| o.check_id.starts_with(prefix)) {
            let msg = o.message.clone().unwrap_or_default();
            let max = msg
                .strip_prefix("max |r| = ")
                .and_then(|m| m.split_whitespace().next())
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| format!("{}: no residual recorded", o.check_id))?;
            if !msg.contains(&format!("over {POINTS} points")) {
                return Err(format!("{}: {msg}", o.check_id));
            }
            if max > tol {
                return Err(format!("{}: {max:e} > {tol:e}", o.check_id));
            }
        }
        Ok(())
    }
}

fn criterion(n: usize, name: &str, r: Result<(), String>) -> bool {
    match &r {
        Ok(()) => println!("criterion {n:>2} PASS  {name}"),
        Err(e) => println!("criterion {n:>2} FAIL  {name}: {e}"),
    }
    r.is_ok()
}

fn laplace(res: &Results) -> Result<(), String> {
    res.zero(&["laplace:bt:cr:u", "laplace:bt:cr:v"])?;
    let def = &catalog::load("laplace").map_err(|e| e.to_string())?[0];
    let conditions = bt_compatibility(def.system.bt("cr").unwrap(), &def.system).map_err(|e| e.to_string())?;
    for (w, other) in [("u", "v"), ("v", "u")] {
        let w = def.system.lookup(w).unwrap();
        let want = def.system.parse(&format!("{other}_xx + {other}_yy")).unwrap();
        if !conditions[w].proportional_to(&want) {
            return Err(format!("eliminating {w} gave {}", def.system.render(&conditions[w])));
        }
    }
    for o in res.0.values().filter(|o| o.check_id.starts_with("laplace:numeric:seed")) {
        if !o.message.as_deref().unwrap_or_default().contains("(exact") || !o.is_zero() {
            return Err(format!("{} is not an exact zero", o.check_id));
        }
    }
    Ok(())
}

fn liouville(res: &Results) -> Result<(), String> {
    res.zero(&["liouville:bt:bt:u", "liouville:bt:bt:v"])?;
    res.all_zero("liouville:numeric:seeded", 4)?;
    res.numeric_within("liouville:numeric:seeded", CLOSED_FORM_TOL)
}

fn sine_gordon(res: &Results) -> Result<(), String> {
    res.zero(&[
        "sine-gordon:bt:bt:u",
        "sine-gordon:bt:bt:v",
        "sine-gordon:conslaw:energy",
        "sine-gordon:conslaw:momentum",
        "sine-gordon:conslaw:higher",
        "sine-gordon:template",
        "sine-gordon:symmetry:Qx",
        "sine-gordon:symmetry:Qt",
    ])?;
    res.numeric_within("sine-gordon:numeric:kink:eq", CLOSED_FORM_TOL)?;
    res.numeric_within("sine-gordon:numeric:kink:bt", CLOSED_FORM_TOL)?;
    let def = &catalog::load("sine-gordon").map_err(|e| e.to_string())?[0];
    let tpl = def.system.template.as_ref().ok_or("no template")?;
    let want = def.system.parse("P_xt - cos(u)*P").unwrap();
    if tpl.condition != want {
        return Err(format!("template is {}", def.system.render(&tpl.condition)));
    }
    Ok(())
}

fn kdv(res: &Results) -> Result<(), String> {
    res.zero(&[
        "kdv:lax:lax:mismatch",
        "kdv:lax:lax",
        "kdv:conslaw:mass",
        "kdv:conslaw:momentum",
        "kdv:conslaw:energy",
        "kdv-lie:lie:Q3:kdv",
        "kdv-lie:lie:Q4:kdv",
        "kdv-lie:bracket:Q1:Q2",
        "kdv-lie:bracket:Q2:Q3",
        "kdv-lie:structure",
    ])?;
    res.all_zero("kdv:numeric:soliton:conslaw", 3)?;
    let defs = catalog::load("kdv").map_err(|e| e.to_string())?;
    let def = &defs[1];
    let rules = orient(&def.system).map_err(|e| e.to_string())?;
    let basis = &def.system.characteristics;
    let c = structure_constants(basis, &def.system, &rules).map_err(|e| e.to_string())?;
    let n = basis.len();
    if n != 4 || c.len() != 4 || c.iter().any(|r| r.len() != 4 || r.iter().any(|v| v.len() != 4)) {
        return Err(format!("structure tensor is not 4x4x4 (basis of {n})"));
    }
    let zero = vec![Rational::from_integer(0.into()); 4];
    if c[0][1] != zero {
        return Err("c12 is not zero".into());
    }
    let minus_e1: Vec<Rational> = [-1, 0, 0, 0].iter().map(|&k| Rational::from_integer(k.into())).collect();
    if c[1][2] != minus_e1 {
        return Err(format!("c23 = {:?}", c[1][2]));
    }
    for i in 0..n {
        for j in 0..n {
            let neg: Vec<Rational> = c[j][i].iter().map(|q| -q).collect();
            if c[i][j] != neg {
                return Err(format!("c[{i}][{j}] is not minus c[{j}][{i}]"));
            }
        }
    }
    Ok(())
}

fn heat_burgers_wave(res: &Results) -> Result<(), String> {
    res.zero(&[
        "heat:symmetry:scale",
        "burgers:symmetry:shift",
        "wave:symmetry:dilation",
        "burgers:lie:xshift:burgers",
        "burgers:lie:tshift:burgers",
    ])
}

fn sigma(res: &Results) -> Result<(), String> {
    res.zero(&[
        "sigma-model:lax:lax:degree0",
        "sigma-model:lax:lax:degree1",
        "sigma-model:identity:flat",
        "sigma-model:lax:lax",
    ])
}

fn zero_curvature(res: &Results) -> Result<(), String> {
    res.zero(&["zero-curvature:equal:flat", "zero-curvature-primed:equal:flat"])
}

fn sdym(res: &Results) -> Result<(), String> {
    res.all_zero("sdym:symmetry:", 16)?;
    res.zero(&[
        "sdym:template",
        "sdym:bt:potential:X",
        "sdym:bt:potential:J",
        "sdym:lax:linear",
        "sdym:lax:symmetric",
        "sdym:reduces:lift4-local",
    ])?;
    res.all_zero("sdym:series:symmetric:", 4)?;
    res.all_zero("sdym:conslaw:", 4)?;
    res.all_zero("psdym:symmetry:", 4)
}

fn ernst(res: &Results) -> Result<(), String> {
    res.zero(&["ernst:template", "ernst:bt:recursion:Phin1", "ernst:equal:base"])?;
    res.all_zero("ernst:symmetry:", 4)?;
    res.all_zero("ernst:series:lax:", 4)?;
    res.all_zero("ernst:chain:recursion[n=0]", 2)?;
    res.all_zero("ernst:chain:recursion[n=1]", 2)
}

fn appendix(res: &Results) -> Result<(), String> {
    res.all_zero("appendix:identity:", 5)?;
    res.all_zero("appendix:matrix:", 10)?;
    for o in res.0.values().filter(|o| o.check_id.starts_with("appendix:matrix:")) {
        let msg = o.message.clone().unwrap_or_default();
        let trials: usize = msg
            .split(" over ")
            .nth(1)
            .and_then(|t| t.split_whitespace().next())
            .and_then(|t| t.parse().ok())
            .unwrap_or(0);
        if trials < MATRIX_TRIALS {
            return Err(format!("{}: {trials} trials", o.check_id));
        }
    }
    for n in [2, 3] {
        if !res.0.keys().any(|k| k.starts_with("appendix:matrix:") && k.ends_with(&format!("n={n}"))) {
            return Err(format!("no matrix checks at n = {n}"));
        }
    }
    Ok(())
}

fn negative(res: &Results) -> Result<(), String> {
    res.zero(&["sine-gordon:negative:symmetry:Qbad", "kdv:trivial:curl"])?;
    let o = res.0.get("sdym:nonsolution:sdym").ok_or("sdym nonsolution missing")?;
    let r: f64 = o
        .message
        .as_deref()
        .and_then(|m| m.strip_prefix("residual "))
        .and_then(|m| m.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .ok_or("no residual recorded")?;
    if !(o.is_zero() && r > RANDOM_RESIDUAL_MIN) {
        return Err(format!("random SDYM residual {r}"));
    }
    Ok(())
}

#[test]
fn acceptance() {
    let res = Results::load(&catalog::entry_names().collect::<Vec<_>>());
    let results = [
        criterion(1, "Cauchy-Riemann transformation and exact seed", laplace(&res)),
        criterion(2, "Liouville transformation and closed form", liouville(&res)),
        criterion(3, "sine-Gordon transformation, kink, laws, template, symmetries", sine_gordon(&res)),
        criterion(4, "KdV Lax pair, laws, determining identities, structure constants", kdv(&res)),
        criterion(5, "heat, Burgers and wave symmetries", heat_burgers_wave(&res)),
        criterion(6, "sigma model Lax residual by degree", sigma(&res)),
        criterion(7, "zero curvature in both conventions", zero_curvature(&res)),
        criterion(8, "SDYM symmetries, transformations, Lax pairs, recursion, laws", sdym(&res)),
        criterion(9, "Ernst symmetries, recursion and chain", ernst(&res)),
        criterion(10, "matrix identities, symbolic and random", appendix(&res)),
        criterion(11, "negative controls", negative(&res)),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(k, _)| k + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
