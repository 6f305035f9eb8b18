//! Command line front end.
//!
//! Exit codes: 0 when every requested check is zero, 1 when any is not,
//! 2 for usage errors and 3 for failures before checks could run.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use jetcheck_core::calculus::Characteristic;
use jetcheck_core::compat::{conservation_check, lax_compatibility, symmetry_check};
use jetcheck_core::reduce::orient;
use jetcheck_core::CheckReport;

use crate::catalog;
use crate::deffile::{default_target, load_into, read_definition, Definition};
use crate::error::{Error, Result};
use crate::suite::{Options, Outcome, Runner};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RESIDUAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "jetcheck", version, about = "Symbolic verification of integrable PDE claims")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Seed for randomized checks; JETCHECK_SEED takes precedence.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum number of simultaneous rewriting passes.
    #[arg(long, global = true)]
    pass_limit: Option<usize>,
    /// Sample points for closed-form checks.
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List or run bundled catalogue entries.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Run the [checks] section of a definition file.
    Run { file: PathBuf },
    /// Symmetry condition for a characteristic, given by name or expression.
    Symmetry {
        #[arg(long)]
        system: PathBuf,
        #[arg(long = "char")]
        characteristic: Vec<String>,
    },
    /// Divergence of conservation laws (all when none is named).
    Conslaw {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        law: Vec<String>,
    },
    /// Compatibility condition of a Bäcklund transformation.
    Bt {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        eliminate: String,
    },
    /// Compatibility of Lax pairs (all when none is named).
    Lax {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        pair: Vec<String>,
    },
    /// Relations between coefficients of a Laurent expansion of a Lax pair.
    Series {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        pair: String,
        #[arg(long, default_value = "Phi")]
        prefix: String,
        #[arg(long, default_value_t = -2, allow_hyphen_values = true)]
        lo: i32,
        #[arg(long, default_value_t = 2, allow_hyphen_values = true)]
        hi: i32,
    },
    /// Coefficients of the bracket of two basis characteristics (1-based).
    Bracket {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["I", "J"])]
        pair: Vec<usize>,
    },
    /// Full table of structure constants.
    Structure {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Sample equations and relations on a closed-form solution.
    Numeric {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        form: String,
    },
    /// Print the normal form of an expression.
    Parse {
        #[arg(long)]
        system: Option<PathBuf>,
        expr: String,
    },
}

#[derive(Subcommand, Debug)]
enum CatalogAction {
    List,
    Run { entry: String },
}

/// What a command produced: reports, or plain lines for informational output.
enum Produced {
    Reports(Vec<Outcome>),
    Lines(Vec<String>, i32),
}

fn options(c: &Common) -> Options {
    let mut o = Options::default();
    let env_seed = std::env::var("JETCHECK_SEED").ok().and_then(|s| s.trim().parse().ok());
    if let Some(s) = env_seed.or(c.seed) {
        o.seed = s;
    }
    if let Some(p) = c.pass_limit {
        o.pass_limit = p;
    }
    if let Some(p) = c.points {
        o.points = p;
    }
    o
}

/// Reads a definition from disk, falling back to the bundled file of that name.
pub fn open(path: &Path) -> Result<Definition> {
    if path.exists() {
        return read_definition(path);
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    match catalog::source(name) {
        Some(_) => catalog::definition(name),
        None => Err(Error::Io { path: path.to_path_buf(), source: std::io::ErrorKind::NotFound.into() }),
    }
}

fn open_text(path: &Path) -> Result<String> {
    if path.exists() {
        return std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source });
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    catalog::source(name)
        .map(str::to_string)
        .ok_or_else(|| Error::Io { path: path.to_path_buf(), source: std::io::ErrorKind::NotFound.into() })
}

fn with_basis(mut def: Definition, basis: Option<&Path>) -> Result<Definition> {
    if let Some(b) = basis {
        let text = open_text(b)?;
        def.system.characteristics.clear();
        let name = b.display().to_string();
        load_into(&mut def, &name, &text, &|n| catalog::source(n).map(str::to_string))?;
    }
    Ok(def)
}

fn outcomes(prefix: &str, reports: Vec<CheckReport>) -> Vec<Outcome> {
    reports.into_iter().map(|r| Outcome::from_report(prefix, r, 0)).collect()
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, u64)> {
    let start = std::time::Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_millis() as u64))
}

fn execute(cmd: Command, opts: &Options) -> Result<Produced> {
    let reports = |def: &Definition, r: Vec<CheckReport>, millis: u64| {
        let mut out = outcomes(&def.name, r);
        let share = millis / out.len().max(1) as u64;
        out.iter_mut().for_each(|o| o.millis = share);
        Produced::Reports(out)
    };
    match cmd {
        Command::Catalog { action: CatalogAction::List } => {
            let lines = catalog::ENTRIES.iter().map(|(n, files)| format!("{n:<16} {}", files.join(" "))).collect();
            Ok(Produced::Lines(lines, EXIT_OK))
        }
        Command::Catalog { action: CatalogAction::Run { entry } } => {
            Ok(Produced::Reports(catalog::run_suite(&entry, opts)?))
        }
        Command::Run { file } => {
            let def = open(&file)?;
            let mut out = crate::suite::run_definition(&def, opts)?;
            out.sort_by(|a, b| a.check_id.cmp(&b.check_id));
            Ok(Produced::Reports(out))
        }
        Command::Symmetry { system, characteristic } => {
            let def = open(&system)?;
            let rules = orient(&def.system)?.with_pass_limit(opts.pass_limit);
            let (r, ms) = timed(|| {
                let names: Vec<String> = if characteristic.is_empty() {
                    def.system.characteristics.iter().map(|q| q.name.clone()).collect()
                } else {
                    characteristic
                };
                names
                    .iter()
                    .map(|c| {
                        let q = match def.system.characteristic(c) {
                            Some(q) => q.clone(),
                            None => Characteristic::new(c.clone(), default_target(&def.system)?, def.system.parse(c)?),
                        };
                        Ok(symmetry_check(&q, &def.system, &rules))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            Ok(reports(&def, r, ms))
        }
        Command::Conslaw { system, law } => {
            let def = open(&system)?;
            let rules = orient(&def.system)?.with_pass_limit(opts.pass_limit);
            let (r, ms) = timed(|| {
                let laws: Vec<_> = if law.is_empty() {
                    def.system.laws.iter().collect()
                } else {
                    law.iter()
                        .map(|n| def.system.law(n).ok_or_else(|| Error::UnknownName { kind: "law", name: n.clone() }))
                        .collect::<Result<_>>()?
                };
                Ok(laws.into_iter().map(|l| conservation_check(l, &def.system, &rules)).collect())
            })?;
            Ok(reports(&def, r, ms))
        }
        Command::Bt { system, name, eliminate } => {
            let def = open(&system)?;
            let bt = def
                .system
                .bt(&name)
                .ok_or_else(|| Error::UnknownName { kind: "transformation", name: name.clone() })?;
            let w = def
                .system
                .lookup(&eliminate)
                .cloned()
                .ok_or_else(|| Error::UnknownName { kind: "symbol", name: eliminate.clone() })?;
            let id = format!("bt:{name}:{eliminate}");
            let (r, ms) = timed(|| {
                Ok(match jetcheck_core::compat::bt_eliminate(bt, &w, &def.system) {
                    Ok(e) => CheckReport::from_expr(&id, e, &def.system),
                    Err(e) => CheckReport::failure(&id, &e),
                })
            })?;
            let mut out = reports(&def, vec![r], ms);
            // The condition itself is the answer here, so a nonzero one is not a failure.
            if let Produced::Reports(v) = &mut out {
                let lines = v.iter().map(|o| format!("{} = {}", o.check_id, o.residual_text)).collect();
                let code = if v.iter().any(|o| o.status == "error") { EXIT_RESIDUAL } else { EXIT_OK };
                return Ok(Produced::Lines(lines, code));
            }
            Ok(out)
        }
        Command::Lax { system, pair } => {
            let def = open(&system)?;
            let rules = orient(&def.system)?.with_pass_limit(opts.pass_limit);
            let (r, ms) = timed(|| {
                let pairs: Vec<_> = if pair.is_empty() {
                    def.system.lax_pairs.iter().collect()
                } else {
                    pair.iter()
                        .map(|n| {
                            def.system
                                .lax_pair(n)
                                .ok_or_else(|| Error::UnknownName { kind: "Lax pair", name: n.clone() })
                        })
                        .collect::<Result<_>>()?
                };
                let mut out = Vec::new();
                for p in pairs {
                    let id = format!("lax:{}", p.name);
                    out.push(match lax_compatibility(p, &def.system, &rules) {
                        Ok(l) => CheckReport {
                            check_id: id,
                            status: l.status,
                            residual_text: def.system.render(&l.residual),
                            residual: l.residual,
                            passes: l.degree_reports.iter().map(|(_, r)| r.passes).sum(),
                            message: None,
                        },
                        Err(e) => CheckReport::failure(&id, &e),
                    });
                }
                Ok(out)
            })?;
            Ok(reports(&def, r, ms))
        }
        Command::Series { system, pair, prefix, lo, hi } => {
            let def = open(&system)?;
            let mut sys = def.system.clone();
            let lax = sys
                .lax_pair(&pair)
                .cloned()
                .ok_or_else(|| Error::UnknownName { kind: "Lax pair", name: pair.clone() })?;
            let rels = jetcheck_core::compat::series_extract(&lax, &mut sys, &prefix, lo, hi)?;
            let mut lines = Vec::new();
            for r in rels {
                for (k, e) in r.bt.relations.iter().enumerate() {
                    lines.push(format!("n = {} ({}): {} = 0", r.n, k + 1, sys.render(e)));
                }
            }
            Ok(Produced::Lines(lines, EXIT_OK))
        }
        Command::Bracket { system, basis, pair } => {
            let def = with_basis(open(&system)?, basis.as_deref())?;
            let [i, j] = pair.as_slice() else {
                return Err(Error::Usage("--pair takes two indices".into()));
            };
            let name = |k: usize| {
                def.system.characteristics.get(k.wrapping_sub(1)).map(|q| q.name.clone()).ok_or_else(|| {
                    Error::Usage(format!("basis index {k} out of range 1..={}", def.system.characteristics.len()))
                })
            };
            let (a, b) = (name(*i)?, name(*j)?);
            let runner = Runner::new(&def, opts)?;
            let c = runner.bracket_coefficients(&a, &b)?;
            let text = c.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(", ");
            Ok(Produced::Lines(vec![format!("c = ({text})")], EXIT_OK))
        }
        Command::Structure { system, basis } => {
            let def = with_basis(open(&system)?, basis.as_deref())?;
            let rules = orient(&def.system)?.with_pass_limit(opts.pass_limit);
            let c = jetcheck_core::algebra::structure_constants(&def.system.characteristics, &def.system, &rules)?;
            let names: Vec<&str> = def.system.characteristics.iter().map(|q| q.name.as_str()).collect();
            let mut lines = Vec::new();
            for (i, row) in c.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    if i < j && v.iter().any(|q| !num_traits::Zero::is_zero(q)) {
                        let text = v.iter().map(|q| q.to_string()).collect::<Vec<_>>().join(", ");
                        lines.push(format!("[{}, {}] = ({text})", names[i], names[j]));
                    }
                }
            }
            if lines.is_empty() {
                lines.push("abelian".into());
            }
            Ok(Produced::Lines(lines, EXIT_OK))
        }
        Command::Numeric { system, form } => {
            let def = open(&system)?;
            let runner = Runner::new(&def, opts)?;
            let (r, ms) = timed(|| runner.run_line(&format!("numeric {form}")))?;
            Ok(reports(&def, r, ms))
        }
        Command::Parse { system, expr } => {
            let explicit = system.is_some();
            let mut def = match system {
                Some(p) => open(&p)?,
                None => Definition::empty("expr"),
            };
            // Without a definition, undeclared names become variables.
            loop {
                match def.system.parse(&expr) {
                    Ok(e) => return Ok(Produced::Lines(vec![def.system.render(&e)], EXIT_OK)),
                    Err(jetcheck_core::Error::UndeclaredSymbol { name, .. }) if !explicit => {
                        def.system.add_variable(&name)?;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    }
}

fn render(produced: &Produced, format: Format) -> (String, i32) {
    match produced {
        Produced::Lines(lines, code) => {
            let text = match format {
                Format::Text => lines.iter().map(|l| format!("{l}\n")).collect(),
                Format::Json => format!("{}\n", serde_json::to_string_pretty(lines).expect("strings serialize")),
            };
            (text, *code)
        }
        Produced::Reports(reports) => {
            let code = if reports.iter().all(Outcome::is_zero) { EXIT_OK } else { EXIT_RESIDUAL };
            let text = match format {
                Format::Text => {
                    let mut s = String::new();
                    for r in reports {
                        s.push_str(&format!("{:<8} {}", r.status, r.check_id));
                        if !r.is_zero() && !r.residual_text.is_empty() {
                            s.push_str(&format!("  {}", r.residual_text));
                        }
                        if let Some(m) = &r.message {
                            if r.is_zero() || *m != r.residual_text {
                                s.push_str(&format!("  [{m}]"));
                            }
                        }
                        s.push('\n');
                    }
                    let zero = reports.iter().filter(|r| r.is_zero()).count();
                    s.push_str(&format!("{zero}/{} checks zero\n", reports.len()));
                    s
                }
                Format::Json => format!("{}\n", serde_json::to_string_pretty(reports).expect("reports serialize")),
            };
            (text, code)
        }
    }
}

/// Parses `args` (including the program name), runs the command and writes
/// the report. Returns the exit code.
pub fn dispatch<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    let opts = options(&cli.common);
    let produced = match execute(cli.command, &opts) {
        Ok(p) => p,
        Err(e @ Error::Usage(_)) => {
            let _ = writeln!(stderr, "jetcheck: {e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            let _ = writeln!(stderr, "jetcheck: {e}");
            return EXIT_INTERNAL;
        }
    };
    let (text, code) = render(&produced, cli.common.format);
    match &cli.common.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                let _ = writeln!(stderr, "jetcheck: cannot write {}: {e}", path.display());
                return EXIT_INTERNAL;
            }
        }
        None => {
            let _ = stdout.write_all(text.as_bytes());
        }
    }
    code
}
