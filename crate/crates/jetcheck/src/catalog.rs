//! The bundled catalogue of integrable systems.

use crate::deffile::{parse_definition, Definition};
use crate::error::{Error, Result};
use crate::suite::{run_definition, Options, Outcome};

macro_rules! sources {
    ($($file:literal),* $(,)?) => {
        const SOURCES: &[(&str, &str)] = &[$(($file, include_str!(concat!("../catalog/", $file)))),*];
    };
}

sources!(
    "appendix.def",
    "burgers.def",
    "ernst.def",
    "heat.def",
    "kdv.def",
    "kdv-lie.def",
    "laplace.def",
    "liouville.def",
    "psdym.def",
    "q.def",
    "sdym.def",
    "sigma-model.def",
    "sine-gordon.def",
    "wave.def",
    "zero-curvature.def",
    "zero-curvature-primed.def",
);

/// Catalogue entries and the definition files each one runs.
pub const ENTRIES: &[(&str, &[&str])] = &[
    ("laplace", &["laplace.def"]),
    ("liouville", &["liouville.def"]),
    ("sine-gordon", &["sine-gordon.def"]),
    ("kdv", &["kdv.def", "kdv-lie.def"]),
    ("heat", &["heat.def"]),
    ("burgers", &["burgers.def"]),
    ("wave", &["wave.def"]),
    ("sigma-model", &["sigma-model.def"]),
    ("zero-curvature", &["zero-curvature.def", "zero-curvature-primed.def"]),
    ("sdym", &["sdym.def"]),
    ("psdym", &["psdym.def"]),
    ("ernst", &["ernst.def"]),
    ("appendix", &["appendix.def"]),
];

/// Text of a bundled file, by file name with or without the `.def` suffix.
pub fn source(name: &str) -> Option<&'static str> {
    let file = if name.ends_with(".def") { name.to_string() } else { format!("{name}.def") };
    SOURCES.iter().find(|(f, _)| *f == file).map(|(_, t)| *t)
}

pub fn entry_names() -> impl Iterator<Item = &'static str> {
    ENTRIES.iter().map(|(n, _)| *n)
}

fn files(entry: &str) -> Result<&'static [&'static str]> {
    ENTRIES.iter().find(|(n, _)| *n == entry).map(|(_, f)| *f).ok_or_else(|| Error::UnknownEntry(entry.to_string()))
}

/// Parses a bundled definition file.
pub fn definition(file: &str) -> Result<Definition> {
    let text = source(file).ok_or_else(|| Error::UnknownEntry(file.to_string()))?;
    let stem = file.trim_end_matches(".def");
    parse_definition(stem, text, &|n| source(n).map(str::to_string))
}

/// Definitions making up an entry.
pub fn load(entry: &str) -> Result<Vec<Definition>> {
    files(entry)?.iter().map(|f| definition(f)).collect()
}

/// Runs an entry, or every entry for `"all"`, sorted by check id.
pub fn run_suite(entry: &str, opts: &Options) -> Result<Vec<Outcome>> {
    let names: Vec<&str> = if entry == "all" { entry_names().collect() } else { vec![files(entry).map(|_| entry)?] };
    let mut out = Vec::new();
    for name in names {
        for def in load(name)? {
            out.extend(run_definition(&def, opts)?);
        }
    }
    out.sort_by(|a, b| a.check_id.cmp(&b.check_id));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_file_is_bundled() {
        for (_, files) in ENTRIES {
            for f in *files {
                assert!(source(f).is_some(), "{f}");
            }
        }
    }

    #[test]
    fn unknown_entry_is_reported() {
        assert!(matches!(run_suite("nope", &Options::default()), Err(Error::UnknownEntry(_))));
    }
}
