//! Runnable command blocks in documentation pages.
//!
//! A fenced block tagged `jetcheck` holds invocations and their expected
//! output:
//!
//! ````text
//! ```jetcheck
//! $ jetcheck bracket --system kdv.def --basis q.def --pair 2 3
//! c = (-1, 0, 0, 0)
//! ```
//! ````
//!
//! A line `...` matches any number of output lines. A line `[exit N]`
//! right after the output sets the expected exit code (default 0).

use crate::cli;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Invocation {
    /// Line of the `$` prompt, 1-based.
    pub line: usize,
    pub args: Vec<String>,
    pub expected: Vec<String>,
    pub exit: i32,
}

/// Extracts the invocations of every runnable block of a page.
pub fn doctest_extract(page: &str) -> Result<Vec<Invocation>> {
    let mut out: Vec<Invocation> = Vec::new();
    let mut inside = false;
    for (k, raw) in page.lines().enumerate() {
        let line = raw.trim_end();
        if let Some(tag) = line.trim_start().strip_prefix("```") {
            if inside {
                inside = false;
            } else {
                inside = tag.trim() == "jetcheck";
            }
            continue;
        }
        if !inside {
            continue;
        }
        if let Some(cmd) = line.strip_prefix("$ ") {
            let args = shlex::split(cmd).ok_or_else(|| Error::Format(format!("line {}: unbalanced quotes", k + 1)))?;
            if args.first().map(String::as_str) != Some("jetcheck") {
                return Err(Error::Format(format!("line {}: runnable blocks may only invoke jetcheck", k + 1)));
            }
            out.push(Invocation { line: k + 1, args, expected: Vec::new(), exit: cli::EXIT_OK });
            continue;
        }
        let Some(current) = out.last_mut() else {
            return Err(Error::Format(format!("line {}: output before any command", k + 1)));
        };
        if let Some(code) = line.strip_prefix("[exit ").and_then(|l| l.strip_suffix(']')) {
            current.exit = code.trim().parse().map_err(|_| Error::Format(format!("line {}: bad exit code", k + 1)))?;
        } else {
            current.expected.push(line.to_string());
        }
    }
    Ok(out)
}

fn matches(expected: &[String], actual: &[&str]) -> bool {
    match expected.split_first() {
        None => actual.is_empty(),
        Some((e, rest)) if e == "..." => (0..=actual.len()).any(|k| matches(rest, &actual[k..])),
        Some((e, rest)) => actual.split_first().is_some_and(|(a, tail)| a == e && matches(rest, tail)),
    }
}

/// Runs one invocation in-process and compares output and exit code.
pub fn run_invocation(page: &str, inv: &Invocation) -> Result<()> {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let code = cli::dispatch(&inv.args, &mut stdout, &mut stderr);
    let text = String::from_utf8_lossy(&stdout);
    let actual: Vec<&str> = text.lines().map(str::trim_end).collect();
    let drift =
        |detail: String| Error::DocDrift { page: page.to_string(), detail: format!("line {}: {detail}", inv.line) };
    if code != inv.exit {
        return Err(drift(format!(
            "exit {code}, expected {}; stderr: {}",
            inv.exit,
            String::from_utf8_lossy(&stderr).trim()
        )));
    }
    if !matches(&inv.expected, &actual) {
        return Err(drift(format!("output differs:\n{}\nexpected:\n{}", actual.join("\n"), inv.expected.join("\n"))));
    }
    Ok(())
}

/// Runs every invocation of a page, returning how many ran.
pub fn run_page(name: &str, page: &str) -> Result<usize> {
    let invocations = doctest_extract(page)?;
    for inv in &invocations {
        run_invocation(name, inv)?;
    }
    Ok(invocations.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_page_has_no_invocations() {
        assert!(doctest_extract("").unwrap().is_empty());
        assert!(doctest_extract("# Title\n\n```text\n$ jetcheck catalog list\n```\n").unwrap().is_empty());
    }

    #[test]
    fn extracts_commands_output_and_exit() {
        let page = "```jetcheck\n$ jetcheck parse \"x + x\"\n2*x\n$ jetcheck catalog run nope\n[exit 3]\n```\n";
        let inv = doctest_extract(page).unwrap();
        assert_eq!(inv.len(), 2);
        assert_eq!(inv[0].args, ["jetcheck", "parse", "x + x"]);
        assert_eq!(inv[0].expected, ["2*x"]);
        assert_eq!(inv[1].exit, 3);
    }

    #[test]
    fn ellipsis_matches_any_run() {
        let e = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(matches(&e(&["a", "...", "d"]), &["a", "b", "c", "d"]));
        assert!(matches(&e(&["..."]), &[]));
        assert!(!matches(&e(&["a", "...", "d"]), &["a", "b"]));
    }

    #[test]
    fn stale_output_is_drift() {
        let page = "```jetcheck\n$ jetcheck parse \"x + x\"\n3*x\n```\n";
        assert!(matches!(run_page("p", page), Err(Error::DocDrift { .. })));
    }
}
