use jetcheck::catalog::{entry_names, load, run_suite};
use jetcheck::suite::Options;

#[test]
fn every_entry_parses() {
    for e in entry_names() {
        let defs = load(e).unwrap_or_else(|err| panic!("{e}: {err}"));
        assert!(defs.iter().all(|d| !d.checks.is_empty()), "{e} has a file without checks");
    }
}

#[test]
fn small_entries_are_all_zero() {
    for e in ["laplace", "liouville", "heat", "burgers", "wave", "psdym", "zero-curvature"] {
        for o in run_suite(e, &Options::default()).unwrap() {
            assert!(o.is_zero(), "{}: {} {:?}", o.check_id, o.residual_text, o.message);
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let a = run_suite("sine-gordon", &Options::default()).unwrap();
    let b = run_suite("sine-gordon", &Options::default()).unwrap();
    let strip = |v: &[jetcheck::suite::Outcome]| {
        v.iter().map(|o| (o.check_id.clone(), o.residual_text.clone(), o.message.clone())).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn a_tiny_pass_limit_is_an_error_not_a_zero() {
    let opts = Options { pass_limit: 0, ..Options::default() };
    let out = run_suite("kdv", &opts).unwrap();
    let o = out.iter().find(|o| o.check_id == "kdv:conslaw:energy").unwrap();
    assert_eq!(o.status, "error");
}

#[test]
fn check_ids_are_unique() {
    let out = run_suite("sdym", &Options::default()).unwrap();
    let mut ids: Vec<&str> = out.iter().map(|o| o.check_id.as_str()).collect();
    let n = ids.len();
    ids.dedup();
    assert_eq!(ids.len(), n);
}
