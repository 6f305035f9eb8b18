use jetcheck::cli::{dispatch, EXIT_INTERNAL, EXIT_OK, EXIT_RESIDUAL, EXIT_USAGE};
use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("jetcheck").chain(args.iter().copied());
    let code = dispatch(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn json(args: &[&str]) -> (i32, Vec<Value>) {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    let (code, out, err) = run(&full);
    let v: Value = serde_json::from_str(&out).unwrap_or_else(|e| panic!("{e}: {out}{err}"));
    (code, v.as_array().expect("array of reports").clone())
}

fn assert_schema(report: &Value) {
    let obj = report.as_object().expect("report is an object");
    let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["check_id", "millis", "passes", "residual_text", "status"]);
    assert!(obj["check_id"].is_string());
    assert!(["zero", "residual", "error"].contains(&obj["status"].as_str().unwrap()));
    assert!(obj["residual_text"].is_string());
    assert!(obj["passes"].is_u64());
    assert!(obj["millis"].is_u64());
}

#[test]
fn symmetry_of_an_inline_characteristic() {
    let (code, out, _) = run(&["symmetry", "--system", "kdv.def", "--char", "u_x"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.starts_with("zero     kdv:symmetry:u_x"));
}

#[test]
fn bracket_against_a_separate_basis() {
    let (code, out, _) = run(&["bracket", "--system", "kdv.def", "--basis", "q.def", "--pair", "2", "3"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "c = (-1, 0, 0, 0)\n");
}

#[test]
fn catalog_run_sine_gordon_is_all_zero() {
    let (code, reports) = json(&["catalog", "run", "sine-gordon"]);
    assert_eq!(code, EXIT_OK);
    assert!(!reports.is_empty());
    reports.iter().for_each(assert_schema);
    assert!(reports.iter().all(|r| r["status"] == "zero"));
}

#[test]
fn json_reports_are_sorted_by_id() {
    let (_, reports) = json(&["catalog", "run", "kdv"]);
    let ids: Vec<&str> = reports.iter().map(|r| r["check_id"].as_str().unwrap()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn text_and_json_statuses_agree() {
    let (_, text, _) = run(&["symmetry", "--system", "sine-gordon.def"]);
    let (_, reports) = json(&["symmetry", "--system", "sine-gordon.def"]);
    for r in &reports {
        let line = format!("{:<8} {}", r["status"].as_str().unwrap(), r["check_id"].as_str().unwrap());
        assert!(text.lines().any(|l| l.starts_with(&line)), "{line} not in\n{text}");
    }
}

#[test]
fn residual_exits_one() {
    let (code, reports) = json(&["symmetry", "--system", "sine-gordon.def", "--char", "Qbad"]);
    assert_eq!(code, EXIT_RESIDUAL);
    assert_eq!(reports[0]["status"], "residual");
    assert_eq!(reports[0]["residual_text"], "-u*cos(u) + sin(u)");
}

#[test]
fn usage_and_internal_errors() {
    assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(run(&["bracket", "--system", "kdv.def", "--pair", "1"]).0, EXIT_USAGE);
    assert_eq!(run(&["bracket", "--system", "kdv-lie.def", "--pair", "1", "9"]).0, EXIT_USAGE);
    assert_eq!(run(&["symmetry", "--system", "/nonexistent/x.def"]).0, EXIT_INTERNAL);
    assert_eq!(run(&["catalog", "run", "nothing"]).0, EXIT_INTERNAL);
}

#[test]
fn out_writes_a_file() {
    let path = std::env::temp_dir().join(format!("jetcheck-out-{}.json", std::process::id()));
    let p = path.to_str().unwrap();
    let (code, out, _) = run(&["--format", "json", "--out", p, "conslaw", "--system", "kdv.def"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v.as_array().unwrap().iter().for_each(assert_schema);
    std::fs::remove_file(path).ok();
}

#[test]
fn seed_is_reported_and_deterministic() {
    let a = run(&["--seed", "7", "numeric", "--system", "kdv.def", "--form", "soliton"]);
    let b = run(&["--seed", "7", "numeric", "--system", "kdv.def", "--form", "soliton"]);
    assert_eq!(a, b);
    assert!(a.1.contains("seed 7"));
}

#[test]
fn parse_prints_the_normal_form() {
    assert_eq!(run(&["parse", "(x + y)^2 - x*y"]).1, "x*y + x^2 + y^2\n");
    assert_eq!(run(&["parse", "--system", "kdv.def", "D[u^2; x]"]).1, "2*u*u_x\n");
}

#[test]
fn catalog_list_names_every_entry() {
    let (code, out, _) = run(&["catalog", "list"]);
    assert_eq!(code, EXIT_OK);
    for name in jetcheck::catalog::entry_names() {
        assert!(out.lines().any(|l| l.split_whitespace().next() == Some(name)), "{name}");
    }
}
