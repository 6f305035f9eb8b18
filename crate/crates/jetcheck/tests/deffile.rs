use jetcheck::deffile::parse_definition;
use jetcheck::Error;

fn parse(text: &str) -> Result<jetcheck::deffile::Definition, Error> {
    parse_definition("t", text, &|_| None)
}

fn line_of(e: &Error) -> usize {
    match e {
        Error::At { line, .. } => *line,
        other => panic!("no location on {other}"),
    }
}

#[test]
fn errors_carry_the_line() {
    let e = parse("[variables]\nx t\n[dependents]\nu: scalar\n[equations]\nheat: u_t - u_xx\n").unwrap_err();
    assert_eq!(line_of(&e), 6);
    assert!(e.to_string().contains("orientation"), "{e}");
}

#[test]
fn undeclared_symbols_are_rejected() {
    let e = parse("[variables]\nx\n[dependents]\nu: scalar\n[characteristics]\nQ: w_x\n").unwrap_err();
    assert_eq!(line_of(&e), 6);
}

#[test]
fn unknown_sections_and_includes() {
    assert!(parse("[nonsense]\na\n").is_err());
    let e = parse("[include]\nmissing.def\n").unwrap_err();
    assert!(e.to_string().contains("missing.def"), "{e}");
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let d = parse(
        "# heading\n\n[variables]\nx t # coordinates\n[dependents]\nu: scalar\n[equations]\nheat: u_t = u_xx -> u_t\n",
    )
    .unwrap();
    assert_eq!(d.system.variables().len(), 2);
    assert_eq!(d.system.equations.len(), 1);
}

#[test]
fn scalar_dependents_cannot_be_invertible() {
    assert!(parse("[variables]\nx\n[dependents]\nu: scalar invertible\n").is_err());
}

#[test]
fn includes_resolve_through_the_callback() {
    let inc = |n: &str| (n == "q.def").then(|| "[characteristics]\nQ1: u_x\n".to_string());
    let text = "[variables]\nx t\n[dependents]\nu: scalar\n[equations]\nheat: u_t = u_xx -> u_t\n[include]\nq.def\n";
    let d = parse_definition("t", text, &inc).unwrap();
    assert_eq!(d.system.characteristics.len(), 1);
}
