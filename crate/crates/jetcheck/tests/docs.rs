use std::path::Path;

use jetcheck::docs::{doctest_extract, run_page};

fn pages() -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("catalog/docs");
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "md"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn every_runnable_block_passes() {
    for (name, text) in pages() {
        if let Err(e) = run_page(&name, &text) {
            panic!("{e}");
        }
    }
}

#[test]
fn every_catalog_entry_has_a_page() {
    let names: Vec<String> = pages().into_iter().map(|(n, _)| n).collect();
    for entry in jetcheck::catalog::entry_names() {
        assert!(names.contains(&format!("{entry}.md")), "{entry}");
    }
}

#[test]
fn sine_gordon_page_has_seven_invocations() {
    let (_, text) = pages().into_iter().find(|(n, _)| n == "sine-gordon.md").unwrap();
    let inv = doctest_extract(&text).unwrap();
    assert_eq!(inv.len(), 7);
    assert!(inv.iter().all(|i| i.exit == 0 || i.args.contains(&"Qbad".to_string())));
}
