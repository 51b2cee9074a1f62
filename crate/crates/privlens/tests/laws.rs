use privlens_testkit::checks;

fn run(lo: u64, hi: u64) {
    let bad: Vec<String> = (lo..hi).flat_map(checks::law_violations).collect();
    assert!(bad.is_empty(), "{} violations:\n{}", bad.len(), bad.iter().take(10).cloned().collect::<Vec<_>>().join("\n"));
}

#[test]
fn laws_hold_on_first_block() {
    run(0, 150);
}

#[test]
fn laws_hold_on_second_block() {
    run(150, 300);
}
