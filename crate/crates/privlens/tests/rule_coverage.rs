use privlens_testkit::checks;

#[test]
fn every_rule_fires_in_a_checked_derivation() {
    let seen = checks::rule_tally().unwrap_or_else(|e| panic!("{}", e));
    for (r, n) in &seen {
        println!("{:<6} {}", r.to_string(), n);
    }
    let missing: Vec<String> = seen.iter().filter(|(_, &n)| n == 0).map(|(r, _)| r.to_string()).collect();
    assert!(missing.is_empty(), "rules never used: {}", missing.join(" "));
}
