use privlens_testkit::checks;

#[test]
fn engine_agrees_with_brute_force_saturation() {
    let summary = checks::oracle_agreement(0..1000).unwrap_or_else(|e| panic!("{}", e));
    println!("{}", summary);
}
