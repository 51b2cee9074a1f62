use std::collections::BTreeSet;
use std::path::Path;

use privlens::dsl::{self, parse_scenario, Scenario, FILES};
use privlens::report::{self, Format, SystemResult};
use privlens::trace::DeterminabilityOptions;
use privlens_testkit::checks::{self, corpus_dir, load_system, SYSTEMS};

fn analyze(sc: &Scenario) -> SystemResult {
    let r = report::analyze(sc, Some(DeterminabilityOptions::default())).unwrap();
    assert!(r.validity.valid(), "{}: {}", sc.name, r.validity.render(&sc.model));
    r
}

/// Loads a corpus system with `edit` applied to one of its files.
fn mutated(system: &str, file: &str, edit: impl Fn(&str) -> String) -> Scenario {
    let dir = corpus_dir(system);
    let texts: Vec<(String, String)> = FILES
        .iter()
        .map(|f| {
            let t = std::fs::read_to_string(dir.join(f)).unwrap();
            let t = if *f == file { edit(&t) } else { t };
            (f.to_string(), t)
        })
        .collect();
    let refs: Vec<(&str, &str)> = texts.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut sc = parse_scenario(&refs).unwrap();
    if sc.name.is_empty() {
        sc.name = system.to_string();
    }
    sc
}

#[test]
fn traces_are_valid_and_deletions_break_them_where_expected() {
    let summary = checks::trace_validity().unwrap_or_else(|e| panic!("{}", e));
    println!("{}", summary);
}

#[test]
fn verdicts_and_golden_table() {
    let summary = checks::comparison_table().unwrap_or_else(|e| panic!("{}", e));
    println!("{}", summary);
}

#[test]
fn every_system_shares_one_suite() {
    let scs: Vec<Scenario> = SYSTEMS.iter().map(|s| load_system(s)).collect();
    let refs: Vec<&Scenario> = scs.iter().collect();
    let cols = report::suite_columns(&refs).unwrap();
    assert_eq!(cols, ["AX", "AR", "SID", "SPD", "ID", "IM", "ISM", "SL", "IL", "IIL", "ISL", "LD"]);
}

const ZK_PROPERTY: &str = "    d2>60@u,\n    cat(n1a@., n1b@.)))";

#[test]
fn property_only_inside_the_proof_changes_nothing() {
    let sc = mutated("identity-mixer", "trace.pls", |t| {
        assert_eq!(t.matches(ZK_PROPERTY).count(), 2);
        t.replace(ZK_PROPERTY, "    empty,\n    cat(n1a@., n1b@.)))")
    });
    let r = analyze(&sc);
    assert!(r.all_hold());
}

#[test]
fn dropping_the_age_property_breaks_attribute_exchange() {
    let sc = mutated("identity-mixer", "trace.pls", |t| {
        t.replace(ZK_PROPERTY, "    empty,\n    cat(n1a@., n1b@.)))").replace("d1@u, d2>60@u, cnd@.", "d1@u, cnd@.")
    });
    let r = analyze(&sc);
    assert_eq!(r.verdict("AX"), Some(false));
    let flipped: Vec<&str> = r.verdicts.iter().filter(|(_, v)| !v.holds).map(|(n, _)| n.as_str()).collect();
    assert_eq!(flipped, ["AX"]);
}

#[test]
fn disclosing_the_raw_age_breaks_data_minimisation() {
    let sc = mutated("identity-mixer", "trace.pls", |t| {
        t.replace(ZK_PROPERTY, "    d2@u,\n    cat(n1a@., n1b@.)))").replace("d1@u, d2>60@u, cnd@.", "d1@u, d2@u, cnd@.")
    });
    let r = analyze(&sc);
    let flipped: Vec<&str> = r.verdicts.iter().filter(|(_, v)| !v.holds).map(|(n, _)| n.as_str()).collect();
    assert_eq!(flipped, ["SPD"]);
}

fn compare_all(format: Format) -> String {
    let scs: Vec<Scenario> = SYSTEMS.iter().map(|s| load_system(s)).collect();
    let refs: Vec<&Scenario> = scs.iter().collect();
    let cols = report::suite_columns(&refs).unwrap();
    let results: Vec<SystemResult> = scs.iter().map(analyze).collect();
    report::render(&results, &cols, format, true)
}

#[test]
fn output_is_identical_across_runs() {
    for f in [Format::Table, Format::Tsv, Format::Records] {
        assert_eq!(compare_all(f), compare_all(f));
    }
}

#[test]
fn tsv_reads_back_as_the_verdict_set() {
    let got: BTreeSet<(String, String, Option<bool>)> =
        report::parse_tsv(&compare_all(Format::Tsv)).unwrap().into_iter().collect();
    let mut want = BTreeSet::new();
    for (sys, row) in checks::expected_verdicts() {
        for (req, v) in row {
            want.insert((sys.to_string(), req.to_string(), Some(v)));
        }
        if sys != "linking-service" {
            want.insert((sys.to_string(), "LD".to_string(), None));
        }
    }
    assert_eq!(got, want);
}

#[test]
fn records_hold_one_verdict_per_line() {
    let text = compare_all(Format::Records);
    assert_eq!(text.lines().count(), 45);
    for l in text.lines() {
        let f: Vec<&str> = l.splitn(4, ' ').collect();
        assert_eq!(f.len(), 4, "{}", l);
        assert!(SYSTEMS.contains(&f[0]));
        assert!(f[2] == "pass" || f[2] == "fail");
    }
    assert!(text.contains("smart-certificates SL fail "));
}

#[test]
fn single_system_single_requirement_is_one_cell() {
    let sc = load_system("smartcard");
    let r = analyze(&sc);
    let t = report::render(&[r], &["SL".to_string()], Format::Table, false);
    assert_eq!(t, "system     SL\nsmartcard  ✓\n");
}

#[test]
fn empty_suite_gives_an_empty_matrix() {
    let sc = mutated("smartcard", "requirements.pls", |_| "privlens-scenario v1\n".to_string());
    let r = analyze(&sc);
    assert!(r.all_hold());
    let refs = [&sc];
    let cols = report::suite_columns(&refs).unwrap();
    assert!(cols.is_empty());
    assert_eq!(report::render(&[r], &cols, Format::Table, false), "system\nsmartcard\n");
}

#[test]
fn differing_suites_are_rejected() {
    let a = load_system("smartcard");
    let b = mutated("identity-mixer", "requirements.pls", |t| {
        let u = t.replace("!assoc {bs} (zeta,u) (xi,u)", "!assoc {bs,ii} (zeta,u) (xi,u)");
        assert_ne!(u, t);
        u
    });
    match report::suite_columns(&[&a, &b]) {
        Err(privlens::Error::SuiteMismatch(m)) => assert!(m.contains("SL"), "{}", m),
        other => panic!("{:?}", other),
    }
}

#[test]
fn corpus_files_carry_the_header() {
    for sys in SYSTEMS {
        for f in FILES {
            let p = corpus_dir(sys).join(f);
            let t = std::fs::read_to_string(&p).unwrap();
            assert!(t.starts_with(dsl::HEADER), "{}", p.display());
        }
    }
    assert!(Path::new(&checks::workspace_root().join("golden/table5.txt")).exists());
}
