use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus(sys: &str) -> String {
    root().join("corpus").join(sys).display().to_string()
}

fn client_server() -> String {
    root().join("crates/privlens-testkit/data/client_server.pls").display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privlens")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// A scratch copy of a corpus system with one file rewritten.
fn scratch(sys: &str, tag: &str, file: &str, edit: impl Fn(&str) -> String) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("privlens-cli-{}-{}-{}", tag, sys, std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for f in ["model.pls", "initial.pls", "trace.pls", "requirements.pls"] {
        let t = std::fs::read_to_string(Path::new(&corpus(sys)).join(f)).unwrap();
        let t = if f == file { edit(&t) } else { t };
        std::fs::write(dir.join(f), t).unwrap();
    }
    dir
}

#[test]
fn analyze_passing_system_exits_zero() {
    let o = run(&["analyze", &corpus("identity-mixer")]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!stdout(&o).contains('✗'));
}

#[test]
fn analyze_failing_system_exits_one() {
    let o = run(&["analyze", &corpus("smart-certificates"), "--format", "tsv"]);
    assert_eq!(o.status.code(), Some(1));
    let rows = privlens::report::parse_tsv(&stdout(&o)).unwrap();
    let failed: Vec<&str> = rows.iter().filter(|r| r.2 == Some(false)).map(|r| r.1.as_str()).collect();
    assert_eq!(failed, ["SID", "SPD", "SL", "IIL", "ISL"]);
}

#[test]
fn analyze_with_empty_suite_exits_zero() {
    let dir = scratch("smartcard", "empty", "requirements.pls", |_| "privlens-scenario v1\n".into());
    let o = run(&["analyze", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), "system\nsmartcard\n");
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn analyze_errors_exit_two() {
    let o = run(&["analyze", "/nonexistent/scenario"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("error:"));

    let dir = scratch("smartcard", "syntax", "trace.pls", |t| t.replacen("send ", "sned ", 1));
    let o = run(&["analyze", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("trace.pls: unknown transmission 'sned'"), "{}", stderr(&o));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn invalid_trace_is_an_error_unless_validation_is_off() {
    let dir = scratch("smartcard", "invalid", "initial.pls", |t| t.replacen("na@pi..\n", "", 1));
    let p = dir.to_str().unwrap();
    let o = run(&["analyze", p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("step 1: al cannot determine"), "{}", stderr(&o));
    let o = run(&["analyze", p, "--no-validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn compare_matches_the_golden_table() {
    let systems: Vec<String> = ["smart-certificates", "linking-service", "identity-mixer", "smartcard"].iter().map(|s| corpus(s)).collect();
    let mut args = vec!["compare"];
    args.extend(systems.iter().map(|s| s.as_str()));
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let golden = std::fs::read_to_string(root().join("golden/table5.txt")).unwrap();
    assert_eq!(stdout(&o), golden);
}

#[test]
fn compare_single_system_gives_one_row() {
    let o = run(&["compare", &corpus("linking-service")]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 2);
    assert!(out.lines().nth(1).unwrap().starts_with("linking-service"));
}

#[test]
fn records_format_and_witnesses() {
    let o = run(&["analyze", &corpus("smart-certificates"), "--format", "records"]);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 11);
    assert!(out.lines().any(|l| l.starts_with("smart-certificates SPD fail ")));
    let o = run(&["analyze", &corpus("smart-certificates"), "--witnesses"]);
    assert!(stdout(&o).lines().any(|l| l.starts_with("smart-certificates SPD: ")), "{}", stdout(&o));
}

#[test]
fn verbose_lists_shared_profile_labels() {
    let o = run(&["-v", "analyze", &corpus("smart-certificates")]);
    let err = stderr(&o);
    let line = err.lines().find(|l| l.contains("profile labels used in several domains:")).expect(&err);
    let labels: Vec<&str> = line.rsplit(':').next().unwrap().split_whitespace().collect();
    assert!(labels.contains(&"u"), "{}", line);
}

#[test]
fn query_derive_shows_decryption_after_key_guessing() {
    let o = run(&["query", &client_server(), "derive", "cli", "id@pi.su"]);
    assert_eq!(o.status.code(), Some(0));
    let rules: Vec<String> = stdout(&o).lines().map(|l| l.split_whitespace().next().unwrap().to_string()).collect();
    assert_eq!(rules, ["|-EE", "|-0", "|-TE", "|-0", "|-0"]);
}

#[test]
fn query_derive_on_own_knowledge_is_one_node() {
    let o = run(&["query", &client_server(), "derive", "cli", "pk(sk@..srv)"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "|-0    pk(sk@..srv)\n");
}

#[test]
fn query_derive_reports_underivable_terms() {
    let o = run(&["query", &client_server(), "derive", "cli", "col1@db.1"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "not derivable: col1@db.1\n");
}

#[test]
fn query_view_lists_classes() {
    let o = run(&["query", &client_server(), "view", "cli"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("  {ds@ab.4, id@ab.4, age@pi.su, id@pi.su}\n"), "{}", out);
    assert!(out.contains("  {ds@ab.12, teln@ab.12}\n"));
}

#[test]
fn query_assoc_on_items_and_contexts() {
    let cs = client_server();
    assert_eq!(run(&["query", &cs, "assoc", "cli", "(ab,4)", "(pi,su)"]).status.code(), Some(0));
    assert_eq!(run(&["query", &cs, "assoc", "cli", "ds@ab.4", "ds@ab.12"]).status.code(), Some(1));
    assert_eq!(run(&["query", &cs, "assoc", "cli", "(ab,4)", "ds@ab.12"]).status.code(), Some(2));
    assert_eq!(run(&["query", &cs, "assoc", "cli", "(zz,4)", "(pi,su)"]).status.code(), Some(2));
}

#[test]
fn query_determinable_gives_a_witness() {
    let o = run(&["query", &client_server(), "--after", "0", "determinable", "cli", "at(pi, senc(shkey@., id@su))"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "senc(skey@..., id@ab.4)\n");
}

#[test]
fn query_with_unresolvable_arguments_exits_two() {
    let cs = client_server();
    for args in [
        vec!["query", cs.as_str(), "derive", "zed", "id@pi.su"],
        vec!["query", cs.as_str(), "derive", "cli", "frob(x)"],
        vec!["query", cs.as_str(), "--after", "9", "view", "cli"],
        vec!["query", cs.as_str(), "assoc", "cli", "nope@pi.su", "id@pi.su"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{:?}", args);
    }
}
