//! One line per acceptance criterion.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use privlens_testkit::checks::{self, Outcome, SYSTEMS};

fn compare(format: &str) -> Result<Vec<u8>, String> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_privlens"));
    cmd.arg("compare").args(SYSTEMS.iter().map(|s| root.join(s))).args(["--format", format]);
    let o = cmd.output().map_err(|e| e.to_string())?;
    if o.status.code() != Some(0) {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    Ok(o.stdout)
}

fn comparison_table() -> Outcome {
    let lib = checks::comparison_table()?;
    let t0 = Instant::now();
    let out = compare("table")?;
    let elapsed = t0.elapsed();
    let golden = std::fs::read(checks::workspace_root().join("golden/table5.txt")).map_err(|e| e.to_string())?;
    if out != golden {
        return Err("privlens compare output differs from golden/table5.txt".into());
    }
    Ok(format!("{}; cli compare {:.1?}", lib, elapsed))
}

fn determinism() -> Outcome {
    for f in ["table", "tsv", "records"] {
        if compare(f)? != compare(f)? {
            return Err(format!("{} output differs between runs", f));
        }
    }
    Ok("table, tsv and records byte-identical across runs".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("comparison table", comparison_table),
        ("worked examples", checks::worked_examples),
        ("trace validity", checks::trace_validity),
        ("oracle equivalence", || checks::oracle_agreement(0..1000)),
        ("algebraic laws", || checks::algebraic_laws(0..300)),
        ("rule coverage", checks::rule_coverage),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(s) => println!("criterion {} {:<20} PASS  {}", k + 1, name, s),
            Err(e) => {
                failed += 1;
                println!("criterion {} {:<20} FAIL  {}", k + 1, name, e.lines().next().unwrap_or(""));
            }
        }
    }
    assert_eq!(failed, 0, "{} criteria failed", failed);
}
