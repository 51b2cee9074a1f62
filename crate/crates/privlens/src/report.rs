//! Running scenarios end to end and rendering verdict matrices.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dsl::Scenario;
use crate::error::{Error, Result};
use crate::reqs::{Evaluator, Verdict};
use crate::trace::{evolve, DeterminabilityOptions, SystemState, ValidityReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Table,
    Tsv,
    Records,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "table" => Ok(Format::Table),
            "tsv" => Ok(Format::Tsv),
            "records" => Ok(Format::Records),
            _ => Err(format!("unknown format {}", s)),
        }
    }
}

/// Outcome of analysing one scenario.
#[derive(Clone, Debug)]
pub struct SystemResult {
    pub system: String,
    pub verdicts: Vec<(String, Verdict)>,
    pub validity: ValidityReport,
    pub final_state: SystemState,
}

impl SystemResult {
    pub fn all_hold(&self) -> bool {
        self.verdicts.iter().all(|(_, v)| v.holds)
    }

    pub fn verdict(&self, name: &str) -> Option<bool> {
        self.verdicts.iter().find(|(n, _)| n == name).map(|(_, v)| v.holds)
    }
}

/// Evolves the initial state along the trace and checks the suite.
/// `validate` enables trace validity checking with the given options.
pub fn analyze(sc: &Scenario, validate: Option<DeterminabilityOptions>) -> Result<SystemResult> {
    let (final_state, validity) = evolve(&sc.model, &sc.initial, &sc.trace, validate)?;
    let ev = Evaluator::new(&sc.model, &final_state);
    let verdicts = ev.check_suite(&sc.suite)?;
    Ok(SystemResult { system: sc.name.clone(), verdicts, validity, final_state })
}

/// Requirement columns shared by several scenarios, in first-seen order.
/// Fails if one name carries different formulas.
pub fn suite_columns(scenarios: &[&Scenario]) -> Result<Vec<String>> {
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    let mut cols = Vec::new();
    for sc in scenarios {
        for r in &sc.suite.requirements {
            let text = r.formula.to_string();
            match seen.get(&r.name) {
                Some(prev) if *prev != text => {
                    return Err(Error::SuiteMismatch(format!(
                        "{} differs in scenario {}",
                        r.name, sc.name
                    )))
                }
                Some(_) => {}
                None => {
                    seen.insert(r.name.clone(), text);
                    cols.push(r.name.clone());
                }
            }
        }
    }
    Ok(cols)
}

const PASS: &str = "✓";
const FAIL: &str = "✗";
const NONE: &str = "-";

fn cell(r: &SystemResult, col: &str) -> &'static str {
    match r.verdict(col) {
        Some(true) => PASS,
        Some(false) => FAIL,
        None => NONE,
    }
}

pub fn render(results: &[SystemResult], columns: &[String], format: Format, witnesses: bool) -> String {
    match format {
        Format::Table => render_table(results, columns, witnesses),
        Format::Tsv => render_tsv(results, columns),
        Format::Records => render_records(results, columns),
    }
}

fn render_table(results: &[SystemResult], columns: &[String], witnesses: bool) -> String {
    let w0 = results.iter().map(|r| r.system.chars().count()).max().unwrap_or(0).max("system".len());
    let widths: Vec<usize> = columns.iter().map(|c| c.chars().count().max(1)).collect();
    let mut s = String::new();
    let _ = write!(s, "{:<w0$}", "system");
    for (c, w) in columns.iter().zip(&widths) {
        let _ = write!(s, "  {:^w$}", c, w = *w);
    }
    s.truncate(s.trim_end_matches(' ').len());
    s.push('\n');
    for r in results {
        let _ = write!(s, "{:<w0$}", r.system);
        for (c, w) in columns.iter().zip(&widths) {
            let _ = write!(s, "  {:^w$}", cell(r, c), w = *w);
        }
        s.truncate(s.trim_end_matches(' ').len());
        s.push('\n');
    }
    if witnesses {
        for r in results {
            for (n, v) in &r.verdicts {
                if !v.witness.is_empty() {
                    let _ = writeln!(s, "{} {}: {}", r.system, n, v.witness.join(" "));
                }
            }
        }
    }
    s
}

fn render_tsv(results: &[SystemResult], columns: &[String]) -> String {
    let mut s = String::from("system");
    for c in columns {
        s.push('\t');
        s.push_str(c);
    }
    s.push('\n');
    for r in results {
        s.push_str(&r.system);
        for c in columns {
            s.push('\t');
            s.push_str(match r.verdict(c) {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "-",
            });
        }
        s.push('\n');
    }
    s
}

fn render_records(results: &[SystemResult], columns: &[String]) -> String {
    let mut s = String::new();
    for r in results {
        for c in columns {
            if let Some((_, v)) = r.verdicts.iter().find(|(n, _)| n == c) {
                let _ = writeln!(
                    s,
                    "{} {} {} {}",
                    r.system,
                    c,
                    if v.holds { "pass" } else { "fail" },
                    if v.witness.is_empty() { "-".to_string() } else { v.witness.join(";") }
                );
            }
        }
    }
    s
}

/// Reads back `tsv` output as (system, requirement, verdict) triples.
pub fn parse_tsv(text: &str) -> Option<Vec<(String, String, Option<bool>)>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next()?.split('\t').collect();
    if header.first() != Some(&"system") {
        return None;
    }
    let mut out = Vec::new();
    for l in lines {
        let cells: Vec<&str> = l.split('\t').collect();
        if cells.len() != header.len() {
            return None;
        }
        for (h, c) in header[1..].iter().zip(&cells[1..]) {
            let v = match *c {
                "pass" => Some(true),
                "fail" => Some(false),
                "-" => None,
                _ => return None,
            };
            out.push((cells[0].to_string(), h.to_string(), v));
        }
    }
    Some(out)
}
