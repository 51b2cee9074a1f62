//! Whole-project checks shared by the integration tests and the acceptance
//! summary. Each returns a one-line summary on success.

use std::collections::BTreeMap;
use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use privlens::deduce::{Analysis, KnowledgeBase, Rule};
use privlens::dsl::{self, Scenario};
use privlens::report::{self, Format};
use privlens::term::{Item, Kind, Model, Term};
use privlens::trace::{evolve, DeterminabilityOptions};
use privlens::views::View;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gen::{self, Limits};
use crate::{worked, Oracle};

pub type Outcome = Result<String, String>;

pub const SYSTEMS: [&str; 4] = ["smart-certificates", "linking-service", "identity-mixer", "smartcard"];

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus_dir(system: &str) -> PathBuf {
    workspace_root().join("corpus").join(system)
}

pub fn load_system(system: &str) -> Scenario {
    dsl::load(&corpus_dir(system)).unwrap_or_else(|e| panic!("{}: {}", system, e))
}

/// The published verdict pattern, by system then requirement.
pub fn expected_verdicts() -> Vec<(&'static str, Vec<(&'static str, bool)>)> {
    let row = |pass: &[&'static str], fail: &[&'static str]| {
        let mut v: Vec<(&'static str, bool)> = pass.iter().map(|&r| (r, true)).collect();
        v.extend(fail.iter().map(|&r| (r, false)));
        v
    };
    const ALL: [&str; 11] = ["AX", "AR", "SID", "SPD", "ID", "IM", "ISM", "SL", "IL", "IIL", "ISL"];
    vec![
        ("smart-certificates", row(&["AX", "AR", "ID", "IM", "ISM", "IL"], &["SID", "SPD", "SL", "IIL", "ISL"])),
        ("linking-service", row(&["AX", "AR", "SID", "SL"], &["SPD", "ID", "IM", "ISM", "IL", "IIL", "ISL", "LD"])),
        ("identity-mixer", row(&ALL, &[])),
        ("smartcard", row(&ALL, &[])),
    ]
}

/// Four-system comparison: verdicts, golden rendering and run time.
pub fn comparison_table() -> Outcome {
    let t0 = Instant::now();
    let scs: Vec<Scenario> = SYSTEMS.iter().map(|s| load_system(s)).collect();
    let refs: Vec<&Scenario> = scs.iter().collect();
    let cols = report::suite_columns(&refs).map_err(|e| e.to_string())?;
    let mut results = Vec::new();
    for sc in &scs {
        let r = report::analyze(sc, Some(DeterminabilityOptions::default())).map_err(|e| e.to_string())?;
        if !r.validity.valid() {
            return Err(format!("{}: trace invalid", sc.name));
        }
        results.push(r);
    }
    let elapsed = t0.elapsed();
    let mut cells = 0;
    for (sys, row) in expected_verdicts() {
        let r = results.iter().find(|r| r.system == sys).ok_or(format!("no result for {}", sys))?;
        for (req, want) in row {
            let got = r.verdict(req);
            if got != Some(want) {
                return Err(format!("{} {}: got {:?}, want {}", sys, req, got, want));
            }
            cells += 1;
        }
    }
    let table = report::render(&results, &cols, Format::Table, false);
    let golden = std::fs::read_to_string(workspace_root().join("golden/table5.txt")).map_err(|e| e.to_string())?;
    if table != golden {
        return Err(format!("table differs from golden file:\n{}", table));
    }
    if elapsed >= Duration::from_secs(60) {
        return Err(format!("comparison took {:.1?}", elapsed));
    }
    Ok(format!("{} verdicts match, golden table equal, {:.1?}", cells, elapsed))
}

pub fn worked_examples() -> Outcome {
    let mut failed = Vec::new();
    for (name, case) in worked::CASES {
        if catch_unwind(AssertUnwindSafe(case)).is_err() {
            failed.push(*name);
        }
    }
    if failed.is_empty() {
        Ok(format!("{} structural cases", worked::CASES.len()))
    } else {
        Err(format!("failed: {}", failed.join(" ")))
    }
}

/// Single-term deletions from an initial knowledge base, with the
/// transmission (numbered from 1) that should become invalid.
pub const DELETIONS: [(&str, &str, &str, usize); 16] = [
    ("smart-certificates", "al", "MS(k@..ca, i@..al, pk(k@..al), nc@..)", 1),
    ("smart-certificates", "ii", "na@pi..", 3),
    ("smart-certificates", "al", "nza@zeta..", 8),
    ("smart-certificates", "bs", "nzb@xi..", 10),
    ("linking-service", "ii", "n@pi..", 1),
    ("linking-service", "is", "n@eta..", 2),
    ("linking-service", "ls", "n'@zeta..", 5),
    ("linking-service", "ls", "n'@xi..", 10),
    ("identity-mixer", "al", "nc1_1@pi..", 1),
    ("identity-mixer", "ii", "nc1_5@pi..", 2),
    ("identity-mixer", "al", "nv@zeta..", 5),
    ("identity-mixer", "bs", "n2b@xi..", 12),
    ("smartcard", "al", "na@pi..", 1),
    ("smartcard", "ii", "nb@pi..", 2),
    ("smartcard", "bs", "dm@zeta..", 12),
    ("smartcard", "al", "nv@xi..", 20),
];

/// First invalid step after removing `term` from `actor`'s initial
/// knowledge, or `None` if the trace stays valid.
pub fn deletion_breaks_at(sc: &Scenario, actor: &str, term: &str) -> Result<Option<usize>, String> {
    let m = &sc.model;
    let t = dsl::parse_term(m, term).map_err(|e| e.to_string())?;
    let mut st = sc.initial.clone();
    let kb = st.kb_mut(actor).map_err(|e| e.to_string())?;
    if !kb.terms.remove(&t) {
        return Err(format!("{} does not hold {}", actor, term));
    }
    let (_, r) = evolve(m, &st, &sc.trace, Some(DeterminabilityOptions::default())).map_err(|e| e.to_string())?;
    Ok(r.first_invalid_step())
}

pub fn trace_validity() -> Outcome {
    let mut steps = 0;
    for sys in SYSTEMS {
        let sc = load_system(sys);
        let (_, r) = evolve(&sc.model, &sc.initial, &sc.trace, Some(DeterminabilityOptions::default()))
            .map_err(|e| e.to_string())?;
        if !r.valid() {
            return Err(format!("{}: {}", sys, r.render(&sc.model).trim_end()));
        }
        steps += sc.trace.len();
        let mut n = 0;
        for (s, actor, term, want) in DELETIONS.iter().filter(|d| d.0 == sys) {
            let got = deletion_breaks_at(&sc, actor, term)?;
            if got != Some(*want) {
                return Err(format!("{}: deleting {} from {} breaks at {:?}, want {}", s, term, actor, got, want));
            }
            n += 1;
        }
        if n < 3 {
            return Err(format!("{}: only {} deletions checked", sys, n));
        }
    }
    Ok(format!("{} transmissions valid, {} deletions break where expected", steps, DELETIONS.len()))
}

fn dump(m: &Model) -> String {
    m.items()
        .map(|i| {
            let psi: Vec<String> = m.psi_images(i).iter().map(|&(_, j)| m.item_name(j)).collect();
            format!("{} class {} psi [{}]", m.item_name(i), m.class_name(m.class_of(i)), psi.join(","))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn oracle_case(seed: u64) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lim = Limits::default();
    let m = gen::model(&mut rng, &lim);
    let kb = gen::kb(&mut rng, &m, &lim);
    let qs = gen::queries(&mut rng, &m, &kb, 20);
    let oracle = Oracle::new(&m, &kb, &qs);
    let mut sample: Vec<_> = oracle.universe().to_vec();
    sample.shuffle(&mut rng);
    sample.truncate(60);
    sample.extend(qs);
    let an = Analysis::new(&m, &kb);
    let mut yes = 0;
    for q in &sample {
        let want = oracle.derivable(q);
        let got = an.is_derivable(q);
        yes += got as usize;
        if want != got {
            let kbs: Vec<String> = kb.terms.iter().map(|t| m.show(t)).collect();
            return Err(format!(
                "seed {}: {} oracle={} engine={}\nkb: {}\n{}",
                seed,
                m.show(q),
                want,
                got,
                kbs.join("\n    "),
                dump(&m)
            ));
        }
    }
    Ok((sample.len(), yes))
}

/// The engine against the saturation oracle on generated instances.
pub fn oracle_agreement(seeds: Range<u64>) -> Outcome {
    let n = seeds.end - seeds.start;
    let (mut queries, mut derivable) = (0, 0);
    let mut failures = Vec::new();
    for seed in seeds {
        match oracle_case(seed) {
            Ok((q, y)) => {
                queries += q;
                derivable += y;
            }
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        return Err(format!("{} disagreements, first:\n{}", failures.len(), failures[0]));
    }
    if derivable * 10 <= queries || derivable * 10 >= queries * 9 {
        return Err(format!("unbalanced sample: {} of {} derivable", derivable, queries));
    }
    Ok(format!("{} instances, {} queries ({} derivable), full agreement", n, queries, derivable))
}

struct Instance {
    m: Model,
    kb: KnowledgeBase,
    more: KnowledgeBase,
    left: KnowledgeBase,
    right: KnowledgeBase,
    queries: Vec<Term>,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let lim = Limits::default();
    let m = gen::model(&mut rng, &lim);
    let kb = gen::kb(&mut rng, &m, &lim);
    let extra = gen::kb(&mut rng, &m, &Limits { terms: 4, ..lim });
    let mut more = kb.clone();
    more.extend_from(&extra);
    let entities: Vec<Item> = m.items().filter(|&i| m.kind(i) == Kind::Entity).collect();
    if let Some(&e) = entities.choose(&mut rng) {
        more.insert_entity(e);
    }
    let (mut left, mut right) = (KnowledgeBase::new("e0"), KnowledgeBase::new("e1"));
    for t in &more.terms {
        if rng.gen_bool(0.5) {
            left.insert(t.clone());
        } else {
            right.insert(t.clone());
        }
    }
    let queries = gen::queries(&mut rng, &m, &more, 20);
    Instance { m, kb, more, left, right, queries }
}

/// Associability partition rebuilt by transitive closure of the three
/// generating relations.
fn naive_partition(an: &Analysis<'_>) -> Vec<Vec<bool>> {
    let m = an.model();
    let n = m.item_count();
    let mut r = vec![vec![false; n]; n];
    for (k, row) in r.iter_mut().enumerate() {
        row[k] = true;
    }
    let ents: Vec<Item> = an.kb().entities.iter().copied().collect();
    for &a in &ents {
        for &b in &ents {
            if m.sigma(a) == m.sigma(b) {
                r[a.0 as usize][b.0 as usize] = true;
            }
        }
    }
    let personal: Vec<Item> = m.personal_items().collect();
    for &a in &personal {
        for &b in &personal {
            if m.ctx(a) == m.ctx(b) {
                r[a.0 as usize][b.0 as usize] = true;
            }
        }
    }
    // Evidence reachability, then restricted to identifiers.
    let mut ev = vec![vec![false; n]; n];
    for (k, row) in ev.iter_mut().enumerate() {
        row[k] = true;
    }
    for (a, b) in an.evidence_edges() {
        ev[a.0 as usize][b.0 as usize] = true;
        ev[b.0 as usize][a.0 as usize] = true;
    }
    closure(&mut ev);
    for a in m.items().filter(|&i| m.kind(i) == Kind::Identifier) {
        for b in m.items().filter(|&i| m.kind(i) == Kind::Identifier) {
            if ev[a.0 as usize][b.0 as usize] {
                r[a.0 as usize][b.0 as usize] = true;
            }
        }
    }
    closure(&mut r);
    r
}

fn closure(r: &mut [Vec<bool>]) {
    let n = r.len();
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
}

/// Violations of the algebraic laws on one generated instance.
pub fn law_violations(seed: u64) -> Vec<String> {
    let Instance { m, kb, more, left, right, queries } = instance(seed);
    let mut out = Vec::new();
    let an = Analysis::new(&m, &kb);
    let an_more = Analysis::new(&m, &more);
    let v = View::of(&an);
    let personal: Vec<Item> = m.personal_items().collect();

    for &a in &personal {
        if !v.assoc(a, a) {
            out.push(format!("seed {}: {} not associable with itself", seed, m.item_name(a)));
        }
        for &b in &personal {
            if v.assoc(a, b) != v.assoc(b, a) {
                out.push(format!("seed {}: asymmetric on {} {}", seed, m.item_name(a), m.item_name(b)));
            }
            if !v.assoc(a, b) {
                continue;
            }
            for &c in &personal {
                if v.assoc(b, c) && !v.assoc(a, c) {
                    out.push(format!("seed {}: not transitive via {}", seed, m.item_name(b)));
                }
            }
        }
    }

    let naive = naive_partition(&an);
    for &a in &personal {
        for &b in &personal {
            if naive[a.0 as usize][b.0 as usize] != v.assoc(a, b) {
                out.push(format!("seed {}: partition differs on {} {}", seed, m.item_name(a), m.item_name(b)));
            }
        }
    }

    let mut probes: Vec<Term> = queries.clone();
    probes.extend(kb.terms.iter().flat_map(|t| t.subterms().into_iter().map(|(_, s)| s)));
    probes.extend(m.items().map(|i| m.atom_term(i)));
    for q in &probes {
        if an.is_derivable(q) && !an_more.is_derivable(q) {
            out.push(format!("seed {}: {} lost in a larger knowledge base", seed, m.show(q)));
        }
    }
    if !v.contained_in(&View::of(&an_more)) {
        out.push(format!("seed {}: view not monotone", seed));
    }

    let mut union = left.clone();
    union.extend_from(&right);
    let vu = View::of_kb(&m, &union);
    for part in [&left, &right] {
        if !View::of_kb(&m, part).contained_in(&vu) {
            out.push(format!("seed {}: member view not inside coalition view", seed));
        }
    }

    // Representation swaps give equivalent terms; random pairs mostly do not.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alt: BTreeMap<Item, Item> = m
        .items()
        .map(|i| {
            let same: Vec<Item> = m.items().filter(|&j| m.sigma(j) == m.sigma(i)).collect();
            (i, *same.choose(&mut rng).unwrap())
        })
        .collect();
    for q in &queries {
        let swapped = m.substitute(q, &|i| alt[&i]);
        let others = queries.choose(&mut rng).unwrap();
        for (a, b) in [(q, &swapped), (q, others)] {
            if m.equivalent(a, b) && !m.content_equivalent(a, b) {
                out.push(format!("seed {}: {} ~ {} but contents differ", seed, m.show(a), m.show(b)));
            }
        }
        if !m.equivalent(q, &swapped) {
            out.push(format!("seed {}: swap of {} not equivalent", seed, m.show(q)));
        }
    }
    out
}

pub fn algebraic_laws(seeds: Range<u64>) -> Outcome {
    let n = seeds.end - seeds.start;
    let mut bad = Vec::new();
    for seed in seeds {
        bad.extend(law_violations(seed));
    }
    if bad.is_empty() {
        Ok(format!("{} instances, no violations", n))
    } else {
        Err(format!("{} violations, first: {}", bad.len(), bad[0]))
    }
}

/// An issuance transcript next to a credential over the same contents but
/// another representation of the user secret.
const ISSUANCE: &str = r#"privlens-scenario v1
[scenario]
name = "issue"

[domains]
d0 d1

[actors]
iss

[entities]
al iss

[info]
s_al identifier al
k_i  identifier iss
at   data al
n0 nonpersonal
n1 nonpersonal
n2 nonpersonal
n3 nonpersonal
n4 nonpersonal
n5 nonpersonal
n6 nonpersonal

[ctx d0]
s@u = s_al
at@u = at

[ctx d1]
s@u = s_al

[ctx .]
k@iss = k_i
n0@. = n0
n1@. = n1
n2@. = n2
n3@. = n3
n4@. = n4
n5@. = n5
n6@. = n6

[initial iss]
icred(s@d0.u, k@..iss, at@d0.u, cat(n0@.., n1@.., n2@.., n3@.., n4@.., n5@.., n6@..))
cred(s@d1.u, k@..iss, at@d0.u, cat(n1@.., n4@..))
"#;

/// Number of checked derivations using each rule, over generated
/// instances, the corpus and the issuance transcript.
pub fn rule_tally() -> Result<BTreeMap<Rule, usize>, String> {
    let mut seen: BTreeMap<Rule, usize> = Rule::ALL.iter().map(|&r| (r, 0)).collect();
    let mut count = |m: &Model, kb: &KnowledgeBase, an: &Analysis<'_>, q: &Term| -> Result<(), String> {
        if let Some(d) = an.derivable(q) {
            d.check(m, kb).map_err(|e| format!("{}: {}", m.show(q), e))?;
            for r in d.rules() {
                *seen.get_mut(&r).unwrap() += 1;
            }
        }
        Ok(())
    };
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lim = Limits::default();
        let m = gen::model(&mut rng, &lim);
        let kb = gen::kb(&mut rng, &m, &lim);
        let qs = gen::queries(&mut rng, &m, &kb, 20);
        let an = Analysis::new(&m, &kb);
        for q in &qs {
            count(&m, &kb, &an, q)?;
        }
    }
    for sys in SYSTEMS {
        let sc = load_system(sys);
        let m = &sc.model;
        let (st, _) = evolve(m, &sc.initial, &sc.trace, None).map_err(|e| e.to_string())?;
        for kb in st.kbs.values() {
            let an = Analysis::new(m, kb);
            for i in an.detectable_items() {
                count(m, kb, &an, &m.atom_term(i))?;
            }
        }
    }
    let sc = dsl::parse_str(ISSUANCE).map_err(|e| e.to_string())?;
    let kb = sc.initial.kb("iss").map_err(|e| e.to_string())?;
    let q = dsl::parse_term(&sc.model, "cred(s@d0.u, k@..iss, at@d0.u, cat(n1@.., n4@..))").map_err(|e| e.to_string())?;
    let an = Analysis::new(&sc.model, kb);
    if !an.is_derivable(&q) {
        return Err("credential from the issuance transcript not derivable".into());
    }
    count(&sc.model, kb, &an, &q)?;
    Ok(seen)
}

pub fn rule_coverage() -> Outcome {
    let seen = rule_tally()?;
    let missing: Vec<String> = seen.iter().filter(|(_, &n)| n == 0).map(|(r, _)| r.to_string()).collect();
    if missing.is_empty() {
        Ok(format!("all {} rules used in checked derivations", seen.len()))
    } else {
        Err(format!("never used: {}", missing.join(" ")))
    }
}

