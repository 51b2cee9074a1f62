//! The client/server lookup scenario and the small content-reasoning
//! knowledge bases, checked structurally. Each case panics on mismatch.

use std::collections::BTreeSet;
use std::path::Path;

use privlens::dsl::{load, parse_item, parse_str, parse_term, Scenario};
use privlens::trace::{determinable, evolve, evolve_step, DeterminabilityOptions};
use privlens::views::View;
use privlens::{Analysis, Derivation, Item, KnowledgeBase, Model, Rule, Term};

fn client_server() -> Scenario {
    load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("data/client_server.pls")).unwrap()
}

fn items(m: &Model, names: &[&str]) -> BTreeSet<Item> {
    names.iter().map(|n| parse_item(m, n).unwrap()).collect()
}

fn term(m: &Model, s: &str) -> Term {
    parse_term(m, s).unwrap()
}

fn final_kb(sc: &Scenario, actor: &str) -> KnowledgeBase {
    let (st, _) = evolve(&sc.model, &sc.initial, &sc.trace, None).unwrap();
    st.kb(actor).unwrap().clone()
}

// Shape of a derivation: (rule, conclusion, children).
fn shape(m: &Model, d: &Derivation) -> String {
    let mut s = format!("{}[{}]", d.rule.name(), m.show(&d.concl));
    if !d.premises.is_empty() {
        let kids: Vec<String> = d.premises.iter().map(|p| shape(m, p)).collect();
        s.push('(');
        s.push_str(&kids.join(" "));
        s.push(')');
    }
    s
}

pub fn key_guessing_then_decryption() {
    let sc = client_server();
    let m = &sc.model;
    let kb = final_kb(&sc, "cli");
    let an = Analysis::new(m, &kb);
    let d = an.derivable(&term(m, "id@pi.su")).expect("id@pi.su derivable");
    assert_eq!(
        shape(m, &d),
        "EE[id@pi.su](0[senc(shkey@pi.., id@pi.su)] \
         TE[shkey@pi..](0[senc(shkey@pi.., id@pi.su)] 0[skey@...]))"
    );
    d.check(m, &kb).unwrap();
}

pub fn own_kb_element_is_a_leaf() {
    let sc = client_server();
    let m = &sc.model;
    let kb = final_kb(&sc, "cli");
    let an = Analysis::new(m, &kb);
    let d = an.derivable(&term(m, "pk(sk@..srv)")).unwrap();
    assert_eq!(d.rule, Rule::Axiom);
    assert_eq!(d.node_count(), 1);
}

const HASH_KB: &str = r#"privlens-scenario v1
[actors]
a
[entities]
a u
[info]
id identifier u
age data u
[ctx eta]
id@1 = id
age@1 = age
id@2 = id
age@3 = age
[initial a]
at(eta, hash(id@1, age@1))
id@eta.2
age@eta.3
"#;

pub fn content_analysis_via_rebuilt_hash() {
    let sc = parse_str(HASH_KB).unwrap();
    let m = &sc.model;
    let kb = sc.initial.kb("a").unwrap();
    let an = Analysis::new(m, kb);
    let d = an.derivable(&term(m, "id@eta.1")).expect("id@eta.1 derivable");
    assert_eq!(d.rule, Rule::Content);
    let prem: Vec<String> = d.premises.iter().map(|p| shape(m, p)).collect();
    assert_eq!(
        prem,
        vec![
            "0[id@eta.2]".to_string(),
            "CH[hash(cat(id@eta.2, age@eta.3))](CC[cat(id@eta.2, age@eta.3)](0[id@eta.2] 0[age@eta.3]))".to_string(),
            "0[hash(cat(id@eta.1, age@eta.1))]".to_string(),
        ]
    );
    d.check(m, kb).unwrap();
    assert!(an.is_derivable(&term(m, "age@eta.1")));
    // Without the hash there is nothing to compare against.
    let mut bare = kb.clone();
    bare.terms.retain(|t| t.op() != privlens::Op::Hash);
    assert!(!Analysis::new(m, &bare).is_derivable(&term(m, "id@eta.1")));
}

pub fn client_associability_classes() {
    let sc = client_server();
    let m = &sc.model;
    let kb = final_kb(&sc, "cli");
    let v = View::of_kb(m, &kb);
    let expect = [
        vec!["ds@ab.12", "teln@ab.12"],
        vec!["ds@ab.4", "id@ab.4", "id@pi.su", "age@pi.su"],
        vec!["ip@pi.cli", "ip@..me"],
        vec!["ip@..srv", "sk@..srv", "ip@pi.srv", "sk@pi.srv"],
    ];
    for class in &expect {
        let want = items(m, class);
        let first = *want.iter().next().unwrap();
        let got: BTreeSet<Item> = v.class_of(first).into_iter().collect();
        assert_eq!(got, want, "class of {}", class[0]);
    }
    // Alice and Bob stay apart.
    assert!(!v.assoc(parse_item(m, "ds@ab.4").unwrap(), parse_item(m, "ds@ab.12").unwrap()));
}

const TWIN_KB: &str = r#"privlens-scenario v1
[actors]
a
[entities]
a u
[info]
id identifier u
d data u
d2 data u
k nonpersonal
[ctx eta]
id@1 = id
d@1 = d
shakey@. = k
[ctx chi]
id@1 = id
d'@1 = d2
shakey@. = k
[initial a]
at(eta, cat(senc(shakey@., id@1), d@1))
at(chi, cat(senc(shakey@., id@1), d'@1))
"#;

pub fn association_without_the_key() {
    let sc = parse_str(TWIN_KB).unwrap();
    let m = &sc.model;
    let kb = sc.initial.kb("a").unwrap();
    let an = Analysis::new(m, kb);
    assert!(!an.is_derivable(&term(m, "shakey@eta..")));
    assert!(!an.is_derivable(&term(m, "id@eta.1")));
    let v = View::of(&an);
    let (x, y) = (parse_item(m, "d@eta.1").unwrap(), parse_item(m, "d'@chi.1").unwrap());
    assert!(v.assoc(x, y));
    assert!(v.is_detectable(x) && v.is_detectable(y));
    let ev = an.evidence_for(&term(m, "id@eta.1"), &term(m, "id@chi.1")).unwrap();
    assert_eq!(m.show(&ev.0), "senc(shakey@eta.., id@eta.1)");
    assert_eq!(m.show(&ev.1), "senc(shakey@chi.., id@chi.1)");
}

pub fn views_on_alice_and_bob() {
    let sc = client_server();
    let m = &sc.model;
    let (st, _) = evolve(m, &sc.initial, &sc.trace, None).unwrap();
    let personal = |v: &View| -> BTreeSet<Item> {
        v.detectable.iter().copied().filter(|&i| {
            let s = m.subject_of(i);
            s == Some("al") || s == Some("bob")
        }).collect()
    };
    let vc = View::of_kb(m, st.kb("cli").unwrap());
    assert_eq!(
        personal(&vc),
        items(m, &["ds@ab.12", "teln@ab.12", "ds@ab.4", "id@ab.4", "id@pi.su", "age@pi.su"])
    );
    let vs = View::of_kb(m, st.kb("srv").unwrap());
    assert_eq!(
        personal(&vs),
        items(m, &["key@db.1", "col1@db.1", "key@db.2", "col1@db.2", "id@pi.su", "age@pi.su"])
    );
    let vcs = View::of_kb(m, &st.coalition_kb(&["cli", "srv"]).unwrap());
    let alice = items(m, &["ds@ab.4", "id@ab.4", "id@pi.su", "age@pi.su", "key@db.1", "col1@db.1"]);
    let a0 = *alice.iter().next().unwrap();
    assert!(alice.iter().all(|&x| vcs.assoc(a0, x)));
    let bob_c = parse_item(m, "teln@ab.12").unwrap();
    let bob_s = parse_item(m, "col1@db.2").unwrap();
    assert!(vcs.assoc(bob_c, parse_item(m, "ds@ab.12").unwrap()));
    assert!(vcs.assoc(bob_s, parse_item(m, "key@db.2").unwrap()));
    assert!(!vcs.assoc(bob_c, bob_s));
}

pub fn post_trace_knowledge_bases() {
    let sc = client_server();
    let m = &sc.model;
    let (st, report) = evolve(m, &sc.initial, &sc.trace, Some(DeterminabilityOptions::default())).unwrap();
    assert!(report.valid(), "{}", report.render(m));
    let gained: BTreeSet<Term> = [
        "ip@pi.cli",
        "ip@pi.srv",
        "at(pi, senc(shkey@., id@su))",
        "at(pi, senc(shkey@., cat(age@su, n@., sign(sk@srv, cat(age@su, n@.)))))",
    ]
    .iter()
    .map(|s| term(m, s))
    .collect();
    for actor in ["cli", "srv"] {
        let before = &sc.initial.kb(actor).unwrap().terms;
        let after = &st.kb(actor).unwrap().terms;
        let want: BTreeSet<Term> = before.union(&gained).cloned().collect();
        assert_eq!(after, &want, "{}", actor);
        assert_eq!(sc.initial.kb(actor).unwrap().entities, st.kb(actor).unwrap().entities);
    }
    assert_eq!(st.kb("cli").unwrap().terms.len(), 10);
}

pub fn first_message_witness() {
    let sc = client_server();
    let m = &sc.model;
    let w = determinable(m, &sc.initial, "cli", &sc.trace[0].payload, DeterminabilityOptions::default())
        .unwrap()
        .expect("determinable");
    assert_eq!(m.show(&w), "senc(skey@..., id@ab.4)");
    assert!(m.equivalent(&w, &sc.trace[0].payload));
}

pub fn reply_witness() {
    let sc = client_server();
    let m = &sc.model;
    let s1 = evolve_step(m, &sc.initial, &sc.trace[0]).unwrap();
    let reply = &sc.trace[1].payload;
    let w = determinable(m, &s1, "srv", reply, DeterminabilityOptions::default()).unwrap().expect("determinable");
    assert!(m.equivalent(&w, reply));
    // The determined key stays, the age comes from the database entry that
    // the server links to the requested identifier.
    assert_eq!(m.show(w.subterm_at(&[0]).unwrap()), "shkey@pi..");
    let body = w.subterm_at(&[1]).unwrap();
    assert_eq!(m.show(body.subterm_at(&[0]).unwrap()), "col1@db.1");
    assert_eq!(m.show(body.subterm_at(&[1]).unwrap()), "n@...");
    assert_eq!(body.subterm_at(&[2, 1, 0]), body.subterm_at(&[0]));
    let key = body.subterm_at(&[2, 0]).unwrap();
    assert!(m.content_equivalent(key, &term(m, "sk@pi.srv")));
    let v = View::of_kb(m, s1.kb("srv").unwrap());
    assert!(v.assoc(parse_item(m, "col1@db.1").unwrap(), parse_item(m, "id@pi.su").unwrap()));
}

pub fn identifier_undetermined_before_first_step() {
    let sc = client_server();
    let m = &sc.model;
    let id = parse_item(m, "id@pi.su").unwrap();
    assert!(!privlens::trace::determined_items(m, &sc.initial).contains(&id));
    let s1 = evolve_step(m, &sc.initial, &sc.trace[0]).unwrap();
    assert!(privlens::trace::determined_items(m, &s1).contains(&id));
}

pub fn lookup_requirements() {
    let sc = client_server();
    let r = privlens::report::analyze(&sc, Some(DeterminabilityOptions::default())).unwrap();
    assert_eq!(r.verdict("GOT"), Some(true));
    assert_eq!(r.verdict("LINK"), Some(true));
    assert_eq!(r.verdict("BOB"), Some(true));
}

pub const CASES: &[(&str, fn())] = &[
    ("key_guessing_then_decryption", key_guessing_then_decryption),
    ("own_kb_element_is_a_leaf", own_kb_element_is_a_leaf),
    ("content_analysis_via_rebuilt_hash", content_analysis_via_rebuilt_hash),
    ("client_associability_classes", client_associability_classes),
    ("association_without_the_key", association_without_the_key),
    ("views_on_alice_and_bob", views_on_alice_and_bob),
    ("post_trace_knowledge_bases", post_trace_knowledge_bases),
    ("first_message_witness", first_message_witness),
    ("reply_witness", reply_witness),
    ("identifier_undetermined_before_first_step", identifier_undetermined_before_first_step),
    ("lookup_requirements", lookup_requirements),
];
