use privlens::dsl::{parse_scenario, parse_str, print_scenario, state_digest, Scenario};
use privlens::Error;
use privlens_testkit::checks::{load_system, SYSTEMS};
use privlens_testkit::gen::{self, Limits};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PRELUDE: &str = "privlens-scenario v1
[actors]
a
[entities]
a u
[info]
id identifier u
[ctx eta]
id@1 = id
";

/// Lines of PRELUDE, so cases can count from the first line they add.
const P: usize = 9;

fn err_at(src: &str) -> (usize, usize, String) {
    match parse_str(src) {
        Err(Error::Parse { line, col, msg }) => (line, col, msg),
        other => panic!("expected a parse error, got {:?}", other.map(|s| s.name)),
    }
}

fn case(src: &str, line: usize, col: usize, msg: &str) {
    let (l, c, m) = err_at(src);
    assert_eq!((l, c), (line, col), "{:?}: {}", src, m);
    assert!(m.contains(msg), "{:?}: {}", src, m);
}

#[test]
fn header_errors() {
    case("privlens-scenrio v1\n", 1, 1, "expected header");
    case("\n[actors]\na\n", 2, 1, "expected header");
    case("", 1, 1, "expected header");
}

#[test]
fn section_errors() {
    case("privlens-scenario v1\n[actors\na\n", 2, 1, "malformed section header");
    case("privlens-scenario v1\n[actorz]\na\n", 2, 2, "unknown section actorz");
    case("privlens-scenario v1\na b\n", 2, 1, "content before the first section");
    case("privlens-scenario v1\n[initial]\n", 2, 1, "needs an actor");
    case("privlens-scenario v1\n[scenario]\ncolour = \"x\"\n", 3, 1, "unknown key colour");
}

#[test]
fn model_errors() {
    case("privlens-scenario v1\n[info]\nid identifer u\n", 3, 4, "unknown kind identifer");
    case("privlens-scenario v1\n[props]\npsi: d2 d3\n", 3, 6, "expected '->'");
    case(&format!("{}  1id = id\n", PRELUDE), P + 1, 3, "malformed item '1id'");
}

#[test]
fn term_errors() {
    let init = |t: &str| format!("{}[initial a]\n{}\n", PRELUDE, t);
    case(&init("at(eta, senc(id@1)"), P + 2, 1, "unbalanced parentheses");
    case(&init("at(eta, senc(id@1))"), P + 2, 9, "senc expects 2 arguments, got 1");
    case(&init("  frob(id@eta.1)"), P + 2, 3, "unknown constructor 'frob'");
    case(&init("cat(id@eta.1, id@eta.1) x"), P + 2, 25, "trailing input");
}

#[test]
fn errors_in_continuation_lines_point_at_the_physical_line() {
    let src = format!("{}[initial a]\ncat(id@eta.1,\n    hash(id@eta.1),\n      frob(id@eta.1))\n", PRELUDE);
    case(&src, P + 4, 7, "unknown constructor 'frob'");
}

#[test]
fn trace_errors() {
    let tr = |t: &str| format!("{}[trace]\n{}\n", PRELUDE, t);
    case(&tr("send id@eta.1 -> id@eta.1 cat()"), P + 2, 6, "expected ':' before the message");
    case(&tr("mail id@eta.1 -> id@eta.1 : id@eta.1"), P + 2, 1, "unknown transmission 'mail'");
    case(&tr("send id@eta.1 => id@eta.1 : id@eta.1"), P + 2, 6, "expected '->'");
}

#[test]
fn requirement_errors() {
    let rq = |t: &str| format!("{}[requirements]\n{}\n", PRELUDE, t);
    case(&rq("R: detect {a} id@eta.1 &"), P + 2, 25, "unexpected end of formula");
    case(&rq("R: assoc {a} (eta,1) eta"), P + 2, 22, "expected '('");
}

#[test]
fn errors_name_the_file_and_count_lines_within_it() {
    let model = "privlens-scenario v1\n[actors]\na\n[entities]\na u\n";
    let initial = "privlens-scenario v1\n\n[initial a]\nfrob(x)\n";
    match parse_scenario(&[("model.pls", model), ("initial.pls", initial)]) {
        Err(Error::Parse { line, col, msg }) => {
            assert_eq!((line, col), (4, 1));
            assert!(msg.starts_with("initial.pls:"), "{}", msg);
        }
        other => panic!("{:?}", other.map(|s| s.name)),
    }
}

fn same(a: &Scenario, b: &Scenario) {
    assert_eq!(a.name, b.name);
    assert_eq!(a.description, b.description);
    assert_eq!(a.model.fingerprint(), b.model.fingerprint());
    assert_eq!(state_digest(&a.model, &a.initial), state_digest(&b.model, &b.initial));
    let tr = |s: &Scenario| -> Vec<String> {
        s.trace
            .iter()
            .map(|t| format!("{:?} {:?} {} {} {}", t.phase, t.kind, s.model.show(&t.from), s.model.show(&t.to), s.model.show(&t.payload)))
            .collect()
    };
    assert_eq!(tr(a), tr(b));
    assert_eq!(a.suite, b.suite);
}

fn round_trip(sc: &Scenario) {
    let text = print_scenario(sc);
    let back = parse_str(&text).unwrap_or_else(|e| panic!("{}\n{}", e, text));
    same(sc, &back);
    assert_eq!(print_scenario(&back), text);
}

#[test]
fn corpus_round_trips() {
    for sys in SYSTEMS {
        round_trip(&load_system(sys));
    }
}

#[test]
fn generated_scenarios_round_trip() {
    for seed in 0..300 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sc = gen::scenario(&mut rng, &Limits::default());
        round_trip(&sc);
    }
}
