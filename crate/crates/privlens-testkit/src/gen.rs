//! Random models, knowledge bases and terms for property tests.

use privlens::deduce::KnowledgeBase;
use privlens::dsl::Scenario;
use privlens::reqs::{CtxPat, Dom, Formula, ItemName, Requirement, RequirementSuite};
use privlens::trace::{SystemState, Transmission, TxKind};
use privlens::term::{Item, Kind, Model, ModelBuilder, Op, Term, DOT};
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Clone, Copy, Debug)]
pub struct Limits {
    pub atoms: usize,
    pub terms: usize,
    pub depth: u32,
    pub shared_classes: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { atoms: 8, terms: 12, depth: 3, shared_classes: 2 }
    }
}

/// A small model: two entities, three domains, up to `atoms` information
/// atoms with one or two context items each, up to `shared_classes`
/// two-atom contents classes and sometimes a property.
pub fn model<R: Rng>(rng: &mut R, lim: &Limits) -> Model {
    let mut b = ModelBuilder::new();
    let doms = ["d0", "d1", "d2"];
    for d in doms {
        b.domain(d);
    }
    b.entity("e0").entity("e1").actor("e0").actor("e1");

    let with_prop = rng.gen_bool(0.4);
    let n = rng.gen_range(3..=lim.atoms - if with_prop { 2 } else { 0 });
    let mut atoms: Vec<(String, Kind, Option<&str>)> = Vec::new();
    for k in 0..n {
        let kind = match rng.gen_range(0..3) {
            0 => Kind::Identifier,
            1 => Kind::Data,
            _ => Kind::NonPersonal,
        };
        let subj = (kind != Kind::NonPersonal).then(|| *["e0", "e1"].choose(rng).unwrap());
        atoms.push((format!("a{}", k), kind, subj));
    }

    // Shared classes pair atoms of one kind and subject; identifiers only
    // pair with data.
    let mut free: Vec<usize> = (0..n).collect();
    free.shuffle(rng);
    let mut classes: Vec<(usize, usize)> = Vec::new();
    'outer: for _ in 0..lim.shared_classes {
        for x in 0..free.len() {
            for y in x + 1..free.len() {
                let (i, j) = (free[x], free[y]);
                let (ki, kj) = (atoms[i].1, atoms[j].1);
                let ok = match (ki, kj) {
                    (Kind::NonPersonal, Kind::NonPersonal) | (Kind::Data, Kind::Data) => true,
                    (Kind::Identifier, Kind::Data) | (Kind::Data, Kind::Identifier) => true,
                    _ => false,
                };
                if ok && rng.gen_bool(0.7) {
                    classes.push((i, j));
                    free.remove(y);
                    free.remove(x);
                    continue 'outer;
                }
            }
        }
    }

    // A property on one data atom, or on both atoms of a data class.
    let mut props: Vec<(usize, String)> = Vec::new();
    if with_prop {
        let data: Vec<usize> = (0..n).filter(|&i| atoms[i].1 == Kind::Data).collect();
        if let Some(&s) = data.choose(rng) {
            let partner = classes.iter().find_map(|&(i, j)| {
                if i == s && atoms[j].1 == Kind::Data {
                    Some(j)
                } else if j == s && atoms[i].1 == Kind::Data {
                    Some(i)
                } else {
                    None
                }
            });
            let srcs: Vec<usize> = std::iter::once(s).chain(partner).collect();
            for (k, &src) in srcs.iter().enumerate() {
                let img = format!("{}_p{}", atoms[src].0, k);
                atoms.push((img.clone(), Kind::Data, atoms[src].2));
                props.push((src, img));
            }
        }
    }

    for (name, kind, subj) in &atoms {
        b.atom(name, *kind, *subj);
    }
    for (k, &(i, j)) in classes.iter().enumerate() {
        b.class(&format!("c{}", k), &[&atoms[i].0, &atoms[j].0]);
    }
    if props.len() == 2 {
        b.class("cp", &[&props[0].1, &props[1].1]);
    }
    for (src, img) in &props {
        b.property("psi", &atoms[*src].0, img);
    }

    let mut var = 0;
    for (name, kind, subj) in &atoms {
        if name.contains("_p") {
            continue;
        }
        for _ in 0..rng.gen_range(1..=2) {
            var += 1;
            let (d, p) = match subj {
                None => (*[doms[0], doms[1], doms[2], DOT].choose(rng).unwrap(), DOT.to_string()),
                Some(s) => (*doms.choose(rng).unwrap(), format!("{}{}", s, rng.gen_range(0..2))),
            };
            let _ = kind;
            b.item(&format!("x{}", var), d, &p, name);
        }
    }
    let m = b.build().expect("generated model builds");
    let problems = m.validate();
    assert!(problems.is_empty(), "generated model invalid: {:?}", problems);
    m
}

fn leaf<R: Rng>(rng: &mut R, m: &Model, pool: &[Item]) -> Term {
    let i = if !pool.is_empty() && rng.gen_bool(0.8) {
        *pool.choose(rng).unwrap()
    } else {
        let all: Vec<Item> = m.items().collect();
        *all.choose(rng).unwrap()
    };
    m.atom_term(i)
}

/// A random term of depth at most `depth` over the model's items, with
/// leaves drawn mostly from `pool`.
pub fn term<R: Rng>(rng: &mut R, m: &Model, pool: &[Item], depth: u32) -> Term {
    if depth == 0 || rng.gen_bool(0.3) {
        return leaf(rng, m, pool);
    }
    let sub = |rng: &mut R| term(rng, m, pool, depth - 1);
    match rng.gen_range(0..14) {
        0 | 1 => {
            let k = rng.gen_range(2..=3);
            m.cat((0..k).map(|_| sub(rng)).collect())
        }
        2 => m.pk(&sub(rng)),
        3 => m.hash(&sub(rng)),
        4 | 5 => m.node(Op::Senc, vec![sub(rng), sub(rng)]),
        6 => {
            let key = m.pk(&term(rng, m, pool, depth.saturating_sub(2)));
            m.node(Op::Aenc, vec![key, sub(rng)])
        }
        7 => m.node(Op::Sign, vec![sub(rng), sub(rng)]),
        8 => {
            let key = m.pk(&term(rng, m, pool, depth.saturating_sub(2)));
            m.node(Op::Laenc, vec![key, sub(rng), sub(rng)])
        }
        9 => m.node(Op::Aka, (0..4).map(|_| leaf(rng, m, pool)).collect()),
        10 => m.node(Op::Cred, vec![sub(rng), leaf(rng, m, pool), sub(rng), leaf(rng, m, pool)]),
        11 | 12 if depth >= 2 => {
            let r = m.cat(vec![leaf(rng, m, pool), leaf(rng, m, pool)]);
            m.node(Op::Zk, vec![sub(rng), sub(rng), sub(rng), r])
        }
        13 if depth >= 2 => {
            let r = m.cat((0..7).map(|_| leaf(rng, m, pool)).collect());
            m.node(Op::Icred, vec![leaf(rng, m, pool), leaf(rng, m, pool), leaf(rng, m, pool), r])
        }
        _ => leaf(rng, m, pool),
    }
}

/// A pool of a few items that leaves favour, so keys and nonces recur.
pub fn pool<R: Rng>(rng: &mut R, m: &Model) -> Vec<Item> {
    let mut all: Vec<Item> = m.items().collect();
    all.shuffle(rng);
    all.truncate(rng.gen_range(3..=6));
    all
}

/// A knowledge base with up to `lim.terms` terms; some are bare items.
pub fn kb<R: Rng>(rng: &mut R, m: &Model, lim: &Limits) -> KnowledgeBase {
    let p = pool(rng, m);
    let n = rng.gen_range(1..=lim.terms);
    let mut kb = KnowledgeBase::new("e0");
    for _ in 0..n {
        let t = if rng.gen_bool(0.3) { leaf(rng, m, &p) } else { term(rng, m, &p, lim.depth) };
        kb.insert(t);
    }
    kb
}

/// Random query terms over the same pool style as [`kb`].
pub fn queries<R: Rng>(rng: &mut R, m: &Model, kb: &KnowledgeBase, n: usize) -> Vec<Term> {
    let mut p: Vec<Item> = kb.terms.iter().flat_map(|t| t.items()).collect();
    p.sort();
    p.dedup();
    (0..n).map(|_| term(rng, m, &p, 2)).collect()
}

fn coalition<R: Rng>(rng: &mut R) -> Vec<String> {
    match rng.gen_range(0..3) {
        0 => vec!["e0".to_string()],
        1 => vec!["e1".to_string()],
        _ => vec!["e0".to_string(), "e1".to_string()],
    }
}

fn ctx_pat<R: Rng>(rng: &mut R, m: &Model, var: Option<&str>) -> CtxPat {
    let ctxs = m.contexts();
    let c = ctxs.choose(rng).unwrap();
    let domain = match var {
        Some(v) if rng.gen_bool(0.5) => Dom::Var(v.to_string()),
        _ => Dom::Name(c.domain.clone()),
    };
    CtxPat { domain, profile: c.profile.clone() }
}

/// A random requirement formula over the model's names.
pub fn formula<R: Rng>(rng: &mut R, m: &Model, depth: u32, var: Option<&str>) -> Formula {
    let leaf = depth == 0 || rng.gen_bool(0.3);
    match if leaf { rng.gen_range(0..4) } else { rng.gen_range(4..9) } {
        0 => {
            let items: Vec<Item> = m.items().collect();
            let ci = m.ctx_item(*items.choose(rng).unwrap());
            Formula::Detect {
                coalition: coalition(rng),
                item: ItemName { var: ci.var.clone(), domain: ci.ctx.domain.clone(), profile: ci.ctx.profile.clone() },
            }
        }
        2 | 3 if !m.contexts().is_empty() => Formula::Assoc { coalition: coalition(rng), left: ctx_pat(rng, m, var), right: ctx_pat(rng, m, var) },
        1..=3 => Formula::DetectAny { coalition: coalition(rng), atom: m.atoms().choose(rng).unwrap().name.clone() },
        4 => Formula::not(formula(rng, m, depth - 1, var)),
        5 | 6 => Formula::and(formula(rng, m, depth - 1, var), formula(rng, m, depth - 1, var)),
        7 => Formula::or(formula(rng, m, depth - 1, var), formula(rng, m, depth - 1, var)),
        _ => {
            let v = format!("{}p", var.unwrap_or(""));
            Formula::Exists { body: Box::new(formula(rng, m, depth - 1, Some(&v))), var: v }
        }
    }
}

/// A random scenario bundle: the model of [`model`], knowledge for both
/// actors, a short trace between actor-owned addresses and a few
/// requirements. The trace is not meant to be valid.
pub fn scenario<R: Rng>(rng: &mut R, lim: &Limits) -> Scenario {
    let model = model(rng, lim);
    let mut initial = SystemState::new(&model);
    for actor in ["e0", "e1"] {
        let mut k = kb(rng, &model, lim);
        k.owner = actor.to_string();
        let ents: Vec<Item> = model.items().filter(|&i| model.kind(i) == Kind::Entity).collect();
        if let Some(&e) = ents.choose(rng) {
            k.insert_entity(e);
        }
        *initial.kb_mut(actor).unwrap() = k;
    }
    let addrs: Vec<Item> = model
        .items()
        .filter(|&i| model.kind(i) == Kind::Identifier && model.subject_of(i).is_some())
        .collect();
    let mut trace = Vec::new();
    let mut phase: Option<String> = None;
    if !addrs.is_empty() {
        let p = pool(rng, &model);
        for k in 0..rng.gen_range(0..4) {
            let (a, b) = (*addrs.choose(rng).unwrap(), *addrs.choose(rng).unwrap());
            let payload = term(rng, &model, &p, lim.depth);
            let kind = match payload.op() {
                Op::Zk => TxKind::Zk,
                Op::Icred => TxKind::Icred,
                _ => TxKind::Send,
            };
            let mut t = Transmission::new(kind, model.atom_term(a), model.atom_term(b), payload);
            // A phase label holds until the next one, as in the DSL.
            if k > 0 && rng.gen_bool(0.5) {
                phase = Some(format!("ph{}", k));
            }
            t.phase = phase.clone();
            trace.push(t);
        }
    }
    let mut suite = RequirementSuite::default();
    for k in 0..rng.gen_range(0..4) {
        let label = rng.gen_bool(0.5).then(|| format!("requirement {}", k));
        suite
            .push(Requirement { name: format!("R{}", k), label, formula: formula(rng, &model, 3, None) })
            .unwrap();
    }
    Scenario { name: "generated".into(), description: String::new(), model, initial, trace, suite }
}
