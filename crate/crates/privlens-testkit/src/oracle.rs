//! Brute-force derivability: every rule applied literally over a finite
//! universe until nothing new appears.
//!
//! Construction is tried on a finite universe: the knowledge base and query
//! terms, their subterms, and the intermediate messages that rule premises
//! and conclusions mention. Elimination, testing and content analysis may
//! add terms outside it. A testing rule's contents witness is searched by
//! construction along the shape of the tested message. Content analysis is
//! applied to universe terms only, as a chain of rewrites.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use privlens::deduce::KnowledgeBase;
use privlens::term::{Item, Model, Op, Term};

pub struct Oracle {
    universe: HashSet<u32>,
    derived: BTreeMap<u32, Term>,
    terms: Vec<Term>,
}

/// Universe grows past this many terms: the instance is too large.
pub const UNIVERSE_CAP: usize = 200_000;

fn subterms(t: &Term, out: &mut Vec<Term>) {
    out.push(t.clone());
    for a in t.args() {
        subterms(a, out);
    }
}

fn zk_nonces(t: &Term) -> Option<(Term, Term)> {
    let r = &t.args()[3];
    (r.op() == Op::Cat && r.args().len() == 2).then(|| (r.args()[0].clone(), r.args()[1].clone()))
}

fn icred_nonces(t: &Term) -> Option<Vec<Term>> {
    let r = &t.args()[3];
    (r.op() == Op::Cat && r.args().len() == 7).then(|| r.args().to_vec())
}

fn cred_of(m: &Model, t: &Term, n: &[Term]) -> Term {
    let a = t.args();
    m.node(Op::Cred, vec![a[0].clone(), a[1].clone(), a[2].clone(), m.cat(vec![n[1].clone(), n[4].clone()])])
}

/// Messages that rules mention besides subterms: construction premises,
/// elimination and testing conclusions, and paired premises.
fn auxiliary(m: &Model, t: &Term) -> Vec<Term> {
    let a = t.args();
    let mut out = Vec::new();
    match t.op() {
        Op::Aenc | Op::Laenc | Op::Senc | Op::Hash | Op::Atom | Op::Pk | Op::Cat => {}
        Op::Sign => out.push(m.cat(vec![m.pk(&a[0]), a[1].clone()])),
        Op::Aka => {
            out.push(m.cat(vec![a[0].clone(), a[1].clone(), m.pk(&a[2]), a[3].clone()]));
            out.push(m.cat(vec![m.pk(&a[0]), a[1].clone(), a[2].clone(), a[3].clone()]));
        }
        Op::Cred => {
            out.push(m.cat(vec![a[1].clone(), a[0].clone(), a[2].clone(), a[3].clone()]));
            out.push(m.cat(vec![m.pk(&a[1]), a[0].clone(), a[2].clone()]));
        }
        Op::Zk => {
            out.push(m.cat(a.to_vec()));
            if let Some((np, _)) = zk_nonces(t) {
                out.push(m.cat(vec![t.clone(), np]));
            }
        }
        Op::Icred => {
            out.push(m.cat(vec![a[1].clone(), a[0].clone(), a[2].clone(), a[3].clone()]));
            if let Some(n) = icred_nonces(t) {
                for k in [1, 2, 5] {
                    out.push(m.cat(vec![t.clone(), n[k].clone()]));
                }
                out.push(cred_of(m, t, &n));
                out.push(m.cat(vec![a[0].clone(), n[0].clone(), n[1].clone()]));
                out.push(m.cat(vec![m.pk(&a[1]), a[2].clone(), m.hash(&m.cat(vec![a[0].clone(), n[0].clone()]))]));
                out.push(m.cat(vec![a[0].clone(), n[1].clone()]));
            }
        }
    }
    out
}

impl Oracle {
    /// Saturates `kb`; `queries` are added to the universe.
    pub fn new(m: &Model, kb: &KnowledgeBase, queries: &[Term]) -> Oracle {
        let mut o = Oracle { universe: HashSet::new(), derived: BTreeMap::new(), terms: Vec::new() };
        let mut work: Vec<Term> = kb.terms.iter().cloned().chain(queries.iter().cloned()).collect();
        for i in m.items() {
            work.push(m.atom_term(i));
        }
        while let Some(t) = work.pop() {
            if !o.universe.insert(t.id()) {
                continue;
            }
            assert!(o.universe.len() <= UNIVERSE_CAP, "oracle universe too large");
            o.terms.push(t.clone());
            let mut subs = Vec::new();
            subterms(&t, &mut subs);
            work.extend(subs.into_iter().skip(1));
            work.extend(auxiliary(m, &t));
        }
        o.saturate(m, kb);
        o
    }

    pub fn universe(&self) -> &[Term] {
        &self.terms
    }

    pub fn in_universe(&self, t: &Term) -> bool {
        self.universe.contains(&t.id())
    }

    /// Every derived term, including those outside the universe.
    pub fn derived(&self) -> impl Iterator<Item = &Term> {
        self.derived.values()
    }

    /// Derivability of a universe term or of any derived term.
    pub fn derivable(&self, t: &Term) -> bool {
        let yes = self.derived.contains_key(&t.id());
        assert!(yes || self.in_universe(t), "query outside the oracle universe");
        yes
    }

    fn saturate(&mut self, m: &Model, kb: &KnowledgeBase) {
        let mut s: BTreeMap<u32, Term> = kb.terms.iter().map(|t| (t.id(), t.clone())).collect();
        loop {
            assert!(s.len() <= UNIVERSE_CAP, "oracle derived set too large");
            let known: HashSet<u32> = s.values().map(|t| t.content()).collect();
            let mut memo: HashMap<u32, bool> = HashMap::new();
            let mut witness = |t: &Term| constructible(m, t, &known, &mut memo);
            let has = |t: &Term, s: &BTreeMap<u32, Term>| s.contains_key(&t.id());
            let mut new: Vec<Term> = Vec::new();

            // Elimination, testing and the property rule.
            for t in s.values() {
                let a = t.args();
                match t.op() {
                    Op::Atom => {
                        for (_, j) in m.psi_images(t.item().unwrap()) {
                            new.push(m.atom_term(j));
                        }
                    }
                    Op::Cat => {
                        new.extend(a.iter().cloned());
                        if a.len() == 2 {
                            let (x, y) = (&a[0], &a[1]);
                            if x.op() == Op::Zk {
                                if let Some((np, _)) = zk_nonces(x) {
                                    if *y == np {
                                        new.push(x.args()[0].clone());
                                    }
                                }
                            }
                            if x.op() == Op::Icred {
                                if let Some(n) = icred_nonces(x) {
                                    if *y == n[1] {
                                        new.push(cred_of(m, x, &n));
                                    }
                                    if *y == n[2] {
                                        new.push(m.cat(vec![x.args()[0].clone(), n[0].clone(), n[1].clone()]));
                                    }
                                    if *y == n[5] {
                                        new.push(x.args()[1].clone());
                                    }
                                }
                            }
                        }
                    }
                    Op::Senc => {
                        if has(&a[0], &s) {
                            new.push(a[1].clone());
                        }
                        if witness(&a[0]) {
                            new.push(a[0].clone());
                        }
                    }
                    Op::Aenc | Op::Laenc => {
                        if a[0].op() == Op::Pk {
                            let key = &a[0].args()[0];
                            if has(key, &s) {
                                new.push(a[1].clone());
                            }
                            if witness(key) {
                                new.push(key.clone());
                            }
                        }
                        if t.op() == Op::Laenc {
                            new.push(a[2].clone());
                        }
                    }
                    Op::Sign => {
                        let c = m.cat(vec![m.pk(&a[0]), a[1].clone()]);
                        if witness(&c) {
                            new.push(c);
                        }
                    }
                    Op::Cred => {
                        let c = m.cat(vec![m.pk(&a[1]), a[0].clone(), a[2].clone()]);
                        if witness(&c) {
                            new.push(c);
                        }
                    }
                    Op::Zk => {
                        new.push(a[2].clone());
                        new.push(a[1].clone());
                        if let Some((np, _)) = zk_nonces(t) {
                            if has(&np, &s) {
                                new.push(m.cat(vec![t.clone(), np.clone()]));
                            }
                            if witness(&np) {
                                new.push(np);
                            }
                        }
                    }
                    Op::Icred => {
                        if let Some(n) = icred_nonces(t) {
                            for k in [1, 2, 5] {
                                if has(&n[k], &s) {
                                    new.push(m.cat(vec![t.clone(), n[k].clone()]));
                                }
                            }
                            new.push(m.cat(vec![
                                m.pk(&a[1]),
                                a[2].clone(),
                                m.hash(&m.cat(vec![a[0].clone(), n[0].clone()])),
                            ]));
                            for c in [
                                m.cat(vec![a[0].clone(), n[1].clone()]),
                                cred_of(m, t, &n),
                                n[1].clone(),
                                n[2].clone(),
                                n[5].clone(),
                            ] {
                                if witness(&c) {
                                    new.push(c);
                                }
                            }
                        }
                    }
                    Op::Pk | Op::Hash | Op::Aka => {}
                }
            }

            // Construction, pulled over the universe.
            for c in &self.terms {
                if has(c, &s) {
                    continue;
                }
                let a = c.args();
                let ok = match c.op() {
                    Op::Atom => false,
                    Op::Pk | Op::Hash | Op::Cat | Op::Senc | Op::Aenc | Op::Sign | Op::Laenc => {
                        a.iter().all(|x| has(x, &s))
                    }
                    Op::Aka => {
                        has(&m.cat(vec![a[0].clone(), a[1].clone(), m.pk(&a[2]), a[3].clone()]), &s)
                            || has(&m.cat(vec![m.pk(&a[0]), a[1].clone(), a[2].clone(), a[3].clone()]), &s)
                    }
                    Op::Cred | Op::Icred => {
                        has(&m.cat(vec![a[1].clone(), a[0].clone(), a[2].clone(), a[3].clone()]), &s)
                    }
                    Op::Zk => has(&m.cat(a.to_vec()), &s),
                };
                if ok {
                    new.push(c.clone());
                }
            }

            // Content analysis: evidence pairs, lifted through properties.
            let mut by_content: HashMap<u32, Vec<&Term>> = HashMap::new();
            for t in s.values() {
                by_content.entry(t.content()).or_default().push(t);
            }
            // Items at each leaf path over every derivable message of a
            // given contents, built from derived messages and constructions.
            let mut ev: BTreeSet<(Item, Item)> = BTreeSet::new();
            let mut cmemo: HashMap<u32, bool> = HashMap::new();
            let mut lmemo: HashMap<(u32, Vec<usize>), BTreeSet<Item>> = HashMap::new();
            for t in s.values() {
                for (path, _) in t.leaves() {
                    let items = leaf_options(m, t, &path, &by_content, &known, &mut cmemo, &mut lmemo);
                    for &p in &items {
                        for &q in &items {
                            if p != q {
                                ev.insert((p, q));
                            }
                        }
                    }
                }
            }
            loop {
                let mut lifted = Vec::new();
                for &(p, q) in &ev {
                    for (k, pi) in m.psi_images(p) {
                        for (k2, qi) in m.psi_images(q) {
                            if k == k2 && pi != qi && !ev.contains(&(pi, qi)) {
                                lifted.push((pi, qi));
                            }
                        }
                    }
                }
                if lifted.is_empty() {
                    break;
                }
                ev.extend(lifted);
            }
            // A chain of single-leaf rewrites turns d into c exactly when
            // every differing leaf pair is connected by direct evidence.
            let mut comp: HashMap<Item, Item> = HashMap::new();
            fn root(comp: &mut HashMap<Item, Item>, x: Item) -> Item {
                let p = *comp.get(&x).unwrap_or(&x);
                if p == x {
                    return x;
                }
                let r = root(comp, p);
                comp.insert(x, r);
                r
            }
            for &(p, q) in &ev {
                let (rp, rq) = (root(&mut comp, p), root(&mut comp, q));
                if rp != rq {
                    comp.insert(rp, rq);
                }
            }
            for c in &self.terms {
                if has(c, &s) {
                    continue;
                }
                let Some(group) = by_content.get(&c.content()) else { continue };
                let cl = c.leaves();
                let reachable = group.iter().any(|d| {
                    d.leaves().iter().zip(&cl).all(|((_, x), (_, y))| x == y || root(&mut comp, *x) == root(&mut comp, *y))
                });
                if reachable {
                    new.push(c.clone());
                }
            }

            let before = s.len();
            for t in new {
                s.insert(t.id(), t);
            }
            if s.len() == before {
                break;
            }
        }
        self.derived = s;
    }
}

/// Whether some message with the contents of `t` can be built by
/// construction rules from messages whose contents are `known`.
fn constructible(m: &Model, t: &Term, known: &HashSet<u32>, memo: &mut HashMap<u32, bool>) -> bool {
    if known.contains(&t.content()) {
        return true;
    }
    if let Some(&v) = memo.get(&t.content()) {
        return v;
    }
    let a = t.args();
    let mut go = |x: &Term| constructible(m, x, known, memo);
    let v = match t.op() {
        Op::Atom => false,
        Op::Pk | Op::Hash | Op::Cat | Op::Senc | Op::Aenc | Op::Sign | Op::Laenc => a.iter().all(&mut go),
        Op::Aka => {
            go(&m.cat(vec![a[0].clone(), a[1].clone(), m.pk(&a[2]), a[3].clone()]))
                || go(&m.cat(vec![m.pk(&a[0]), a[1].clone(), a[2].clone(), a[3].clone()]))
        }
        Op::Cred | Op::Icred => go(&m.cat(vec![a[1].clone(), a[0].clone(), a[2].clone(), a[3].clone()])),
        Op::Zk => go(&m.cat(a.to_vec())),
    };
    memo.insert(t.content(), v);
    v
}

/// Items found at `path` in derivable messages with the contents of `t`.
fn leaf_options(
    m: &Model,
    t: &Term,
    path: &[usize],
    by_content: &HashMap<u32, Vec<&Term>>,
    known: &HashSet<u32>,
    cmemo: &mut HashMap<u32, bool>,
    lmemo: &mut HashMap<(u32, Vec<usize>), BTreeSet<Item>>,
) -> BTreeSet<Item> {
    let key = (t.content(), path.to_vec());
    if let Some(v) = lmemo.get(&key) {
        return v.clone();
    }
    let mut out = BTreeSet::new();
    for d in by_content.get(&t.content()).into_iter().flatten() {
        if let Some(x) = d.subterm_at(path).and_then(|x| x.item()) {
            out.insert(x);
        }
    }
    if let Some((&i, rest)) = path.split_first() {
        let a = t.args();
        let args_ok = a.iter().all(|x| constructible(m, x, known, cmemo));
        let mut via = |p: &Term, sub: Vec<usize>, out: &mut BTreeSet<Item>| {
            if constructible(m, p, known, cmemo) {
                out.extend(leaf_options(m, p, &sub, by_content, known, cmemo, lmemo));
            }
        };
        let with = |head: &[usize]| head.iter().copied().chain(rest.iter().copied()).collect::<Vec<_>>();
        match t.op() {
            Op::Atom => {}
            Op::Pk | Op::Hash | Op::Cat | Op::Senc | Op::Aenc | Op::Sign | Op::Laenc => {
                if args_ok {
                    via(&a[i], rest.to_vec(), &mut out);
                }
            }
            Op::Aka => {
                let g = m.cat(vec![a[0].clone(), a[1].clone(), m.pk(&a[2]), a[3].clone()]);
                via(&g, if i == 2 { with(&[2, 0]) } else { with(&[i]) }, &mut out);
                let g2 = m.cat(vec![m.pk(&a[0]), a[1].clone(), a[2].clone(), a[3].clone()]);
                via(&g2, if i == 0 { with(&[0, 0]) } else { with(&[i]) }, &mut out);
            }
            Op::Cred | Op::Icred => {
                let g = m.cat(vec![a[1].clone(), a[0].clone(), a[2].clone(), a[3].clone()]);
                let j = match i {
                    0 => 1,
                    1 => 0,
                    j => j,
                };
                via(&g, with(&[j]), &mut out);
            }
            Op::Zk => via(&m.cat(a.to_vec()), with(&[i]), &mut out),
        }
    }
    lmemo.insert(key, out.clone());
    out
}
