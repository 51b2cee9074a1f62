//! Detectability: construction, elimination and testing rules, the property
//! rule, and content analysis.
//!
//! An [`Analysis`] is built once per knowledge base. It saturates the set of
//! messages reachable by elimination and testing (the analysed set), checks
//! rule prerequisites at the contents layer, and precomputes the evidence
//! graph between content-equivalent items. Queries against it are cheap.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use crate::term::{Item, Kind, Model, Op, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    Axiom,
    Psi,
    Content,
    CP,
    CC,
    EC,
    ECp,
    CH,
    CE,
    EE,
    TE,
    CA,
    EA,
    TA,
    CS,
    TS,
    CL,
    EL,
    ELp,
    TL,
    CG,
    CGp,
    CR,
    TR,
    CZ,
    EZ1,
    EZ2,
    EZ3,
    TZ1,
    CI,
    EI1,
    EI2,
    EI3,
    EI4,
    TI1,
    TI2,
    TI3,
    TI4,
    TI5,
}

impl Rule {
    pub const ALL: [Rule; 39] = [
        Rule::Axiom,
        Rule::Psi,
        Rule::Content,
        Rule::CP,
        Rule::CC,
        Rule::EC,
        Rule::ECp,
        Rule::CH,
        Rule::CE,
        Rule::EE,
        Rule::TE,
        Rule::CA,
        Rule::EA,
        Rule::TA,
        Rule::CS,
        Rule::TS,
        Rule::CL,
        Rule::EL,
        Rule::ELp,
        Rule::TL,
        Rule::CG,
        Rule::CGp,
        Rule::CR,
        Rule::TR,
        Rule::CZ,
        Rule::EZ1,
        Rule::EZ2,
        Rule::EZ3,
        Rule::TZ1,
        Rule::CI,
        Rule::EI1,
        Rule::EI2,
        Rule::EI3,
        Rule::EI4,
        Rule::TI1,
        Rule::TI2,
        Rule::TI3,
        Rule::TI4,
        Rule::TI5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Axiom => "0",
            Rule::Psi => "Epsi",
            Rule::Content => "C",
            Rule::CP => "CP",
            Rule::CC => "CC",
            Rule::EC => "EC",
            Rule::ECp => "EC'",
            Rule::CH => "CH",
            Rule::CE => "CE",
            Rule::EE => "EE",
            Rule::TE => "TE",
            Rule::CA => "CA",
            Rule::EA => "EA",
            Rule::TA => "TA",
            Rule::CS => "CS",
            Rule::TS => "TS",
            Rule::CL => "CL",
            Rule::EL => "EL",
            Rule::ELp => "EL'",
            Rule::TL => "TL",
            Rule::CG => "CG",
            Rule::CGp => "CG'",
            Rule::CR => "CR",
            Rule::TR => "TR",
            Rule::CZ => "CZ",
            Rule::EZ1 => "EZ1",
            Rule::EZ2 => "EZ2",
            Rule::EZ3 => "EZ3",
            Rule::TZ1 => "TZ1",
            Rule::CI => "CI",
            Rule::EI1 => "EI1",
            Rule::EI2 => "EI2",
            Rule::EI3 => "EI3",
            Rule::EI4 => "EI4",
            Rule::TI1 => "TI1",
            Rule::TI2 => "TI2",
            Rule::TI3 => "TI3",
            Rule::TI4 => "TI4",
            Rule::TI5 => "TI5",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|-{}", self.name())
    }
}

/// A rule-application tree. Premises are the children's conclusions.
#[derive(Debug)]
pub struct Derivation {
    pub rule: Rule,
    pub concl: Term,
    pub premises: Vec<Arc<Derivation>>,
}

impl Derivation {
    fn leaf(rule: Rule, concl: Term) -> Arc<Self> {
        Arc::new(Derivation { rule, concl, premises: Vec::new() })
    }

    fn new(rule: Rule, concl: Term, premises: Vec<Arc<Derivation>>) -> Arc<Self> {
        Arc::new(Derivation { rule, concl, premises })
    }

    /// Every rule used anywhere in the tree.
    pub fn rules(&self) -> BTreeSet<Rule> {
        let mut out = BTreeSet::new();
        let mut stack = vec![self];
        while let Some(d) = stack.pop() {
            out.insert(d.rule);
            stack.extend(d.premises.iter().map(|p| p.as_ref()));
        }
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self.premises.iter().map(|p| p.node_count()).sum::<usize>()
    }

    /// Indented dump: one line per node, `rule  conclusion`.
    pub fn render(&self, model: &Model) -> String {
        let mut s = String::new();
        self.render_into(model, 0, &mut s);
        s
    }

    fn render_into(&self, model: &Model, depth: usize, out: &mut String) {
        for _ in 0..depth {
            out.push_str("  ");
        }
        out.push_str(&format!("{:<6} {}\n", self.rule.to_string(), model.show(&self.concl)));
        for p in &self.premises {
            p.render_into(model, depth + 1, out);
        }
    }

    /// Checks that each node's conclusion follows from its premises by its
    /// rule, using the model's contents labels for side conditions.
    pub fn check(&self, model: &Model, kb: &KnowledgeBase) -> Result<(), String> {
        check_node(self, model, kb)?;
        for p in &self.premises {
            p.check(model, kb)?;
        }
        Ok(())
    }
}

fn check_node(d: &Derivation, model: &Model, kb: &KnowledgeBase) -> Result<(), String> {
    let c = &d.concl;
    let p: Vec<&Term> = d.premises.iter().map(|p| &p.concl).collect();
    let bad = || Err(format!("bad {} step concluding {}", d.rule, model.show(c)));
    let ok = match d.rule {
        Rule::Axiom => kb.terms.contains(c),
        Rule::Psi => {
            p.len() == 1
                && p[0].item().is_some_and(|i| {
                    model.psi_images(i).iter().any(|&(_, j)| Some(j) == c.item())
                })
        }
        Rule::Content => {
            p.len() == 3 && p[1].content() == p[2].content() && {
                let diff = differing_leaf(p[0], c);
                match diff {
                    Some((path, from, to)) => {
                        let _ = path;
                        evidence_shape(model, p[1], p[2], from, to)
                    }
                    None => false,
                }
            }
        }
        Rule::CC => c.op() == Op::Cat && c.args().len() == p.len() && c.args().iter().zip(&p).all(|(a, b)| a == *b),
        Rule::EC => p.len() == 1 && p[0].op() == Op::Cat && p[0].args().first() == Some(c),
        Rule::ECp => p.len() == 1 && p[0].op() == Op::Cat && p[0].args().iter().skip(1).any(|a| a == c),
        Rule::CP | Rule::CH => p.len() == 1 && c.args().len() == 1 && &c.args()[0] == p[0],
        Rule::CE | Rule::CA | Rule::CS => {
            p.len() == 2 && c.args().len() == 2 && &c.args()[0] == p[1] && &c.args()[1] == p[0]
        }
        Rule::CL => p.len() == 3 && c.op() == Op::Laenc && c.args()[1] == *p[0] && c.args()[0] == *p[1] && c.args()[2] == *p[2],
        Rule::CG | Rule::CGp | Rule::CR | Rule::CZ | Rule::CI => {
            p.len() == 1 && p[0].op() == Op::Cat && p[0].args().len() == 4 && {
                let a = p[0].args();
                match d.rule {
                    Rule::CG => {
                        c.op() == Op::Aka
                            && a[0] == c.args()[0]
                            && a[1] == c.args()[1]
                            && a[2] == model.pk(&c.args()[2])
                            && a[3] == c.args()[3]
                    }
                    Rule::CGp => {
                        c.op() == Op::Aka
                            && a[0] == model.pk(&c.args()[0])
                            && a[1] == c.args()[1]
                            && a[2] == c.args()[2]
                            && a[3] == c.args()[3]
                    }
                    Rule::CR | Rule::CI => {
                        c.op() == if d.rule == Rule::CR { Op::Cred } else { Op::Icred }
                            && a[0] == c.args()[1]
                            && a[1] == c.args()[0]
                            && a[2] == c.args()[2]
                            && a[3] == c.args()[3]
                    }
                    _ => c.op() == Op::Zk && a == c.args(),
                }
            }
        }
        Rule::EE => {
            p.len() == 2 && p[0].op() == Op::Senc && p[0].args()[0] == *p[1] && p[0].args()[1] == *c
        }
        Rule::TE => {
            p.len() == 2 && p[0].op() == Op::Senc && p[0].args()[0] == *c && p[1].content() == c.content()
        }
        Rule::EA | Rule::ELp => {
            let op = if d.rule == Rule::EA { Op::Aenc } else { Op::Laenc };
            p.len() == 2 && p[0].op() == op && p[0].args()[0] == model.pk(p[1]) && p[0].args()[1] == *c
        }
        Rule::TA | Rule::TL => {
            let op = if d.rule == Rule::TA { Op::Aenc } else { Op::Laenc };
            p.len() == 2 && p[0].op() == op && p[0].args()[0] == model.pk(c) && p[1].content() == c.content()
        }
        Rule::EL => p.len() == 1 && p[0].op() == Op::Laenc && p[0].args()[2] == *c,
        Rule::TS => {
            p.len() == 2
                && p[0].op() == Op::Sign
                && *c == model.cat(vec![model.pk(&p[0].args()[0]), p[0].args()[1].clone()])
                && p[1].content() == c.content()
        }
        Rule::TR => {
            p.len() == 2 && p[0].op() == Op::Cred && {
                let a = p[0].args();
                *c == model.cat(vec![model.pk(&a[1]), a[0].clone(), a[2].clone()])
                    && p[1].content() == c.content()
            }
        }
        Rule::EZ1 | Rule::EZ3 => {
            p.len() == 1 && zk_parts(p[0]).is_some_and(|(a, _, _)| {
                *c == a[if d.rule == Rule::EZ1 { 2 } else { 1 }]
            })
        }
        Rule::EZ2 => {
            p.len() == 1
                && p[0].op() == Op::Cat
                && p[0].args().len() == 2
                && zk_parts(&p[0].args()[0]).is_some_and(|(a, np, _)| p[0].args()[1] == np && *c == a[0])
        }
        Rule::TZ1 => {
            p.len() == 2
                && zk_parts(p[0]).is_some_and(|(_, np, _)| *c == np && p[1].content() == c.content())
        }
        Rule::EI1 | Rule::EI2 | Rule::EI3 => {
            p.len() == 1 && p[0].op() == Op::Cat && p[0].args().len() == 2 && {
                let ic = &p[0].args()[0];
                let key = &p[0].args()[1];
                icred_parts(ic).is_some_and(|(a, n)| {
                    let (idx, expect) = match d.rule {
                        Rule::EI1 => (1, model.node(Op::Cred, vec![a[0].clone(), a[1].clone(), a[2].clone(), model.cat(vec![n[1].clone(), n[4].clone()])])),
                        Rule::EI2 => (2, model.cat(vec![a[0].clone(), n[0].clone(), n[1].clone()])),
                        _ => (5, a[1].clone()),
                    };
                    *key == n[idx] && *c == expect
                })
            }
        }
        Rule::EI4 => {
            p.len() == 1
                && icred_parts(p[0]).is_some_and(|(a, n)| {
                    *c == model.cat(vec![
                        model.pk(&a[1]),
                        a[2].clone(),
                        model.hash(&model.cat(vec![a[0].clone(), n[0].clone()])),
                    ])
                })
        }
        Rule::TI1 | Rule::TI2 | Rule::TI3 | Rule::TI4 | Rule::TI5 => {
            p.len() == 2
                && p[1].content() == c.content()
                && icred_parts(p[0]).is_some_and(|(a, n)| {
                    let expect = match d.rule {
                        Rule::TI1 => model.cat(vec![a[0].clone(), n[1].clone()]),
                        Rule::TI2 => model.node(Op::Cred, vec![a[0].clone(), a[1].clone(), a[2].clone(), model.cat(vec![n[1].clone(), n[4].clone()])]),
                        Rule::TI3 => n[1].clone(),
                        Rule::TI4 => n[2].clone(),
                        _ => n[5].clone(),
                    };
                    *c == expect
                })
        }
    };
    if ok {
        Ok(())
    } else {
        bad()
    }
}

/// The single leaf position where `a` and `b` differ, if exactly one.
fn differing_leaf(a: &Term, b: &Term) -> Option<(Vec<usize>, Item, Item)> {
    if a.content() != b.content() {
        return None;
    }
    let la = a.leaves();
    let lb = b.leaves();
    let diffs: Vec<_> = la
        .into_iter()
        .zip(lb)
        .filter(|((_, x), (_, y))| x != y)
        .map(|((p, x), (_, y))| (p, x, y))
        .collect();
    if diffs.len() == 1 {
        diffs.into_iter().next()
    } else {
        None
    }
}

/// Whether (m1, m2) is evidence for `from ≐ to`, directly or through ψ.
fn evidence_shape(model: &Model, m1: &Term, m2: &Term, from: Item, to: Item) -> bool {
    let direct = |x: Item, y: Item| {
        m1.leaves()
            .into_iter()
            .zip(m2.leaves())
            .any(|((p, a), (q, b))| p == q && ((a == x && b == y) || (a == y && b == x)))
    };
    if direct(from, to) {
        return true;
    }
    // ψ-lift: from = ψ(x), to = ψ(y) with direct evidence for x ≐ y.
    let pre = |i: Item| -> Vec<(usize, Item)> {
        model
            .items()
            .flat_map(|x| model.psi_images(x).into_iter().filter(move |&(_, j)| j == i).map(move |(k, _)| (k, x)))
            .collect()
    };
    let pf = pre(from);
    let pt = pre(to);
    pf.iter().any(|&(k, x)| pt.iter().any(|&(k2, y)| k == k2 && evidence_shape(model, m1, m2, x, y)))
}

fn zk_parts(t: &Term) -> Option<(&[Term], Term, Term)> {
    if t.op() != Op::Zk {
        return None;
    }
    let r = &t.args()[3];
    if r.op() == Op::Cat && r.args().len() == 2 {
        Some((t.args(), r.args()[0].clone(), r.args()[1].clone()))
    } else {
        None
    }
}

fn icred_parts(t: &Term) -> Option<(&[Term], &[Term])> {
    if t.op() != Op::Icred {
        return None;
    }
    let r = &t.args()[3];
    if r.op() == Op::Cat && r.args().len() == 7 {
        Some((t.args(), r.args()))
    } else {
        None
    }
}

/// A knowledge base: messages plus bare context entities.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    pub owner: String,
    pub terms: BTreeSet<Term>,
    pub entities: BTreeSet<Item>,
}

impl KnowledgeBase {
    pub fn new(owner: impl Into<String>) -> Self {
        KnowledgeBase { owner: owner.into(), ..Default::default() }
    }

    pub fn with_terms(owner: impl Into<String>, terms: impl IntoIterator<Item = Term>) -> Self {
        let mut kb = Self::new(owner);
        kb.terms.extend(terms);
        kb
    }

    pub fn insert(&mut self, t: Term) -> bool {
        self.terms.insert(t)
    }

    pub fn insert_entity(&mut self, e: Item) -> bool {
        self.entities.insert(e)
    }

    pub fn extend_from(&mut self, other: &KnowledgeBase) {
        self.terms.extend(other.terms.iter().cloned());
        self.entities.extend(other.entities.iter().copied());
    }

    pub fn is_subset(&self, other: &KnowledgeBase) -> bool {
        self.terms.is_subset(&other.terms) && self.entities.is_subset(&other.entities)
    }

    pub fn len(&self) -> usize {
        self.terms.len() + self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Evidence witness for an edge `a ≐ b`: derivable messages `n`, `n'` with
/// `n@path = a` and `n'@path = b`, possibly lifted through property `psi`.
#[derive(Clone, Debug)]
pub struct Evidence {
    pub left: Arc<Derivation>,
    pub right: Arc<Derivation>,
    pub path: Vec<usize>,
    pub psi: Vec<usize>,
}

type Memo<K> = RefCell<HashMap<K, Option<Arc<Derivation>>>>;

/// Saturated analysis of one knowledge base.
pub struct Analysis<'m> {
    model: &'m Model,
    kb: KnowledgeBase,
    known: HashMap<Term, Arc<Derivation>>,
    order: Vec<Term>,
    by_content: HashMap<u32, Vec<Term>>,
    results_of: HashMap<Term, Vec<Term>>,
    contents_memo: Memo<u32>,
    synth_memo: Memo<Term>,
    pinned_memo: Memo<(Term, Vec<usize>, Term)>,
    full_memo: Memo<Term>,
    comp: Vec<u32>,
    adj: BTreeMap<Item, BTreeMap<Item, Evidence>>,
}

impl<'m> Analysis<'m> {
    pub fn new(model: &'m Model, kb: &KnowledgeBase) -> Self {
        let mut a = Analysis {
            model,
            kb: kb.clone(),
            known: HashMap::new(),
            order: Vec::new(),
            by_content: HashMap::new(),
            results_of: HashMap::new(),
            contents_memo: RefCell::new(HashMap::new()),
            synth_memo: RefCell::new(HashMap::new()),
            pinned_memo: RefCell::new(HashMap::new()),
            full_memo: RefCell::new(HashMap::new()),
            comp: (0..model.item_count() as u32).collect(),
            adj: BTreeMap::new(),
        };
        for t in &kb.terms {
            a.add(t.clone(), Derivation::leaf(Rule::Axiom, t.clone()));
        }
        a.saturate();
        a.build_evidence_graph();
        a
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    /// Messages reached by elimination and testing, in discovery order.
    pub fn analysed(&self) -> &[Term] {
        &self.order
    }

    pub fn is_analysed(&self, t: &Term) -> bool {
        self.known.contains_key(t)
    }

    fn add(&mut self, t: Term, d: Arc<Derivation>) -> bool {
        if self.known.contains_key(&t) {
            return false;
        }
        self.known.insert(t.clone(), d);
        self.by_content.entry(t.content()).or_default().push(t.clone());
        self.order.push(t);
        true
    }

    fn saturate(&mut self) {
        loop {
            self.contents_memo.borrow_mut().retain(|_, v| v.is_some());
            let mut new: Vec<(Term, Term, Arc<Derivation>)> = Vec::new();
            for t in self.order.clone() {
                for (concl, d) in self.step(&t) {
                    new.push((t.clone(), concl, d));
                }
            }
            let mut changed = false;
            for (src, concl, d) in new {
                let list = self.results_of.entry(src).or_default();
                if !list.contains(&concl) {
                    list.push(concl.clone());
                }
                if self.add(concl, d) {
                    changed = true;
                    self.contents_memo.borrow_mut().retain(|_, v| v.is_some());
                }
            }
            if !changed {
                break;
            }
        }
        self.contents_memo.borrow_mut().retain(|_, v| v.is_some());
        self.synth_memo.borrow_mut().clear();
    }

    fn deriv_of(&self, t: &Term) -> Option<Arc<Derivation>> {
        self.known.get(t).cloned()
    }


    /// Elimination, testing and property rules with `t` as main premise.
    fn step(&self, t: &Term) -> Vec<(Term, Arc<Derivation>)> {
        let m = self.model;
        let mut out: Vec<(Term, Arc<Derivation>)> = Vec::new();
        let dt = self.deriv_of(t).expect("analysed");
        let a = t.args();
        // Testing rule yielding `key` from a content-equivalent witness,
        // then the derivation of `key` as the literal message.
        let tested = |rule: Rule, key: &Term, out: &mut Vec<(Term, Arc<Derivation>)>| -> Option<Arc<Derivation>> {
            if let Some(d) = self.deriv_of(key) {
                return Some(d);
            }
            let w = self.contents_witness(key)?;
            let d = Derivation::new(rule, key.clone(), vec![dt.clone(), w]);
            out.push((key.clone(), d.clone()));
            Some(d)
        };
        match t.op() {
            Op::Atom => {
                let i = t.item().unwrap();
                if matches!(m.kind(i), Kind::Identifier | Kind::Data) {
                    for (_, j) in m.psi_images(i) {
                        out.push((m.atom_term(j), Derivation::new(Rule::Psi, m.atom_term(j), vec![dt.clone()])));
                    }
                }
            }
            Op::Cat => {
                for (k, x) in a.iter().enumerate() {
                    let r = if k == 0 { Rule::EC } else { Rule::ECp };
                    out.push((x.clone(), Derivation::new(r, x.clone(), vec![dt.clone()])));
                }
            }
            Op::Senc => {
                if let Some(dk) = tested(Rule::TE, &a[0], &mut out) {
                    out.push((a[1].clone(), Derivation::new(Rule::EE, a[1].clone(), vec![dt.clone(), dk])));
                }
            }
            Op::Aenc | Op::Laenc => {
                if t.op() == Op::Laenc {
                    out.push((a[2].clone(), Derivation::new(Rule::EL, a[2].clone(), vec![dt.clone()])));
                }
                if a[0].op() == Op::Pk {
                    let k = &a[0].args()[0];
                    let (tr, er) = if t.op() == Op::Aenc { (Rule::TA, Rule::EA) } else { (Rule::TL, Rule::ELp) };
                    if let Some(dk) = tested(tr, k, &mut out) {
                        out.push((a[1].clone(), Derivation::new(er, a[1].clone(), vec![dt.clone(), dk])));
                    }
                }
            }
            Op::Sign => {
                let c = m.cat(vec![m.pk(&a[0]), a[1].clone()]);
                if self.deriv_of(&c).is_none() {
                    if let Some(w) = self.contents_witness(&c) {
                        out.push((c.clone(), Derivation::new(Rule::TS, c, vec![dt.clone(), w])));
                    }
                }
            }
            Op::Cred => {
                let c = m.cat(vec![m.pk(&a[1]), a[0].clone(), a[2].clone()]);
                if self.deriv_of(&c).is_none() {
                    if let Some(w) = self.contents_witness(&c) {
                        out.push((c.clone(), Derivation::new(Rule::TR, c, vec![dt.clone(), w])));
                    }
                }
            }
            Op::Zk => {
                if let Some((_, np, _)) = zk_parts(t) {
                    out.push((a[2].clone(), Derivation::new(Rule::EZ1, a[2].clone(), vec![dt.clone()])));
                    out.push((a[1].clone(), Derivation::new(Rule::EZ3, a[1].clone(), vec![dt.clone()])));
                    if let Some(dn) = tested(Rule::TZ1, &np, &mut out) {
                        let pair = m.cat(vec![t.clone(), np.clone()]);
                        let dp = Derivation::new(Rule::CC, pair, vec![dt.clone(), dn]);
                        out.push((a[0].clone(), Derivation::new(Rule::EZ2, a[0].clone(), vec![dp])));
                    }
                }
            }
            Op::Icred => {
                if let Some((_, n)) = icred_parts(t) {
                    let cred = m.node(
                        Op::Cred,
                        vec![a[0].clone(), a[1].clone(), a[2].clone(), m.cat(vec![n[1].clone(), n[4].clone()])],
                    );
                    let commit = m.cat(vec![
                        m.pk(&a[1]),
                        a[2].clone(),
                        m.hash(&m.cat(vec![a[0].clone(), n[0].clone()])),
                    ]);
                    out.push((commit.clone(), Derivation::new(Rule::EI4, commit, vec![dt.clone()])));
                    let elim = |test: Rule, rule: Rule, idx: usize, concl: Term, out: &mut Vec<(Term, Arc<Derivation>)>| {
                        if let Some(dn) = tested(test, &n[idx], out) {
                            let pair = m.cat(vec![t.clone(), n[idx].clone()]);
                            let dp = Derivation::new(Rule::CC, pair, vec![dt.clone(), dn]);
                            out.push((concl.clone(), Derivation::new(rule, concl, vec![dp])));
                        }
                    };
                    elim(Rule::TI3, Rule::EI1, 1, cred.clone(), &mut out);
                    elim(Rule::TI4, Rule::EI2, 2, m.cat(vec![a[0].clone(), n[0].clone(), n[1].clone()]), &mut out);
                    elim(Rule::TI5, Rule::EI3, 5, a[1].clone(), &mut out);
                    let c1 = m.cat(vec![a[0].clone(), n[1].clone()]);
                    for (rule, c) in [(Rule::TI1, c1), (Rule::TI2, cred)] {
                        if self.deriv_of(&c).is_none() {
                            if let Some(w) = self.contents_witness(&c) {
                                out.push((c.clone(), Derivation::new(rule, c, vec![dt.clone(), w])));
                            }
                        }
                    }
                }
            }
            Op::Pk | Op::Hash | Op::Aka => {}
        }
        out
    }

    /// A derivation (without content analysis) of some message
    /// content-equivalent to `t`; this is the contents-layer check.
    pub fn contents_witness(&self, t: &Term) -> Option<Arc<Derivation>> {
        if let Some(r) = self.contents_memo.borrow().get(&t.content()) {
            return r.clone();
        }
        let r = self.contents_witness_uncached(t);
        self.contents_memo.borrow_mut().insert(t.content(), r.clone());
        r
    }

    fn contents_witness_uncached(&self, t: &Term) -> Option<Arc<Derivation>> {
        if let Some(list) = self.by_content.get(&t.content()) {
            let best = list.iter().min().unwrap();
            return self.deriv_of(best);
        }
        self.construct(t, &|x| self.contents_witness(x))
    }

    /// True iff some message with the contents of `t` is derivable.
    pub fn contents_oracle(&self, t: &Term) -> bool {
        self.contents_witness(t).is_some()
    }

    /// Builds a derivation of a message shaped like `t` by a construction
    /// rule, taking each child derivation from `child`.
    fn construct(
        &self,
        t: &Term,
        child: &dyn Fn(&Term) -> Option<Arc<Derivation>>,
    ) -> Option<Arc<Derivation>> {
        let m = self.model;
        let a = t.args();
        let build = |rule: Rule, ds: Vec<Arc<Derivation>>| -> Arc<Derivation> {
            let args: Vec<Term> = ds.iter().map(|d| d.concl.clone()).collect();
            let concl = m.node(t.op(), args);
            Derivation::new(rule, concl, ds)
        };
        match t.op() {
            Op::Atom => None,
            Op::Pk => Some(build(Rule::CP, vec![child(&a[0])?])),
            Op::Hash => Some(build(Rule::CH, vec![child(&a[0])?])),
            Op::Cat => {
                let ds = a.iter().map(child).collect::<Option<Vec<_>>>()?;
                Some(build(Rule::CC, ds))
            }
            Op::Senc | Op::Aenc | Op::Sign => {
                let rule = match t.op() {
                    Op::Senc => Rule::CE,
                    Op::Aenc => Rule::CA,
                    _ => Rule::CS,
                };
                let dm = child(&a[1])?;
                let dk = child(&a[0])?;
                let concl = m.node(t.op(), vec![dk.concl.clone(), dm.concl.clone()]);
                Some(Derivation::new(rule, concl, vec![dm, dk]))
            }
            Op::Laenc => {
                let dm = child(&a[1])?;
                let dk = child(&a[0])?;
                let dl = child(&a[2])?;
                let concl = m.node(Op::Laenc, vec![dk.concl.clone(), dm.concl.clone(), dl.concl.clone()]);
                Some(Derivation::new(Rule::CL, concl, vec![dm, dk, dl]))
            }
            Op::Aka => {
                let d1 = child(&a[1])?;
                let d3 = child(&a[3])?;
                let first = || -> Option<Arc<Derivation>> {
                    let dk1 = child(&a[0])?;
                    let dpk2 = child(&m.pk(&a[2]))?;
                    let k2 = dpk2.concl.args().first()?.clone();
                    if dpk2.concl.op() != Op::Pk {
                        return None;
                    }
                    let prem = m.cat(vec![dk1.concl.clone(), d1.concl.clone(), dpk2.concl.clone(), d3.concl.clone()]);
                    let dp = Derivation::new(Rule::CC, prem, vec![dk1.clone(), d1.clone(), dpk2, d3.clone()]);
                    let concl = m.node(Op::Aka, vec![dk1.concl.clone(), d1.concl.clone(), k2, d3.concl.clone()]);
                    Some(Derivation::new(Rule::CG, concl, vec![dp]))
                };
                let second = || -> Option<Arc<Derivation>> {
                    let dpk1 = child(&m.pk(&a[0]))?;
                    let dk2 = child(&a[2])?;
                    if dpk1.concl.op() != Op::Pk {
                        return None;
                    }
                    let k1 = dpk1.concl.args()[0].clone();
                    let prem = m.cat(vec![dpk1.concl.clone(), d1.concl.clone(), dk2.concl.clone(), d3.concl.clone()]);
                    let dp = Derivation::new(Rule::CC, prem, vec![dpk1, d1.clone(), dk2.clone(), d3.clone()]);
                    let concl = m.node(Op::Aka, vec![k1, d1.concl.clone(), dk2.concl.clone(), d3.concl.clone()]);
                    Some(Derivation::new(Rule::CGp, concl, vec![dp]))
                };
                first().or_else(second)
            }
            Op::Cred | Op::Icred => {
                let rule = if t.op() == Op::Cred { Rule::CR } else { Rule::CI };
                let dk = child(&a[1])?;
                let du = child(&a[0])?;
                let da = child(&a[2])?;
                let dr = child(&a[3])?;
                let prem = m.cat(vec![dk.concl.clone(), du.concl.clone(), da.concl.clone(), dr.concl.clone()]);
                let concl = m.node(t.op(), vec![du.concl.clone(), dk.concl.clone(), da.concl.clone(), dr.concl.clone()]);
                let dp = Derivation::new(Rule::CC, prem, vec![dk, du, da, dr]);
                Some(Derivation::new(rule, concl, vec![dp]))
            }
            Op::Zk => {
                let ds = a.iter().map(child).collect::<Option<Vec<_>>>()?;
                let prem = m.cat(ds.iter().map(|d| d.concl.clone()).collect());
                let concl = m.node(Op::Zk, ds.iter().map(|d| d.concl.clone()).collect());
                let dp = Derivation::new(Rule::CC, prem, ds);
                Some(Derivation::new(Rule::CZ, concl, vec![dp]))
            }
        }
    }

    /// Derivability without the content-analysis rule.
    pub fn derive_no_ca(&self, t: &Term) -> Option<Arc<Derivation>> {
        if let Some(d) = self.deriv_of(t) {
            return Some(d);
        }
        if let Some(r) = self.synth_memo.borrow().get(t) {
            return r.clone();
        }
        let r = self.construct_exact(t, &|x| self.derive_no_ca(x));
        self.synth_memo.borrow_mut().insert(t.clone(), r.clone());
        r
    }

    /// Construction of exactly `t` (same children), if the children derive.
    fn construct_exact(
        &self,
        t: &Term,
        child: &dyn Fn(&Term) -> Option<Arc<Derivation>>,
    ) -> Option<Arc<Derivation>> {
        let d = self.construct(t, child)?;
        if d.concl == *t {
            Some(d)
        } else {
            None
        }
    }

    /// A derivable message `s` content-equivalent to `t` with `s@path = target`.
    fn pinned(&self, t: &Term, path: &[usize], target: &Term) -> Option<Arc<Derivation>> {
        if t.content() != target.content() && path.is_empty() {
            return None;
        }
        let key = (t.clone(), path.to_vec(), target.clone());
        if let Some(r) = self.pinned_memo.borrow().get(&key) {
            return r.clone();
        }
        let r = self.pinned_uncached(t, path, target);
        self.pinned_memo.borrow_mut().insert(key, r.clone());
        r
    }

    fn pinned_uncached(&self, t: &Term, path: &[usize], target: &Term) -> Option<Arc<Derivation>> {
        if let Some(list) = self.by_content.get(&t.content()) {
            let mut hits: Vec<&Term> =
                list.iter().filter(|a| a.subterm_at(path) == Some(target)).collect();
            hits.sort();
            if let Some(a) = hits.first() {
                return self.deriv_of(a);
            }
        }
        let Some((&i, rest)) = path.split_first() else {
            return self.derive_no_ca(target);
        };
        let m = self.model;
        if t.op() == Op::Aka && (i == 0 || i == 2) {
            // The pinned key may enter directly or through its public key.
            let direct = self.construct(t, &|x| {
                if std::ptr::eq(x, &t.args()[i]) {
                    self.pinned(x, rest, target)
                } else {
                    self.contents_witness(x)
                }
            });
            if let Some(d) = direct.filter(|d| d.concl.subterm_at(path) == Some(target)) {
                return Some(d);
            }
            let pk_inner = m.pk(&t.args()[i]);
            let mut pk_path = vec![0];
            pk_path.extend_from_slice(rest);
            let d = self.construct(t, &|x| {
                if *x == pk_inner {
                    self.pinned(x, &pk_path, target)
                } else if std::ptr::eq(x, &t.args()[i]) {
                    None
                } else {
                    self.contents_witness(x)
                }
            })?;
            return (d.concl.subterm_at(path) == Some(target)).then_some(d);
        }
        let d = self.construct(t, &|x| {
            if std::ptr::eq(x, &t.args()[i]) {
                self.pinned(x, rest, target)
            } else {
                self.contents_witness(x)
            }
        })?;
        (d.concl.subterm_at(path) == Some(target)).then_some(d)
    }

    /// Whether no elimination or testing rule applied to `t` yields a
    /// message that still contains `item`.
    fn minimal_for(&self, t: &Term, item: Item) -> bool {
        self.results_of
            .get(t)
            .is_none_or(|rs| !rs.iter().any(|r| r.contains_item(item)))
    }

    fn build_evidence_graph(&mut self) {
        let m = self.model;
        // Occurrences of each item in analysed messages.
        let mut occ: BTreeMap<Item, Vec<(Term, Vec<usize>)>> = BTreeMap::new();
        for t in &self.order {
            for (p, i) in t.leaves() {
                occ.entry(i).or_default().push((t.clone(), p));
            }
        }
        let mut by_class: BTreeMap<u32, Vec<Item>> = BTreeMap::new();
        for &i in occ.keys() {
            by_class.entry(m.class_of(i).0).or_default().push(i);
        }
        let mut edges: BTreeMap<(Item, Item), Evidence> = BTreeMap::new();
        for group in by_class.values() {
            for &q in group {
                for (t, path) in &occ[&q] {
                    if !self.minimal_for(t, q) {
                        continue;
                    }
                    for &q2 in group {
                        if q2 == q || edges.contains_key(&(q, q2)) {
                            continue;
                        }
                        let target = m.atom_term(q2);
                        if let Some(d) = self.pinned(t, path, &target) {
                            let ev = Evidence {
                                left: self.deriv_of(t).unwrap(),
                                right: d,
                                path: path.clone(),
                                psi: Vec::new(),
                            };
                            edges.insert((q2, q), flip(&ev));
                            edges.insert((q, q2), ev);
                        }
                    }
                }
            }
        }
        // ψ-lifts of single evidence pairs, to a fixpoint.
        let mut frontier: Vec<(Item, Item)> = edges.keys().copied().collect();
        while let Some((x, y)) = frontier.pop() {
            let ix = m.psi_images(x);
            let iy = m.psi_images(y);
            for &(k, px) in &ix {
                for &(k2, py) in &iy {
                    if k == k2 && px != py && !edges.contains_key(&(px, py)) {
                        let mut ev = edges[&(x, y)].clone();
                        ev.psi.push(k);
                        edges.insert((py, px), flip(&ev));
                        edges.insert((px, py), ev);
                        frontier.push((px, py));
                    }
                }
            }
        }
        let mut parent: Vec<u32> = (0..m.item_count() as u32).collect();
        fn find(p: &mut [u32], x: u32) -> u32 {
            let mut r = x;
            while p[r as usize] != r {
                r = p[r as usize];
            }
            let mut c = x;
            while p[c as usize] != r {
                let n = p[c as usize];
                p[c as usize] = r;
                c = n;
            }
            r
        }
        for ((a, b), ev) in edges {
            let (ra, rb) = (find(&mut parent, a.0), find(&mut parent, b.0));
            if ra != rb {
                parent[ra.max(rb) as usize] = ra.min(rb);
            }
            self.adj.entry(a).or_default().insert(b, ev);
        }
        self.comp = (0..m.item_count() as u32).map(|x| find(&mut parent, x)).collect();
    }

    /// Whether two items are connected by a chain of evidence.
    pub fn linked(&self, a: Item, b: Item) -> bool {
        self.comp[a.0 as usize] == self.comp[b.0 as usize]
    }

    /// Representative of an item's evidence component.
    pub fn component(&self, a: Item) -> u32 {
        self.comp[a.0 as usize]
    }

    /// Direct evidence edges, as (a, b) pairs with a < b.
    pub fn evidence_edges(&self) -> Vec<(Item, Item)> {
        let mut out = Vec::new();
        for (&a, nb) in &self.adj {
            for &b in nb.keys() {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Shortest evidence chain from `from` to `to`, deterministic.
    fn chain(&self, from: Item, to: Item) -> Option<Vec<Item>> {
        if from == to {
            return Some(vec![from]);
        }
        let mut prev: BTreeMap<Item, Item> = BTreeMap::new();
        let mut q = VecDeque::from([from]);
        while let Some(x) = q.pop_front() {
            if let Some(nb) = self.adj.get(&x) {
                for &y in nb.keys() {
                    if y != from && !prev.contains_key(&y) {
                        prev.insert(y, x);
                        if y == to {
                            let mut path = vec![to];
                            let mut c = to;
                            while c != from {
                                c = prev[&c];
                                path.push(c);
                            }
                            path.reverse();
                            return Some(path);
                        }
                        q.push_back(y);
                    }
                }
            }
        }
        None
    }

    /// Witness pair for `n1 ≐ n2` (Def. of evidence), searched among
    /// derivable messages; items use the evidence graph.
    pub fn evidence_for(&self, n1: &Term, n2: &Term) -> Option<(Term, Term)> {
        if n1.content() != n2.content() {
            return None;
        }
        if let (Some(a), Some(b)) = (n1.item(), n2.item()) {
            if a == b {
                let d = self.derivable(n1).or_else(|| {
                    self.order.iter().find(|t| t.contains_item(a)).and_then(|t| self.deriv_of(t))
                })?;
                return Some((d.concl.clone(), d.concl.clone()));
            }
            let ev = self.adj.get(&a)?.get(&b)?;
            return Some((ev.left.concl.clone(), ev.right.concl.clone()));
        }
        for t in &self.order {
            for (p, s) in t.subterms() {
                if s == *n1 {
                    if let Some(d) = self.pinned(t, &p, n2) {
                        return Some((t.clone(), d.concl.clone()));
                    }
                }
                if s == *n2 {
                    if let Some(d) = self.pinned(t, &p, n1) {
                        return Some((d.concl.clone(), t.clone()));
                    }
                }
            }
        }
        let d1 = self.derive_no_ca(n1)?;
        let d2 = self.derive_no_ca(n2)?;
        Some((d1.concl.clone(), d2.concl.clone()))
    }

    /// Derivable ψ-images.
    pub fn property_images(&self) -> Vec<Term> {
        let mut v: Vec<Term> = self
            .known
            .iter()
            .filter(|(_, d)| d.rule == Rule::Psi)
            .map(|(t, _)| t.clone())
            .collect();
        v.sort();
        v
    }

    /// Full detectability, including content analysis.
    pub fn derivable(&self, t: &Term) -> Option<Arc<Derivation>> {
        if let Some(r) = self.full_memo.borrow().get(t) {
            return r.clone();
        }
        let r = self.derivable_uncached(t);
        self.full_memo.borrow_mut().insert(t.clone(), r.clone());
        r
    }

    pub fn is_derivable(&self, t: &Term) -> bool {
        self.derivable(t).is_some()
    }

    fn derivable_uncached(&self, t: &Term) -> Option<Arc<Derivation>> {
        if let Some(d) = self.derive_no_ca(t) {
            return Some(d);
        }
        let m = self.model;
        if let Some(i) = t.item() {
            let anchor = self.item_anchor(i);
            if let Some(a) = anchor {
                return self.rewrite(&a, t);
            }
            // A property of an item obtained through content analysis.
            for x in m.items() {
                for (_, img) in m.psi_images(x) {
                    if img == i {
                        if let Some(dx) = self.derivable(&m.atom_term(x)) {
                            return Some(Derivation::new(Rule::Psi, t.clone(), vec![dx]));
                        }
                    }
                }
            }
            return None;
        }
        if let Some(d) = self.construct_exact(t, &|x| self.derivable(x)) {
            return Some(d);
        }
        let leaves = t.leaves();
        let mut anchors: Vec<&Term> = self
            .by_content
            .get(&t.content())
            .map(|l| l.iter().collect())
            .unwrap_or_default();
        anchors.sort();
        for a in anchors {
            let ok = a
                .leaves()
                .iter()
                .zip(&leaves)
                .all(|((_, x), (_, y))| self.linked(*x, *y));
            if ok {
                return self.rewrite(a, t);
            }
        }
        None
    }

    /// Analysed item linked to `i` by evidence, nearest first.
    fn item_anchor(&self, i: Item) -> Option<Term> {
        let m = self.model;
        let mut best: Option<(usize, Term)> = None;
        for t in self.by_content.get(&m.atom_term(i).content())? {
            let j = t.item()?;
            if self.linked(i, j) {
                let len = self.chain(j, i).map_or(usize::MAX, |c| c.len());
                if best.as_ref().is_none_or(|(l, b)| len < *l || (len == *l && t < b)) {
                    best = Some((len, t.clone()));
                }
            }
        }
        best.map(|(_, t)| t)
    }

    /// Content-analysis steps turning analysed `from` into `to`, leaf by leaf.
    fn rewrite(&self, from: &Term, to: &Term) -> Option<Arc<Derivation>> {
        let m = self.model;
        let mut cur = from.clone();
        let mut d = self.deriv_of(from)?;
        for ((path, x), (_, y)) in from.leaves().into_iter().zip(to.leaves()) {
            if x == y {
                continue;
            }
            let chain = self.chain(x, y)?;
            for w in chain.windows(2) {
                let ev = &self.adj[&w[0]][&w[1]];
                let next = m.replace_at(&cur, &path, &m.atom_term(w[1]));
                d = Derivation::new(Rule::Content, next.clone(), vec![d, ev.left.clone(), ev.right.clone()]);
                cur = next;
            }
        }
        (cur == *to).then_some(d)
    }

    /// Identifiers and data items detectable from the knowledge base.
    pub fn detectable_items(&self) -> BTreeSet<Item> {
        let m = self.model;
        m.items()
            .filter(|&i| matches!(m.kind(i), Kind::Identifier | Kind::Data))
            .filter(|&i| self.is_derivable(&m.atom_term(i)))
            .collect()
    }
}

fn flip(ev: &Evidence) -> Evidence {
    Evidence { left: ev.right.clone(), right: ev.left.clone(), path: ev.path.clone(), psi: ev.psi.clone() }
}

/// Convenience: is `t` derivable from `kb`?
pub fn derivable(model: &Model, kb: &KnowledgeBase, t: &Term) -> Option<Arc<Derivation>> {
    Analysis::new(model, kb).derivable(t)
}
