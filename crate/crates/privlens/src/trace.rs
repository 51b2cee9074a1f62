//! System states, message transmissions, evolution and trace validity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::deduce::{Analysis, KnowledgeBase};
use crate::error::{Error, Result};
use crate::term::{ContextRef, Item, Kind, Model, Op, Term};
use crate::views::View;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxKind {
    Send,
    Zk,
    Icred,
}

impl TxKind {
    pub fn keyword(self) -> &'static str {
        match self {
            TxKind::Send => "send",
            TxKind::Zk => "zk",
            TxKind::Icred => "icred",
        }
    }

    pub fn arrow(self) -> &'static str {
        match self {
            TxKind::Send => "->",
            _ => "<->",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transmission {
    pub kind: TxKind,
    pub from: Term,
    pub to: Term,
    pub payload: Term,
    /// Optional phase label for reporting.
    pub phase: Option<String>,
}

impl Transmission {
    pub fn new(kind: TxKind, from: Term, to: Term, payload: Term) -> Self {
        Transmission { kind, from, to, payload, phase: None }
    }

    pub fn check(&self, model: &Model) -> Result<()> {
        for a in [&self.from, &self.to] {
            match a.item() {
                Some(i) if model.kind(i) == Kind::Identifier => {}
                _ => {
                    return Err(Error::BadTransmission(format!(
                        "address {} is not an identifier item",
                        model.show(a)
                    )))
                }
            }
        }
        let want = match self.kind {
            TxKind::Send => None,
            TxKind::Zk => Some(Op::Zk),
            TxKind::Icred => Some(Op::Icred),
        };
        if let Some(op) = want {
            if self.payload.op() != op {
                return Err(Error::BadTransmission(format!(
                    "{} session carries {}",
                    self.kind.keyword(),
                    model.show(&self.payload)
                )));
            }
        }
        Ok(())
    }

    /// The actor an address belongs to.
    pub fn owner(model: &Model, addr: &Term) -> Result<String> {
        let subject = addr.item().and_then(|i| model.subject_of(i));
        match subject {
            Some(s) if model.is_actor(s) => Ok(s.to_string()),
            _ => Err(Error::AddressNotOwned(model.show(addr))),
        }
    }
}

/// Per-actor knowledge bases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemState {
    pub kbs: BTreeMap<String, KnowledgeBase>,
    pub version: u64,
}

impl SystemState {
    pub fn new(model: &Model) -> Self {
        let kbs = model.actors.iter().map(|a| (a.clone(), KnowledgeBase::new(a.clone()))).collect();
        SystemState { kbs, version: 0 }
    }

    pub fn kb(&self, actor: &str) -> Result<&KnowledgeBase> {
        self.kbs.get(actor).ok_or_else(|| Error::UnknownActor(actor.to_string()))
    }

    pub fn kb_mut(&mut self, actor: &str) -> Result<&mut KnowledgeBase> {
        self.kbs.get_mut(actor).ok_or_else(|| Error::UnknownActor(actor.to_string()))
    }

    /// Union of the members' knowledge bases.
    pub fn coalition_kb<S: AsRef<str>>(&self, actors: &[S]) -> Result<KnowledgeBase> {
        let names: Vec<&str> = actors.iter().map(|a| a.as_ref()).collect();
        let mut kb = KnowledgeBase::new(names.join("+"));
        for a in names {
            kb.extend_from(self.kb(a)?);
        }
        Ok(kb)
    }

    pub fn is_subset(&self, other: &SystemState) -> bool {
        self.kbs
            .iter()
            .all(|(a, kb)| other.kbs.get(a).is_some_and(|o| kb.is_subset(o)))
    }
}

/// One evolution step.
pub fn evolve_step(model: &Model, state: &SystemState, t: &Transmission) -> Result<SystemState> {
    t.check(model)?;
    let mut next = state.clone();
    for addr in [&t.from, &t.to] {
        let owner = Transmission::owner(model, addr)?;
        let kb = next.kb_mut(&owner)?;
        kb.insert(t.from.clone());
        kb.insert(t.to.clone());
        kb.insert(t.payload.clone());
    }
    next.version += 1;
    Ok(next)
}

/// Items occurring in any knowledge base term, plus their property images.
pub fn determined_items(model: &Model, state: &SystemState) -> BTreeSet<Item> {
    let mut out = BTreeSet::new();
    for kb in state.kbs.values() {
        for t in &kb.terms {
            t.collect_items(&mut out);
        }
    }
    let images: Vec<Item> = out
        .iter()
        .flat_map(|&i| model.psi_images(i).into_iter().map(|(_, j)| j))
        .collect();
    out.extend(images);
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DeterminabilityOptions {
    /// Accept a determined item in any domain of the profile, not only the
    /// message item's own domain.
    pub any_domain: bool,
}

/// Per-item candidate sets; one alternative way of deriving a subterm.
type Product = BTreeMap<Item, BTreeSet<Item>>;

struct Search<'a, 'm> {
    model: &'m Model,
    an: &'a Analysis<'m>,
    view: &'a View,
    domains: BTreeMap<Item, BTreeSet<Item>>,
    memo: std::cell::RefCell<BTreeMap<Term, Vec<Product>>>,
}

const MAX_PRODUCTS: usize = 256;

impl<'a, 'm> Search<'a, 'm> {
    fn join(a: &[Product], b: &[Product]) -> Vec<Product> {
        let mut out = Vec::new();
        for p in a {
            for q in b {
                let mut r = p.clone();
                let mut ok = true;
                for (k, d) in q {
                    match r.get_mut(k) {
                        Some(e) => {
                            e.retain(|x| d.contains(x));
                            if e.is_empty() {
                                ok = false;
                                break;
                            }
                        }
                        None => {
                            r.insert(*k, d.clone());
                        }
                    }
                }
                if ok && !out.contains(&r) {
                    out.push(r);
                }
                if out.len() >= MAX_PRODUCTS {
                    return out;
                }
            }
        }
        out
    }

    /// Ways to choose images for the items of `s` with a derivable image.
    fn feasible(&self, s: &Term) -> Vec<Product> {
        if let Some(r) = self.memo.borrow().get(s) {
            return r.clone();
        }
        let r = self.feasible_uncached(s);
        self.memo.borrow_mut().insert(s.clone(), r.clone());
        r
    }

    fn feasible_uncached(&self, s: &Term) -> Vec<Product> {
        let m = self.model;
        if let Some(x) = s.item() {
            let d: BTreeSet<Item> = self.domains[&x]
                .iter()
                .copied()
                .filter(|&y| self.an.is_derivable(&m.atom_term(y)))
                .collect();
            return if d.is_empty() { Vec::new() } else { vec![BTreeMap::from([(x, d)])] };
        }
        let mut out: Vec<Product> = Vec::new();
        // Through a content-equivalent analysed message.
        for a in self.an.analysed() {
            if a.content() != s.content() {
                continue;
            }
            let mut p: Product = BTreeMap::new();
            let mut ok = true;
            for ((_, x), (_, y)) in s.leaves().into_iter().zip(a.leaves()) {
                let comp = self.an.component(y);
                let cur = p.entry(x).or_insert_with(|| self.domains[&x].clone());
                cur.retain(|&c| self.an.component(c) == comp);
                if cur.is_empty() {
                    ok = false;
                    break;
                }
            }
            if ok && !out.contains(&p) {
                out.push(p);
            }
        }
        // By construction from the children.
        let args = s.args();
        let children: Vec<Vec<Product>> = match s.op() {
            Op::Aka => {
                let n = Self::join(&self.feasible(&args[1]), &self.feasible(&args[3]));
                let first = Self::join(&self.feasible(&args[0]), &self.feasible(&m.pk(&args[2])));
                let second = Self::join(&self.feasible(&m.pk(&args[0])), &self.feasible(&args[2]));
                let mut keys = first;
                for p in second {
                    if !keys.contains(&p) {
                        keys.push(p);
                    }
                }
                vec![n, keys]
            }
            _ => args.iter().map(|c| self.feasible(c)).collect(),
        };
        let mut acc: Vec<Product> = vec![BTreeMap::new()];
        for c in &children {
            acc = Self::join(&acc, c);
            if acc.is_empty() {
                break;
            }
        }
        for p in acc {
            if !out.contains(&p) {
                out.push(p);
            }
        }
        out.truncate(MAX_PRODUCTS);
        out
    }

    /// Picks one image per item from a product, honouring pairwise
    /// association constraints.
    fn assign(&self, p: &Product, pairs: &[(Item, Item)]) -> Option<BTreeMap<Item, Item>> {
        let keys: Vec<Item> = p.keys().copied().collect();
        let mut chosen: BTreeMap<Item, Item> = BTreeMap::new();
        fn go(
            s: &Search<'_, '_>,
            p: &Product,
            keys: &[Item],
            k: usize,
            pairs: &[(Item, Item)],
            chosen: &mut BTreeMap<Item, Item>,
        ) -> bool {
            if k == keys.len() {
                return true;
            }
            let x = keys[k];
            for &y in &p[&x] {
                let ok = pairs.iter().all(|&(a, b)| {
                    let other = if a == x {
                        b
                    } else if b == x {
                        a
                    } else {
                        return true;
                    };
                    chosen.get(&other).is_none_or(|&z| s.view.assoc(y, z))
                });
                if ok {
                    chosen.insert(x, y);
                    if go(s, p, keys, k + 1, pairs, chosen) {
                        return true;
                    }
                    chosen.remove(&x);
                }
            }
            false
        }
        go(self, p, &keys, 0, pairs, &mut chosen).then_some(chosen)
    }
}

/// A witness `n` for determinability of `m` by `actor`, if any.
pub fn determinable(
    model: &Model,
    state: &SystemState,
    actor: &str,
    m: &Term,
    opts: DeterminabilityOptions,
) -> Result<Option<Term>> {
    let kb = state.kb(actor)?;
    let an = Analysis::new(model, kb);
    let view = View::of(&an);
    let determined = determined_items(model, state);
    Ok(determinable_with(model, &an, &view, &determined, m, opts))
}

/// As [`determinable`], reusing an analysis and view of the actor's KB.
pub fn determinable_with(
    model: &Model,
    an: &Analysis<'_>,
    view: &View,
    determined: &BTreeSet<Item>,
    m: &Term,
    opts: DeterminabilityOptions,
) -> Option<Term> {
    let items = m.items();
    let personal_determined = |c: &ContextRef| -> Vec<Item> {
        model
            .items_in(c)
            .into_iter()
            .filter(|i| matches!(model.kind(*i), Kind::Identifier | Kind::Data) && determined.contains(i))
            .collect()
    };
    let mut domains: BTreeMap<Item, BTreeSet<Item>> = BTreeMap::new();
    for &x in &items {
        if determined.contains(&x) {
            domains.insert(x, BTreeSet::from([x]));
            continue;
        }
        let ctx = model.ctx(x);
        let anchors: Vec<Item> = if ctx.is_nonpersonal() {
            Vec::new()
        } else if opts.any_domain {
            model
                .items()
                .filter(|&e| {
                    model.ctx(e).profile == ctx.profile
                        && matches!(model.kind(e), Kind::Identifier | Kind::Data)
                        && determined.contains(&e)
                })
                .collect()
        } else {
            personal_determined(ctx)
        };
        let d: BTreeSet<Item> = model
            .items()
            .filter(|&y| model.sigma(y) == model.sigma(x))
            .filter(|&y| anchors.iter().all(|&e| view.assoc(y, e)))
            .collect();
        domains.insert(x, d);
    }
    // Items sharing a context nobody has used yet must stay associable.
    let mut pairs = Vec::new();
    let v: Vec<Item> = items.iter().copied().collect();
    for (k, &a) in v.iter().enumerate() {
        for &b in &v[k + 1..] {
            let ca = model.ctx(a);
            if ca == model.ctx(b)
                && !ca.is_nonpersonal()
                && !determined.contains(&a)
                && !determined.contains(&b)
                && personal_determined(ca).is_empty()
            {
                pairs.push((a, b));
            }
        }
    }
    let search = Search { model, an, view, domains, memo: Default::default() };
    for p in search.feasible(m) {
        if let Some(f) = search.assign(&p, &pairs) {
            let n = model.substitute(m, &|i| f.get(&i).copied().unwrap_or(i));
            if an.is_derivable(&n) {
                return Some(n);
            }
        }
    }
    None
}

/// Validity of one transmission for one party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartyCheck {
    pub actor: String,
    pub required: Vec<Term>,
    pub witness: Option<Term>,
    /// Required messages that are not determinable on their own.
    pub missing: Vec<Term>,
}

impl PartyCheck {
    pub fn ok(&self) -> bool {
        self.witness.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxVerdict {
    pub initiator: PartyCheck,
    pub responder: PartyCheck,
}

impl TxVerdict {
    pub fn ok(&self) -> bool {
        self.initiator.ok() && self.responder.ok()
    }
}

/// Messages each party must determine for a transmission.
pub fn required_sets(model: &Model, t: &Transmission) -> (Vec<Term>, Vec<Term>) {
    let (a, b) = (t.from.clone(), t.to.clone());
    match t.kind {
        TxKind::Send => (vec![a, b, t.payload.clone()], Vec::new()),
        TxKind::Zk => {
            let args = t.payload.args();
            let rand = &args[3];
            let (np, nv) = if rand.op() == Op::Cat && rand.args().len() == 2 {
                (rand.args()[0].clone(), rand.args()[1].clone())
            } else {
                (rand.clone(), rand.clone())
            };
            (vec![a, b, args[0].clone(), np], vec![nv])
        }
        TxKind::Icred => {
            let args = t.payload.args();
            let n: Vec<Term> = if args[3].op() == Op::Cat && args[3].args().len() == 7 {
                args[3].args().to_vec()
            } else {
                vec![args[3].clone(); 7]
            };
            let pk = model.pk(&args[1]);
            (
                vec![a, b, pk.clone(), args[0].clone(), n[0].clone(), n[1].clone(), n[2].clone(), n[6].clone()],
                vec![pk, args[1].clone(), args[2].clone(), n[3].clone(), n[4].clone(), n[5].clone()],
            )
        }
    }
}

fn check_party(
    model: &Model,
    state: &SystemState,
    actor: &str,
    required: Vec<Term>,
    determined: &BTreeSet<Item>,
    opts: DeterminabilityOptions,
) -> Result<PartyCheck> {
    let kb = state.kb(actor)?;
    let an = Analysis::new(model, kb);
    let view = View::of(&an);
    let whole = model.cat(required.clone());
    let witness = determinable_with(model, &an, &view, determined, &whole, opts);
    let missing = if witness.is_some() {
        Vec::new()
    } else {
        let single: Vec<Term> = required
            .iter()
            .filter(|r| determinable_with(model, &an, &view, determined, r, opts).is_none())
            .cloned()
            .collect();
        if single.is_empty() {
            required.clone()
        } else {
            single
        }
    };
    Ok(PartyCheck { actor: actor.to_string(), required, witness, missing })
}

/// Checks one transmission in its pre-state.
pub fn transmission_valid(
    model: &Model,
    state: &SystemState,
    t: &Transmission,
    opts: DeterminabilityOptions,
) -> Result<TxVerdict> {
    t.check(model)?;
    let a = Transmission::owner(model, &t.from)?;
    let b = Transmission::owner(model, &t.to)?;
    let (ra, rb) = required_sets(model, t);
    let determined = determined_items(model, state);
    let initiator = check_party(model, state, &a, ra, &determined, opts)?;
    let responder = check_party(model, state, &b, rb, &determined, opts)?;
    Ok(TxVerdict { initiator, responder })
}

/// A step that failed validity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub step: usize,
    pub actor: String,
    pub missing: Vec<Term>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub checked: bool,
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first_invalid_step(&self) -> Option<usize> {
        self.violations.iter().map(|v| v.step).min()
    }

    pub fn render(&self, model: &Model) -> String {
        let mut s = String::new();
        for v in &self.violations {
            let ms: Vec<String> = v.missing.iter().map(|t| model.show(t)).collect();
            s.push_str(&format!("step {}: {} cannot determine {{{}}}\n", v.step, v.actor, ms.join(", ")));
        }
        s
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {} ({}): {} required messages not determinable", self.step, self.actor, self.missing.len())
    }
}

/// Folds the trace over the state. Steps are numbered from 1.
pub fn evolve(
    model: &Model,
    state: &SystemState,
    trace: &[Transmission],
    check: Option<DeterminabilityOptions>,
) -> Result<(SystemState, ValidityReport)> {
    let mut cur = state.clone();
    let mut report = ValidityReport { checked: check.is_some(), violations: Vec::new() };
    for (k, t) in trace.iter().enumerate() {
        if let Some(opts) = check {
            let v = transmission_valid(model, &cur, t, opts)?;
            for p in [v.initiator, v.responder] {
                if !p.ok() {
                    report.violations.push(Violation { step: k + 1, actor: p.actor, missing: p.missing });
                }
            }
        }
        cur = evolve_step(model, &cur, t)?;
    }
    Ok((cur, report))
}
