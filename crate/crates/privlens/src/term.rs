//! Context items, information atoms, terms and the information model.
//!
//! Terms are hash-consed per model. Every term carries its information-layer
//! image (for equivalence) and its contents label (for content equivalence),
//! both interned as plain integers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::error::{Error, Result};

/// The distinguished "no profile" / "no domain" marker.
pub const DOT: &str = "·";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Entity,
    Identifier,
    Data,
    NonPersonal,
}

impl Kind {
    pub fn is_personal(self) -> bool {
        self != Kind::NonPersonal
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Kind::Entity => "entity",
            Kind::Identifier => "identifier",
            Kind::Data => "data",
            Kind::NonPersonal => "nonpersonal",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Kind> {
        Some(match s {
            "entity" => Kind::Entity,
            "identifier" => Kind::Identifier,
            "data" => Kind::Data,
            "nonpersonal" => Kind::NonPersonal,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextRef {
    pub domain: String,
    pub profile: String,
}

impl ContextRef {
    pub fn new(domain: impl Into<String>, profile: impl Into<String>) -> Self {
        ContextRef { domain: domain.into(), profile: profile.into() }
    }

    pub fn is_nonpersonal(&self) -> bool {
        self.profile == DOT
    }
}

impl fmt::Display for ContextRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", ascii_dot(&self.domain), ascii_dot(&self.profile))
    }
}

pub(crate) fn ascii_dot(s: &str) -> &str {
    if s == DOT {
        "."
    } else {
        s
    }
}

/// Index of a context item in its model. Ids follow the sorted order of
/// (domain, profile, variable), so comparing ids compares items.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Item(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u32);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextItem {
    pub kind: Kind,
    pub var: String,
    pub ctx: ContextRef,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InfoAtom {
    pub name: String,
    pub kind: Kind,
    /// Entity the atom is related to; entities are their own subject.
    pub subject: Option<String>,
    pub class: ClassId,
}

#[derive(Clone, Debug, Default)]
pub struct Property {
    pub name: String,
    pub atoms: BTreeMap<AtomId, AtomId>,
    pub items: BTreeMap<Item, Item>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Atom,
    Pk,
    Cat,
    Hash,
    Senc,
    Aenc,
    Sign,
    Laenc,
    Aka,
    Cred,
    Zk,
    Icred,
}

impl Op {
    pub const COMPOSITE: [Op; 11] = [
        Op::Pk,
        Op::Cat,
        Op::Hash,
        Op::Senc,
        Op::Aenc,
        Op::Sign,
        Op::Laenc,
        Op::Aka,
        Op::Cred,
        Op::Zk,
        Op::Icred,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            Op::Atom => "atom",
            Op::Pk => "pk",
            Op::Cat => "cat",
            Op::Hash => "hash",
            Op::Senc => "senc",
            Op::Aenc => "aenc",
            Op::Sign => "sign",
            Op::Laenc => "laenc",
            Op::Aka => "aka",
            Op::Cred => "cred",
            Op::Zk => "zk",
            Op::Icred => "icred",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Op> {
        Op::COMPOSITE.iter().copied().find(|op| op.keyword() == s)
    }

    /// Fixed arity, or `None` for the variadic concatenation.
    pub fn arity(self) -> Option<usize> {
        match self {
            Op::Atom => Some(0),
            Op::Pk | Op::Hash => Some(1),
            Op::Senc | Op::Aenc | Op::Sign => Some(2),
            Op::Laenc => Some(3),
            Op::Aka | Op::Cred | Op::Zk | Op::Icred => Some(4),
            Op::Cat => None,
        }
    }
}

pub struct TermNode {
    id: u32,
    op: Op,
    item: Option<Item>,
    args: Box<[Term]>,
    content: u32,
    info: u32,
    depth: u32,
    size: u32,
}

/// An interned context-layer message. Equality is pointer equality.
#[derive(Clone)]
pub struct Term(Arc<TermNode>);

impl Term {
    pub fn id(&self) -> u32 {
        self.0.id
    }
    pub fn op(&self) -> Op {
        self.0.op
    }
    pub fn item(&self) -> Option<Item> {
        self.0.item
    }
    pub fn args(&self) -> &[Term] {
        &self.0.args
    }
    pub fn arg(&self, i: usize) -> &Term {
        &self.0.args[i]
    }
    /// Contents label; equal labels mean content equivalence.
    pub fn content(&self) -> u32 {
        self.0.content
    }
    /// Information-layer image; equal images mean equivalence.
    pub fn info(&self) -> u32 {
        self.0.info
    }
    pub fn depth(&self) -> u32 {
        self.0.depth
    }
    pub fn size(&self) -> u32 {
        self.0.size
    }
    pub fn is_atom(&self) -> bool {
        self.0.op == Op::Atom
    }
    pub fn is_empty_cat(&self) -> bool {
        self.0.op == Op::Cat && self.0.args.is_empty()
    }

    pub fn subterm_at(&self, path: &[usize]) -> Option<&Term> {
        let mut t = self;
        for &i in path {
            t = t.0.args.get(i)?;
        }
        Some(t)
    }

    /// All (path, subterm) pairs in preorder.
    pub fn subterms(&self) -> Vec<(Vec<usize>, Term)> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        fn go(t: &Term, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, Term)>) {
            out.push((path.clone(), t.clone()));
            for (i, a) in t.args().iter().enumerate() {
                path.push(i);
                go(a, path, out);
                path.pop();
            }
        }
        go(self, &mut path, &mut out);
        out
    }

    /// Leaf items with their paths, in preorder.
    pub fn leaves(&self) -> Vec<(Vec<usize>, Item)> {
        self.subterms()
            .into_iter()
            .filter_map(|(p, t)| t.item().map(|i| (p, i)))
            .collect()
    }

    /// Distinct items occurring in the term.
    pub fn items(&self) -> BTreeSet<Item> {
        let mut out = BTreeSet::new();
        self.collect_items(&mut out);
        out
    }

    pub fn collect_items(&self, out: &mut BTreeSet<Item>) {
        if let Some(i) = self.item() {
            out.insert(i);
        }
        for a in self.args() {
            a.collect_items(out);
        }
    }

    pub fn contains(&self, other: &Term) -> bool {
        self == other || self.args().iter().any(|a| a.contains(other))
    }

    pub fn contains_item(&self, item: Item) -> bool {
        self.item() == Some(item) || self.args().iter().any(|a| a.contains_item(item))
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}
impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.id.hash(state)
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        if self == other {
            return Ordering::Equal;
        }
        self.op()
            .cmp(&other.op())
            .then_with(|| self.item().cmp(&other.item()))
            .then_with(|| self.args().cmp(other.args()))
    }
}
impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.item() {
            Some(i) => write!(f, "#{}", i.0),
            None => {
                write!(f, "{}(", self.op().keyword())?;
                for (k, a) in self.args().iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{:?}", a)?;
                }
                write!(f, ")")
            }
        }
    }
}

type ShapeKey = (Op, u32, Box<[u32]>);

#[derive(Default)]
struct InternState {
    terms: HashMap<(Op, u32, Box<[u32]>), Term>,
    contents: HashMap<ShapeKey, u32>,
    infos: HashMap<ShapeKey, u32>,
}

/// Hash-consing table, shared behind a mutex.
#[derive(Default)]
struct Interner {
    state: Mutex<InternState>,
}

/// Information model: atoms, classes, context items, σ, τ and properties.
pub struct Model {
    pub domains: Vec<String>,
    pub actors: Vec<String>,
    atoms: Vec<InfoAtom>,
    atom_index: HashMap<String, AtomId>,
    classes: Vec<String>,
    items: Vec<ContextItem>,
    item_index: HashMap<(String, String, String), Item>,
    sigma: Vec<AtomId>,
    props: Vec<Property>,
    explicit_props: Vec<(usize, Item, Item)>,
    interner: Interner,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("atoms", &self.atoms.len())
            .field("items", &self.items.len())
            .field("actors", &self.actors)
            .finish()
    }
}

impl Model {
    pub fn atoms(&self) -> &[InfoAtom] {
        &self.atoms
    }
    pub fn atom(&self, a: AtomId) -> &InfoAtom {
        &self.atoms[a.0 as usize]
    }
    pub fn atom_id(&self, name: &str) -> Option<AtomId> {
        self.atom_index.get(name).copied()
    }
    pub fn class_name(&self, c: ClassId) -> &str {
        &self.classes[c.0 as usize]
    }
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
    pub fn items(&self) -> impl Iterator<Item = Item> + '_ {
        (0..self.items.len() as u32).map(Item)
    }
    pub fn item_count(&self) -> usize {
        self.items.len()
    }
    pub fn ctx_item(&self, i: Item) -> &ContextItem {
        &self.items[i.0 as usize]
    }
    pub fn kind(&self, i: Item) -> Kind {
        self.items[i.0 as usize].kind
    }
    pub fn ctx(&self, i: Item) -> &ContextRef {
        &self.items[i.0 as usize].ctx
    }
    pub fn sigma(&self, i: Item) -> AtomId {
        self.sigma[i.0 as usize]
    }
    pub fn class_of(&self, i: Item) -> ClassId {
        self.atom(self.sigma(i)).class
    }
    pub fn subject_of(&self, i: Item) -> Option<&str> {
        self.atom(self.sigma(i)).subject.as_deref()
    }
    pub fn properties(&self) -> &[Property] {
        &self.props
    }
    /// Property images declared item by item, as (property index, from, to).
    pub fn explicit_property_items(&self) -> &[(usize, Item, Item)] {
        &self.explicit_props
    }
    /// Atoms in each contents class, in declaration order.
    pub fn class_members(&self, c: ClassId) -> Vec<AtomId> {
        (0..self.atoms.len() as u32).map(AtomId).filter(|&a| self.atom(a).class == c).collect()
    }
    pub fn is_actor(&self, name: &str) -> bool {
        self.actors.iter().any(|a| a == name)
    }

    pub fn lookup(&self, var: &str, domain: &str, profile: &str) -> Option<Item> {
        self.item_index
            .get(&(var.to_string(), domain.to_string(), profile.to_string()))
            .copied()
    }

    /// Personal context items (entities, identifiers, data items).
    pub fn personal_items(&self) -> impl Iterator<Item = Item> + '_ {
        self.items().filter(|&i| self.kind(i).is_personal())
    }

    /// Context items sharing the given context.
    pub fn items_in(&self, ctx: &ContextRef) -> Vec<Item> {
        self.items().filter(|&i| self.ctx(i) == ctx).collect()
    }

    /// All distinct contexts of personal items, sorted.
    pub fn contexts(&self) -> Vec<ContextRef> {
        let set: BTreeSet<ContextRef> =
            self.personal_items().map(|i| self.ctx(i).clone()).collect();
        set.into_iter().collect()
    }

    /// Profile labels that occur in more than one non-· domain.
    pub fn shared_profiles(&self) -> Vec<String> {
        let mut doms: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
        for i in self.personal_items() {
            let c = self.ctx(i);
            if c.domain != DOT {
                doms.entry(c.profile.as_str()).or_default().insert(c.domain.as_str());
            }
        }
        doms.into_iter().filter(|(_, d)| d.len() > 1).map(|(p, _)| p.to_string()).collect()
    }

    /// ψ-images of an item, as (property index, image).
    pub fn psi_images(&self, i: Item) -> Vec<(usize, Item)> {
        self.props
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p.items.get(&i).map(|&j| (k, j)))
            .collect()
    }

    pub fn item_name(&self, i: Item) -> String {
        let it = self.ctx_item(i);
        format!("{}@{}.{}", it.var, ascii_dot(&it.ctx.domain), ascii_dot(&it.ctx.profile))
    }

    /// Renders a term in the scenario syntax.
    pub fn show(&self, t: &Term) -> String {
        let mut s = String::new();
        self.write_term(t, &mut s);
        s
    }

    fn write_term(&self, t: &Term, out: &mut String) {
        match t.item() {
            Some(i) => out.push_str(&self.item_name(i)),
            None => {
                out.push_str(t.op().keyword());
                out.push('(');
                for (k, a) in t.args().iter().enumerate() {
                    if k > 0 {
                        out.push_str(", ");
                    }
                    self.write_term(a, out);
                }
                out.push(')');
            }
        }
    }

    pub fn atom_term(&self, i: Item) -> Term {
        self.intern(Op::Atom, Some(i), Vec::new())
    }

    /// Builds a composite term; checks arity.
    pub fn mk(&self, op: Op, args: Vec<Term>) -> Result<Term> {
        if op == Op::Atom {
            return Err(Error::Arity { op: "atom".into(), expected: 0, got: args.len() });
        }
        if let Some(n) = op.arity() {
            if n != args.len() {
                return Err(Error::Arity { op: op.keyword().into(), expected: n, got: args.len() });
            }
        }
        Ok(self.intern(op, None, args))
    }

    /// Like [`Model::mk`] for call sites whose arity is fixed by construction.
    pub fn node(&self, op: Op, args: Vec<Term>) -> Term {
        debug_assert!(op.arity().is_none_or(|n| n == args.len()));
        self.intern(op, None, args)
    }

    pub fn pk(&self, t: &Term) -> Term {
        self.node(Op::Pk, vec![t.clone()])
    }
    pub fn cat(&self, ts: Vec<Term>) -> Term {
        self.node(Op::Cat, ts)
    }
    pub fn hash(&self, t: &Term) -> Term {
        self.node(Op::Hash, vec![t.clone()])
    }

    fn intern(&self, op: Op, item: Option<Item>, args: Vec<Term>) -> Term {
        let leaf = item.map_or(u32::MAX, |i| i.0);
        let key: (Op, u32, Box<[u32]>) = (op, leaf, args.iter().map(|a| a.id()).collect());
        let mut st = self.interner.state.lock();
        if let Some(t) = st.terms.get(&key) {
            return t.clone();
        }
        let (cleaf, ileaf) = match item {
            Some(i) => (self.class_of(i).0, self.sigma(i).0),
            None => (u32::MAX, u32::MAX),
        };
        let ckey: ShapeKey = (op, cleaf, args.iter().map(|a| a.content()).collect());
        let n = st.contents.len() as u32;
        let content = *st.contents.entry(ckey).or_insert(n);
        let ikey: ShapeKey = (op, ileaf, args.iter().map(|a| a.info()).collect());
        let n = st.infos.len() as u32;
        let info = *st.infos.entry(ikey).or_insert(n);
        let depth = args.iter().map(|a| a.depth() + 1).max().unwrap_or(0);
        let size = 1 + args.iter().map(|a| a.size()).sum::<u32>();
        let id = st.terms.len() as u32;
        let t = Term(Arc::new(TermNode {
            id,
            op,
            item,
            args: args.into_boxed_slice(),
            content,
            info,
            depth,
            size,
        }));
        st.terms.insert(key, t.clone());
        t
    }

    /// Rebuilds `t` with the subterm at `path` replaced.
    pub fn replace_at(&self, t: &Term, path: &[usize], with: &Term) -> Term {
        match path.split_first() {
            None => with.clone(),
            Some((&i, rest)) => {
                let mut args = t.args().to_vec();
                args[i] = self.replace_at(&args[i], rest, with);
                self.intern(t.op(), t.item(), args)
            }
        }
    }

    /// Applies an item substitution to every leaf.
    pub fn substitute(&self, t: &Term, sub: &dyn Fn(Item) -> Item) -> Term {
        match t.item() {
            Some(i) => {
                let j = sub(i);
                if j == i {
                    t.clone()
                } else {
                    self.atom_term(j)
                }
            }
            None => {
                let args: Vec<Term> = t.args().iter().map(|a| self.substitute(a, sub)).collect();
                if args.iter().zip(t.args()).all(|(a, b)| a == b) {
                    t.clone()
                } else {
                    self.intern(t.op(), None, args)
                }
            }
        }
    }

    /// σ-image of a term rendered with atom names.
    pub fn sigma_lift(&self, t: &Term) -> InfoTerm {
        match t.item() {
            Some(i) => InfoTerm::Atom(self.atom(self.sigma(i)).name.clone()),
            None => InfoTerm::Node(t.op(), t.args().iter().map(|a| self.sigma_lift(a)).collect()),
        }
    }

    /// Canonical contents label rendered with class names.
    pub fn content_class(&self, t: &Term) -> InfoTerm {
        match t.item() {
            Some(i) => InfoTerm::Atom(self.class_name(self.class_of(i)).to_string()),
            None => {
                InfoTerm::Node(t.op(), t.args().iter().map(|a| self.content_class(a)).collect())
            }
        }
    }

    pub fn equivalent(&self, a: &Term, b: &Term) -> bool {
        a.info() == b.info()
    }

    pub fn content_equivalent(&self, a: &Term, b: &Term) -> bool {
        a.content() == b.content()
    }

    /// Invariant violations; empty means the model is well formed.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut id_classes: HashMap<ClassId, &str> = HashMap::new();
        for a in &self.atoms {
            match a.kind {
                Kind::Entity => {
                    if a.subject.as_deref() != Some(a.name.as_str()) {
                        v.push(format!("entity {} must be its own subject", a.name));
                    }
                }
                Kind::Identifier | Kind::Data => match &a.subject {
                    None => v.push(format!("personal atom {} has no subject", a.name)),
                    Some(s) => match self.atom_id(s) {
                        Some(e) if self.atom(e).kind == Kind::Entity => {}
                        _ => v.push(format!("subject {} of {} is not an entity", s, a.name)),
                    },
                },
                Kind::NonPersonal => {
                    if a.subject.is_some() {
                        v.push(format!("non-personal atom {} has a subject", a.name));
                    }
                }
            }
            if a.kind == Kind::Identifier {
                if let Some(prev) = id_classes.insert(a.class, &a.name) {
                    v.push(format!(
                        "identifier contents not unique: {} and {} share class {}",
                        prev,
                        a.name,
                        self.class_name(a.class)
                    ));
                }
            }
        }
        for actor in &self.actors {
            match self.atom_id(actor) {
                Some(e) if self.atom(e).kind == Kind::Entity => {}
                _ => v.push(format!("actor {} is not an entity", actor)),
            }
        }
        let mut ctx_subject: BTreeMap<&ContextRef, (&str, String)> = BTreeMap::new();
        for i in self.items() {
            let it = self.ctx_item(i);
            let name = self.item_name(i);
            if it.kind == Kind::Entity && it.var != "ds" {
                v.push(format!("entity item {} must use the variable ds", name));
            }
            if (it.kind == Kind::NonPersonal) != it.ctx.is_nonpersonal() {
                v.push(format!("item {}: profile · is reserved for non-personal items", name));
            }
            if it.ctx.domain.is_empty() {
                v.push(format!("item {} has an empty domain", name));
            }
            if it.kind.is_personal() {
                let subj = self.subject_of(i).unwrap_or("");
                match ctx_subject.get(&it.ctx) {
                    Some((s, other)) if *s != subj => v.push(format!(
                        "items {} and {} share context {} but not their subject",
                        other, name, it.ctx
                    )),
                    Some(_) => {}
                    None => {
                        ctx_subject.insert(&it.ctx, (subj, name));
                    }
                }
            }
        }
        for p in &self.props {
            let mut img_class: Option<ClassId> = None;
            for (&o, &img) in &p.atoms {
                let (src, dst) = (self.atom(o), self.atom(img));
                if !matches!(src.kind, Kind::Identifier | Kind::Data) {
                    v.push(format!("{}: source {} is not an identifier or data atom", p.name, src.name));
                }
                if dst.kind != Kind::Data {
                    v.push(format!("{}: image {} is not a data atom", p.name, dst.name));
                }
                if src.subject != dst.subject {
                    v.push(format!("{}: image {} has a different subject than {}", p.name, dst.name, src.name));
                }
                match img_class {
                    Some(c) if c != dst.class => {
                        v.push(format!("{}: images do not share one contents class", p.name))
                    }
                    _ => img_class = Some(dst.class),
                }
            }
            for (&x, &y) in &p.items {
                if self.ctx(x) != self.ctx(y) {
                    v.push(format!(
                        "{}: image {} is not in the context of {}",
                        p.name,
                        self.item_name(y),
                        self.item_name(x)
                    ));
                }
                if p.atoms.get(&self.sigma(x)) != Some(&self.sigma(y)) {
                    v.push(format!(
                        "{}: σ does not commute for {} -> {}",
                        p.name,
                        self.item_name(x),
                        self.item_name(y)
                    ));
                }
            }
        }
        for &(k, x, _) in &self.explicit_props {
            if !self.props[k].atoms.contains_key(&self.sigma(x)) {
                v.push(format!("{}: {} is outside the property's domain", self.props[k].name, self.item_name(x)));
            }
        }
        v
    }

    /// Structural fingerprint of the declarations, used to compare models.
    pub fn fingerprint(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("domains {:?}\nactors {:?}\n", self.domains, self.actors));
        for a in &self.atoms {
            s.push_str(&format!(
                "atom {} {:?} {:?} {}\n",
                a.name,
                a.kind,
                a.subject,
                self.class_name(a.class)
            ));
        }
        for i in self.items() {
            s.push_str(&format!("item {} = {}\n", self.item_name(i), self.atom(self.sigma(i)).name));
        }
        for p in &self.props {
            for (x, y) in &p.items {
                s.push_str(&format!("prop {} {} {}\n", p.name, self.item_name(*x), self.item_name(*y)));
            }
        }
        s
    }
}

/// A σ- or τ-image of a term with symbolic leaves.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InfoTerm {
    Atom(String),
    Node(Op, Vec<InfoTerm>),
}

impl fmt::Display for InfoTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InfoTerm::Atom(s) => write!(f, "{}", s),
            InfoTerm::Node(op, args) => {
                write!(f, "{}(", op.keyword())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", a)?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Collects declarations and resolves them into a [`Model`].
#[derive(Clone, Debug, Default)]
pub struct ModelBuilder {
    domains: Vec<String>,
    actors: Vec<String>,
    atoms: Vec<(String, Kind, Option<String>)>,
    classes: Vec<(String, Vec<String>)>,
    items: Vec<(String, ContextRef, String)>,
    props: Vec<(String, String, String)>,
    prop_items: Vec<(String, (String, ContextRef), (String, ContextRef))>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn domain(&mut self, d: &str) -> &mut Self {
        self.domains.push(d.to_string());
        self
    }

    pub fn actor(&mut self, a: &str) -> &mut Self {
        self.actors.push(a.to_string());
        self
    }

    pub fn entity(&mut self, name: &str) -> &mut Self {
        self.atoms.push((name.to_string(), Kind::Entity, Some(name.to_string())));
        self
    }

    pub fn atom(&mut self, name: &str, kind: Kind, subject: Option<&str>) -> &mut Self {
        self.atoms.push((name.to_string(), kind, subject.map(str::to_string)));
        self
    }

    /// Puts the listed atoms into one contents class.
    pub fn class(&mut self, name: &str, atoms: &[&str]) -> &mut Self {
        self.classes.push((name.to_string(), atoms.iter().map(|s| s.to_string()).collect()));
        self
    }

    pub fn item(&mut self, var: &str, domain: &str, profile: &str, atom: &str) -> &mut Self {
        self.items.push((var.to_string(), ContextRef::new(domain, profile), atom.to_string()));
        self
    }

    pub fn property(&mut self, name: &str, from: &str, to: &str) -> &mut Self {
        self.props.push((name.to_string(), from.to_string(), to.to_string()));
        self
    }

    /// Declares a context-layer image explicitly instead of inducing it.
    pub fn property_item(
        &mut self,
        name: &str,
        from: (&str, &str, &str),
        to: (&str, &str, &str),
    ) -> &mut Self {
        self.prop_items.push((
            name.to_string(),
            (from.0.to_string(), ContextRef::new(from.1, from.2)),
            (to.0.to_string(), ContextRef::new(to.1, to.2)),
        ));
        self
    }

    pub fn build(&self) -> Result<Model> {
        let mut atoms = Vec::new();
        let mut atom_index = HashMap::new();
        for (name, kind, subject) in &self.atoms {
            if atom_index.contains_key(name) {
                return Err(Error::Duplicate(format!("atom {}", name)));
            }
            atom_index.insert(name.clone(), AtomId(atoms.len() as u32));
            atoms.push(InfoAtom {
                name: name.clone(),
                kind: *kind,
                subject: subject.clone(),
                class: ClassId(u32::MAX),
            });
        }
        let mut classes: Vec<String> = Vec::new();
        let mut class_index: HashMap<String, ClassId> = HashMap::new();
        for (cname, members) in &self.classes {
            let cid = *class_index.entry(cname.clone()).or_insert_with(|| {
                classes.push(cname.clone());
                ClassId(classes.len() as u32 - 1)
            });
            for m in members {
                let a = *atom_index.get(m).ok_or_else(|| Error::Unresolved(format!("atom {}", m)))?;
                let slot = &mut atoms[a.0 as usize].class;
                if slot.0 != u32::MAX && *slot != cid {
                    return Err(Error::Duplicate(format!("contents class for atom {}", m)));
                }
                *slot = cid;
            }
        }
        for a in atoms.iter_mut() {
            if a.class.0 == u32::MAX {
                let mut cname = a.name.clone();
                while class_index.contains_key(&cname) {
                    cname.push('\'');
                }
                classes.push(cname.clone());
                let cid = ClassId(classes.len() as u32 - 1);
                class_index.insert(cname, cid);
                a.class = cid;
            }
        }

        // Context items, including induced property images.
        let mut raw: BTreeMap<(String, String, String), AtomId> = BTreeMap::new();
        for (var, ctx, atom) in &self.items {
            let a = *atom_index.get(atom).ok_or_else(|| Error::Unresolved(format!("atom {}", atom)))?;
            let key = (ctx.domain.clone(), ctx.profile.clone(), var.clone());
            if raw.insert(key, a).is_some() {
                return Err(Error::Duplicate(format!(
                    "item {}@{}.{}",
                    var,
                    ascii_dot(&ctx.domain),
                    ascii_dot(&ctx.profile)
                )));
            }
        }
        let mut prop_names: Vec<String> = Vec::new();
        let mut prop_atoms: Vec<BTreeMap<AtomId, AtomId>> = Vec::new();
        let prop_slot = |name: &str, names: &mut Vec<String>, maps: &mut Vec<BTreeMap<AtomId, AtomId>>| {
            match names.iter().position(|n| n == name) {
                Some(k) => k,
                None => {
                    names.push(name.to_string());
                    maps.push(BTreeMap::new());
                    names.len() - 1
                }
            }
        };
        for (pname, from, to) in &self.props {
            let k = prop_slot(pname, &mut prop_names, &mut prop_atoms);
            let f = *atom_index.get(from).ok_or_else(|| Error::Unresolved(format!("atom {}", from)))?;
            let t = *atom_index.get(to).ok_or_else(|| Error::Unresolved(format!("atom {}", to)))?;
            if prop_atoms[k].insert(f, t).is_some() {
                return Err(Error::Duplicate(format!("{} on {}", pname, from)));
            }
        }
        for (pname, _, _) in &self.prop_items {
            prop_slot(pname, &mut prop_names, &mut prop_atoms);
        }
        let explicit_src: BTreeSet<(String, String, String, String)> = self
            .prop_items
            .iter()
            .map(|(p, (v, c), _)| (p.clone(), c.domain.clone(), c.profile.clone(), v.clone()))
            .collect();
        // Induce missing images: same context, variable named after the image atom.
        let existing: Vec<((String, String, String), AtomId)> =
            raw.iter().map(|(k, v)| (k.clone(), *v)).collect();
        for ((dom, prof, var), a) in &existing {
            for (k, map) in prop_atoms.iter().enumerate() {
                let Some(&img) = map.get(a) else { continue };
                if explicit_src.contains(&(prop_names[k].clone(), dom.clone(), prof.clone(), var.clone())) {
                    continue;
                }
                let found = raw
                    .iter()
                    .any(|((d, p, _), b)| d == dom && p == prof && *b == img);
                if !found {
                    let name = atoms[img.0 as usize].name.clone();
                    raw.entry((dom.clone(), prof.clone(), name)).or_insert(img);
                }
            }
        }
        let mut items = Vec::new();
        let mut sigma = Vec::new();
        let mut item_index = HashMap::new();
        for ((dom, prof, var), a) in &raw {
            let id = Item(items.len() as u32);
            item_index.insert((var.clone(), dom.clone(), prof.clone()), id);
            items.push(ContextItem {
                kind: atoms[a.0 as usize].kind,
                var: var.clone(),
                ctx: ContextRef::new(dom.clone(), prof.clone()),
            });
            sigma.push(*a);
        }
        let lookup = |var: &str, ctx: &ContextRef| -> Result<Item> {
            item_index
                .get(&(var.to_string(), ctx.domain.clone(), ctx.profile.clone()))
                .copied()
                .ok_or_else(|| {
                    Error::Unresolved(format!(
                        "item {}@{}.{}",
                        var,
                        ascii_dot(&ctx.domain),
                        ascii_dot(&ctx.profile)
                    ))
                })
        };
        let mut props: Vec<Property> = prop_names
            .iter()
            .zip(&prop_atoms)
            .map(|(n, m)| Property { name: n.clone(), atoms: m.clone(), items: BTreeMap::new() })
            .collect();
        let mut explicit_props = Vec::new();
        for (pname, (fv, fc), (tv, tc)) in &self.prop_items {
            let k = prop_names.iter().position(|n| n == pname).unwrap();
            let x = lookup(fv, fc)?;
            let y = lookup(tv, tc)?;
            if props[k].items.insert(x, y).is_some() {
                return Err(Error::Duplicate(format!("{} on {}@{}", pname, fv, fc.domain)));
            }
            explicit_props.push((k, x, y));
        }
        for (idx, it) in items.iter().enumerate() {
            let x = Item(idx as u32);
            for p in props.iter_mut() {
                if p.items.contains_key(&x) {
                    continue;
                }
                let Some(&img) = p.atoms.get(&sigma[idx]) else { continue };
                if let Some(y) = (0..items.len())
                    .find(|&j| items[j].ctx == it.ctx && sigma[j] == img)
                    .map(|j| Item(j as u32))
                {
                    p.items.insert(x, y);
                }
            }
        }
        let mut domains = self.domains.clone();
        for it in &items {
            if !domains.contains(&it.ctx.domain) {
                domains.push(it.ctx.domain.clone());
            }
        }
        Ok(Model {
            domains,
            actors: self.actors.clone(),
            atoms,
            atom_index,
            classes,
            items,
            item_index,
            sigma,
            props,
            explicit_props,
            interner: Interner::default(),
        })
    }
}
