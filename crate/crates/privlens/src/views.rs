//! Associability and the view corresponding to a knowledge base.

use std::collections::{BTreeMap, BTreeSet};

use crate::deduce::{Analysis, KnowledgeBase};
use crate::term::{ContextRef, Item, Kind, Model};

/// Detectable items plus the associability partition over all personal items.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    pub detectable: BTreeSet<Item>,
    rep: Vec<u32>,
    personal: Vec<bool>,
}

struct Uf(Vec<u32>);

impl Uf {
    fn find(&mut self, x: u32) -> u32 {
        let mut r = x;
        while self.0[r as usize] != r {
            r = self.0[r as usize];
        }
        let mut c = x;
        while self.0[c as usize] != r {
            let n = self.0[c as usize];
            self.0[c as usize] = r;
            c = n;
        }
        r
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb) as usize] = ra.min(rb);
        }
    }
}

/// The associability partition for an analysed knowledge base, as a
/// representative per item (non-personal items are singletons).
pub fn associability(an: &Analysis<'_>) -> Vec<u32> {
    let m = an.model();
    let n = m.item_count() as u32;
    let mut uf = Uf((0..n).collect());
    // Known entities with the same information-layer entity.
    let mut by_sigma: BTreeMap<u32, Item> = BTreeMap::new();
    for &e in &an.kb().entities {
        if let Some(prev) = by_sigma.insert(m.sigma(e).0, e) {
            uf.union(prev.0, e.0);
        }
    }
    // Shared context.
    let mut by_ctx: BTreeMap<&ContextRef, Item> = BTreeMap::new();
    for i in m.personal_items() {
        if let Some(&first) = by_ctx.get(m.ctx(i)) {
            uf.union(first.0, i.0);
        } else {
            by_ctx.insert(m.ctx(i), i);
        }
    }
    // Identifiers linked by evidence.
    let mut by_comp: BTreeMap<u32, Item> = BTreeMap::new();
    for i in m.items().filter(|&i| m.kind(i) == Kind::Identifier) {
        let c = an.component(i);
        if let Some(&first) = by_comp.get(&c) {
            uf.union(first.0, i.0);
        } else {
            by_comp.insert(c, i);
        }
    }
    (0..n).map(|x| uf.find(x)).collect()
}

impl View {
    pub fn of(an: &Analysis<'_>) -> View {
        let m = an.model();
        let mut detectable = an.detectable_items();
        detectable.extend(an.kb().entities.iter().copied().filter(|&e| m.kind(e) == Kind::Entity));
        View {
            detectable,
            rep: associability(an),
            personal: m.items().map(|i| m.kind(i).is_personal()).collect(),
        }
    }

    pub fn of_kb(model: &Model, kb: &KnowledgeBase) -> View {
        View::of(&Analysis::new(model, kb))
    }

    pub fn is_detectable(&self, i: Item) -> bool {
        self.detectable.contains(&i)
    }

    /// Whether two personal items are associable.
    pub fn assoc(&self, a: Item, b: Item) -> bool {
        a == b || (self.personal[a.0 as usize] && self.personal[b.0 as usize] && self.rep[a.0 as usize] == self.rep[b.0 as usize])
    }

    /// Whether some item of `c1` and some item of `c2` are associable.
    pub fn ctx_associable(&self, model: &Model, c1: &ContextRef, c2: &ContextRef) -> bool {
        if c1 == c2 {
            return true;
        }
        let r1: BTreeSet<u32> = model
            .items_in(c1)
            .into_iter()
            .filter(|&i| self.personal[i.0 as usize])
            .map(|i| self.rep[i.0 as usize])
            .collect();
        model
            .items_in(c2)
            .into_iter()
            .filter(|&i| self.personal[i.0 as usize])
            .any(|i| r1.contains(&self.rep[i.0 as usize]))
    }

    /// Classes over personal items, each sorted, ordered by first member.
    pub fn classes(&self) -> Vec<Vec<Item>> {
        let mut by_rep: BTreeMap<u32, Vec<Item>> = BTreeMap::new();
        for (k, &r) in self.rep.iter().enumerate() {
            if self.personal[k] {
                by_rep.entry(r).or_default().push(Item(k as u32));
            }
        }
        let mut out: Vec<Vec<Item>> = by_rep.into_values().collect();
        out.sort();
        out
    }

    /// The class containing `i`.
    pub fn class_of(&self, i: Item) -> Vec<Item> {
        let r = self.rep[i.0 as usize];
        (0..self.rep.len())
            .filter(|&k| self.personal[k] && self.rep[k] == r)
            .map(|k| Item(k as u32))
            .collect()
    }

    /// True if every class of `self` lies within one class of `other` and
    /// every detectable item of `self` is detectable in `other`.
    pub fn contained_in(&self, other: &View) -> bool {
        self.detectable.is_subset(&other.detectable)
            && (0..self.rep.len()).all(|k| {
                !self.personal[k]
                    || other.rep[k] == other.rep[self.rep[k] as usize]
            })
    }

    /// Plain-text dump: detectable items then classes.
    pub fn render(&self, model: &Model) -> String {
        let mut s = String::from("detectable:\n");
        for &i in &self.detectable {
            s.push_str(&format!("  {}\n", model.item_name(i)));
        }
        s.push_str("classes:\n");
        for c in self.classes() {
            let names: Vec<String> = c.iter().map(|&i| model.item_name(i)).collect();
            s.push_str(&format!("  {{{}}}\n", names.join(", ")));
        }
        s
    }
}
