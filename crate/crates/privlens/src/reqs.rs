//! Requirement formulas over views: detectability, context associability and
//! domain-existential involvement.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::deduce::Analysis;
use crate::error::{Error, Result};
use crate::term::{ascii_dot, ContextRef, Item, Model, DOT};
use crate::trace::SystemState;
use crate::views::View;

/// A domain position in an associability atom: a name or a bound variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dom {
    Name(String),
    Var(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CtxPat {
    pub domain: Dom,
    pub profile: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemName {
    pub var: String,
    pub domain: String,
    pub profile: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Detect { coalition: Vec<String>, item: ItemName },
    DetectAny { coalition: Vec<String>, atom: String },
    Assoc { coalition: Vec<String>, left: CtxPat, right: CtxPat },
    Exists { var: String, body: Box<Formula> },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }
    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    /// Coalitions mentioned anywhere in the formula.
    pub fn coalitions(&self) -> BTreeSet<Vec<String>> {
        let mut out = BTreeSet::new();
        self.walk(&mut |f| match f {
            Formula::Detect { coalition, .. }
            | Formula::DetectAny { coalition, .. }
            | Formula::Assoc { coalition, .. } => {
                out.insert(coalition.clone());
            }
            _ => {}
        });
        out
    }

    fn walk(&self, f: &mut dyn FnMut(&Formula)) {
        f(self);
        match self {
            Formula::Exists { body, .. } | Formula::Not(body) => body.walk(f),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }

    fn prec(&self) -> u8 {
        match self {
            Formula::Exists { .. } => 0,
            Formula::Or(..) => 1,
            Formula::And(..) => 2,
            _ => 3,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let paren = self.prec() < min;
        if paren {
            write!(f, "(")?;
        }
        match self {
            Formula::True => write!(f, "true")?,
            Formula::False => write!(f, "false")?,
            Formula::Detect { coalition, item } => write!(
                f,
                "detect {{{}}} {}@{}.{}",
                coalition.join(","),
                item.var,
                ascii_dot(&item.domain),
                ascii_dot(&item.profile)
            )?,
            Formula::DetectAny { coalition, atom } => {
                write!(f, "detect_any {{{}}} {}", coalition.join(","), atom)?
            }
            Formula::Assoc { coalition, left, right } => {
                write!(f, "assoc {{{}}} {} {}", coalition.join(","), left, right)?
            }
            Formula::Exists { var, body } => {
                write!(f, "exists {}. ", var)?;
                body.fmt_prec(f, 0)?;
            }
            Formula::Not(x) => {
                write!(f, "!")?;
                x.fmt_prec(f, 3)?;
            }
            Formula::And(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, " & ")?;
                b.fmt_prec(f, 3)?;
            }
            Formula::Or(a, b) => {
                a.fmt_prec(f, 1)?;
                write!(f, " | ")?;
                b.fmt_prec(f, 2)?;
            }
        }
        if paren {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for CtxPat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match &self.domain {
            Dom::Name(n) => ascii_dot(n),
            Dom::Var(v) => v,
        };
        write!(f, "({},{})", d, ascii_dot(&self.profile))
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Requirement {
    pub name: String,
    pub label: Option<String>,
    pub formula: Formula,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RequirementSuite {
    pub requirements: Vec<Requirement>,
}

impl RequirementSuite {
    pub fn push(&mut self, r: Requirement) -> Result<()> {
        if self.get(&r.name).is_some() {
            return Err(Error::Duplicate(format!("requirement {}", r.name)));
        }
        self.requirements.push(r);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Requirement> {
        self.requirements.iter().find(|r| r.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.requirements.iter().map(|r| r.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.requirements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub holds: bool,
    /// Short human-readable justification (items, contexts or domain).
    pub witness: Vec<String>,
}

impl Verdict {
    fn new(holds: bool, witness: Vec<String>) -> Self {
        Verdict { holds, witness }
    }
}

/// Evaluates formulas against one state, caching coalition views.
pub struct Evaluator<'m> {
    model: &'m Model,
    state: &'m SystemState,
    views: RefCell<BTreeMap<Vec<String>, View>>,
}

fn dom_name(s: &str) -> &str {
    if s == "." {
        DOT
    } else {
        s
    }
}

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m Model, state: &'m SystemState) -> Self {
        Evaluator { model, state, views: RefCell::new(BTreeMap::new()) }
    }

    /// View of a coalition; members are sorted and deduplicated.
    pub fn view(&self, coalition: &[String]) -> Result<View> {
        let mut key: Vec<String> = coalition.to_vec();
        key.sort();
        key.dedup();
        if let Some(v) = self.views.borrow().get(&key) {
            return Ok(v.clone());
        }
        let kb = self.state.coalition_kb(&key)?;
        let v = View::of(&Analysis::new(self.model, &kb));
        self.views.borrow_mut().insert(key, v.clone());
        Ok(v)
    }

    fn item(&self, n: &ItemName) -> Result<Item> {
        self.model
            .lookup(&n.var, dom_name(&n.domain), dom_name(&n.profile))
            .ok_or_else(|| Error::UnknownName(format!("{}@{}.{}", n.var, n.domain, n.profile)))
    }

    fn ctx(&self, p: &CtxPat, env: &BTreeMap<String, String>) -> Result<Option<ContextRef>> {
        let (dom, bound) = match &p.domain {
            Dom::Name(d) => (dom_name(d).to_string(), false),
            Dom::Var(v) => (
                env.get(v).cloned().ok_or_else(|| Error::UnknownName(format!("unbound variable {}", v)))?,
                true,
            ),
        };
        let c = ContextRef::new(dom, dom_name(&p.profile));
        if self.model.items_in(&c).is_empty() {
            // A bound variable may range over domains without this profile.
            return if bound { Ok(None) } else { Err(Error::UnknownName(format!("context {}", p))) };
        }
        Ok(Some(c))
    }

    /// Checks that every name in the formula resolves.
    pub fn resolve(&self, f: &Formula) -> Result<()> {
        let mut err = None;
        let mut check = |g: &Formula| {
            if err.is_some() {
                return;
            }
            let r = match g {
                Formula::Detect { coalition, item } => self.coalition(coalition).and(self.item(item).map(|_| ())),
                Formula::DetectAny { coalition, atom } => self.coalition(coalition).and(
                    self.model.atom_id(atom).map(|_| ()).ok_or_else(|| Error::UnknownName(atom.clone())),
                ),
                Formula::Assoc { coalition, left, right } => self.coalition(coalition).and_then(|_| {
                    for p in [left, right] {
                        if let Dom::Name(_) = p.domain {
                            self.ctx(p, &BTreeMap::new())?;
                        }
                    }
                    Ok(())
                }),
                _ => Ok(()),
            };
            if let Err(e) = r {
                err = Some(e);
            }
        };
        f.walk(&mut check);
        err.map_or(Ok(()), Err)
    }

    fn coalition(&self, c: &[String]) -> Result<()> {
        if c.is_empty() {
            return Err(Error::UnknownName("empty coalition".into()));
        }
        for a in c {
            if !self.state.kbs.contains_key(a) {
                return Err(Error::UnknownActor(a.clone()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, f: &Formula) -> Result<Verdict> {
        self.resolve(f)?;
        self.eval_in(f, &mut BTreeMap::new())
    }

    fn eval_in(&self, f: &Formula, env: &mut BTreeMap<String, String>) -> Result<Verdict> {
        let m = self.model;
        Ok(match f {
            Formula::True => Verdict::new(true, vec![]),
            Formula::False => Verdict::new(false, vec![]),
            Formula::Detect { coalition, item } => {
                let i = self.item(item)?;
                let v = self.view(coalition)?;
                Verdict::new(v.is_detectable(i), vec![m.item_name(i)])
            }
            Formula::DetectAny { coalition, atom } => {
                let a = m.atom_id(atom).ok_or_else(|| Error::UnknownName(atom.clone()))?;
                let v = self.view(coalition)?;
                let hits: Vec<String> = m
                    .items()
                    .filter(|&i| m.sigma(i) == a && v.is_detectable(i))
                    .map(|i| m.item_name(i))
                    .collect();
                Verdict::new(!hits.is_empty(), hits)
            }
            Formula::Assoc { coalition, left, right } => {
                let (Some(c1), Some(c2)) = (self.ctx(left, env)?, self.ctx(right, env)?) else {
                    return Ok(Verdict::new(false, vec![]));
                };
                let v = self.view(coalition)?;
                Verdict::new(v.ctx_associable(m, &c1, &c2), vec![format!("{}~{}", c1, c2)])
            }
            Formula::Exists { var, body } => {
                let saved = env.get(var).cloned();
                let mut result = Verdict::new(false, vec![]);
                for d in &m.domains {
                    env.insert(var.clone(), d.clone());
                    let v = self.eval_in(body, env)?;
                    if v.holds {
                        let mut w = vec![format!("{}={}", var, ascii_dot(d))];
                        w.extend(v.witness);
                        result = Verdict::new(true, w);
                        break;
                    }
                }
                match saved {
                    Some(s) => env.insert(var.clone(), s),
                    None => env.remove(var),
                };
                result
            }
            Formula::Not(x) => {
                let v = self.eval_in(x, env)?;
                Verdict::new(!v.holds, v.witness)
            }
            Formula::And(a, b) => {
                let va = self.eval_in(a, env)?;
                if !va.holds {
                    return Ok(va);
                }
                let vb = self.eval_in(b, env)?;
                if !vb.holds {
                    return Ok(vb);
                }
                Verdict::new(true, [va.witness, vb.witness].concat())
            }
            Formula::Or(a, b) => {
                let va = self.eval_in(a, env)?;
                if va.holds {
                    return Ok(va);
                }
                let vb = self.eval_in(b, env)?;
                if vb.holds {
                    return Ok(vb);
                }
                Verdict::new(false, [va.witness, vb.witness].concat())
            }
        })
    }

    /// Evaluates every requirement in suite order.
    pub fn check_suite(&self, suite: &RequirementSuite) -> Result<Vec<(String, Verdict)>> {
        suite
            .requirements
            .iter()
            .map(|r| Ok((r.name.clone(), self.eval(&r.formula)?)))
            .collect()
    }
}

pub fn eval(model: &Model, state: &SystemState, f: &Formula) -> Result<Verdict> {
    Evaluator::new(model, state).eval(f)
}

pub fn check_suite(model: &Model, state: &SystemState, suite: &RequirementSuite) -> Result<Vec<(String, Verdict)>> {
    Evaluator::new(model, state).check_suite(suite)
}

// ---- formula syntax ----

struct Lexer {
    chars: Vec<char>,
    pos: usize,
    last_start: usize,
    line: usize,
    col0: usize,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Sym(char),
    End,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    is_ident_start(c) || c == '\'' || c == '>' || c == '@'
}

impl Lexer {
    fn err(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.line, col: self.col0 + at, msg: msg.into() }
    }

    fn peek(&mut self) -> (usize, Tok) {
        let save = self.pos;
        let t = self.next();
        let at = self.last_start;
        self.pos = save;
        (at, t)
    }

    fn next(&mut self) -> Tok {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
        self.last_start = self.pos;
        let Some(&c) = self.chars.get(self.pos) else { return Tok::End };
        if !is_ident_start(c) {
            self.pos += 1;
            return Tok::Sym(c);
        }
        // Dots belong to an identifier only after its `@`.
        let start = self.pos;
        let mut seen_at = false;
        while let Some(&d) = self.chars.get(self.pos) {
            if d == '@' {
                seen_at = true;
            }
            if is_ident_char(d) || (d == '.' && seen_at) {
                self.pos += 1;
            } else {
                break;
            }
        }
        Tok::Ident(self.chars[start..self.pos].iter().collect())
    }
}

struct Parser {
    lx: Lexer,
}

impl Parser {
    fn expect_sym(&mut self, c: char) -> Result<()> {
        let (at, t) = self.lx.peek();
        if t == Tok::Sym(c) {
            self.lx.next();
            Ok(())
        } else {
            Err(self.lx.err(at, format!("expected '{}'", c)))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        let (at, t) = self.lx.peek();
        match t {
            Tok::Ident(s) => {
                self.lx.next();
                Ok(s)
            }
            _ => Err(self.lx.err(at, format!("expected {}", what))),
        }
    }

    fn or(&mut self, bound: &BTreeSet<String>) -> Result<Formula> {
        let mut f = self.and(bound)?;
        while self.lx.peek().1 == Tok::Sym('|') {
            self.lx.next();
            let g = self.and(bound)?;
            f = Formula::or(f, g);
        }
        Ok(f)
    }

    fn and(&mut self, bound: &BTreeSet<String>) -> Result<Formula> {
        let mut f = self.unary(bound)?;
        while self.lx.peek().1 == Tok::Sym('&') {
            self.lx.next();
            let g = self.unary(bound)?;
            f = Formula::and(f, g);
        }
        Ok(f)
    }

    fn coalition(&mut self) -> Result<Vec<String>> {
        self.expect_sym('{')?;
        let mut out = vec![self.ident("actor name")?];
        while self.lx.peek().1 == Tok::Sym(',') {
            self.lx.next();
            out.push(self.ident("actor name")?);
        }
        self.expect_sym('}')?;
        Ok(out)
    }

    fn ctx(&mut self, bound: &BTreeSet<String>) -> Result<CtxPat> {
        self.expect_sym('(')?;
        let (at, t) = self.lx.peek();
        let d = match t {
            Tok::Sym('.') => {
                self.lx.next();
                ".".to_string()
            }
            Tok::Ident(_) => self.ident("domain")?,
            _ => return Err(self.lx.err(at, "expected domain")),
        };
        self.expect_sym(',')?;
        let (at, t) = self.lx.peek();
        let p = match t {
            Tok::Sym('.') => {
                self.lx.next();
                ".".to_string()
            }
            Tok::Ident(_) => self.ident("profile")?,
            _ => return Err(self.lx.err(at, "expected profile")),
        };
        self.expect_sym(')')?;
        let domain = if bound.contains(&d) { Dom::Var(d) } else { Dom::Name(dom_name(&d).to_string()) };
        Ok(CtxPat { domain, profile: dom_name(&p).to_string() })
    }

    fn unary(&mut self, bound: &BTreeSet<String>) -> Result<Formula> {
        let (at, t) = self.lx.peek();
        match t {
            Tok::Sym('!') => {
                self.lx.next();
                Ok(Formula::not(self.unary(bound)?))
            }
            Tok::Sym('(') => {
                self.lx.next();
                let f = self.or(bound)?;
                self.expect_sym(')')?;
                Ok(f)
            }
            Tok::Ident(w) => {
                self.lx.next();
                match w.as_str() {
                    "true" => Ok(Formula::True),
                    "false" => Ok(Formula::False),
                    "exists" => {
                        let (vat, _) = self.lx.peek();
                        let v = self.ident("variable")?;
                        if bound.contains(&v) {
                            return Err(self.lx.err(vat, format!("variable {} bound twice", v)));
                        }
                        self.expect_sym('.')?;
                        let mut b = bound.clone();
                        b.insert(v.clone());
                        let body = self.or(&b)?;
                        Ok(Formula::Exists { var: v, body: Box::new(body) })
                    }
                    "detect" => {
                        let coalition = self.coalition()?;
                        let (iat, _) = self.lx.peek();
                        let s = self.ident("item")?;
                        let (var, domain, profile) = crate::dsl::split_leaf(&s, None)
                            .ok_or_else(|| self.lx.err(iat, format!("bad item {}", s)))?;
                        let item = ItemName { var, domain, profile };
                        Ok(Formula::Detect { coalition, item })
                    }
                    "detect_any" => {
                        let coalition = self.coalition()?;
                        let atom = self.ident("atom name")?;
                        Ok(Formula::DetectAny { coalition, atom })
                    }
                    "assoc" => {
                        let coalition = self.coalition()?;
                        let left = self.ctx(bound)?;
                        let right = self.ctx(bound)?;
                        Ok(Formula::Assoc { coalition, left, right })
                    }
                    _ => Err(self.lx.err(at, format!("unknown keyword {}", w))),
                }
            }
            Tok::End => Err(self.lx.err(at, "unexpected end of formula")),
            Tok::Sym(c) => Err(self.lx.err(at, format!("unexpected '{}'", c))),
        }
    }
}

/// Parses a formula. `line`/`col` locate the text in its file for errors.
pub fn parse_formula(text: &str, line: usize, col: usize) -> Result<Formula> {
    let lx = Lexer { chars: text.chars().collect(), pos: 0, last_start: 0, line, col0: col };
    let mut p = Parser { lx };
    let f = p.or(&BTreeSet::new())?;
    let (at, t) = p.lx.peek();
    if t != Tok::End {
        return Err(p.lx.err(at, "trailing input"));
    }
    Ok(f)
}
