//! The `privlens-scenario v1` text format: parser and printer.
//!
//! A scenario is one or more files, each starting with the header line.
//! Sections may appear in any file and in any order; model sections are
//! resolved first, then initial knowledge, trace and requirements.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::reqs::{parse_formula, Requirement, RequirementSuite};
use crate::term::{Item, Kind, Model, ModelBuilder, Op, Term, DOT};
use crate::trace::{SystemState, Transmission, TxKind};

pub const HEADER: &str = "privlens-scenario v1";

/// File names loaded from a scenario directory, in order.
pub const FILES: [&str; 4] = ["model.pls", "initial.pls", "trace.pls", "requirements.pls"];

#[derive(Debug)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub model: Model,
    pub initial: SystemState,
    pub trace: Vec<Transmission>,
    pub suite: RequirementSuite,
}

/// A logical line: physical lines joined while parentheses are open.
/// `no` counts across all files of a scenario.
#[derive(Clone, Debug)]
struct Line {
    no: usize,
    text: String,
    /// (char offset in `text`, physical line, column of that offset)
    segs: Vec<(usize, usize, usize)>,
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, col, msg: msg.into() }
}

fn strip_comment(s: &str) -> &str {
    let mut in_str = false;
    for (k, c) in s.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '#' if !in_str => return &s[..k],
            _ => {}
        }
    }
    s
}

fn logical_lines(text: &str, base: usize) -> Result<Vec<Line>> {
    let mut out = Vec::new();
    let mut cur: Option<(Line, i64)> = None;
    for (k, raw) in text.lines().enumerate() {
        let no = base + k + 1;
        let body = strip_comment(raw).trim_end();
        let depth: i64 = body.chars().map(|c| match c {
            '(' => 1,
            ')' => -1,
            _ => 0,
        }).sum();
        match cur.take() {
            Some((mut l, d)) => {
                l.text.push(' ');
                let lead = body.chars().take_while(|c| c.is_whitespace()).count();
                l.segs.push((l.text.chars().count(), no, lead + 1));
                l.text.push_str(body.trim());
                let nd = d + depth;
                if nd > 0 {
                    cur = Some((l, nd));
                } else {
                    out.push(l);
                }
            }
            None => {
                if body.trim().is_empty() {
                    continue;
                }
                let l = Line { no, text: body.to_string(), segs: vec![(0, no, 1)] };
                if depth > 0 {
                    cur = Some((l, depth));
                } else {
                    out.push(l);
                }
            }
        }
    }
    if let Some((l, _)) = cur {
        return Err(perr(l.no, 1, "unbalanced parentheses"));
    }
    Ok(out)
}

fn col_of(line: &Line, sub: &str) -> usize {
    // `sub` is a slice of `line.text`.
    let off = sub.as_ptr() as usize - line.text.as_ptr() as usize;
    line.text[..off].chars().count() + 1
}

#[derive(Debug, Default)]
struct Sections {
    /// (section header, argument, lines)
    list: Vec<(String, Option<String>, usize, Vec<Line>)>,
    /// Segments of every logical line, by line number.
    segs: BTreeMap<usize, Vec<(usize, usize, usize)>>,
}

const SECTIONS: [&str; 12] = [
    "scenario",
    "domains",
    "actors",
    "entities",
    "info",
    "contents",
    "ctx",
    "props",
    "initial",
    "trace",
    "requirements",
    "note",
];

fn split_sections(text: &str, base: usize, out: &mut Sections) -> Result<()> {
    let lines = logical_lines(text, base)?;
    for l in &lines {
        out.segs.insert(l.no, l.segs.clone());
    }
    let mut it = lines.into_iter();
    match it.next() {
        Some(l) if l.text.trim() == HEADER => {}
        Some(l) => return Err(perr(l.no, 1, format!("expected header '{}'", HEADER))),
        None => return Err(perr(base + 1, 1, format!("expected header '{}'", HEADER))),
    }
    for l in it {
        let t = l.text.trim();
        if t.starts_with('[') {
            let Some(inner) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) else {
                return Err(perr(l.no, col_of(&l, t), "malformed section header"));
            };
            let mut words = inner.split_whitespace();
            let name = words.next().unwrap_or("").to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(perr(l.no, col_of(&l, t) + 1, format!("unknown section {}", name)));
            }
            let arg = words.next().map(str::to_string);
            if words.next().is_some() {
                return Err(perr(l.no, col_of(&l, t), "too many section arguments"));
            }
            match (name.as_str(), &arg) {
                ("initial", None) => return Err(perr(l.no, col_of(&l, t), "[initial] needs an actor")),
                ("initial", Some(_)) | ("ctx", _) => {}
                (_, Some(_)) => return Err(perr(l.no, col_of(&l, t), format!("[{}] takes no argument", name))),
                _ => {}
            }
            out.list.push((name, arg, l.no, Vec::new()));
        } else {
            match out.list.last_mut() {
                Some(s) => s.3.push(l),
                None => return Err(perr(l.no, 1, "content before the first section")),
            }
        }
    }
    Ok(())
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\'' || c == '>'
}

fn check_name(line: &Line, s: &str) -> Result<()> {
    if s.is_empty() || !s.chars().all(is_name_char) {
        return Err(perr(line.no, col_of(line, s), format!("invalid name '{}'", s)));
    }
    Ok(())
}

fn dot(s: &str) -> String {
    if s == "." || s.is_empty() {
        DOT.to_string()
    } else {
        s.to_string()
    }
}

/// Splits a leaf `var@dom.prof`. With a default domain, the short form
/// `var@prof` is accepted; `.` or an empty part stands for `·`.
pub fn split_leaf(s: &str, default_domain: Option<&str>) -> Option<(String, String, String)> {
    let (var, rest) = s.split_once('@')?;
    if var.is_empty() || !var.chars().all(is_name_char) {
        return None;
    }
    let (d, p) = if let Some(r) = rest.strip_prefix('.') {
        match r.strip_prefix('.') {
            Some(p) => (DOT.to_string(), dot(p)),
            None if r.is_empty() => {
                let dd = default_domain?;
                (dot(dd), DOT.to_string())
            },
            None => return None,
        }
    } else if let Some((d, p)) = rest.split_once('.') {
        (d.to_string(), dot(p))
    } else {
        match default_domain {
            Some(dd) if !rest.is_empty() => (dot(dd), rest.to_string()),
            _ => return None,
        }
    };
    if d.is_empty() || d.contains('.') || p.contains('.') {
        return None;
    }
    if !d.chars().all(|c| is_name_char(c) || d == DOT) || !p.chars().all(|c| is_name_char(c) || p == DOT) {
        return None;
    }
    Some((var.to_string(), d, p))
}

// ---- terms ----

struct TermParser<'a> {
    model: &'a Model,
    chars: Vec<char>,
    pos: usize,
    line: usize,
    col0: usize,
}

impl<'a> TermParser<'a> {
    fn err(&self, at: usize, msg: impl Into<String>) -> Error {
        perr(self.line, self.col0 + at, msg)
    }

    fn ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn word(&mut self) -> (usize, String) {
        self.ws();
        let start = self.pos;
        let mut seen_at = false;
        while let Some(&c) = self.chars.get(self.pos) {
            if c == '@' {
                seen_at = true;
            }
            if is_name_char(c) || c == '@' || (c == '.' && seen_at) {
                self.pos += 1;
            } else {
                break;
            }
        }
        (start, self.chars[start..self.pos].iter().collect())
    }

    fn eat(&mut self, c: char) -> bool {
        self.ws();
        if self.chars.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(self.pos, format!("expected '{}'", c)))
        }
    }

    fn args(&mut self, dom: Option<&str>) -> Result<Vec<Term>> {
        self.expect('(')?;
        let mut out = Vec::new();
        if self.eat(')') {
            return Ok(out);
        }
        loop {
            out.push(self.term(dom)?);
            if self.eat(')') {
                return Ok(out);
            }
            self.expect(',')?;
        }
    }

    fn term(&mut self, dom: Option<&str>) -> Result<Term> {
        let m = self.model;
        let (at, w) = self.word();
        if w.is_empty() {
            return Err(self.err(at, "expected a term"));
        }
        if w.contains('@') {
            let (var, d, p) = split_leaf(&w, dom).ok_or_else(|| self.err(at, format!("malformed item '{}'", w)))?;
            let i = m
                .lookup(&var, &d, &p)
                .ok_or_else(|| Error::Unresolved(format!("item {} (line {})", w, self.line)))?;
            if m.kind(i) == Kind::Entity {
                return Err(Error::EntityInTerm(m.item_name(i)));
            }
            return Ok(m.atom_term(i));
        }
        match w.as_str() {
            "empty" => return Ok(m.cat(Vec::new())),
            "at" => {
                self.expect('(')?;
                let (dat, d) = self.word();
                if d.is_empty() && !self.eat('.') {
                    return Err(self.err(dat, "expected a domain"));
                }
                let d = if d.is_empty() { DOT.to_string() } else { d };
                self.expect(',')?;
                let t = self.term(Some(&d))?;
                self.expect(')')?;
                return Ok(t);
            }
            "MS" => {
                let mut a = self.args(dom)?;
                if a.len() < 2 {
                    return Err(self.err(at, "MS needs a key and a message"));
                }
                let k = a.remove(0);
                let body = if a.len() == 1 { a.pop().unwrap() } else { m.cat(a) };
                let sig = m.node(Op::Sign, vec![k, body.clone()]);
                return Ok(m.cat(vec![body, sig]));
            }
            _ => {}
        }
        let Some(op) = Op::from_keyword(&w) else {
            return Err(self.err(at, format!("unknown constructor '{}'", w)));
        };
        let mut a = self.args(dom)?;
        if op == Op::Hash && a.len() != 1 {
            let inner = m.cat(std::mem::take(&mut a));
            a.push(inner);
        }
        m.mk(op, a).map_err(|e| match e {
            Error::Arity { op, expected, got } => {
                self.err(at, format!("{} expects {} arguments, got {}", op, expected, got))
            }
            e => e,
        })
    }

    fn finish(&mut self) -> Result<()> {
        self.ws();
        if self.pos < self.chars.len() {
            return Err(self.err(self.pos, "trailing input"));
        }
        Ok(())
    }
}

fn parse_term_at(model: &Model, text: &str, line: usize, col0: usize) -> Result<Term> {
    let mut p = TermParser { model, chars: text.chars().collect(), pos: 0, line, col0 };
    let t = p.term(None)?;
    p.finish()?;
    Ok(t)
}

/// Parses a single term against a model (used by queries).
pub fn parse_term(model: &Model, text: &str) -> Result<Term> {
    parse_term_at(model, text, 1, 1)
}

/// Resolves a single item `var@dom.prof`.
pub fn parse_item(model: &Model, text: &str) -> Result<Item> {
    let (v, d, p) = split_leaf(text.trim(), None).ok_or_else(|| perr(1, 1, format!("malformed item '{}'", text)))?;
    model.lookup(&v, &d, &p).ok_or_else(|| Error::Unresolved(format!("item {}", text)))
}

// ---- scenario ----

/// Parses a scenario from (file name, text) pairs.
pub fn parse_scenario(files: &[(&str, &str)]) -> Result<Scenario> {
    let mut secs = Sections::default();
    let mut bases = Vec::new();
    let mut base = 0;
    let res = files
        .iter()
        .try_for_each(|(name, text)| {
            bases.push((base, *name));
            let r = split_sections(text, base, &mut secs);
            base += text.lines().count().max(1);
            r
        })
        .and_then(|_| build(&secs));
    res.map_err(|e| match e {
        Error::Parse { line, col, msg } => {
            // Back to a physical position within its file.
            let (line, col) = match secs.segs.get(&line) {
                Some(segs) => {
                    let &(off, no, c) = segs.iter().rev().find(|s| s.0 < col).unwrap_or(&segs[0]);
                    (no, c + col.saturating_sub(off + 1))
                }
                None => (line, col),
            };
            let &(b, name) = bases.iter().rev().find(|(b, _)| *b < line).unwrap_or(&bases[0]);
            Error::Parse { line: line - b, col, msg: format!("{}: {}", name, msg) }
        }
        e => e,
    })
}

pub fn parse_str(text: &str) -> Result<Scenario> {
    parse_scenario(&[("<input>", text)])
}

/// Loads `model.pls`, `initial.pls`, `trace.pls` and `requirements.pls`
/// from a directory (missing files are skipped), or a single file.
pub fn load(path: &Path) -> Result<Scenario> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.display().to_string(), msg: e.to_string() })
    };
    let mut texts: Vec<(String, String)> = Vec::new();
    if path.is_dir() {
        for f in FILES {
            let p = path.join(f);
            if p.exists() {
                texts.push((f.to_string(), read(&p)?));
            }
        }
        if texts.is_empty() {
            return Err(Error::Io { path: path.display().to_string(), msg: "no scenario files".into() });
        }
    } else {
        texts.push((path.display().to_string(), read(path)?));
    }
    let refs: Vec<(&str, &str)> = texts.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let mut sc = parse_scenario(&refs)?;
    if sc.name.is_empty() {
        sc.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    }
    Ok(sc)
}

fn words(l: &Line) -> Vec<&str> {
    l.text.split_whitespace().collect()
}

fn build(secs: &Sections) -> Result<Scenario> {
    let mut b = ModelBuilder::new();
    let mut name = String::new();
    let mut description = String::new();
    let by = |n: &'static str| secs.list.iter().filter(move |s| s.0 == n);

    for (_, _, _, lines) in by("scenario") {
        for l in lines {
            let Some((k, v)) = l.text.split_once('=') else {
                return Err(perr(l.no, 1, "expected key = value"));
            };
            let v = v.trim().trim_matches('"').to_string();
            match k.trim() {
                "name" => name = v,
                "description" => description = v,
                other => return Err(perr(l.no, col_of(l, k.trim_start()), format!("unknown key {}", other))),
            }
        }
    }
    for (_, _, _, lines) in by("domains") {
        for l in lines {
            for w in words(l) {
                check_name(l, w)?;
                b.domain(w);
            }
        }
    }
    for (_, _, _, lines) in by("actors") {
        for l in lines {
            for w in words(l) {
                check_name(l, w)?;
                b.actor(w);
            }
        }
    }
    // Atom declarations keep file order across [entities] and [info].
    for (sec, _, _, lines) in secs.list.iter().filter(|s| s.0 == "entities" || s.0 == "info") {
        for l in lines {
            let ws = words(l);
            if sec == "entities" {
                for w in ws {
                    check_name(l, w)?;
                    b.entity(w);
                }
                continue;
            }
            if ws.len() < 2 || ws.len() > 3 {
                return Err(perr(l.no, 1, "expected: name kind [subject]"));
            }
            check_name(l, ws[0])?;
            let kind = Kind::from_keyword(ws[1])
                .ok_or_else(|| perr(l.no, col_of(l, ws[1]), format!("unknown kind {}", ws[1])))?;
            match kind {
                Kind::Entity => {
                    if ws.len() == 3 && ws[2] != ws[0] {
                        return Err(perr(l.no, col_of(l, ws[2]), "an entity is its own subject"));
                    }
                    b.entity(ws[0]);
                }
                _ => {
                    if let Some(s) = ws.get(2) {
                        check_name(l, s)?;
                    }
                    b.atom(ws[0], kind, ws.get(2).copied());
                }
            }
        }
    }
    for (_, _, _, lines) in by("contents") {
        for l in lines {
            let Some((c, rest)) = l.text.split_once(':') else {
                return Err(perr(l.no, 1, "expected class: atom..."));
            };
            let c = c.trim();
            check_name(l, c)?;
            let members: Vec<&str> = rest.split_whitespace().collect();
            for m in &members {
                check_name(l, m)?;
            }
            b.class(c, &members);
        }
    }
    for (_, arg, _, lines) in by("ctx") {
        for l in lines {
            let Some((lhs, rhs)) = l.text.split_once('=') else {
                return Err(perr(l.no, 1, "expected item = atom"));
            };
            let lhs_t = lhs.trim();
            let (v, d, p) = split_leaf(lhs_t, arg.as_deref())
                .ok_or_else(|| perr(l.no, col_of(l, lhs.trim_start()), format!("malformed item '{}'", lhs_t)))?;
            let atom = rhs.trim();
            check_name(l, atom)?;
            b.item(&v, &d, &p, atom);
        }
    }
    for (_, _, _, lines) in by("props") {
        for l in lines {
            let Some((pn, rest)) = l.text.split_once(':') else {
                return Err(perr(l.no, 1, "expected name: from -> to"));
            };
            let pn = pn.trim();
            check_name(l, pn)?;
            let Some((from, to)) = rest.split_once("->") else {
                return Err(perr(l.no, col_of(l, rest.trim_start()), "expected '->'"));
            };
            let (from, to) = (from.trim(), to.trim());
            if from.contains('@') || to.contains('@') {
                let f = split_leaf(from, None).ok_or_else(|| perr(l.no, col_of(l, from), "malformed item"))?;
                let t = split_leaf(to, None).ok_or_else(|| perr(l.no, col_of(l, to), "malformed item"))?;
                b.property_item(pn, (&f.0, &f.1, &f.2), (&t.0, &t.1, &t.2));
            } else {
                check_name(l, from)?;
                check_name(l, to)?;
                b.property(pn, from, to);
            }
        }
    }
    let model = b.build()?;
    let problems = model.validate();
    if !problems.is_empty() {
        return Err(Error::ModelInvalid(problems));
    }

    let mut initial = SystemState::new(&model);
    for (_, arg, hdr, lines) in by("initial") {
        let actor = arg.as_deref().unwrap();
        if !model.is_actor(actor) {
            let _ = hdr;
            return Err(Error::UnknownActor(actor.to_string()));
        }
        for l in lines {
            let text = l.text.trim();
            let col = col_of(l, text);
            // A bare entity item is an entity element of the knowledge base.
            if let Some((v, d, p)) = split_leaf(text, None) {
                if let Some(i) = model.lookup(&v, &d, &p) {
                    if model.kind(i) == Kind::Entity {
                        initial.kb_mut(actor)?.insert_entity(i);
                        continue;
                    }
                }
            }
            let t = parse_term_at(&model, text, l.no, col)?;
            initial.kb_mut(actor)?.insert(t);
        }
    }

    let mut trace = Vec::new();
    for (_, _, _, lines) in by("trace") {
        let mut phase: Option<String> = None;
        for l in lines {
            let text = l.text.trim();
            if let Some(p) = text.strip_prefix("phase ") {
                let p = p.trim();
                check_name(l, p)?;
                phase = Some(p.to_string());
                continue;
            }
            let Some((kw, rest)) = text.split_once(char::is_whitespace) else {
                return Err(perr(l.no, col_of(l, text), "expected a transmission"));
            };
            let kind = match kw {
                "send" => TxKind::Send,
                "zk" => TxKind::Zk,
                "icred" => TxKind::Icred,
                _ => return Err(perr(l.no, col_of(l, text), format!("unknown transmission '{}'", kw))),
            };
            let Some((addrs, payload)) = rest.split_once(':') else {
                return Err(perr(l.no, col_of(l, rest), "expected ':' before the message"));
            };
            let Some((a, bb)) = addrs.split_once(kind.arrow()) else {
                return Err(perr(l.no, col_of(l, addrs), format!("expected '{}'", kind.arrow())));
            };
            let from = parse_term_at(&model, a.trim(), l.no, col_of(l, a.trim_start()))?;
            let to = parse_term_at(&model, bb.trim(), l.no, col_of(l, bb.trim_start()))?;
            let body = parse_term_at(&model, payload.trim(), l.no, col_of(l, payload.trim_start()))?;
            let mut t = Transmission::new(kind, from, to, body);
            t.phase = phase.clone();
            t.check(&model)?;
            trace.push(t);
        }
    }

    let mut suite = RequirementSuite::default();
    for (_, _, _, lines) in by("requirements") {
        for l in lines {
            let text = l.text.trim_start();
            let Some((head, body)) = split_req_head(text) else {
                return Err(perr(l.no, col_of(l, text), "expected NAME [\"label\"]: formula"));
            };
            let (rname, label) = head;
            check_name(l, rname)?;
            let f = parse_formula(body, l.no, col_of(l, body))?;
            suite.push(Requirement { name: rname.to_string(), label: label.map(str::to_string), formula: f })?;
        }
    }
    Ok(Scenario { name, description, model, initial, trace, suite })
}

/// Splits `NAME "label": body` into its parts.
fn split_req_head(text: &str) -> Option<((&str, Option<&str>), &str)> {
    let name_end = text.find(|c: char| !is_name_char(c))?;
    let name = &text[..name_end];
    let mut rest = text[name_end..].trim_start();
    let mut label = None;
    if let Some(r) = rest.strip_prefix('"') {
        let close = r.find('"')?;
        label = Some(&r[..close]);
        rest = r[close + 1..].trim_start();
    }
    let body = rest.strip_prefix(':')?;
    let body = body.trim_start();
    if name.is_empty() {
        return None;
    }
    Some(((name, label), body))
}

// ---- printing ----

/// Renders a scenario as a single file in canonical form.
pub fn print_scenario(sc: &Scenario) -> String {
    let m = &sc.model;
    let mut s = String::new();
    let _ = writeln!(s, "{}", HEADER);
    if !sc.name.is_empty() || !sc.description.is_empty() {
        let _ = writeln!(s, "\n[scenario]");
        if !sc.name.is_empty() {
            let _ = writeln!(s, "name = \"{}\"", sc.name);
        }
        if !sc.description.is_empty() {
            let _ = writeln!(s, "description = \"{}\"", sc.description);
        }
    }
    let _ = writeln!(s, "\n[domains]");
    let _ = writeln!(s, "{}", m.domains.iter().filter(|d| *d != DOT).cloned().collect::<Vec<_>>().join(" "));
    let _ = writeln!(s, "\n[actors]");
    let _ = writeln!(s, "{}", m.actors.join(" "));
    let _ = writeln!(s, "\n[info]");
    for a in m.atoms() {
        match (&a.kind, &a.subject) {
            (Kind::Entity, _) => {
                let _ = writeln!(s, "{} entity", a.name);
            }
            (k, Some(sub)) => {
                let _ = writeln!(s, "{} {} {}", a.name, k.keyword(), sub);
            }
            (k, None) => {
                let _ = writeln!(s, "{} {}", a.name, k.keyword());
            }
        }
    }
    let _ = writeln!(s, "\n[contents]");
    for c in 0..m.class_count() as u32 {
        let c = crate::term::ClassId(c);
        let members = m.class_members(c);
        let cname = m.class_name(c);
        if members.len() == 1 && m.atom(members[0]).name == cname {
            continue;
        }
        let names: Vec<&str> = members.iter().map(|&a| m.atom(a).name.as_str()).collect();
        let _ = writeln!(s, "{}: {}", cname, names.join(" "));
    }
    let _ = writeln!(s, "\n[ctx]");
    for i in m.items() {
        let _ = writeln!(s, "{} = {}", m.item_name(i), m.atom(m.sigma(i)).name);
    }
    let _ = writeln!(s, "\n[props]");
    for p in m.properties() {
        for (&f, &t) in &p.atoms {
            let _ = writeln!(s, "{}: {} -> {}", p.name, m.atom(f).name, m.atom(t).name);
        }
    }
    for &(k, f, t) in m.explicit_property_items() {
        let _ = writeln!(s, "{}: {} -> {}", m.properties()[k].name, m.item_name(f), m.item_name(t));
    }
    for (actor, kb) in &sc.initial.kbs {
        let _ = writeln!(s, "\n[initial {}]", actor);
        for &e in &kb.entities {
            let _ = writeln!(s, "{}", m.item_name(e));
        }
        for t in &kb.terms {
            let _ = writeln!(s, "{}", m.show(t));
        }
    }
    let _ = writeln!(s, "\n[trace]");
    let mut phase: Option<&String> = None;
    for t in &sc.trace {
        if t.phase.as_ref() != phase {
            if let Some(p) = &t.phase {
                let _ = writeln!(s, "phase {}", p);
            }
            phase = t.phase.as_ref();
        }
        let _ = writeln!(
            s,
            "{} {} {} {} : {}",
            t.kind.keyword(),
            m.show(&t.from),
            t.kind.arrow(),
            m.show(&t.to),
            m.show(&t.payload)
        );
    }
    let _ = writeln!(s, "\n[requirements]");
    for r in &sc.suite.requirements {
        match &r.label {
            Some(l) => {
                let _ = writeln!(s, "{} \"{}\": {}", r.name, l, r.formula);
            }
            None => {
                let _ = writeln!(s, "{}: {}", r.name, r.formula);
            }
        }
    }
    s
}

/// Canonical text of the initial state and trace, for comparisons.
pub fn state_digest(model: &Model, state: &SystemState) -> BTreeMap<String, Vec<String>> {
    state
        .kbs
        .iter()
        .map(|(a, kb)| {
            let mut v: Vec<String> = kb.entities.iter().map(|&e| model.item_name(e)).collect();
            v.extend(kb.terms.iter().map(|t| model.show(t)));
            (a.clone(), v)
        })
        .collect()
}
