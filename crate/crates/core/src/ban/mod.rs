//! BAN belief logic.
//!
//! Input is an already-idealized protocol, one item per line:
//!
//! ```text
//! -- comment
//! (1) A |= A<-Kas->S; B |= B<-Kbs->S      assumptions, numbered
//! 2. S -> A : {Na, A<-Kab->B}Kas           idealized messages
//! 4. B -> A : {Nb, A<-Kab->B}Kab from B    `from X` must name the sender
//! goal R2: B |= A<-Kab->B                  goals; `&` joins conjuncts
//! unjustified (8)                          assumptions to audit
//! ```
//!
//! Formula syntax: `P |= X` believes, `P |~ X` once said, `P <| X` sees,
//! `P |=> X` has jurisdiction over, `#(X)` fresh, `P<-K->Q` good key,
//! `{X, Y}K` encrypted, `(X, Y)` conjunction. `P<->Q` abbreviates
//! `P<-Kpq->Q` with the principals' lower-cased names in sorted order.

mod engine;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::term::Name;

pub use engine::{
    audit_goals, render_derivation, saturate, verify_derivation, Derivation, GoalReport,
    GoalVerdict, Rule, Saturation,
};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    /// Plain data such as a nonce.
    Data(Name),
    Believes(Name, Box<Formula>),
    OnceSaid(Name, Box<Formula>),
    Sees(Name, Box<Formula>),
    Fresh(Box<Formula>),
    Jurisdiction(Name, Box<Formula>),
    /// Good key `K` between two principals, stored in sorted order.
    GoodKey(Name, Name, Name),
    EncryptedWith(Box<Formula>, Name),
    /// Flattened, at least two conjuncts.
    Conjunction(Vec<Formula>),
}

impl Formula {
    pub fn data(n: &str) -> Formula {
        Formula::Data(n.into())
    }

    pub fn believes(p: &str, x: Formula) -> Formula {
        Formula::Believes(p.into(), Box::new(x))
    }

    pub fn once_said(p: &str, x: Formula) -> Formula {
        Formula::OnceSaid(p.into(), Box::new(x))
    }

    pub fn sees(p: &str, x: Formula) -> Formula {
        Formula::Sees(p.into(), Box::new(x))
    }

    pub fn fresh(x: Formula) -> Formula {
        Formula::Fresh(Box::new(x))
    }

    pub fn jurisdiction(p: &str, x: Formula) -> Formula {
        Formula::Jurisdiction(p.into(), Box::new(x))
    }

    pub fn good_key(key: &str, p: &str, q: &str) -> Formula {
        let (a, b) = if p <= q { (p, q) } else { (q, p) };
        Formula::GoodKey(key.into(), a.into(), b.into())
    }

    pub fn encrypted(x: Formula, key: &str) -> Formula {
        Formula::EncryptedWith(Box::new(x), key.into())
    }

    /// Flattens nested conjunctions; a single conjunct stands for itself.
    pub fn conj(items: impl IntoIterator<Item = Formula>) -> Formula {
        let mut flat = Vec::new();
        for f in items {
            match f {
                Formula::Conjunction(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Formula::Conjunction(flat)
        }
    }

    pub fn conjuncts(&self) -> &[Formula] {
        match self {
            Formula::Conjunction(items) => items,
            other => std::slice::from_ref(other),
        }
    }

    /// The principal a formula is about (`P` in `P |= X`, `P <| X`, ...).
    pub fn subject(&self) -> Option<&Name> {
        match self {
            Formula::Believes(p, _)
            | Formula::OnceSaid(p, _)
            | Formula::Sees(p, _)
            | Formula::Jurisdiction(p, _) => Some(p),
            _ => None,
        }
    }

    /// All subformulas, itself included.
    pub fn subformulas(&self, out: &mut BTreeSet<Formula>) {
        if !out.insert(self.clone()) {
            return;
        }
        match self {
            Formula::Believes(_, x)
            | Formula::OnceSaid(_, x)
            | Formula::Sees(_, x)
            | Formula::Fresh(x)
            | Formula::Jurisdiction(_, x)
            | Formula::EncryptedWith(x, _) => x.subformulas(out),
            Formula::Conjunction(items) => items.iter().for_each(|i| i.subformulas(out)),
            Formula::Data(_) | Formula::GoodKey(..) => {}
        }
    }

    /// Principals occurring anywhere in the formula.
    pub fn principals(&self, out: &mut BTreeSet<Name>) {
        match self {
            Formula::Believes(p, x)
            | Formula::OnceSaid(p, x)
            | Formula::Sees(p, x)
            | Formula::Jurisdiction(p, x) => {
                out.insert(p.clone());
                x.principals(out);
            }
            Formula::Fresh(x) | Formula::EncryptedWith(x, _) => x.principals(out),
            Formula::GoodKey(_, p, q) => {
                out.insert(p.clone());
                out.insert(q.clone());
            }
            Formula::Conjunction(items) => items.iter().for_each(|i| i.principals(out)),
            Formula::Data(_) => {}
        }
    }

    fn fmt_list(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Conjunction(items) => {
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
            other => write!(f, "{other}"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Data(n) => f.write_str(n),
            Formula::Believes(p, x) => write!(f, "{p} |= {x}"),
            Formula::OnceSaid(p, x) => write!(f, "{p} |~ {x}"),
            Formula::Sees(p, x) => write!(f, "{p} <| {x}"),
            Formula::Jurisdiction(p, x) => write!(f, "{p} |=> {x}"),
            Formula::Fresh(x) => {
                f.write_str("#(")?;
                x.fmt_list(f)?;
                f.write_str(")")
            }
            Formula::GoodKey(k, p, q) => write!(f, "{p}<-{k}->{q}"),
            Formula::EncryptedWith(x, k) => {
                f.write_str("{")?;
                x.fmt_list(f)?;
                write!(f, "}}{k}")
            }
            Formula::Conjunction(_) => {
                f.write_str("(")?;
                self.fmt_list(f)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Debug for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// A numbered assumption; one number may cover several formulas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assumption {
    pub index: u32,
    pub formula: Formula,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdealizedStep {
    pub index: u32,
    pub sender: Name,
    pub receiver: Name,
    pub content: Formula,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NamedGoal {
    pub name: String,
    pub formula: Formula,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Idealization {
    pub assumptions: Vec<Assumption>,
    pub steps: Vec<IdealizedStep>,
    pub goals: Vec<NamedGoal>,
    /// Assumption numbers the caller considers unjustified.
    pub unjustified: BTreeSet<u32>,
}

impl Idealization {
    /// Principals named in assumptions and steps.
    pub fn principals(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for a in &self.assumptions {
            a.formula.principals(&mut out);
        }
        for s in &self.steps {
            out.insert(s.sender.clone());
            out.insert(s.receiver.clone());
            s.content.principals(&mut out);
        }
        out
    }

    pub fn assumption_indices(&self) -> BTreeSet<u32> {
        self.assumptions.iter().map(|a| a.index).collect()
    }

    /// The same protocol restricted to the given assumption numbers.
    pub fn with_assumptions(&self, keep: &BTreeSet<u32>) -> Idealization {
        Idealization {
            assumptions: self
                .assumptions
                .iter()
                .filter(|a| keep.contains(&a.index))
                .cloned()
                .collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct BanSyntaxError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Believes,
    OnceSaid,
    Sees,
    Controls,
    KeyLeft,
    KeyRight,
    KeyBoth,
    Hash,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Amp,
}

fn lex(src: &str) -> Result<Vec<Tok>, String> {
    const SYMBOLS: [(&str, Tok); 13] = [
        ("|=>", Tok::Controls),
        ("|=", Tok::Believes),
        ("|~", Tok::OnceSaid),
        ("<|", Tok::Sees),
        ("<->", Tok::KeyBoth),
        ("<-", Tok::KeyLeft),
        ("->", Tok::KeyRight),
        ("#", Tok::Hash),
        ("(", Tok::LParen),
        (")", Tok::RParen),
        ("{", Tok::LBrace),
        ("}", Tok::RBrace),
        (",", Tok::Comma),
    ];
    let mut out = Vec::new();
    let mut rest = src;
    'outer: while !rest.is_empty() {
        let c = rest.chars().next().unwrap();
        if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c == '&' {
            out.push(Tok::Amp);
            rest = &rest[1..];
            continue;
        }
        for (sym, tok) in &SYMBOLS {
            if let Some(r) = rest.strip_prefix(sym) {
                out.push(tok.clone());
                rest = r;
                continue 'outer;
            }
        }
        if c.is_alphanumeric() || c == '_' {
            let len = rest
                .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '\''))
                .unwrap_or(rest.len());
            out.push(Tok::Ident(rest[..len].to_string()));
            rest = &rest[len..];
            continue;
        }
        return Err(format!("unexpected character `{c}`"));
    }
    Ok(out)
}

struct FormulaParser {
    toks: Vec<Tok>,
    pos: usize,
}

impl FormulaParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), String> {
        match self.bump() {
            Some(t) if t == want => Ok(()),
            other => Err(format!("expected {want:?}, found {other:?}")),
        }
    }

    fn ident(&mut self) -> Result<String, String> {
        match self.bump() {
            Some(Tok::Ident(s)) => Ok(s),
            other => Err(format!("expected a name, found {other:?}")),
        }
    }

    fn list(&mut self) -> Result<Formula, String> {
        let mut items = vec![self.formula()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            items.push(self.formula()?);
        }
        Ok(Formula::conj(items))
    }

    fn formula(&mut self) -> Result<Formula, String> {
        match self.peek().cloned() {
            Some(Tok::Hash) => {
                self.pos += 1;
                self.expect(Tok::LParen)?;
                let x = self.list()?;
                self.expect(Tok::RParen)?;
                Ok(Formula::fresh(x))
            }
            Some(Tok::LBrace) => {
                self.pos += 1;
                let x = self.list()?;
                self.expect(Tok::RBrace)?;
                let key = self.ident()?;
                Ok(Formula::encrypted(x, &key))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let x = self.list()?;
                self.expect(Tok::RParen)?;
                Ok(x)
            }
            Some(Tok::Ident(p)) => {
                self.pos += 1;
                let op = self.peek().cloned();
                match op {
                    Some(Tok::Believes) | Some(Tok::OnceSaid) | Some(Tok::Sees)
                    | Some(Tok::Controls) => {
                        self.pos += 1;
                        let x = self.formula()?;
                        Ok(match op.unwrap() {
                            Tok::Believes => Formula::believes(&p, x),
                            Tok::OnceSaid => Formula::once_said(&p, x),
                            Tok::Sees => Formula::sees(&p, x),
                            _ => Formula::jurisdiction(&p, x),
                        })
                    }
                    Some(Tok::KeyLeft) => {
                        self.pos += 1;
                        let key = self.ident()?;
                        self.expect(Tok::KeyRight)?;
                        let q = self.ident()?;
                        Ok(Formula::good_key(&key, &p, &q))
                    }
                    Some(Tok::KeyBoth) => {
                        self.pos += 1;
                        let q = self.ident()?;
                        let (a, b) = if p <= q { (&p, &q) } else { (&q, &p) };
                        let key = format!("K{}{}", a.to_lowercase(), b.to_lowercase());
                        Ok(Formula::good_key(&key, &p, &q))
                    }
                    _ => Ok(Formula::data(&p)),
                }
            }
            other => Err(format!("expected a formula, found {other:?}")),
        }
    }

    fn finish(&self) -> Result<(), String> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(format!("unexpected {t:?}")),
        }
    }

    /// Whether the remaining tokens start a new formula after an `Ident`
    /// (used to spot the `from X` suffix of idealized steps).
    fn at_from_suffix(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == "from")
            && matches!(self.peek_at(1), Some(Tok::Ident(_)))
            && self.peek_at(2).is_none()
    }
}

/// Parses a single formula; `&` at top level builds a conjunction.
pub fn parse_formula(src: &str) -> Result<Formula, String> {
    let mut p = FormulaParser {
        toks: lex(src)?,
        pos: 0,
    };
    let mut items = vec![p.formula()?];
    while p.peek() == Some(&Tok::Amp) {
        p.pos += 1;
        items.push(p.formula()?);
    }
    p.finish()?;
    Ok(Formula::conj(items))
}

/// Parses an idealization file.
pub fn parse_idealization(src: &str) -> Result<Idealization, BanSyntaxError> {
    let mut out = Idealization::default();
    for (n, raw) in src.lines().enumerate() {
        let line = raw.trim();
        let fail = |message: String| BanSyntaxError {
            line: n + 1,
            message,
        };
        if line.is_empty() || line.starts_with("--") {
            continue;
        }
        if let Some(rest) = line.strip_prefix('(') {
            let (num, body) = rest
                .split_once(')')
                .ok_or_else(|| fail("expected `(n)`".into()))?;
            let index: u32 = num
                .trim()
                .parse()
                .map_err(|_| fail(format!("bad assumption number `{num}`")))?;
            for part in body.split(';') {
                let formula = parse_formula(part).map_err(fail)?;
                out.assumptions.push(Assumption { index, formula });
            }
        } else if let Some(rest) = line.strip_prefix("goal ") {
            let (name, body) = rest
                .split_once(':')
                .ok_or_else(|| fail("expected `goal NAME: formula`".into()))?;
            let formula = parse_formula(body).map_err(fail)?;
            out.goals.push(NamedGoal {
                name: name.trim().to_string(),
                formula,
            });
        } else if let Some(rest) = line.strip_prefix("unjustified") {
            for item in rest.split(',') {
                let num = item.trim().trim_start_matches('(').trim_end_matches(')');
                let index: u32 = num
                    .parse()
                    .map_err(|_| fail(format!("bad assumption number `{num}`")))?;
                out.unjustified.insert(index);
            }
        } else if line.starts_with(|c: char| c.is_ascii_digit()) {
            let (num, rest) = line
                .split_once('.')
                .ok_or_else(|| fail("expected `n. P -> Q : message`".into()))?;
            let index: u32 = num
                .parse()
                .map_err(|_| fail(format!("bad step number `{num}`")))?;
            let (route, body) = rest
                .split_once(':')
                .ok_or_else(|| fail("expected `:`".into()))?;
            let (sender, receiver) = route
                .split_once("->")
                .ok_or_else(|| fail("expected `->`".into()))?;
            let (sender, receiver) = (sender.trim(), receiver.trim());
            let mut p = FormulaParser {
                toks: lex(body).map_err(fail)?,
                pos: 0,
            };
            let content = p.formula().map_err(fail)?;
            if p.at_from_suffix() {
                p.pos += 1;
                let from = p.ident().map_err(fail)?;
                if from != sender {
                    return Err(fail(format!(
                        "`from {from}` does not match sender {sender}"
                    )));
                }
            }
            p.finish().map_err(fail)?;
            out.steps.push(IdealizedStep {
                index,
                sender: sender.into(),
                receiver: receiver.into(),
                content,
            });
        } else {
            return Err(fail(format!("unrecognized line `{line}`")));
        }
    }
    for a in &out.unjustified {
        if !out.assumptions.iter().any(|x| x.index == *a) {
            return Err(BanSyntaxError {
                line: 0,
                message: format!("unjustified assumption ({a}) is not declared"),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn formula_syntax_round_trips() {
        for src in [
            "A |= A<-Kas->S",
            "A |= S |=> #(A<-Kab->B)",
            "S <| {Na, A<-Kab->B, #(A<-Kab->B), {A<-Kab->B}Kbs}Kas",
            "B |= A |~ (Nb, A<-Kab->B)",
            "A |= #(Na)",
        ] {
            let f = parse_formula(src).unwrap();
            assert_eq!(f.to_string(), src);
            assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
        }
    }

    #[test]
    fn good_key_is_symmetric() {
        assert_eq!(
            parse_formula("S<-Kas->A").unwrap(),
            parse_formula("A<-Kas->S").unwrap()
        );
        assert_eq!(
            parse_formula("B<->A").unwrap(),
            Formula::good_key("Kab", "A", "B")
        );
    }

    #[test]
    fn conjunctions_flatten() {
        let f = parse_formula("(Na, (Nb, Nc))").unwrap();
        assert_eq!(f.conjuncts().len(), 3);
        assert_eq!(parse_formula("(Na)").unwrap(), Formula::data("Na"));
    }

    #[test]
    fn fixture_parses() {
        let ideal = parse_idealization(fixtures::NSPK_SYM_BAN).unwrap();
        let indices: Vec<u32> = ideal.assumption_indices().into_iter().collect();
        assert_eq!(indices, (1..=8).collect::<Vec<_>>());
        assert_eq!(ideal.steps.len(), 4);
        assert_eq!(
            ideal.steps[0].content.to_string(),
            "{Na, A<-Kab->B, #(A<-Kab->B), {A<-Kab->B}Kbs}Kas"
        );
        assert_eq!(ideal.goals.len(), 3);
        assert!(ideal.unjustified.contains(&8));
    }

    #[test]
    fn mismatched_from_annotation_rejected() {
        let err = parse_idealization("4. B -> A : {Nb}Kab from A\n").unwrap_err();
        assert!(err.message.contains("from A"));
    }
}
