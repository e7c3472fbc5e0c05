//! Message terms: atoms, pairing and encryption, with the strand-space
//! subterm relation and a textual syntax shared by traces and the DSL.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Identifier of an atom (agent name, nonce name, key name).
pub type Name = Arc<str>;

/// A message term.
///
/// Children are reference counted so that knowledge sets and states can be
/// cloned cheaply during search. The derived ordering is the lexicographic
/// order used for deterministic tie-breaking.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Agent(Name),
    Nonce(Name),
    SymKey(Name),
    /// Public key of the named agent.
    PubKey(Name),
    /// Private key of the named agent.
    PrivKey(Name),
    Pair(Arc<Term>, Arc<Term>),
    /// Asymmetric encryption: `(key, payload)`.
    AsymEnc(Arc<Term>, Arc<Term>),
    /// Symmetric encryption: `(key, payload)`.
    SymEnc(Arc<Term>, Arc<Term>),
}

/// Sort of an atomic term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomSort {
    Agent,
    Nonce,
    SymKey,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TermError {
    #[error("`{0}` is not a key")]
    NotAKey(Term),
    #[error("ill-formed encryption key `{0}`")]
    BadKey(Term),
    #[error("duplicate public key for agents `{0}` and `{1}`")]
    SharedPublicKey(Name, Name),
}

impl Term {
    pub fn agent(name: &str) -> Term {
        Term::Agent(name.into())
    }

    pub fn nonce(name: &str) -> Term {
        Term::Nonce(name.into())
    }

    pub fn sym_key(name: &str) -> Term {
        Term::SymKey(name.into())
    }

    pub fn pk(agent: &str) -> Term {
        Term::PubKey(agent.into())
    }

    pub fn sk(agent: &str) -> Term {
        Term::PrivKey(agent.into())
    }

    pub fn pair(left: Term, right: Term) -> Term {
        Term::Pair(Arc::new(left), Arc::new(right))
    }

    pub fn aenc(key: Term, payload: Term) -> Term {
        Term::AsymEnc(Arc::new(key), Arc::new(payload))
    }

    pub fn senc(key: Term, payload: Term) -> Term {
        Term::SymEnc(Arc::new(key), Arc::new(payload))
    }

    /// Encrypts under `key`, choosing the constructor from the key's kind.
    pub fn encrypt(key: Term, payload: Term) -> Result<Term, TermError> {
        match key {
            Term::PubKey(_) | Term::PrivKey(_) => Ok(Term::aenc(key, payload)),
            Term::SymKey(_) => Ok(Term::senc(key, payload)),
            other => Err(TermError::BadKey(other)),
        }
    }

    /// Right-associated tuple. Panics on an empty list.
    pub fn tuple(items: impl IntoIterator<Item = Term>) -> Term {
        let mut items: Vec<Term> = items.into_iter().collect();
        let mut acc = items.pop().expect("tuple of zero terms");
        while let Some(t) = items.pop() {
            acc = Term::pair(t, acc);
        }
        acc
    }

    pub fn is_atom(&self) -> bool {
        !matches!(self, Term::Pair(..) | Term::AsymEnc(..) | Term::SymEnc(..))
    }

    pub fn is_key(&self) -> bool {
        matches!(self, Term::PubKey(_) | Term::PrivKey(_) | Term::SymKey(_))
    }

    pub fn atom_sort(&self) -> Option<AtomSort> {
        match self {
            Term::Agent(_) => Some(AtomSort::Agent),
            Term::Nonce(_) => Some(AtomSort::Nonce),
            Term::SymKey(_) => Some(AtomSort::SymKey),
            _ => None,
        }
    }

    /// Checks the key-kind invariants of both encryption constructors.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Term::Pair(l, r) => l.is_well_formed() && r.is_well_formed(),
            Term::AsymEnc(k, m) => {
                matches!(**k, Term::PubKey(_) | Term::PrivKey(_)) && m.is_well_formed()
            }
            Term::SymEnc(k, m) => matches!(**k, Term::SymKey(_)) && m.is_well_formed(),
            _ => true,
        }
    }

    /// Depth with atoms at depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Term::Pair(a, b) | Term::AsymEnc(a, b) | Term::SymEnc(a, b) => {
                1 + a.depth().max(b.depth())
            }
            _ => 0,
        }
    }

    /// Number of constructor and atom occurrences.
    pub fn size(&self) -> usize {
        match self {
            Term::Pair(a, b) | Term::AsymEnc(a, b) | Term::SymEnc(a, b) => 1 + a.size() + b.size(),
            _ => 1,
        }
    }

    /// Every atom occurrence, keys included, in left-to-right order.
    pub fn atoms(&self) -> Vec<Term> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<Term>) {
        match self {
            Term::Pair(a, b) | Term::AsymEnc(a, b) | Term::SymEnc(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            atom => out.push(atom.clone()),
        }
    }

    /// All syntactic subterms, including encryption keys.
    pub fn syntactic_subterms(&self) -> BTreeSet<Term> {
        let mut out = BTreeSet::new();
        self.collect_syntactic(&mut out);
        out
    }

    fn collect_syntactic(&self, out: &mut BTreeSet<Term>) {
        if out.insert(self.clone()) {
            if let Term::Pair(a, b) | Term::AsymEnc(a, b) | Term::SymEnc(a, b) = self {
                a.collect_syntactic(out);
                b.collect_syntactic(out);
            }
        }
    }

    /// Flattens a right-nested pair into its components.
    pub fn tuple_items(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        let mut cur = self;
        while let Term::Pair(a, b) = cur {
            out.push(&**a);
            cur = b;
        }
        out.push(cur);
        out
    }
}

/// Canonical form: pairs re-associated to the right, recursively.
pub fn normalize(t: &Term) -> Term {
    match t {
        Term::Pair(..) => {
            let mut items = Vec::new();
            flatten_pair(t, &mut items);
            Term::tuple(items)
        }
        Term::AsymEnc(k, m) => Term::aenc(normalize(k), normalize(m)),
        Term::SymEnc(k, m) => Term::senc(normalize(k), normalize(m)),
        atom => atom.clone(),
    }
}

fn flatten_pair(t: &Term, out: &mut Vec<Term>) {
    match t {
        Term::Pair(a, b) => {
            flatten_pair(a, out);
            flatten_pair(b, out);
        }
        other => out.push(normalize(other)),
    }
}

/// `m ⊑ t`: `m` occurs in `t` through pair components and encryption
/// payloads. An encryption key is a subterm only when it also occurs inside
/// the payload.
pub fn subterm(m: &Term, t: &Term) -> bool {
    if m == t {
        return true;
    }
    match t {
        Term::Pair(a, b) => subterm(m, a) || subterm(m, b),
        Term::AsymEnc(_, p) | Term::SymEnc(_, p) => subterm(m, p),
        _ => false,
    }
}

/// The set `{ m : m ⊑ t }`, built by decomposition rather than by testing
/// `subterm` against candidates.
pub fn parts(t: &Term) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    let mut stack = vec![t];
    while let Some(cur) = stack.pop() {
        if !out.insert(cur.clone()) {
            continue;
        }
        match cur {
            Term::Pair(a, b) => {
                stack.push(a);
                stack.push(b);
            }
            Term::AsymEnc(_, p) | Term::SymEnc(_, p) => stack.push(p),
            _ => {}
        }
    }
    out
}

/// Inverse key: public and private keys swap, symmetric keys are their own
/// inverse.
pub fn dual(k: &Term) -> Result<Term, TermError> {
    match k {
        Term::PubKey(a) => Ok(Term::PrivKey(a.clone())),
        Term::PrivKey(a) => Ok(Term::PubKey(a.clone())),
        Term::SymKey(_) => Ok(k.clone()),
        other => Err(TermError::NotAKey(other.clone())),
    }
}

/// Long-term keys of the agents in a run.
#[derive(Clone, Debug, Default)]
pub struct KeyTable {
    agents: BTreeMap<Name, (Term, Term)>,
    symmetric: BTreeMap<Name, Term>,
}

impl KeyTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an agent with its canonical key pair `PK(a)`, `SK(a)`.
    pub fn add_agent(&mut self, agent: &str) {
        self.agents
            .entry(agent.into())
            .or_insert_with(|| (Term::pk(agent), Term::sk(agent)));
    }

    /// Registers an agent with an explicit public key. Rejects a key already
    /// held by another agent.
    pub fn add_agent_with(&mut self, agent: &str, public: Term) -> Result<(), TermError> {
        for (other, (pk, _)) in &self.agents {
            if *pk == public && &**other != agent {
                return Err(TermError::SharedPublicKey(other.clone(), agent.into()));
            }
        }
        let private = dual(&public)?;
        self.agents.insert(agent.into(), (public, private));
        Ok(())
    }

    pub fn add_symmetric(&mut self, name: &str) {
        self.symmetric.insert(name.into(), Term::sym_key(name));
    }

    pub fn public_key(&self, agent: &str) -> Option<&Term> {
        self.agents.get(agent).map(|(pk, _)| pk)
    }

    pub fn private_key(&self, agent: &str) -> Option<&Term> {
        self.agents.get(agent).map(|(_, sk)| sk)
    }

    pub fn symmetric_key(&self, name: &str) -> Option<&Term> {
        self.symmetric.get(name)
    }

    /// Agent owning `public`, if any.
    pub fn owner_of(&self, public: &Term) -> Option<&Name> {
        self.agents
            .iter()
            .find(|(_, (pk, _))| pk == public)
            .map(|(a, _)| a)
    }

    pub fn agents(&self) -> impl Iterator<Item = &Name> {
        self.agents.keys()
    }
}

// ---------------------------------------------------------------------------
// Textual syntax
//
//   atom            A, Na, kab
//   PK(A), SK(A)    public / private key of agent A
//   {m}{K}          encryption under K (the braces around K are optional)
//   a, b, c         right-associated pairs; parentheses group
// ---------------------------------------------------------------------------

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Agent(n) | Term::Nonce(n) | Term::SymKey(n) => f.write_str(n),
            Term::PubKey(a) => write!(f, "PK({a})"),
            Term::PrivKey(a) => write!(f, "SK({a})"),
            Term::Pair(a, b) => {
                if matches!(**a, Term::Pair(..)) {
                    write!(f, "({a}), {b}")
                } else {
                    write!(f, "{a}, {b}")
                }
            }
            Term::AsymEnc(k, m) | Term::SymEnc(k, m) => write!(f, "{{{m}}}{{{k}}}"),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("term syntax error at column {column}: {message}")]
pub struct TermSyntaxError {
    pub column: usize,
    pub message: String,
}

/// Resolves the sort of a bare identifier while parsing.
pub trait SortEnv {
    fn sort_of(&self, name: &str) -> Option<AtomSort>;
}

impl SortEnv for HashMap<String, AtomSort> {
    fn sort_of(&self, name: &str) -> Option<AtomSort> {
        self.get(name).copied()
    }
}

impl SortEnv for BTreeMap<String, AtomSort> {
    fn sort_of(&self, name: &str) -> Option<AtomSort> {
        self.get(name).copied()
    }
}

impl<F: Fn(&str) -> Option<AtomSort>> SortEnv for F {
    fn sort_of(&self, name: &str) -> Option<AtomSort> {
        self(name)
    }
}

/// Builds a sort environment covering every atom of `terms`.
pub fn sort_env_of<'a>(terms: impl IntoIterator<Item = &'a Term>) -> HashMap<String, AtomSort> {
    let mut env = HashMap::new();
    for t in terms {
        for a in t.atoms() {
            if let Some(sort) = a.atom_sort() {
                if let Term::Agent(n) | Term::Nonce(n) | Term::SymKey(n) = &a {
                    env.insert(n.to_string(), sort);
                }
            }
        }
    }
    env
}

/// Parses a ground term. Bare identifiers are resolved through `env`;
/// `PK(x)` / `SK(x)` always denote agent keys.
pub fn parse_term(src: &str, env: &dyn SortEnv) -> Result<Term, TermSyntaxError> {
    let mut p = TermParser { src, pos: 0, env };
    let t = p.tuple()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.error("trailing input"));
    }
    Ok(t)
}

struct TermParser<'a> {
    src: &'a str,
    pos: usize,
    env: &'a dyn SortEnv,
}

impl TermParser<'_> {
    fn error(&self, message: impl Into<String>) -> TermSyntaxError {
        TermSyntaxError {
            column: self.pos + 1,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().unwrap().len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), TermSyntaxError> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn tuple(&mut self) -> Result<Term, TermSyntaxError> {
        let first = self.primary()?;
        if self.peek() == Some(',') {
            self.pos += 1;
            let rest = self.tuple()?;
            Ok(Term::pair(first, rest))
        } else {
            Ok(first)
        }
    }

    fn ident(&mut self) -> Result<&str, TermSyntaxError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '\''))
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error("expected identifier"));
        }
        self.pos += len;
        Ok(&self.src[start..start + len])
    }

    fn primary(&mut self) -> Result<Term, TermSyntaxError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let t = self.tuple()?;
                self.expect(')')?;
                Ok(t)
            }
            Some('{') => {
                self.pos += 1;
                let payload = self.tuple()?;
                self.expect('}')?;
                let key = if self.peek() == Some('{') {
                    self.pos += 1;
                    let k = self.primary()?;
                    self.expect('}')?;
                    k
                } else {
                    self.primary()?
                };
                let at = self.pos;
                Term::encrypt(key, payload).map_err(|e| TermSyntaxError {
                    column: at,
                    message: e.to_string(),
                })
            }
            Some(_) => {
                let start = self.pos;
                let name = self.ident()?.to_string();
                if (name == "PK" || name == "SK") && self.peek() == Some('(') {
                    self.pos += 1;
                    let agent = self.ident()?.to_string();
                    self.expect(')')?;
                    return Ok(if name == "PK" {
                        Term::pk(&agent)
                    } else {
                        Term::sk(&agent)
                    });
                }
                match self.env.sort_of(&name) {
                    Some(AtomSort::Agent) => Ok(Term::agent(&name)),
                    Some(AtomSort::Nonce) => Ok(Term::nonce(&name)),
                    Some(AtomSort::SymKey) => Ok(Term::sym_key(&name)),
                    None => {
                        self.pos = start;
                        Err(self.error(format!("unknown identifier `{name}`")))
                    }
                }
            }
            None => Err(self.error("unexpected end of input")),
        }
    }
}
