//! Casper-style protocol descriptions.
//!
//! The grammar is a small subset of Casper: `#Free variables`,
//! `#Protocol description`, `#Specification`, `#Intruder Information` and
//! `#System`. Lines starting with `--` are comments.

mod check;
mod parser;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;

use indexmap::IndexMap;

use crate::term::{Name, Term};

pub use check::{check_executability, ExecutabilityError};
pub use parser::{parse, DslError, DslErrorKind};

/// Sort of a free variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Agent,
    Nonce,
    PublicKey,
    SymmetricKey,
}

impl Sort {
    pub fn keyword(self) -> &'static str {
        match self {
            Sort::Agent => "Agent",
            Sort::Nonce => "Nonce",
            Sort::PublicKey => "PublicKey",
            Sort::SymmetricKey => "SymmetricKey",
        }
    }

    fn from_keyword(s: &str) -> Option<Sort> {
        Some(match s {
            "Agent" => Sort::Agent,
            "Nonce" => Sort::Nonce,
            "PublicKey" => Sort::PublicKey,
            "SymmetricKey" => Sort::SymmetricKey,
            _ => return None,
        })
    }
}

/// A message pattern over free variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Pattern {
    Var(String),
    /// `PK(X)` for an agent variable `X`.
    PubKeyOf(String),
    /// `SK(X)` for an agent variable `X`.
    PrivKeyOf(String),
    Pair(Box<Pattern>, Box<Pattern>),
    AsymEnc(Box<Pattern>, Box<Pattern>),
    SymEnc(Box<Pattern>, Box<Pattern>),
}

impl Pattern {
    /// Variables in left-to-right order of first occurrence.
    pub fn variables(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.visit_vars(&mut |v| {
            if !out.contains(&v) {
                out.push(v);
            }
        });
        out
    }

    fn visit_vars<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Pattern::Var(v) | Pattern::PubKeyOf(v) | Pattern::PrivKeyOf(v) => f(v),
            Pattern::Pair(a, b) | Pattern::AsymEnc(a, b) | Pattern::SymEnc(a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    pub fn mentions(&self, var: &str) -> bool {
        let mut found = false;
        self.visit_vars(&mut |v| found |= v == var);
        found
    }

    /// Grounds the pattern. Returns `None` if a variable is unbound or bound
    /// to a term of the wrong shape for its position.
    pub fn instantiate(&self, bindings: &Bindings) -> Option<Term> {
        Some(match self {
            Pattern::Var(v) => bindings.get(v.as_str())?.clone(),
            Pattern::PubKeyOf(v) => match bindings.get(v.as_str())? {
                Term::Agent(a) => Term::PubKey(a.clone()),
                _ => return None,
            },
            Pattern::PrivKeyOf(v) => match bindings.get(v.as_str())? {
                Term::Agent(a) => Term::PrivKey(a.clone()),
                _ => return None,
            },
            Pattern::Pair(a, b) => Term::pair(a.instantiate(bindings)?, b.instantiate(bindings)?),
            Pattern::AsymEnc(k, m) => {
                let key = k.instantiate(bindings)?;
                if !matches!(key, Term::PubKey(_) | Term::PrivKey(_)) {
                    return None;
                }
                Term::aenc(key, m.instantiate(bindings)?)
            }
            Pattern::SymEnc(k, m) => {
                let key = k.instantiate(bindings)?;
                if !matches!(key, Term::SymKey(_)) {
                    return None;
                }
                Term::senc(key, m.instantiate(bindings)?)
            }
        })
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Var(v) => f.write_str(v),
            Pattern::PubKeyOf(v) => write!(f, "PK({v})"),
            Pattern::PrivKeyOf(v) => write!(f, "SK({v})"),
            Pattern::Pair(a, b) => {
                if matches!(**a, Pattern::Pair(..)) {
                    write!(f, "({a}), {b}")
                } else {
                    write!(f, "{a}, {b}")
                }
            }
            Pattern::AsymEnc(k, m) | Pattern::SymEnc(k, m) => write!(f, "{{{m}}}{{{k}}}"),
        }
    }
}

/// Variable name to ground term.
pub type Bindings = BTreeMap<String, Term>;

/// `0. -> R : x, y`: values handed to role `R` by the environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvironmentInput {
    pub receiver: String,
    pub variables: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageStep {
    pub index: u32,
    pub sender: String,
    pub receiver: String,
    pub pattern: Pattern,
}

impl fmt::Display for MessageStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}. {} -> {} : {}",
            self.index, self.sender, self.receiver, self.pattern
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Goal {
    /// `Secret(owner, value, [peers])`.
    Secret {
        owner: String,
        value: String,
        peers: Vec<String>,
    },
    /// `Agreement(initiator, responder, [data])`: whenever a responder run
    /// completes apparently with the initiator, the initiator ran with that
    /// responder on the same data.
    Agreement {
        initiator: String,
        responder: String,
        data: Vec<String>,
    },
}

impl Goal {
    pub fn variables(&self) -> Vec<&str> {
        match self {
            Goal::Secret {
                owner,
                value,
                peers,
            } => std::iter::once(owner.as_str())
                .chain(std::iter::once(value.as_str()))
                .chain(peers.iter().map(String::as_str))
                .collect(),
            Goal::Agreement {
                initiator,
                responder,
                data,
            } => [initiator.as_str(), responder.as_str()]
                .into_iter()
                .chain(data.iter().map(String::as_str))
                .collect(),
        }
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Goal::Secret {
                owner,
                value,
                peers,
            } => {
                write!(f, "Secret({owner}, {value}, [{}])", peers.join(", "))
            }
            Goal::Agreement {
                initiator,
                responder,
                data,
            } => write!(
                f,
                "Agreement({initiator}, {responder}, [{}])",
                data.join(", ")
            ),
        }
    }
}

/// One `#System` line: `Role(agent) x count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemEntry {
    pub role: String,
    pub agent: Name,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolSpec {
    pub free_variables: IndexMap<String, Sort>,
    pub environment: Option<EnvironmentInput>,
    pub steps: Vec<MessageStep>,
    pub goals: Vec<Goal>,
    pub intruder: Name,
    pub intruder_knowledge: Vec<Term>,
    pub system: Vec<SystemEntry>,
}

impl ProtocolSpec {
    pub fn sort_of(&self, var: &str) -> Option<Sort> {
        self.free_variables.get(var).copied()
    }

    /// Agent variables that send or receive, in order of first appearance.
    pub fn roles(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        let names = self.environment.iter().map(|e| e.receiver.as_str()).chain(
            self.steps
                .iter()
                .flat_map(|s| [s.sender.as_str(), s.receiver.as_str()]),
        );
        for r in names {
            if !out.contains(&r) {
                out.push(r);
            }
        }
        out
    }

    /// The role that sends the first message.
    pub fn initiator(&self) -> Option<&str> {
        self.steps.first().map(|s| s.sender.as_str())
    }

    /// Steps in which `role` participates, in protocol order.
    pub fn role_steps(&self, role: &str) -> Vec<&MessageStep> {
        self.steps
            .iter()
            .filter(|s| s.sender == role || s.receiver == role)
            .collect()
    }

    /// The role generating a nonce or key variable: the sender of the first
    /// step that mentions it.
    pub fn originator(&self, var: &str) -> Option<&str> {
        match self.sort_of(var)? {
            Sort::Nonce | Sort::SymmetricKey => self
                .steps
                .iter()
                .find(|s| s.pattern.mentions(var))
                .map(|s| s.sender.as_str()),
            _ => None,
        }
    }

    /// Variables `role` generates freshly.
    pub fn fresh_variables(&self, role: &str) -> Vec<&str> {
        self.free_variables
            .keys()
            .map(String::as_str)
            .filter(|v| self.originator(v) == Some(role))
            .collect()
    }

    /// Variables the environment hands to `role` before it starts.
    pub fn environment_variables(&self, role: &str) -> Vec<&str> {
        match &self.environment {
            Some(env) if env.receiver == role => env.variables.iter().map(String::as_str).collect(),
            _ => Vec::new(),
        }
    }

    /// Concrete agent names: everyone in `#System` plus the intruder.
    pub fn agents(&self) -> Vec<Name> {
        let mut out: Vec<Name> = Vec::new();
        for e in &self.system {
            if !out.contains(&e.agent) {
                out.push(e.agent.clone());
            }
        }
        if !out.contains(&self.intruder) {
            out.push(self.intruder.clone());
        }
        out
    }
}

impl fmt::Display for ProtocolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "#Free variables")?;
        let vars: Vec<(&String, &Sort)> = self.free_variables.iter().collect();
        let mut i = 0;
        while i < vars.len() {
            let sort = *vars[i].1;
            let mut j = i;
            while j < vars.len() && *vars[j].1 == sort {
                j += 1;
            }
            let names: Vec<&str> = vars[i..j].iter().map(|(n, _)| n.as_str()).collect();
            writeln!(f, "{} : {}", names.join(", "), sort.keyword())?;
            i = j;
        }
        writeln!(f)?;
        writeln!(f, "#Protocol description")?;
        if let Some(env) = &self.environment {
            writeln!(f, "0. -> {} : {}", env.receiver, env.variables.join(", "))?;
        }
        for s in &self.steps {
            writeln!(f, "{s}")?;
        }
        writeln!(f)?;
        writeln!(f, "#Specification")?;
        for g in &self.goals {
            writeln!(f, "{g}")?;
        }
        writeln!(f)?;
        writeln!(f, "#Intruder Information")?;
        writeln!(f, "Intruder = {}", self.intruder)?;
        let known: Vec<String> = self
            .intruder_knowledge
            .iter()
            .map(|t| t.to_string())
            .collect();
        writeln!(f, "IntruderKnowledge = {{{}}}", known.join(", "))?;
        writeln!(f)?;
        writeln!(f, "#System")?;
        for e in &self.system {
            if e.count == 1 {
                writeln!(f, "{}({})", e.role, e.agent)?;
            } else {
                writeln!(f, "{}({}) x {}", e.role, e.agent, e.count)?;
            }
        }
        Ok(())
    }
}

/// A spec that passed the executability check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckedSpec(ProtocolSpec);

impl CheckedSpec {
    pub fn into_inner(self) -> ProtocolSpec {
        self.0
    }
}

impl Deref for CheckedSpec {
    type Target = ProtocolSpec;

    fn deref(&self) -> &ProtocolSpec {
        &self.0
    }
}

/// Parses and checks in one go.
pub fn load(source: &str) -> Result<CheckedSpec, LoadError> {
    let spec = parse(source)?;
    Ok(check_executability(&spec)?)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Parse(#[from] DslError),
    #[error(transparent)]
    Inexecutable(#[from] ExecutabilityError),
}
