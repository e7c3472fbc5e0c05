//! Strand spaces: bundles of regular and penetrator strands.
//!
//! Nodes are addressed `(strand, index)`, both zero-based in memory and
//! one-based in the text export.

mod lift;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::intruder::{analz_close, KnowledgeSet};
use crate::term::{dual, normalize, subterm, Term};

pub use lift::{lift, role_map, LiftError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SignedTerm {
    pub sign: Sign,
    pub term: Term,
}

impl SignedTerm {
    pub fn send(term: Term) -> Self {
        Self {
            sign: Sign::Plus,
            term,
        }
    }

    pub fn recv(term: Term) -> Self {
        Self {
            sign: Sign::Minus,
            term,
        }
    }
}

impl fmt::Display for SignedTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.sign {
            Sign::Plus => '+',
            Sign::Minus => '-',
        };
        match self.term {
            Term::Pair(..) => write!(f, "{s} ({})", self.term),
            _ => write!(f, "{s} {}", self.term),
        }
    }
}

impl fmt::Debug for SignedTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PenetratorType {
    /// `<+t>`, an atom the penetrator starts with.
    Text,
    /// `<-g>`
    Flush,
    /// `<-g, +g, +g>`
    Tee,
    /// `<-g, -h, +gh>`
    Concat,
    /// `<-gh, +g, +h>`
    Separate,
    /// `<+K>`, a key the penetrator starts with.
    KeyEmit,
    /// `<-K^-1, -{h}K, +h>`
    Decrypt,
    /// `<-K, -h, +{h}K>`
    Encrypt,
}

impl fmt::Display for PenetratorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StrandKind {
    /// A protocol participant. `params` follow the protocol's variable
    /// order; unbound ones (on a truncated strand) are `None`.
    Regular {
        role: String,
        label: String,
        params: Vec<(String, Option<Term>)>,
        /// Number of messages a complete strand of this role has.
        length: usize,
    },
    Penetrator(PenetratorType),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Strand {
    pub kind: StrandKind,
    pub trace: Vec<SignedTerm>,
}

impl Strand {
    pub fn is_regular(&self) -> bool {
        matches!(self.kind, StrandKind::Regular { .. })
    }

    pub fn is_complete(&self) -> bool {
        match &self.kind {
            StrandKind::Regular { length, .. } => self.trace.len() == *length,
            StrandKind::Penetrator(_) => true,
        }
    }

    pub fn role(&self) -> Option<&str> {
        match &self.kind {
            StrandKind::Regular { role, .. } => Some(role),
            StrandKind::Penetrator(_) => None,
        }
    }

    pub fn param(&self, var: &str) -> Option<&Term> {
        match &self.kind {
            StrandKind::Regular { params, .. } => params
                .iter()
                .find(|(v, _)| v == var)
                .and_then(|(_, t)| t.as_ref()),
            StrandKind::Penetrator(_) => None,
        }
    }
}

impl fmt::Display for Strand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            StrandKind::Regular { label, params, .. } => {
                write!(f, "{label}[")?;
                for (i, (_, t)) in params.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    match t {
                        Some(t) => write!(f, "{t}")?,
                        None => f.write_str("_")?,
                    }
                }
                f.write_str("]")
            }
            StrandKind::Penetrator(p) => write!(f, "{p}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Node {
    pub strand: usize,
    pub index: usize,
}

impl Node {
    pub fn new(strand: usize, index: usize) -> Self {
        Self { strand, index }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.strand + 1, self.index + 1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Bundle {
    pub strands: Vec<Strand>,
    /// Communication edges `n1 -> n2`.
    pub comm: Vec<(Node, Node)>,
    /// Succession edges `n1 => n2`.
    pub succession: Vec<(Node, Node)>,
    /// What the penetrator knows before the run.
    pub penetrator_knowledge: KnowledgeSet,
}

impl Bundle {
    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.strands
            .iter()
            .enumerate()
            .flat_map(|(s, st)| (0..st.trace.len()).map(move |i| Node::new(s, i)))
    }

    pub fn get(&self, n: Node) -> Option<&SignedTerm> {
        self.strands
            .get(n.strand)
            .and_then(|s| s.trace.get(n.index))
    }

    pub fn term(&self, n: Node) -> &Term {
        &self.strands[n.strand].trace[n.index].term
    }

    pub fn sign(&self, n: Node) -> Sign {
        self.strands[n.strand].trace[n.index].sign
    }

    /// Succession edges implied by the strands themselves.
    pub fn natural_succession(strands: &[Strand]) -> Vec<(Node, Node)> {
        strands
            .iter()
            .enumerate()
            .flat_map(|(s, st)| {
                (1..st.trace.len()).map(move |i| (Node::new(s, i - 1), Node::new(s, i)))
            })
            .collect()
    }

    pub fn regular_strands(&self) -> impl Iterator<Item = (usize, &Strand)> {
        self.strands
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_regular())
    }

    /// Text export: one block per strand, then the edges.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.strands.iter().enumerate() {
            out.push_str(&format!("strand {} {}\n", i + 1, s));
            for t in &s.trace {
                out.push_str(&format!("  {t}\n"));
            }
        }
        out.push_str("edges\n");
        let mut comm = self.comm.clone();
        comm.sort();
        for (a, b) in comm {
            out.push_str(&format!("  {a} -> {b}\n"));
        }
        let mut succ = self.succession.clone();
        succ.sort();
        for (a, b) in succ {
            out.push_str(&format!("  {a} => {b}\n"));
        }
        out
    }

    /// Direct causal successors of every node, over `->` and `=>`.
    fn successors(&self) -> BTreeMap<Node, Vec<Node>> {
        let mut out: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
        for &(a, b) in self.comm.iter().chain(&self.succession) {
            out.entry(a).or_default().push(b);
        }
        out
    }

    /// Whether `a` strictly precedes `b` in the causal order.
    pub fn precedes(&self, a: Node, b: Node) -> bool {
        let succ = self.successors();
        let mut seen = BTreeSet::new();
        let mut stack = succ.get(&a).cloned().unwrap_or_default();
        while let Some(n) = stack.pop() {
            if n == b {
                return true;
            }
            if seen.insert(n) {
                stack.extend(succ.get(&n).into_iter().flatten().copied());
            }
        }
        false
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum BundleViolation {
    #[error("edge {0} -> {1} names a node outside the bundle")]
    DanglingEdge(Node, Node),
    #[error("negative node {0} has no incoming edge")]
    MissingIncoming(Node),
    #[error("negative node {0} has {1} incoming edges")]
    MultipleIncoming(Node, usize),
    #[error("edge {0} -> {1} must go from a positive to a negative node")]
    WrongSigns(Node, Node),
    #[error("edge {0} -> {1} connects different terms")]
    TermMismatch(Node, Node),
    #[error("succession {0} => {1} does not link consecutive nodes of one strand")]
    BadSuccession(Node, Node),
    #[error("node {0} lacks the succession edge from its predecessor")]
    MissingSuccession(Node),
    #[error("causal cycle through {0}")]
    Cycle(Node),
    #[error("strand {0} does not match the {1} template")]
    PenetratorShape(usize, PenetratorType),
}

fn penetrator_shape_ok(kind: PenetratorType, trace: &[SignedTerm], known: &KnowledgeSet) -> bool {
    use Sign::{Minus as M, Plus as P};
    let signs: Vec<Sign> = trace.iter().map(|t| t.sign).collect();
    let t: Vec<&Term> = trace.iter().map(|t| &t.term).collect();
    match kind {
        PenetratorType::Text => {
            signs == [P] && t[0].is_atom() && !t[0].is_key() && known.contains(t[0])
        }
        PenetratorType::KeyEmit => signs == [P] && t[0].is_key() && known.contains(t[0]),
        PenetratorType::Flush => signs == [M],
        PenetratorType::Tee => signs == [M, P, P] && t[0] == t[1] && t[1] == t[2],
        PenetratorType::Concat => {
            signs == [M, M, P] && normalize(&Term::pair(t[0].clone(), t[1].clone())) == *t[2]
        }
        PenetratorType::Separate => {
            signs == [M, P, P] && matches!(t[0], Term::Pair(g, h) if **g == *t[1] && **h == *t[2])
        }
        PenetratorType::Decrypt => {
            signs == [M, M, P]
                && match t[1] {
                    Term::AsymEnc(k, h) | Term::SymEnc(k, h) => {
                        dual(k).ok().as_ref() == Some(t[0]) && **h == *t[2]
                    }
                    _ => false,
                }
        }
        PenetratorType::Encrypt => {
            signs == [M, M, P]
                && match t[2] {
                    Term::AsymEnc(k, h) | Term::SymEnc(k, h) => **k == *t[0] && **h == *t[1],
                    _ => false,
                }
        }
    }
}

/// Checks the bundle invariants and reports every violation found.
pub fn check_wellformed(b: &Bundle) -> Result<(), Vec<BundleViolation>> {
    let mut out = Vec::new();
    let mut incoming: BTreeMap<Node, usize> = BTreeMap::new();
    for &(x, y) in &b.comm {
        let (Some(sx), Some(sy)) = (b.get(x), b.get(y)) else {
            out.push(BundleViolation::DanglingEdge(x, y));
            continue;
        };
        if sx.sign != Sign::Plus || sy.sign != Sign::Minus {
            out.push(BundleViolation::WrongSigns(x, y));
        }
        if sx.term != sy.term {
            out.push(BundleViolation::TermMismatch(x, y));
        }
        *incoming.entry(y).or_default() += 1;
    }
    for n in b.nodes() {
        if b.sign(n) == Sign::Minus {
            match incoming.get(&n).copied().unwrap_or(0) {
                0 => out.push(BundleViolation::MissingIncoming(n)),
                1 => {}
                k => out.push(BundleViolation::MultipleIncoming(n, k)),
            }
        }
    }
    let present: BTreeSet<(Node, Node)> = b.succession.iter().copied().collect();
    for &(x, y) in &b.succession {
        if x.strand != y.strand || y.index != x.index + 1 || b.get(y).is_none() {
            out.push(BundleViolation::BadSuccession(x, y));
        }
    }
    for (x, y) in Bundle::natural_succession(&b.strands) {
        if !present.contains(&(x, y)) {
            out.push(BundleViolation::MissingSuccession(y));
        }
    }
    for (i, s) in b.strands.iter().enumerate() {
        if let StrandKind::Penetrator(p) = s.kind {
            if !penetrator_shape_ok(p, &s.trace, &b.penetrator_knowledge) {
                out.push(BundleViolation::PenetratorShape(i, p));
            }
        }
    }
    if let Some(n) = find_cycle(b) {
        out.push(BundleViolation::Cycle(n));
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

fn find_cycle(b: &Bundle) -> Option<Node> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let succ = b.successors();
    let mut marks: BTreeMap<Node, Mark> = BTreeMap::new();
    for start in b.nodes() {
        if marks.contains_key(&start) {
            continue;
        }
        // Iterative depth-first search with an explicit child cursor.
        let mut stack: Vec<(Node, usize)> = vec![(start, 0)];
        marks.insert(start, Mark::Open);
        while let Some((n, i)) = stack.pop() {
            let children = succ.get(&n).map(Vec::as_slice).unwrap_or(&[]);
            if let Some(&c) = children.get(i) {
                stack.push((n, i + 1));
                match marks.get(&c) {
                    Some(Mark::Open) => return Some(c),
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(c, Mark::Open);
                        stack.push((c, 0));
                    }
                }
            } else {
                marks.insert(n, Mark::Done);
            }
        }
    }
    None
}

/// `t` originates at `n`: `n` is positive, `t ⊑ term(n)`, and `t` is not a
/// subterm of any earlier node on the same strand.
pub fn originates(b: &Bundle, t: &Term, n: Node) -> bool {
    let Some(st) = b.get(n) else {
        return false;
    };
    st.sign == Sign::Plus
        && subterm(t, &st.term)
        && (0..n.index).all(|i| !subterm(t, b.term(Node::new(n.strand, i))))
}

pub fn origination_points(b: &Bundle, t: &Term) -> Vec<Node> {
    b.nodes().filter(|&n| originates(b, t, n)).collect()
}

/// Exactly one node of the bundle originates `t`.
pub fn uniquely_originates(b: &Bundle, t: &Term) -> bool {
    origination_points(b, t).len() == 1
}

/// The causally minimal nodes among those satisfying `pred`.
pub fn minimal_nodes(b: &Bundle, pred: impl Fn(Node) -> bool) -> Vec<Node> {
    let set: Vec<Node> = b.nodes().filter(|&n| pred(n)).collect();
    set.iter()
        .copied()
        .filter(|&n| !set.iter().any(|&m| m != n && b.precedes(m, n)))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Guarantee {
    /// A matching initiator strand is present.
    Holds { initiator: usize },
    /// No matching initiator; these initiator strands agree on everything
    /// but the responder's identity.
    Fails { witnesses: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GuaranteeError {
    #[error("strand {0} is not a completed responder strand")]
    NotAResponder(usize),
    #[error("hypotheses not met: {0}")]
    HypothesesNotMet(String),
}

/// Which variables of a two-party protocol name the initiator, the
/// responder, and the responder's fresh values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleMap {
    pub initiator_role: String,
    pub responder_role: String,
    pub responder_fresh: Vec<String>,
}

/// The responder's guarantee on a completed responder strand: some
/// initiator strand ran with exactly the same parameters.
///
/// Requires the initiator's private key to be out of the penetrator's reach
/// and each responder-generated value to originate uniquely.
pub fn responder_guarantee(
    b: &Bundle,
    resp: usize,
    roles: &RoleMap,
) -> Result<Guarantee, GuaranteeError> {
    let r = b
        .strands
        .get(resp)
        .ok_or(GuaranteeError::NotAResponder(resp))?;
    if r.role() != Some(roles.responder_role.as_str()) || !r.is_complete() {
        return Err(GuaranteeError::NotAResponder(resp));
    }
    let Some(Term::Agent(a)) = r.param(&roles.initiator_role) else {
        return Err(GuaranteeError::NotAResponder(resp));
    };
    let closed = analz_close(&b.penetrator_knowledge);
    if closed.contains(&Term::PrivKey(a.clone())) {
        return Err(GuaranteeError::HypothesesNotMet(format!(
            "the penetrator knows SK({a})"
        )));
    }
    for v in &roles.responder_fresh {
        let Some(value) = r.param(v) else {
            return Err(GuaranteeError::NotAResponder(resp));
        };
        if !uniquely_originates(b, value) {
            return Err(GuaranteeError::HypothesesNotMet(format!(
                "{value} does not originate uniquely"
            )));
        }
    }
    let params = |s: &Strand| match &s.kind {
        StrandKind::Regular { params, .. } => params.clone(),
        StrandKind::Penetrator(_) => Vec::new(),
    };
    let want = params(r);
    let initiators: Vec<(usize, &Strand)> = b
        .regular_strands()
        .filter(|(_, s)| s.role() == Some(roles.initiator_role.as_str()))
        .collect();
    if let Some((i, _)) = initiators
        .iter()
        .find(|(_, s)| s.is_complete() && params(s) == want)
    {
        return Ok(Guarantee::Holds { initiator: *i });
    }
    let witnesses = initiators
        .iter()
        .filter(|(_, s)| {
            params(s)
                .iter()
                .zip(&want)
                .all(|((v, x), (_, y))| *v == roles.responder_role || x == y)
        })
        .map(|(i, _)| *i)
        .collect();
    Ok(Guarantee::Fails { witnesses })
}
