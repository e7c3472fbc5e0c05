//! Dolev-Yao message deduction.
//!
//! Deduction is split in two layers: [`analz_close`] saturates a knowledge
//! set under decomposition (pair splitting, decryption with the inverse
//! key), and [`can_synthesize`] then decides composition structurally over
//! the closed set.

use std::collections::BTreeSet;

use crate::term::{dual, normalize, Term};

/// A set of normalized terms, optionally closed under analysis.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KnowledgeSet {
    terms: BTreeSet<Term>,
    analyzed: bool,
}

impl KnowledgeSet {
    pub fn new() -> Self {
        Self {
            terms: BTreeSet::new(),
            analyzed: true,
        }
    }

    /// An unclosed set holding the normal forms of `terms`.
    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> Self {
        let terms: BTreeSet<Term> = terms.into_iter().map(|t| normalize(&t)).collect();
        Self {
            analyzed: terms.is_empty(),
            terms,
        }
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.terms.contains(t)
    }

    pub fn is_closed(&self) -> bool {
        self.analyzed
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Term> {
        self.terms.iter()
    }

    pub fn terms(&self) -> &BTreeSet<Term> {
        &self.terms
    }

    pub fn is_subset(&self, other: &KnowledgeSet) -> bool {
        self.terms.is_subset(&other.terms)
    }

    /// Inserts without re-closing.
    pub fn insert_raw(&mut self, t: Term) {
        if self.terms.insert(normalize(&t)) {
            self.analyzed = false;
        }
    }
}

/// Least fixed point of pair splitting and key-guarded decryption.
pub fn analz_close(k: &KnowledgeSet) -> KnowledgeSet {
    if k.analyzed {
        return k.clone();
    }
    let mut terms = k.terms.clone();
    // Each pass decrypts what the keys known at the start of the pass open;
    // the loop re-runs until nothing new appears, so chained decryptions
    // resolve in as many passes as the chain is long.
    loop {
        let mut added = Vec::new();
        for t in &terms {
            match t {
                Term::Pair(a, b) => {
                    for c in [a, b] {
                        if !terms.contains(&**c) {
                            added.push((**c).clone());
                        }
                    }
                }
                Term::AsymEnc(key, payload) | Term::SymEnc(key, payload) => {
                    if terms.contains(&**payload) {
                        continue;
                    }
                    let inverse = dual(key).expect("encryption under a non-key");
                    if terms.contains(&inverse) {
                        added.push((**payload).clone());
                    }
                }
                _ => {}
            }
        }
        if added.is_empty() {
            break;
        }
        terms.extend(added);
    }
    KnowledgeSet {
        terms,
        analyzed: true,
    }
}

/// Whether `t` can be composed from a closed knowledge set.
pub fn can_synthesize(k: &KnowledgeSet, t: &Term) -> bool {
    debug_assert!(k.analyzed, "can_synthesize on an unclosed knowledge set");
    synth_normalized(k, &normalize(t))
}

fn synth_normalized(k: &KnowledgeSet, t: &Term) -> bool {
    if k.terms.contains(t) {
        return true;
    }
    match t {
        Term::Pair(a, b) | Term::AsymEnc(a, b) | Term::SymEnc(a, b) => {
            synth_normalized(k, a) && synth_normalized(k, b)
        }
        _ => false,
    }
}

/// Adds an observed message and re-closes.
pub fn observe(k: &KnowledgeSet, t: &Term) -> KnowledgeSet {
    let t = normalize(t);
    if k.analyzed && k.terms.contains(&t) {
        return k.clone();
    }
    let mut next = k.clone();
    next.terms.insert(t);
    next.analyzed = false;
    analz_close(&next)
}
