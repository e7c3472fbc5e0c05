//! Brute-force Dolev-Yao deduction over a finite term universe.
//!
//! Rules are applied one at a time to candidate terms of a fixed universe
//! until nothing changes. Nothing from the library's own deduction code is
//! used; only the term type, normalization and the key inverse.

use std::collections::BTreeSet;

use protocheck_core::term::{dual, normalize, Term};

/// Every subterm of the inputs, keys included, plus the inverse of every key.
pub fn universe<'a>(terms: impl IntoIterator<Item = &'a Term>) -> BTreeSet<Term> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<Term> = terms.into_iter().map(normalize).collect();
    while let Some(t) = stack.pop() {
        if !out.insert(t.clone()) {
            continue;
        }
        match &t {
            Term::Pair(a, b) => {
                stack.push((**a).clone());
                stack.push((**b).clone());
            }
            Term::AsymEnc(k, m) | Term::SymEnc(k, m) => {
                stack.push((**k).clone());
                stack.push((**m).clone());
            }
            key if key.is_key() => stack.push(dual(key).unwrap()),
            _ => {}
        }
    }
    out
}

fn destructible(t: &Term, known: &BTreeSet<Term>) -> bool {
    known.iter().any(|s| match s {
        Term::Pair(a, b) => **a == *t || **b == *t,
        Term::AsymEnc(k, m) | Term::SymEnc(k, m) => **m == *t && known.contains(&dual(k).unwrap()),
        _ => false,
    })
}

fn constructible(t: &Term, known: &BTreeSet<Term>) -> bool {
    match t {
        Term::Pair(a, b) | Term::AsymEnc(a, b) | Term::SymEnc(a, b) => {
            known.contains(&**a) && known.contains(&**b)
        }
        _ => false,
    }
}

fn saturate(
    initial: &[Term],
    universe: &BTreeSet<Term>,
    rule: impl Fn(&Term, &BTreeSet<Term>) -> bool,
) -> BTreeSet<Term> {
    let mut known: BTreeSet<Term> = initial.iter().map(normalize).collect();
    loop {
        let step: Vec<Term> = universe
            .iter()
            .filter(|t| !known.contains(*t) && rule(t, &known))
            .cloned()
            .collect();
        if step.is_empty() {
            return known;
        }
        known.extend(step);
    }
}

/// Terms obtainable by decomposition alone.
pub fn analysis(initial: &[Term], universe: &BTreeSet<Term>) -> BTreeSet<Term> {
    saturate(initial, universe, destructible)
}

/// Terms of the universe obtainable by any interleaving of decomposition
/// and composition.
pub fn derivable(initial: &[Term], universe: &BTreeSet<Term>) -> BTreeSet<Term> {
    saturate(initial, universe, |t, k| {
        destructible(t, k) || constructible(t, k)
    })
}
