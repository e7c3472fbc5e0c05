use std::collections::BTreeMap;

use thiserror::Error;

use super::{Bindings, CheckedSpec, ProtocolSpec, Sort};
use crate::intruder::{analz_close, can_synthesize, observe, KnowledgeSet};
use crate::term::Term;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("step {step}: role {role} cannot construct `{message}`")]
pub struct ExecutabilityError {
    pub role: String,
    pub step: u32,
    pub message: String,
}

/// Symbolic value of a variable: the variable's own name as an atom of the
/// matching kind.
fn symbolic(name: &str, sort: Sort) -> Term {
    match sort {
        Sort::Agent => Term::agent(name),
        Sort::Nonce => Term::nonce(name),
        Sort::PublicKey => Term::pk(name),
        Sort::SymmetricKey => Term::sym_key(name),
    }
}

fn symbolic_bindings(spec: &ProtocolSpec) -> Bindings {
    spec.free_variables
        .iter()
        .map(|(n, &s)| (n.clone(), symbolic(n, s)))
        .collect()
}

/// Adds `PK(x)` for every agent name in a closed set.
fn with_public_keys(k: KnowledgeSet) -> KnowledgeSet {
    let mut k = k;
    loop {
        let keys: Vec<Term> = k
            .iter()
            .filter_map(|t| match t {
                Term::Agent(a) => Some(Term::PubKey(a.clone())),
                _ => None,
            })
            .filter(|pk| !k.contains(pk))
            .collect();
        if keys.is_empty() {
            return k;
        }
        for pk in keys {
            k.insert_raw(pk);
        }
        k = analz_close(&k);
    }
}

/// Replays the protocol symbolically, step by step, and rejects the first
/// step whose sender cannot build the message from its own identity and
/// keys, the peers named by the environment, its fresh values, and what it
/// has received so far.
pub fn check_executability(spec: &ProtocolSpec) -> Result<CheckedSpec, ExecutabilityError> {
    let bindings = symbolic_bindings(spec);
    let mut knowledge: BTreeMap<&str, KnowledgeSet> = BTreeMap::new();
    for role in spec.roles() {
        let mut initial = vec![Term::agent(role), Term::pk(role), Term::sk(role)];
        for v in spec.environment_variables(role) {
            initial.push(bindings[v].clone());
        }
        for v in spec.fresh_variables(role) {
            initial.push(bindings[v].clone());
        }
        knowledge.insert(
            role,
            with_public_keys(analz_close(&KnowledgeSet::from_terms(initial))),
        );
    }
    for step in &spec.steps {
        let message = step
            .pattern
            .instantiate(&bindings)
            .expect("symbolic bindings cover every declared variable");
        if !can_synthesize(&knowledge[step.sender.as_str()], &message) {
            return Err(ExecutabilityError {
                role: step.sender.clone(),
                step: step.index,
                message: step.pattern.to_string(),
            });
        }
        let receiver = knowledge
            .get_mut(step.receiver.as_str())
            .expect("receiver is a role");
        *receiver = with_public_keys(observe(receiver, &message));
    }
    Ok(CheckedSpec(spec.clone()))
}
