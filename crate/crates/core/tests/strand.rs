use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use proptest::prelude::*;
use protocheck_core::checker::{enumerate_violations, honest_run, search, Bounds, Event, Model};
use protocheck_core::dsl::load;
use protocheck_core::fixtures::{NSL, NSPK};
use protocheck_core::strand::{
    check_wellformed, lift, minimal_nodes, originates, responder_guarantee, role_map, Bundle,
    Guarantee, Node, Sign,
};
use protocheck_core::term::{parts, subterm, Term};

fn model(src: &str) -> Model {
    Model::new(load(src).unwrap(), Bounds::default()).unwrap()
}

fn lowe() -> Bundle {
    let m = model(NSPK);
    let trace = search(&m).unwrap().attack().unwrap().trace.clone();
    lift(&m, &trace).unwrap()
}

fn honest(src: &str) -> Bundle {
    let m = model(src);
    lift(&m, &honest_run(&m).unwrap()).unwrap()
}

#[test]
fn lowe_bundle_matches_golden_file() {
    let text = lowe().to_text();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/lowe_bundle.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file");
    assert_eq!(text, expected);
}

#[test]
fn guarantee_fails_on_lowe_and_holds_on_honest_runs() {
    let m = model(NSPK);
    let roles = role_map(m.spec()).unwrap();
    let attack = lowe();
    match responder_guarantee(&attack, 1, &roles).unwrap() {
        Guarantee::Fails { witnesses } => {
            assert_eq!(witnesses.len(), 1);
            assert_eq!(
                attack.strands[witnesses[0]].to_string(),
                "Init[A, I, Na, Nb]"
            );
        }
        other => panic!("{other:?}"),
    }
    for src in [NSPK, NSL] {
        let b = honest(src);
        assert_eq!(
            responder_guarantee(&b, 1, &roles).unwrap(),
            Guarantee::Holds { initiator: 0 }
        );
    }
}

/// The earliest node carrying B's nonce outside the message that first
/// carried it is a positive regular node, in the honest and the attack
/// bundle alike.
#[test]
fn first_exposure_of_the_responder_nonce_is_regular_and_positive() {
    let nb = Term::nonce("Nb");
    let t0 = Term::aenc(Term::pk("A"), Term::pair(Term::nonce("Na"), nb.clone()));
    for b in [honest(NSPK), lowe()] {
        let mins = minimal_nodes(&b, |n| subterm(&nb, b.term(n)) && !subterm(&t0, b.term(n)));
        assert!(!mins.is_empty());
        for n in mins {
            assert_eq!(b.sign(n), Sign::Plus, "{n}");
            assert!(b.strands[n.strand].is_regular(), "{n}");
            assert_eq!(b.strands[n.strand].role(), Some("A"));
        }
    }
}

/// Origination straight from the definition, over `parts`.
fn originates_oracle(b: &Bundle, t: &Term, n: Node) -> bool {
    let st = &b.strands[n.strand].trace;
    st[n.index].sign == Sign::Plus
        && parts(&st[n.index].term).contains(t)
        && st[..n.index].iter().all(|e| !parts(&e.term).contains(t))
}

fn all_parts(b: &Bundle) -> BTreeSet<Term> {
    b.nodes().flat_map(|n| parts(b.term(n))).collect()
}

fn check_bundle(b: &Bundle) {
    check_wellformed(b).unwrap_or_else(|v| panic!("{v:?}\n{}", b.to_text()));
    for t in all_parts(b) {
        for n in b.nodes() {
            assert_eq!(
                originates(b, &t, n),
                originates_oracle(b, &t, n),
                "{t} at {n}"
            );
        }
    }
    // Every reception is matched by its own transmission.
    let mut sent: BTreeMap<&Term, usize> = BTreeMap::new();
    let mut received: BTreeMap<&Term, usize> = BTreeMap::new();
    for n in b.nodes() {
        let side = if b.sign(n) == Sign::Plus {
            &mut sent
        } else {
            &mut received
        };
        *side.entry(b.term(n)).or_default() += 1;
    }
    for (t, k) in received {
        assert!(
            sent.get(t).copied().unwrap_or(0) >= k,
            "{t} received {k} times"
        );
    }
    let mut out_degree: BTreeMap<Node, usize> = BTreeMap::new();
    for &(a, _) in &b.comm {
        *out_degree.entry(a).or_default() += 1;
    }
    assert!(out_degree.values().all(|&d| d == 1));
}

#[test]
fn fixed_bundles_are_wellformed() {
    check_bundle(&lowe());
    check_bundle(&honest(NSPK));
    check_bundle(&honest(NSL));
}

#[test]
fn every_enumerated_attack_lifts() {
    let m = model(NSPK);
    for a in enumerate_violations(&m, 8) {
        check_bundle(&lift(&m, &a.trace).unwrap());
    }
}

fn random_walk(m: &Model, choices: &[usize]) -> Vec<Event> {
    let mut state = m.initial_state();
    for &c in choices {
        let next = m.successors(&state);
        if next.is_empty() {
            break;
        }
        state = next[c % next.len()].clone();
    }
    state.trace
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn lifted_random_traces_are_wellformed(
        nsl in any::<bool>(),
        two_sessions in any::<bool>(),
        choices in prop::collection::vec(0usize..64, 0..10),
    ) {
        let mut bounds = Bounds::default();
        if two_sessions {
            bounds.sessions.insert("A".into(), 2);
        }
        let m = Model::new(load(if nsl { NSL } else { NSPK }).unwrap(), bounds).unwrap();
        let trace = random_walk(&m, &choices);
        check_bundle(&lift(&m, &trace).unwrap());
    }
}
