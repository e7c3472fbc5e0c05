use protocheck_core::checker::{
    enumerate_violations, parse_trace, render_trace_text, replay, replay_observed, search,
    validate_trace, Bounds, Model, SearchOutcome,
};
use protocheck_core::dsl::load;
use protocheck_core::fixtures::{NSL, NSPK};
use protocheck_core::term::{SortEnv, Term};

const LOWE: &str = "\
1.1) A -> I : {Na, A}{PK(I)}
2.1) I(A) -> B : {Na, A}{PK(B)}
2.2) B -> I(A) : {Na, Nb}{PK(A)}
1.2) I -> A : {Na, Nb}{PK(A)}
1.3) A -> I : {Nb}{PK(I)}
2.3) I(A) -> B : {Nb}{PK(B)}
";

fn model(src: &str, bounds: Bounds) -> Model {
    Model::new(load(src).unwrap(), bounds).unwrap()
}

fn goals(outcome: &SearchOutcome) -> Vec<String> {
    outcome
        .attack()
        .map(|a| a.violations.iter().map(|v| v.goal.to_string()).collect())
        .unwrap_or_default()
}

#[test]
fn nspk_search_finds_lowe_attack() {
    let m = model(NSPK, Bounds::default());
    let outcome = search(&m).unwrap();
    let attack = outcome.attack().expect("attack");
    assert_eq!(attack.trace.len(), 6);
    assert_eq!(render_trace_text(&attack.trace, "I"), LOWE);
    assert_eq!(
        goals(&outcome),
        ["Secret(B, nb, [A])", "Agreement(A, B, [na, nb])"]
    );
    assert!(outcome.stats().states_explored < 100_000);
}

#[test]
fn nsl_is_exhausted() {
    let m = model(NSL, Bounds::default());
    let outcome = search(&m).unwrap();
    assert!(outcome.attack().is_none());
    assert!(outcome.stats().states_explored > 0);
}

#[test]
fn only_the_lowe_class_violates_up_to_depth_six() {
    let m = model(NSPK, Bounds::default());
    let all = enumerate_violations(&m, 6);
    assert!(!all.is_empty());
    for a in &all {
        // Lowe's class: A runs with the intruder while B believes it runs
        // with A, and the intruder learns B's nonce.
        let end = replay(&m, &a.trace).unwrap();
        let init = end.sessions.iter().find(|s| s.role == "A").unwrap();
        let resp = end.sessions.iter().find(|s| s.role == "B").unwrap();
        assert_eq!(init.binding("B"), Some(&Term::agent("I")));
        assert_eq!(resp.binding("A"), Some(&Term::agent("A")));
        assert_eq!(init.binding("nb"), resp.binding("nb"));
        let names: Vec<String> = a.violations.iter().map(|v| v.goal.to_string()).collect();
        assert!(
            names.contains(&"Agreement(A, B, [na, nb])".to_string()),
            "{names:?}"
        );
    }
    assert!(enumerate_violations(&model(NSL, Bounds::default()), 6).is_empty());
}

#[test]
fn more_sessions_still_only_reach_lowe_class() {
    let mut bounds = Bounds::default();
    bounds.sessions.insert("A".into(), 2);
    let m = model(NSPK, bounds.clone());
    let attack = search(&m).unwrap();
    assert_eq!(attack.attack().unwrap().trace.len(), 6);
    let nsl = search(&model(NSL, bounds)).unwrap();
    assert!(nsl.attack().is_none());
}

#[test]
fn result_is_independent_of_worker_count() {
    for src in [NSPK, NSL] {
        let runs: Vec<_> = [1, 2, 4]
            .into_iter()
            .map(|w| {
                let bounds = Bounds {
                    workers: w,
                    ..Bounds::default()
                };
                let o = search(&model(src, bounds)).unwrap();
                let s = o.stats();
                (
                    o.attack().cloned(),
                    s.states_explored,
                    s.depth_reached,
                    s.peak_frontier,
                )
            })
            .collect();
        assert!(runs.windows(2).all(|w| w[0] == w[1]));
    }
}

#[test]
fn every_attack_replays_and_validates() {
    let m = model(NSPK, Bounds::default());
    for a in enumerate_violations(&m, 8) {
        let end = replay(&m, &a.trace).unwrap();
        assert_eq!(m.violations(&end), a.violations);
        validate_trace(&m, &a.trace).unwrap();
    }
}

#[test]
fn validation_rejects_forged_deliveries() {
    let m = model(NSPK, Bounds::default());
    let mut trace = search(&m).unwrap().attack().unwrap().trace.clone();
    // The intruder never learns SK(A), so it cannot produce this.
    trace[1].message = Term::aenc(Term::sk("A"), Term::nonce("Na"));
    assert!(validate_trace(&m, &trace).is_err());
    assert!(replay(&m, &trace).is_err());
}

#[test]
fn text_trace_roundtrips() {
    let m = model(NSPK, Bounds::default());
    let trace = search(&m).unwrap().attack().unwrap().trace.clone();
    let text = render_trace_text(&trace, "I");
    let env = m.sort_env();
    let observed = parse_trace(&text, "I", &env as &dyn SortEnv).unwrap();
    assert_eq!(observed.len(), trace.len());
    assert_eq!(replay_observed(&m, &observed).unwrap(), trace);
}
