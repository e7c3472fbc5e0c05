use std::collections::HashSet;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use super::{CheckerError, Event, EventKind, GlobalState, Model, Violation};
use crate::intruder::{analz_close, can_synthesize, observe};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SearchStats {
    pub states_explored: usize,
    pub depth_reached: usize,
    pub peak_frontier: usize,
    /// Wall-clock time; not part of report equality.
    #[serde(skip)]
    pub duration: Duration,
}

/// A shortest goal-violating trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttackReport {
    /// Every goal violated in the final state, with its witness session.
    pub violations: Vec<Violation>,
    pub trace: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchOutcome {
    Attack(AttackReport, SearchStats),
    /// No violation within the bounds.
    Exhausted(SearchStats),
}

impl SearchOutcome {
    pub fn stats(&self) -> &SearchStats {
        match self {
            SearchOutcome::Attack(_, s) | SearchOutcome::Exhausted(s) => s,
        }
    }

    pub fn attack(&self) -> Option<&AttackReport> {
        match self {
            SearchOutcome::Attack(a, _) => Some(a),
            SearchOutcome::Exhausted(_) => None,
        }
    }
}

fn expand(model: &Model, frontier: &[GlobalState]) -> Vec<Vec<GlobalState>> {
    if model.bounds.workers <= 1 {
        return frontier.iter().map(|s| model.successors(s)).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(model.bounds.workers)
        .build()
        .expect("thread pool");
    pool.install(|| frontier.par_iter().map(|s| model.successors(s)).collect())
}

/// Level-by-level breadth-first search up to `max_depth` events.
///
/// Frontiers are kept in lexicographic trace order and merged sequentially,
/// so the first violating state found is the shortest violation with the
/// lexicographically least trace, whatever the worker count.
pub fn search(model: &Model) -> Result<SearchOutcome, CheckerError> {
    let started = Instant::now();
    let budget = model.bounds.state_budget;
    let initial = model.initial_state();
    let mut stats = SearchStats {
        states_explored: 1,
        peak_frontier: 1,
        ..SearchStats::default()
    };
    let finish = |mut stats: SearchStats| {
        stats.duration = started.elapsed();
        stats
    };

    let violations = model.violations(&initial);
    if !violations.is_empty() {
        let report = AttackReport {
            violations,
            trace: Vec::new(),
        };
        return Ok(SearchOutcome::Attack(report, finish(stats)));
    }

    let mut visited = HashSet::new();
    visited.insert(initial.key());
    let mut frontier = vec![initial];
    for depth in 1..=model.bounds.max_depth {
        let mut next = Vec::new();
        for batch in expand(model, &frontier) {
            for state in batch {
                if !visited.insert(state.key()) {
                    continue;
                }
                stats.states_explored += 1;
                if stats.states_explored > budget {
                    return Err(CheckerError::StateBudgetExceeded {
                        budget,
                        explored: stats.states_explored,
                    });
                }
                let violations = model.violations(&state);
                if !violations.is_empty() {
                    stats.depth_reached = depth;
                    let report = AttackReport {
                        violations,
                        trace: state.trace,
                    };
                    return Ok(SearchOutcome::Attack(report, finish(stats)));
                }
                next.push(state);
            }
        }
        if next.is_empty() {
            break;
        }
        stats.depth_reached = depth;
        stats.peak_frontier = stats.peak_frontier.max(next.len());
        frontier = next;
    }
    Ok(SearchOutcome::Exhausted(finish(stats)))
}

/// Every trace of at most `depth` events whose last state is the first one
/// on the trace to violate a goal. No state merging: distinct interleavings
/// are reported separately.
pub fn enumerate_violations(model: &Model, depth: usize) -> Vec<AttackReport> {
    fn go(model: &Model, state: GlobalState, depth: usize, out: &mut Vec<AttackReport>) {
        if depth == 0 {
            return;
        }
        for next in model.successors(&state) {
            let violations = model.violations(&next);
            if violations.is_empty() {
                go(model, next, depth - 1, out);
            } else {
                out.push(AttackReport {
                    violations,
                    trace: next.trace,
                });
            }
        }
    }
    let mut out = Vec::new();
    let initial = model.initial_state();
    if model.violations(&initial).is_empty() {
        go(model, initial, depth, &mut out);
    }
    out
}

/// Re-executes a trace from the initial state, requiring each event to be
/// one of the enabled transitions.
pub fn replay(model: &Model, trace: &[Event]) -> Result<GlobalState, CheckerError> {
    let mut state = model.initial_state();
    for (time, event) in trace.iter().enumerate() {
        state = model
            .successors(&state)
            .into_iter()
            .find(|n| n.trace.last() == Some(event))
            .ok_or_else(|| CheckerError::Replay {
                time,
                reason: format!("`{event}` is not enabled"),
            })?;
    }
    Ok(state)
}

/// Independent of the transition relation: rebuilds the intruder's
/// knowledge from the trace prefix and checks that every delivered message
/// was synthesizable when delivered.
pub fn validate_trace(model: &Model, trace: &[Event]) -> Result<(), CheckerError> {
    let mut known = analz_close(&model.initial_state().intruder);
    for (time, e) in trace.iter().enumerate() {
        if e.time != time {
            return Err(CheckerError::Replay {
                time,
                reason: "time index out of sequence".into(),
            });
        }
        match e.kind {
            EventKind::Send => known = observe(&known, &e.message),
            EventKind::Deliver => {
                if !can_synthesize(&known, &e.message) {
                    return Err(CheckerError::Replay {
                        time,
                        reason: format!("intruder cannot synthesize `{}`", e.message),
                    });
                }
            }
        }
    }
    Ok(())
}

/// A run in which honest agents talk only to each other and every message
/// is delivered verbatim to its intended receiver. Returns the shortest such
/// trace in which each role completes at least one session.
pub fn honest_run(model: &Model) -> Option<Vec<Event>> {
    let initial = model.initial_state();
    let roles = model.spec.roles();
    let done = |s: &GlobalState| {
        roles.iter().all(|r| {
            s.sessions
                .iter()
                .any(|x| x.role == *r && x.status == super::Status::Completed)
        })
    };
    let honest_step = |s: &GlobalState, e: &Event| match e.kind {
        EventKind::Send => model.is_honest(&e.receiver),
        EventKind::Deliver => {
            let sent = s
                .trace
                .iter()
                .filter(|o| {
                    o.kind == EventKind::Send
                        && o.message == e.message
                        && o.actor == e.apparent_sender
                        && o.receiver == e.receiver
                })
                .count();
            let delivered = s
                .trace
                .iter()
                .filter(|o| {
                    o.kind == EventKind::Deliver
                        && o.message == e.message
                        && o.apparent_sender == e.apparent_sender
                        && o.receiver == e.receiver
                })
                .count();
            sent > delivered
        }
    };
    let mut visited = HashSet::new();
    visited.insert(initial.key());
    let mut frontier = vec![initial];
    for _ in 0..model.bounds.max_depth {
        let mut next = Vec::new();
        for s in &frontier {
            for n in model.successors(s) {
                let e = n.trace.last().expect("successor without event");
                if !honest_step(s, e) || !visited.insert(n.key()) {
                    continue;
                }
                if done(&n) {
                    return Some(n.trace);
                }
                next.push(n);
            }
        }
        if next.is_empty() {
            return None;
        }
        frontier = next;
    }
    None
}
