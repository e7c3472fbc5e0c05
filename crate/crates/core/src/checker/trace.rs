//! Alice-Bob rendering of traces.
//!
//! Text lines look like `2.1) I(A) -> B : {Na, A}{PK(B)}`. The label is
//! `run.step`; a run groups the sessions that exchanged messages verbatim,
//! and the run prefix is dropped when the whole trace is a single run.
//!
//! * `X -> I : m`     X sends m to the intruder
//! * `X -> I(Y) : m`  X sends m meant for Y; the intruder intercepts it
//! * `X -> Y : m`     X sends m to Y and the intruder forwards it unchanged
//! * `I(X) -> Y : m`  the intruder delivers m to Y posing as X
//! * `I -> Y : m`     the intruder delivers m to Y as itself

use std::collections::BTreeMap;

use serde_json::{json, Value};
use thiserror::Error;

use super::{CheckerError, Event, EventKind, Model, SessionId, Violation};
use crate::term::{parse_term, Name, SortEnv, Term};

/// An event as far as it can be read back from the text rendering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedEvent {
    pub kind: EventKind,
    pub actor: Name,
    pub apparent_sender: Name,
    pub receiver: Name,
    pub message: Term,
    pub step: u32,
}

impl From<&Event> for ObservedEvent {
    fn from(e: &Event) -> Self {
        Self {
            kind: e.kind,
            actor: e.actor.clone(),
            apparent_sender: e.apparent_sender.clone(),
            receiver: e.receiver.clone(),
            message: e.message.clone(),
            step: e.step,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("trace line {line}: {message}")]
pub struct TraceSyntaxError {
    pub line: usize,
    pub message: String,
}

/// Whether event `i` is a send immediately forwarded verbatim as event `i+1`.
fn forwarded(trace: &[Event], i: usize, intruder: &str) -> bool {
    let Some(next) = trace.get(i + 1) else {
        return false;
    };
    let e = &trace[i];
    e.kind == EventKind::Send
        && &*e.receiver != intruder
        && next.kind == EventKind::Deliver
        && next.apparent_sender == e.actor
        && next.receiver == e.receiver
        && next.message == e.message
}

fn find(parent: &mut BTreeMap<SessionId, SessionId>, s: SessionId) -> SessionId {
    let p = *parent.entry(s).or_insert(s);
    if p == s {
        s
    } else {
        let root = find(parent, p);
        parent.insert(s, root);
        root
    }
}

/// Run number (1-based, by first appearance) of every session in the trace.
fn runs(trace: &[Event], intruder: &str) -> BTreeMap<SessionId, usize> {
    let mut parent = BTreeMap::new();
    for i in 0..trace.len() {
        if forwarded(trace, i, intruder) {
            let a = find(&mut parent, trace[i].session);
            let b = find(&mut parent, trace[i + 1].session);
            if a != b {
                parent.insert(a.max(b), a.min(b));
            }
        }
    }
    let mut numbering: BTreeMap<SessionId, usize> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for e in trace {
        let root = find(&mut parent, e.session);
        let next = numbering.len() + 1;
        let run = *numbering.entry(root).or_insert(next);
        out.insert(e.session, run);
    }
    out
}

struct Line {
    label: String,
    from: String,
    to: String,
    message: String,
    /// Indices of the events this line stands for.
    events: Vec<usize>,
}

fn lines(trace: &[Event], intruder: &str) -> Vec<Line> {
    let runs = runs(trace, intruder);
    let single_run = runs.values().all(|&r| r == 1);
    let label = |e: &Event| {
        if single_run {
            format!("{}", e.step)
        } else {
            format!("{}.{}", runs[&e.session], e.step)
        }
    };
    let mut out = Vec::new();
    let mut i = 0;
    while i < trace.len() {
        let e = &trace[i];
        let line = match e.kind {
            EventKind::Send if &*e.receiver == intruder => Line {
                label: label(e),
                from: e.actor.to_string(),
                to: intruder.to_string(),
                message: e.message.to_string(),
                events: vec![i],
            },
            EventKind::Send if forwarded(trace, i, intruder) => Line {
                label: label(e),
                from: e.actor.to_string(),
                to: e.receiver.to_string(),
                message: e.message.to_string(),
                events: vec![i, i + 1],
            },
            EventKind::Send => Line {
                label: label(e),
                from: e.actor.to_string(),
                to: format!("{intruder}({})", e.receiver),
                message: e.message.to_string(),
                events: vec![i],
            },
            EventKind::Deliver => Line {
                label: label(e),
                from: if &*e.apparent_sender == intruder {
                    intruder.to_string()
                } else {
                    format!("{intruder}({})", e.apparent_sender)
                },
                to: e.receiver.to_string(),
                message: e.message.to_string(),
                events: vec![i],
            },
        };
        i += line.events.len();
        out.push(line);
    }
    out
}

/// One line per message exchange, in Alice-Bob notation.
pub fn render_trace_text(trace: &[Event], intruder: &str) -> String {
    lines(trace, intruder)
        .into_iter()
        .map(|l| format!("{}) {} -> {} : {}\n", l.label, l.from, l.to, l.message))
        .collect()
}

/// JSON rendering: `{ steps: [...], goal: [...], bindings: {...} }`.
pub fn render_trace_json(trace: &[Event], intruder: &str, violations: &[Violation]) -> Value {
    let mut labels = vec![String::new(); trace.len()];
    for l in lines(trace, intruder) {
        for i in l.events {
            labels[i] = l.label.clone();
        }
    }
    let steps: Vec<Value> = trace
        .iter()
        .zip(labels)
        .map(|(e, label)| {
            json!({
                "index": e.time,
                "label": label,
                "kind": e.kind,
                "actor": &*e.actor,
                "as": &*e.apparent_sender,
                "to": &*e.receiver,
                "message": e.message.to_string(),
            })
        })
        .collect();
    let goal: Vec<String> = violations.iter().map(|v| v.goal.to_string()).collect();
    let bindings: serde_json::Map<String, Value> = violations
        .first()
        .map(|v| {
            v.bindings
                .iter()
                .map(|(k, t)| (k.clone(), Value::String(t.to_string())))
                .collect()
        })
        .unwrap_or_default();
    json!({ "steps": steps, "goal": goal, "bindings": bindings })
}

/// Reads the text rendering back into observed events.
pub fn parse_trace(
    text: &str,
    intruder: &str,
    env: &dyn SortEnv,
) -> Result<Vec<ObservedEvent>, TraceSyntaxError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fail = |message: &str| TraceSyntaxError {
            line: n + 1,
            message: message.into(),
        };
        let (label, rest) = line.split_once(") ").ok_or_else(|| fail("missing label"))?;
        let step: u32 = label
            .rsplit('.')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fail("bad label"))?;
        let (route, message) = rest
            .split_once(" : ")
            .ok_or_else(|| fail("missing ` : `"))?;
        let (from, to) = route
            .split_once(" -> ")
            .ok_or_else(|| fail("missing ` -> `"))?;
        let message = parse_term(message, env).map_err(|e| fail(&e.to_string()))?;
        let masked = |who: &str| -> Option<String> {
            who.strip_prefix(intruder)
                .and_then(|r| r.strip_prefix('('))
                .and_then(|r| r.strip_suffix(')'))
                .map(String::from)
        };
        let event = |kind, actor: &str, sender: &str, receiver: &str| ObservedEvent {
            kind,
            actor: actor.into(),
            apparent_sender: sender.into(),
            receiver: receiver.into(),
            message: message.clone(),
            step,
        };
        if let Some(posing) = masked(from) {
            out.push(event(EventKind::Deliver, intruder, &posing, to));
        } else if from == intruder {
            out.push(event(EventKind::Deliver, intruder, intruder, to));
        } else if let Some(meant) = masked(to) {
            out.push(event(EventKind::Send, from, from, &meant));
        } else if to == intruder {
            out.push(event(EventKind::Send, from, from, intruder));
        } else {
            out.push(event(EventKind::Send, from, from, to));
            out.push(event(EventKind::Deliver, intruder, from, to));
        }
    }
    Ok(out)
}

/// Re-attaches session identities by replaying observed events through the
/// transition relation.
pub fn replay_observed(
    model: &Model,
    observed: &[ObservedEvent],
) -> Result<Vec<Event>, CheckerError> {
    let mut state = model.initial_state();
    for (time, o) in observed.iter().enumerate() {
        let mut matching = model
            .successors(&state)
            .into_iter()
            .filter(|n| n.trace.last().map(ObservedEvent::from).as_ref() == Some(o));
        state = matching.next().ok_or_else(|| CheckerError::Replay {
            time,
            reason: format!("no transition matches `{}`", o.message),
        })?;
        if matching.next().is_some() {
            return Err(CheckerError::Replay {
                time,
                reason: "ambiguous event".into(),
            });
        }
    }
    Ok(state.trace)
}

#[cfg(test)]
mod tests {
    use super::super::{honest_run, search, Bounds};
    use super::*;
    use crate::dsl::load;
    use crate::fixtures;

    fn nspk() -> Model {
        Model::new(load(fixtures::NSPK).unwrap(), Bounds::default()).unwrap()
    }

    #[test]
    fn lowe_attack_renders_in_run_step_notation() {
        let m = nspk();
        let out = search(&m).unwrap();
        let text = render_trace_text(&out.attack().unwrap().trace, "I");
        assert_eq!(
            text,
            "1.1) A -> I : {Na, A}{PK(I)}\n\
             2.1) I(A) -> B : {Na, A}{PK(B)}\n\
             2.2) B -> I(A) : {Na, Nb}{PK(A)}\n\
             1.2) I -> A : {Na, Nb}{PK(A)}\n\
             1.3) A -> I : {Nb}{PK(I)}\n\
             2.3) I(A) -> B : {Nb}{PK(B)}\n"
        );
    }

    #[test]
    fn honest_run_has_no_masquerade_marker() {
        let m = nspk();
        let trace = honest_run(&m).unwrap();
        let text = render_trace_text(&trace, "I");
        assert!(text.starts_with("1) A -> B : {Na, A}{PK(B)}\n"));
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains("I("));
    }

    #[test]
    fn empty_trace_renders_empty_steps() {
        let v = render_trace_json(&[], "I", &[]);
        assert_eq!(v["steps"], json!([]));
        assert!(serde_json::from_str::<Value>(&v.to_string()).is_ok());
    }

    #[test]
    fn text_rendering_round_trips() {
        let m = nspk();
        let env = m.sort_env();
        for trace in [
            search(&m).unwrap().attack().unwrap().trace.clone(),
            honest_run(&m).unwrap(),
        ] {
            let text = render_trace_text(&trace, "I");
            let observed = parse_trace(&text, "I", &env).unwrap();
            assert_eq!(replay_observed(&m, &observed).unwrap(), trace);
        }
    }

    #[test]
    fn masquerade_step_in_json() {
        let m = nspk();
        let out = search(&m).unwrap();
        let attack = out.attack().unwrap();
        let v = render_trace_json(&attack.trace, "I", &attack.violations);
        let step = &v["steps"][1];
        assert_eq!(step["label"], "2.1");
        assert_eq!(step["actor"], "I");
        assert_eq!(step["as"], "A");
        assert_eq!(step["to"], "B");
        assert_eq!(step["message"], "{Na, A}{PK(B)}");
    }
}
