//! Bounded reachability over interleaved protocol sessions with an active
//! Dolev-Yao intruder.
//!
//! Every message an honest agent sends goes to the intruder; every message
//! an honest agent receives is delivered by the intruder, which may pass on
//! anything it can synthesize. Attacks are traces that reach a state
//! violating one of the protocol's goals.

mod search;
mod trace;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dsl::{Bindings, CheckedSpec, Goal, MessageStep, Sort};
use crate::intruder::{analz_close, can_synthesize, observe, KnowledgeSet};
use crate::term::{normalize, parts, AtomSort, Name, Term};

pub use search::{
    enumerate_violations, honest_run, replay, search, validate_trace, AttackReport, SearchOutcome,
    SearchStats,
};
pub use trace::{
    parse_trace, render_trace_json, render_trace_text, replay_observed, ObservedEvent,
    TraceSyntaxError,
};

/// Largest accepted search depth.
pub const MAX_DEPTH_LIMIT: usize = 64;
/// Largest accepted number of sessions per role.
pub const MAX_SESSIONS_PER_ROLE: usize = 8;

pub type SessionId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckerError {
    #[error("the system declares no agents")]
    NoAgents,
    #[error("bound exceeds hard limit: {0}")]
    BoundsExceeded(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("state budget of {budget} exceeded after {explored} states")]
    StateBudgetExceeded { budget: usize, explored: usize },
    #[error("event {time} cannot be replayed: {reason}")]
    Replay { time: usize, reason: String },
}

/// Search bounds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bounds {
    /// Per-role session counts overriding the `#System` section.
    pub sessions: BTreeMap<String, usize>,
    pub max_depth: usize,
    pub state_budget: usize,
    /// Worker threads for frontier expansion; results do not depend on it.
    pub workers: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            sessions: BTreeMap::new(),
            max_depth: 12,
            state_budget: 1_000_000,
            workers: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Running,
    Completed,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SessionInstance {
    pub id: SessionId,
    pub role: String,
    pub agent: Name,
    /// Position among the sessions of the same role; names fresh values.
    pub ordinal: usize,
    /// Index into the role's step list of the next step to perform.
    pub pc: usize,
    pub bindings: Bindings,
    pub status: Status,
}

impl SessionInstance {
    pub fn binding(&self, var: &str) -> Option<&Term> {
        self.bindings.get(var)
    }

    fn agent_binding(&self, var: &str) -> Option<&Name> {
        match self.bindings.get(var)? {
            Term::Agent(a) => Some(a),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// An honest session emits its next message.
    Send,
    /// The intruder hands a message to an honest session.
    Deliver,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    pub time: usize,
    pub kind: EventKind,
    /// Who acts: the sending agent, or the intruder for deliveries.
    pub actor: Name,
    /// Claimed sender.
    pub apparent_sender: Name,
    pub receiver: Name,
    pub message: Term,
    pub session: SessionId,
    /// Protocol step number.
    pub step: u32,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            EventKind::Send => "send",
            EventKind::Deliver => "deliver",
        };
        write!(
            f,
            "t{} {kind} {}({}) -> {} : {}",
            self.time, self.actor, self.apparent_sender, self.receiver, self.message
        )
    }
}

/// Explored configuration of the system.
#[derive(Clone, Debug)]
pub struct GlobalState {
    pub sessions: Vec<SessionInstance>,
    pub intruder: KnowledgeSet,
    pub trace: Vec<Event>,
    /// Number of fresh values allocated so far.
    pub fresh_count: usize,
}

/// Identity of a state for deduplication; the trace is not part of it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateKey {
    sessions: Vec<(usize, Status, Bindings)>,
    intruder: KnowledgeSet,
}

impl GlobalState {
    pub fn key(&self) -> StateKey {
        StateKey {
            sessions: self
                .sessions
                .iter()
                .map(|s| (s.pc, s.status, s.bindings.clone()))
                .collect(),
            intruder: self.intruder.clone(),
        }
    }

    pub fn session(&self, id: SessionId) -> &SessionInstance {
        &self.sessions[id]
    }
}

/// A goal violation together with the session that witnesses it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    #[serde(serialize_with = "crate::report::display_str")]
    pub goal: Goal,
    pub session: SessionId,
    #[serde(serialize_with = "crate::report::display_map")]
    pub bindings: Bindings,
}

struct RoleProgram {
    steps: Vec<MessageStep>,
    fresh: Vec<String>,
    environment: Vec<String>,
}

/// A checked protocol instantiated over concrete agents.
pub struct Model {
    spec: CheckedSpec,
    bounds: Bounds,
    agents: Vec<Name>,
    programs: BTreeMap<String, RoleProgram>,
    /// Sessions per role after applying overrides.
    role_counts: BTreeMap<String, usize>,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(first) => first.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

impl Model {
    pub fn new(spec: CheckedSpec, bounds: Bounds) -> Result<Self, CheckerError> {
        if spec.system.is_empty() {
            return Err(CheckerError::NoAgents);
        }
        if bounds.max_depth > MAX_DEPTH_LIMIT {
            return Err(CheckerError::BoundsExceeded(format!(
                "max depth {} > {MAX_DEPTH_LIMIT}",
                bounds.max_depth
            )));
        }
        let roles = spec.roles();
        for (role, &n) in &bounds.sessions {
            if !roles.contains(&role.as_str()) {
                return Err(CheckerError::UnknownRole(role.clone()));
            }
            if n > MAX_SESSIONS_PER_ROLE {
                return Err(CheckerError::BoundsExceeded(format!(
                    "{n} sessions for role {role} > {MAX_SESSIONS_PER_ROLE}"
                )));
            }
        }
        let mut role_counts: BTreeMap<String, usize> = BTreeMap::new();
        for e in &spec.system {
            let n = bounds.sessions.get(&e.role).copied().unwrap_or(e.count);
            *role_counts.entry(e.role.clone()).or_default() += n;
        }
        if let Some((role, &n)) = role_counts.iter().find(|(_, &n)| n > MAX_SESSIONS_PER_ROLE) {
            return Err(CheckerError::BoundsExceeded(format!(
                "{n} sessions for role {role} > {MAX_SESSIONS_PER_ROLE}"
            )));
        }
        let programs = roles
            .iter()
            .map(|&r| {
                let program = RoleProgram {
                    steps: spec.role_steps(r).into_iter().cloned().collect(),
                    fresh: spec
                        .fresh_variables(r)
                        .into_iter()
                        .map(String::from)
                        .collect(),
                    environment: spec
                        .environment_variables(r)
                        .into_iter()
                        .map(String::from)
                        .collect(),
                };
                (r.to_string(), program)
            })
            .collect();
        Ok(Self {
            agents: spec.agents(),
            spec,
            bounds,
            programs,
            role_counts,
        })
    }

    pub fn spec(&self) -> &CheckedSpec {
        &self.spec
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn agents(&self) -> &[Name] {
        &self.agents
    }

    pub fn intruder(&self) -> &Name {
        &self.spec.intruder
    }

    pub fn is_honest(&self, agent: &str) -> bool {
        agent != &*self.spec.intruder
    }

    /// Name of the fresh value `var` generated by the `ordinal`-th session
    /// of `role`: `na` becomes `Na` (or `Na1`, `Na2`, ... when the role runs
    /// more than one session).
    pub fn fresh_name(&self, role: &str, var: &str, ordinal: usize) -> String {
        let base = capitalize(var);
        if self.role_counts.get(role).copied().unwrap_or(0) > 1 {
            format!("{base}{}", ordinal + 1)
        } else {
            base
        }
    }

    /// Sorts of every atom name that can appear in this model's traces.
    pub fn sort_env(&self) -> HashMap<String, AtomSort> {
        let mut env = HashMap::new();
        for t in &self.spec.intruder_knowledge {
            env.extend(crate::term::sort_env_of([t]));
        }
        for (role, program) in &self.programs {
            let count = self.role_counts.get(role).copied().unwrap_or(0);
            for var in &program.fresh {
                let sort = match self.spec.sort_of(var) {
                    Some(Sort::SymmetricKey) => AtomSort::SymKey,
                    _ => AtomSort::Nonce,
                };
                for ordinal in 0..count.max(1) {
                    env.insert(self.fresh_name(role, var, ordinal), sort);
                }
            }
        }
        for a in &self.agents {
            env.insert(a.to_string(), AtomSort::Agent);
        }
        env
    }

    /// Initial state: every declared session idle, the intruder knowing all
    /// agent names and public keys, its own private key, and whatever the
    /// protocol file grants it.
    pub fn initial_state(&self) -> GlobalState {
        let mut sessions = Vec::new();
        let mut per_role: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &self.spec.system {
            let n = self
                .bounds
                .sessions
                .get(&e.role)
                .copied()
                .unwrap_or(e.count);
            for _ in 0..n {
                let ordinal = per_role.entry(e.role.as_str()).or_default();
                let mut bindings = Bindings::new();
                bindings.insert(e.role.clone(), Term::Agent(e.agent.clone()));
                sessions.push(SessionInstance {
                    id: sessions.len(),
                    role: e.role.clone(),
                    agent: e.agent.clone(),
                    ordinal: *ordinal,
                    pc: 0,
                    bindings,
                    status: if self.programs[&e.role].steps.is_empty() {
                        Status::Completed
                    } else {
                        Status::Running
                    },
                });
                *ordinal += 1;
            }
        }
        let mut known: Vec<Term> = Vec::new();
        for a in &self.agents {
            known.push(Term::Agent(a.clone()));
            known.push(Term::PubKey(a.clone()));
        }
        known.push(Term::PrivKey(self.spec.intruder.clone()));
        known.extend(self.spec.intruder_knowledge.iter().cloned());
        GlobalState {
            sessions,
            intruder: analz_close(&KnowledgeSet::from_terms(known)),
            trace: Vec::new(),
            fresh_count: 0,
        }
    }

    /// Whether `s` may act under symmetry reduction: of several untouched
    /// sessions with the same role and agent, only the first may start.
    fn may_act(&self, state: &GlobalState, s: &SessionInstance) -> bool {
        if s.status != Status::Running {
            return false;
        }
        if s.pc > 0 {
            return true;
        }
        !state.sessions[..s.id].iter().any(|o| {
            o.pc == 0 && o.role == s.role && o.agent == s.agent && o.status == Status::Running
        })
    }

    /// Extends `bindings` in every possible way for the unbound agent
    /// variables in `vars`; peers are never the session's own agent.
    fn bind_agents(&self, s: &SessionInstance, vars: &[&str], bindings: Bindings) -> Vec<Bindings> {
        let mut out = vec![bindings];
        for &v in vars {
            if self.spec.sort_of(v) != Some(Sort::Agent) {
                continue;
            }
            out = out
                .into_iter()
                .flat_map(|b| {
                    if b.contains_key(v) {
                        return vec![b];
                    }
                    self.agents
                        .iter()
                        .filter(|a| **a != s.agent)
                        .map(|a| {
                            let mut nb = b.clone();
                            nb.insert(v.to_string(), Term::Agent(a.clone()));
                            nb
                        })
                        .collect()
                })
                .collect();
        }
        out
    }

    /// All states reachable in one event, ordered by that event.
    pub fn successors(&self, state: &GlobalState) -> Vec<GlobalState> {
        let mut out = Vec::new();
        for s in &state.sessions {
            if !self.may_act(state, s) {
                continue;
            }
            let program = &self.programs[&s.role];
            let step = &program.steps[s.pc];
            let mut start = vec![s.bindings.clone()];
            if s.pc == 0 && !program.environment.is_empty() {
                let env: Vec<&str> = program.environment.iter().map(String::as_str).collect();
                start = self.bind_agents(s, &env, s.bindings.clone());
            }
            for bindings in start {
                if step.sender == s.role {
                    self.send_successors(state, s, step, bindings, &mut out);
                } else {
                    self.receive_successors(state, s, step, bindings, &mut out);
                }
            }
        }
        out.sort_by(|a, b| a.trace.last().cmp(&b.trace.last()));
        out
    }

    fn advance(&self, s: &SessionInstance, bindings: Bindings) -> SessionInstance {
        let mut next = s.clone();
        next.bindings = bindings;
        next.pc += 1;
        if next.pc == self.programs[&s.role].steps.len() {
            next.status = Status::Completed;
        }
        next
    }

    fn send_successors(
        &self,
        state: &GlobalState,
        s: &SessionInstance,
        step: &MessageStep,
        mut bindings: Bindings,
        out: &mut Vec<GlobalState>,
    ) {
        let program = &self.programs[&s.role];
        let mut allocated = 0;
        for var in &program.fresh {
            if step.pattern.mentions(var) && !bindings.contains_key(var) {
                let name = self.fresh_name(&s.role, var, s.ordinal);
                let value = match self.spec.sort_of(var) {
                    Some(Sort::SymmetricKey) => Term::sym_key(&name),
                    _ => Term::nonce(&name),
                };
                bindings.insert(var.clone(), value);
                allocated += 1;
            }
        }
        let mut needed = step.pattern.variables();
        needed.push(step.receiver.as_str());
        for bindings in self.bind_agents(s, &needed, bindings) {
            let Some(message) = step.pattern.instantiate(&bindings) else {
                continue;
            };
            let Some(receiver) = bindings.get(&step.receiver).and_then(agent_name) else {
                continue;
            };
            let message = normalize(&message);
            let mut next = state.clone();
            next.intruder = observe(&state.intruder, &message);
            next.fresh_count += allocated;
            next.trace.push(Event {
                time: state.trace.len(),
                kind: EventKind::Send,
                actor: s.agent.clone(),
                apparent_sender: s.agent.clone(),
                receiver,
                message,
                session: s.id,
                step: step.index,
            });
            next.sessions[s.id] = self.advance(s, bindings);
            out.push(next);
        }
    }

    /// Candidate values for an unbound variable: atoms of its sort occurring
    /// in what the intruder holds.
    fn candidates(&self, state: &GlobalState, s: &SessionInstance, var: &str) -> Vec<Term> {
        let sort = self.spec.sort_of(var);
        let mut found = BTreeSet::new();
        match sort {
            Some(Sort::Agent) => {
                for a in &self.agents {
                    if *a != s.agent {
                        found.insert(Term::Agent(a.clone()));
                    }
                }
            }
            Some(Sort::Nonce) => {
                for t in state.intruder.iter() {
                    found.extend(parts(t).into_iter().filter(|p| matches!(p, Term::Nonce(_))));
                }
            }
            Some(Sort::SymmetricKey) | Some(Sort::PublicKey) => {
                for t in state.intruder.iter() {
                    found.extend(t.syntactic_subterms().into_iter().filter(|p| match sort {
                        Some(Sort::SymmetricKey) => matches!(p, Term::SymKey(_)),
                        _ => matches!(p, Term::PubKey(_)),
                    }));
                }
            }
            None => {}
        }
        found.into_iter().collect()
    }

    fn receive_successors(
        &self,
        state: &GlobalState,
        s: &SessionInstance,
        step: &MessageStep,
        bindings: Bindings,
        out: &mut Vec<GlobalState>,
    ) {
        let unbound: Vec<&str> = step
            .pattern
            .variables()
            .into_iter()
            .filter(|v| !bindings.contains_key(*v))
            .collect();
        let mut assignments = vec![bindings];
        for var in &unbound {
            let values = self.candidates(state, s, var);
            assignments = assignments
                .into_iter()
                .flat_map(|b| {
                    values.iter().map(move |v| {
                        let mut nb = b.clone();
                        nb.insert(var.to_string(), v.clone());
                        nb
                    })
                })
                .collect();
        }
        let mut seen = BTreeSet::new();
        for bindings in assignments {
            let Some(message) = step.pattern.instantiate(&bindings) else {
                continue;
            };
            let message = normalize(&message);
            if !can_synthesize(&state.intruder, &message) {
                continue;
            }
            for bindings in self.bind_agents(s, &[step.sender.as_str()], bindings) {
                let Some(apparent) = bindings.get(&step.sender).and_then(agent_name) else {
                    continue;
                };
                if !seen.insert((message.clone(), bindings.clone())) {
                    continue;
                }
                let mut next = state.clone();
                next.trace.push(Event {
                    time: state.trace.len(),
                    kind: EventKind::Deliver,
                    actor: self.spec.intruder.clone(),
                    apparent_sender: apparent,
                    receiver: s.agent.clone(),
                    message: message.clone(),
                    session: s.id,
                    step: step.index,
                });
                next.sessions[s.id] = self.advance(s, bindings);
                out.push(next);
            }
        }
    }

    /// Checks one goal against a state; `Some` carries the witness.
    pub fn check_goal(
        &self,
        state: &GlobalState,
        goal: &Goal,
    ) -> Result<Option<Violation>, CheckerError> {
        let roles = self.spec.roles();
        for v in goal.variables().into_iter().take(match goal {
            Goal::Secret { .. } => 1,
            Goal::Agreement { .. } => 2,
        }) {
            if !roles.contains(&v) {
                return Err(CheckerError::UnknownRole(v.to_string()));
            }
        }
        let witness = |s: &SessionInstance| Violation {
            goal: goal.clone(),
            session: s.id,
            bindings: s.bindings.clone(),
        };
        match goal {
            Goal::Secret {
                owner,
                value,
                peers,
            } => {
                for s in state.sessions.iter().filter(|s| &s.role == owner) {
                    if s.status != Status::Completed {
                        continue;
                    }
                    let honest_peers = peers
                        .iter()
                        .all(|p| s.agent_binding(p).is_some_and(|a| self.is_honest(a)));
                    if !honest_peers {
                        continue;
                    }
                    if let Some(v) = s.binding(value) {
                        if can_synthesize(&state.intruder, v) {
                            return Ok(Some(witness(s)));
                        }
                    }
                }
                Ok(None)
            }
            Goal::Agreement {
                initiator,
                responder,
                data,
            } => {
                for s in state.sessions.iter().filter(|s| &s.role == responder) {
                    if s.status != Status::Completed {
                        continue;
                    }
                    let Some(partner) = s.agent_binding(initiator) else {
                        continue;
                    };
                    if !self.is_honest(partner) {
                        continue;
                    }
                    let values: Vec<Option<&Term>> = data.iter().map(|d| s.binding(d)).collect();
                    let agreed = state.sessions.iter().any(|o| {
                        &o.role == initiator
                            && &o.agent == partner
                            && o.agent_binding(responder) == Some(&s.agent)
                            && data
                                .iter()
                                .zip(&values)
                                .all(|(d, v)| v.is_some() && o.binding(d) == *v)
                    });
                    if !agreed {
                        return Ok(Some(witness(s)));
                    }
                }
                Ok(None)
            }
        }
    }

    /// Every goal of the spec violated in `state`.
    pub fn violations(&self, state: &GlobalState) -> Vec<Violation> {
        self.spec
            .goals
            .iter()
            .filter_map(|g| self.check_goal(state, g).ok().flatten())
            .collect()
    }
}

fn agent_name(t: &Term) -> Option<Name> {
    match t {
        Term::Agent(a) => Some(a.clone()),
        _ => None,
    }
}

/// Convenience: parse-checked spec plus bounds.
pub fn instantiate(
    spec: &CheckedSpec,
    bounds: &Bounds,
) -> Result<(Model, GlobalState), CheckerError> {
    let model = Model::new(spec.clone(), bounds.clone())?;
    let state = model.initial_state();
    Ok((model, state))
}
