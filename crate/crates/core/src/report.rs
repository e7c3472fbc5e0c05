//! Run orchestration and reports.
//!
//! A [`RunReport`] is rendered either as text or as JSON; both renderings
//! are produced from the same value and carry the same facts.

use std::collections::BTreeMap;
use std::fmt::{self, Display, Write as _};
use std::path::Path;

use serde::{Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::ban::{BanSyntaxError, Derivation, GoalReport};
use crate::checker::{Bounds, CheckerError, Violation};
use crate::dsl::LoadError;
use crate::engine::{EngineRegistry, RunContext};
use crate::fixtures;
use crate::strand::LiftError;

/// JSON schema of [`RunReport`].
pub const REPORT_SCHEMA: &str = include_str!("../schema/run_report.schema.json");

pub fn display_str<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

pub fn display_map<K: Display, V: Display, S: Serializer>(
    m: &BTreeMap<K, V>,
    s: S,
) -> Result<S::Ok, S::Error> {
    s.collect_map(m.iter().map(|(k, v)| (k.to_string(), v.to_string())))
}

/// Exit status of a run.
pub mod exit {
    pub const NO_VIOLATION: i32 = 0;
    pub const INPUT_ERROR: i32 = 2;
    pub const BUDGET_EXCEEDED: i32 = 3;
    pub const VIOLATION: i32 = 10;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    /// A file path or the name of a bundled protocol.
    pub protocol: String,
    pub engine: String,
    pub bounds: Bounds,
    pub format: Format,
    /// A file path or the name of a bundled idealization.
    pub idealization: Option<String>,
}

impl RunConfig {
    pub fn new(protocol: impl Into<String>, engine: impl Into<String>) -> Self {
        Self {
            protocol: protocol.into(),
            engine: engine.into(),
            bounds: Bounds::default(),
            format: Format::Text,
            idealization: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Protocol { path: String, source: LoadError },
    #[error("{path}: {source}")]
    Idealization {
        path: String,
        source: BanSyntaxError,
    },
    #[error("unknown engine `{0}`")]
    UnknownEngine(String),
    #[error("engine `{0}` needs --idealization")]
    MissingIdealization(String),
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error(transparent)]
    Checker(#[from] CheckerError),
    #[error(transparent)]
    Lift(#[from] LiftError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Checker(CheckerError::StateBudgetExceeded { .. }) => exit::BUDGET_EXCEEDED,
            _ => exit::INPUT_ERROR,
        }
    }
}

/// Reads a file, falling back to the bundled fixtures by name.
pub fn read_source(name: &str) -> Result<String, RunError> {
    let path = Path::new(name);
    if path.exists() {
        return std::fs::read_to_string(path).map_err(|e| RunError::Io {
            path: name.to_string(),
            message: e.to_string(),
        });
    }
    fixtures::bundled(name)
        .map(String::from)
        .ok_or_else(|| RunError::Io {
            path: name.to_string(),
            message: "no such file or bundled fixture".into(),
        })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EngineVerdict {
    pub engine: String,
    /// `attack`, `exhausted`, `holds`, `fails`, `inconclusive`, `flagged`
    /// or `derived`.
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SearchSection {
    /// `attack` or `exhausted`.
    pub outcome: String,
    pub max_depth: usize,
    pub state_budget: usize,
    pub sessions: BTreeMap<String, usize>,
    pub violations: Vec<Violation>,
    /// Alice-Bob lines of the attack trace.
    pub trace_text: Vec<String>,
    /// Structured trace: `{ steps, goal, bindings }`.
    pub trace: Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResponderVerdict {
    pub responder: String,
    /// `holds`, `fails` or `hypotheses not met`.
    pub verdict: String,
    pub initiator: Option<String>,
    pub witnesses: Vec<String>,
    pub reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StrandSection {
    /// `attack trace`, `honest run` or `none`.
    pub source: String,
    pub wellformed: bool,
    pub violations: Vec<String>,
    pub responders: Vec<ResponderVerdict>,
    /// Text export of the bundle, one line per entry.
    pub bundle: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BanGoal {
    pub name: String,
    pub goal: String,
    pub derivable: bool,
    pub assumptions: Vec<u32>,
    pub flagged: bool,
    pub load_bearing: Vec<u32>,
    pub unknown_principals: Vec<String>,
    /// Indented derivation tree, one node per line.
    pub derivation: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BanSection {
    pub derived_facts: usize,
    pub unjustified: Vec<u32>,
    pub goals: Vec<BanGoal>,
}

impl BanSection {
    pub fn new(report: &GoalReport, derived_facts: usize, unjustified: Vec<u32>) -> Self {
        let goals = report
            .goals
            .iter()
            .map(|g| BanGoal {
                name: g.name.clone(),
                goal: g.goal.to_string(),
                derivable: g.derivable,
                assumptions: g.assumptions.clone(),
                flagged: g.flagged,
                load_bearing: g.load_bearing.clone(),
                unknown_principals: g.unknown_principals.clone(),
                derivation: g
                    .derivation
                    .as_ref()
                    .map(derivation_lines)
                    .unwrap_or_default(),
            })
            .collect();
        Self {
            derived_facts,
            unjustified,
            goals,
        }
    }
}

fn derivation_lines(d: &Derivation) -> Vec<String> {
    crate::ban::render_derivation(d)
        .lines()
        .map(String::from)
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Statistics {
    pub states_explored: usize,
    pub depth_reached: usize,
    pub peak_frontier: usize,
    /// Wall-clock milliseconds; the only field that varies between runs.
    pub duration_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RunReport {
    pub protocol: String,
    pub engine: String,
    pub verdicts: Vec<EngineVerdict>,
    pub search: Option<SearchSection>,
    pub strand: Option<StrandSection>,
    pub ban: Option<BanSection>,
    pub statistics: Option<Statistics>,
    pub exit_code: i32,
}

impl RunReport {
    pub fn new(protocol: &str, engine: &str) -> Self {
        Self {
            protocol: protocol.to_string(),
            engine: engine.to_string(),
            verdicts: Vec::new(),
            search: None,
            strand: None,
            ban: None,
            statistics: None,
            exit_code: exit::NO_VIOLATION,
        }
    }

    /// The same report with wall-clock fields zeroed, for comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        if let Some(s) = &mut r.statistics {
            s.duration_ms = 0;
        }
        r
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.to_string(),
            Format::Json => {
                let mut s =
                    serde_json::to_string_pretty(&self.to_json()).expect("report serializes");
                s.push('\n');
                s
            }
        }
    }
}

fn list<T: Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        writeln!(out, "protocol: {}", self.protocol)?;
        writeln!(out, "engine: {}", self.engine)?;
        for v in &self.verdicts {
            writeln!(out, "verdict: {} {}", v.engine, v.verdict)?;
        }
        if let Some(s) = &self.search {
            let sessions: Vec<String> =
                s.sessions.iter().map(|(r, n)| format!("{r}={n}")).collect();
            writeln!(
                out,
                "\nsearch bounds: max depth {}, state budget {}, sessions {}",
                s.max_depth,
                s.state_budget,
                sessions.join(",")
            )?;
            if s.outcome == "exhausted" {
                writeln!(out, "Exhausted: no attack within bounds")?;
            } else {
                writeln!(out, "Attack found:")?;
                for line in &s.trace_text {
                    writeln!(out, "  {line}")?;
                }
                for v in &s.violations {
                    let bindings: Vec<String> = v
                        .bindings
                        .iter()
                        .map(|(k, t)| format!("{k} = {t}"))
                        .collect();
                    writeln!(
                        out,
                        "violated: {} (session {}; {})",
                        v.goal,
                        v.session,
                        bindings.join(", ")
                    )?;
                }
            }
        }
        if let Some(s) = &self.strand {
            writeln!(out, "\nstrand analysis of the {}", s.source)?;
            writeln!(
                out,
                "bundle well-formed: {}",
                if s.wellformed { "yes" } else { "no" }
            )?;
            for v in &s.violations {
                writeln!(out, "  bundle violation: {v}")?;
            }
            for r in &s.responders {
                write!(
                    out,
                    "responder's guarantee for {}: {}",
                    r.responder, r.verdict
                )?;
                if let Some(i) = &r.initiator {
                    write!(out, ", matched by {i}")?;
                }
                if r.verdict == "fails" {
                    if r.witnesses.is_empty() {
                        write!(out, ", no initiator strand with these values")?;
                    } else {
                        write!(out, ", initiator strands present: {}", list(&r.witnesses))?;
                    }
                }
                if let Some(reason) = &r.reason {
                    write!(out, " ({reason})")?;
                }
                writeln!(out)?;
            }
            writeln!(out, "bundle:")?;
            for line in &s.bundle {
                writeln!(out, "  {line}")?;
            }
        }
        if let Some(b) = &self.ban {
            writeln!(out, "\nBAN analysis: {} derived facts", b.derived_facts)?;
            if !b.unjustified.is_empty() {
                let marked: Vec<String> = b.unjustified.iter().map(|i| format!("({i})")).collect();
                writeln!(out, "unjustified assumptions: {}", marked.join(", "))?;
            }
            for g in &b.goals {
                write!(out, "goal {}: {} -- ", g.name, g.goal)?;
                if !g.unknown_principals.is_empty() {
                    write!(out, "unknown principals {}; ", list(&g.unknown_principals))?;
                }
                if g.derivable {
                    let used: Vec<String> =
                        g.assumptions.iter().map(|i| format!("({i})")).collect();
                    write!(out, "derivable from {}", used.join(", "))?;
                } else {
                    write!(out, "not derivable")?;
                }
                if g.flagged {
                    let cited: Vec<String> =
                        g.load_bearing.iter().map(|i| format!("({i})")).collect();
                    write!(out, "; FLAGGED: relies on unjustified {}", cited.join(", "))?;
                }
                writeln!(out)?;
                for line in &g.derivation {
                    writeln!(out, "    {line}")?;
                }
            }
        }
        if let Some(s) = &self.statistics {
            writeln!(
                out,
                "\nstatistics: states explored {}, depth reached {}, peak frontier {}, duration {} ms",
                s.states_explored, s.depth_reached, s.peak_frontier, s.duration_ms
            )?;
        }
        writeln!(out, "exit code: {}", self.exit_code)?;
        f.write_str(&out)
    }
}

/// Loads the inputs, runs the selected engine and assembles the report.
pub fn run(config: &RunConfig) -> Result<RunReport, RunError> {
    run_with(&EngineRegistry::builtin(), config)
}

pub fn run_with(registry: &EngineRegistry, config: &RunConfig) -> Result<RunReport, RunError> {
    let engine = registry
        .get(&config.engine)
        .ok_or_else(|| RunError::UnknownEngine(config.engine.clone()))?;
    if config.bounds.max_depth == 0 || config.bounds.state_budget == 0 || config.bounds.workers == 0
    {
        return Err(RunError::InvalidBounds("bounds must be positive".into()));
    }
    if let Some((role, _)) = config.bounds.sessions.iter().find(|(_, &n)| n == 0) {
        return Err(RunError::InvalidBounds(format!(
            "no sessions for role {role}"
        )));
    }
    if engine.needs_idealization() && config.idealization.is_none() {
        return Err(RunError::MissingIdealization(config.engine.clone()));
    }
    let mut ctx = RunContext::load(config)?;
    engine.run(&mut ctx)?;
    let mut report = ctx.report;
    report.exit_code = if report.verdicts.iter().any(|v| {
        matches!(
            v.verdict.as_str(),
            "attack" | "fails" | "flagged" | "underived"
        )
    }) {
        exit::VIOLATION
    } else {
        exit::NO_VIOLATION
    };
    Ok(report)
}
