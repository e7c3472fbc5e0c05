//! Analysis engines behind one trait, looked up by name.

use std::collections::BTreeMap;

use crate::ban::{audit_goals, parse_idealization, saturate, Idealization};
use crate::checker::{
    honest_run, render_trace_json, render_trace_text, search, Model, SearchOutcome,
};
use crate::dsl::load;
use crate::report::{
    read_source, BanSection, EngineVerdict, ResponderVerdict, RunConfig, RunError, RunReport,
    SearchSection, Statistics, StrandSection,
};
use crate::strand::{check_wellformed, lift, responder_guarantee, role_map, Guarantee};

/// Inputs shared by the engines of one run, and the report they fill in.
pub struct RunContext {
    pub model: Model,
    pub idealization: Option<Idealization>,
    pub report: RunReport,
    outcome: Option<SearchOutcome>,
}

impl RunContext {
    pub fn load(config: &RunConfig) -> Result<Self, RunError> {
        let source = read_source(&config.protocol)?;
        let spec = load(&source).map_err(|source| RunError::Protocol {
            path: config.protocol.clone(),
            source,
        })?;
        let model = Model::new(spec, config.bounds.clone())?;
        let idealization = match &config.idealization {
            Some(path) => {
                let text = read_source(path)?;
                Some(
                    parse_idealization(&text).map_err(|source| RunError::Idealization {
                        path: path.clone(),
                        source,
                    })?,
                )
            }
            None => None,
        };
        Ok(Self::new(
            model,
            idealization,
            RunReport::new(&config.protocol, &config.engine),
        ))
    }

    pub fn new(model: Model, idealization: Option<Idealization>, report: RunReport) -> Self {
        Self {
            model,
            idealization,
            report,
            outcome: None,
        }
    }

    /// The bounded search result, computed once per run.
    pub fn search_outcome(&mut self) -> Result<&SearchOutcome, RunError> {
        if self.outcome.is_none() {
            let outcome = search(&self.model)?;
            let stats = outcome.stats();
            self.report.statistics = Some(Statistics {
                states_explored: stats.states_explored,
                depth_reached: stats.depth_reached,
                peak_frontier: stats.peak_frontier,
                duration_ms: stats.duration.as_millis() as u64,
            });
            self.outcome = Some(outcome);
        }
        Ok(self.outcome.as_ref().expect("just computed"))
    }

    fn verdict(&mut self, engine: &str, verdict: &str) {
        self.report.verdicts.push(EngineVerdict {
            engine: engine.to_string(),
            verdict: verdict.to_string(),
        });
    }
}

pub trait Engine: Send + Sync {
    fn name(&self) -> &str;

    fn needs_idealization(&self) -> bool {
        false
    }

    fn run(&self, ctx: &mut RunContext) -> Result<(), RunError>;
}

/// Bounded attack search.
pub struct SearchEngine;

impl Engine for SearchEngine {
    fn name(&self) -> &str {
        "search"
    }

    fn run(&self, ctx: &mut RunContext) -> Result<(), RunError> {
        let outcome = ctx.search_outcome()?.clone();
        let bounds = ctx.model.bounds();
        let intruder = ctx.model.intruder().to_string();
        let mut sessions = BTreeMap::new();
        for e in &ctx.model.spec().system {
            let n = bounds.sessions.get(&e.role).copied().unwrap_or(e.count);
            *sessions.entry(e.role.clone()).or_default() += n;
        }
        let (verdict, violations, trace) = match &outcome {
            SearchOutcome::Attack(a, _) => ("attack", a.violations.clone(), a.trace.clone()),
            SearchOutcome::Exhausted(_) => ("exhausted", Vec::new(), Vec::new()),
        };
        ctx.report.search = Some(SearchSection {
            outcome: verdict.to_string(),
            max_depth: bounds.max_depth,
            state_budget: bounds.state_budget,
            sessions,
            trace_text: render_trace_text(&trace, &intruder)
                .lines()
                .map(String::from)
                .collect(),
            trace: render_trace_json(&trace, &intruder, &violations),
            violations,
        });
        ctx.verdict("search", verdict);
        Ok(())
    }
}

/// Lifts the attack (or an honest run) to a bundle and checks the
/// responder's guarantee on every completed responder strand.
pub struct StrandEngine;

impl Engine for StrandEngine {
    fn name(&self) -> &str {
        "strand"
    }

    fn run(&self, ctx: &mut RunContext) -> Result<(), RunError> {
        let (source, trace) = match ctx.search_outcome()? {
            SearchOutcome::Attack(a, _) => ("attack trace", Some(a.trace.clone())),
            SearchOutcome::Exhausted(_) => ("honest run", honest_run(&ctx.model)),
        };
        let Some(trace) = trace else {
            ctx.report.strand = Some(StrandSection {
                source: "none".into(),
                wellformed: true,
                violations: Vec::new(),
                responders: Vec::new(),
                bundle: Vec::new(),
            });
            ctx.verdict("strand", "inconclusive");
            return Ok(());
        };
        let bundle = lift(&ctx.model, &trace)?;
        let violations: Vec<String> = match check_wellformed(&bundle) {
            Ok(()) => Vec::new(),
            Err(v) => v.iter().map(|x| x.to_string()).collect(),
        };
        let mut responders = Vec::new();
        if let Some(roles) = role_map(ctx.model.spec()) {
            for (i, s) in bundle.regular_strands() {
                if s.role() != Some(roles.responder_role.as_str()) || !s.is_complete() {
                    continue;
                }
                let responder = s.to_string();
                let v = match responder_guarantee(&bundle, i, &roles) {
                    Ok(Guarantee::Holds { initiator }) => ResponderVerdict {
                        responder,
                        verdict: "holds".into(),
                        initiator: Some(bundle.strands[initiator].to_string()),
                        witnesses: Vec::new(),
                        reason: None,
                    },
                    Ok(Guarantee::Fails { witnesses }) => ResponderVerdict {
                        responder,
                        verdict: "fails".into(),
                        initiator: None,
                        witnesses: witnesses
                            .iter()
                            .map(|&w| bundle.strands[w].to_string())
                            .collect(),
                        reason: None,
                    },
                    Err(e) => ResponderVerdict {
                        responder,
                        verdict: "hypotheses not met".into(),
                        initiator: None,
                        witnesses: Vec::new(),
                        reason: Some(e.to_string()),
                    },
                };
                responders.push(v);
            }
        }
        let verdict = if responders.iter().any(|r| r.verdict == "fails") {
            "fails"
        } else if !responders.is_empty() && responders.iter().all(|r| r.verdict == "holds") {
            "holds"
        } else {
            "inconclusive"
        };
        ctx.report.strand = Some(StrandSection {
            source: source.into(),
            wellformed: violations.is_empty(),
            violations,
            responders,
            bundle: bundle.to_text().lines().map(String::from).collect(),
        });
        ctx.verdict("strand", verdict);
        Ok(())
    }
}

/// BAN saturation and goal audit over the supplied idealization.
pub struct BanEngine;

impl Engine for BanEngine {
    fn name(&self) -> &str {
        "ban"
    }

    fn needs_idealization(&self) -> bool {
        true
    }

    fn run(&self, ctx: &mut RunContext) -> Result<(), RunError> {
        let ideal = ctx
            .idealization
            .as_ref()
            .ok_or_else(|| RunError::MissingIdealization("ban".into()))?;
        let sat = saturate(ideal);
        let report = audit_goals(ideal, &sat);
        let verdict = if report.any_flagged() {
            "flagged"
        } else if !report.all_derivable() {
            "underived"
        } else {
            "derived"
        };
        ctx.report.ban = Some(BanSection::new(
            &report,
            sat.len(),
            ideal.unjustified.iter().copied().collect(),
        ));
        ctx.verdict("ban", verdict);
        Ok(())
    }
}

/// Runs several engines in order on one context.
pub struct Chain {
    name: String,
    engines: Vec<Box<dyn Engine>>,
}

impl Chain {
    pub fn new(name: &str, engines: Vec<Box<dyn Engine>>) -> Self {
        Self {
            name: name.to_string(),
            engines,
        }
    }
}

impl Engine for Chain {
    fn name(&self) -> &str {
        &self.name
    }

    fn needs_idealization(&self) -> bool {
        self.engines.iter().any(|e| e.needs_idealization())
    }

    fn run(&self, ctx: &mut RunContext) -> Result<(), RunError> {
        self.engines.iter().try_for_each(|e| e.run(ctx))
    }
}

#[derive(Default)]
pub struct EngineRegistry {
    engines: BTreeMap<String, Box<dyn Engine>>,
}

impl EngineRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// `search`, `strand`, `ban`, and `all` chaining the three.
    pub fn builtin() -> Self {
        let mut r = Self::new();
        r.register(Box::new(SearchEngine));
        r.register(Box::new(StrandEngine));
        r.register(Box::new(BanEngine));
        r.register(Box::new(Chain::new(
            "all",
            vec![
                Box::new(SearchEngine),
                Box::new(StrandEngine),
                Box::new(BanEngine),
            ],
        )));
        r
    }

    /// Adds an engine, replacing any engine of the same name.
    pub fn register(&mut self, engine: Box<dyn Engine>) {
        self.engines.insert(engine.name().to_string(), engine);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Engine> {
        self.engines.get(name).map(|e| e.as_ref())
    }

    pub fn names(&self) -> Vec<&str> {
        self.engines.keys().map(String::as_str).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{exit, run, RunConfig};

    #[test]
    fn builtin_names() {
        assert_eq!(
            EngineRegistry::builtin().names(),
            ["all", "ban", "search", "strand"]
        );
    }

    #[test]
    fn custom_engines_can_be_registered() {
        struct Nop;
        impl Engine for Nop {
            fn name(&self) -> &str {
                "nop"
            }
            fn run(&self, ctx: &mut RunContext) -> Result<(), RunError> {
                ctx.verdict("nop", "holds");
                Ok(())
            }
        }
        let mut r = EngineRegistry::builtin();
        r.register(Box::new(Nop));
        let report = crate::report::run_with(&r, &RunConfig::new("nspk", "nop")).unwrap();
        assert_eq!(report.verdicts[0].verdict, "holds");
        assert_eq!(report.exit_code, exit::NO_VIOLATION);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(
            run(&RunConfig::new("nspk", "search")).unwrap().exit_code,
            exit::VIOLATION
        );
        assert_eq!(
            run(&RunConfig::new("nsl", "search")).unwrap().exit_code,
            exit::NO_VIOLATION
        );
        let mut ban = RunConfig::new("nspk", "ban");
        assert!(matches!(run(&ban), Err(RunError::MissingIdealization(_))));
        ban.idealization = Some("nspk-sym.ban".into());
        assert_eq!(run(&ban).unwrap().exit_code, exit::VIOLATION);
        let mut tight = RunConfig::new("nsl", "search");
        tight.bounds.state_budget = 10;
        assert_eq!(run(&tight).unwrap_err().exit_code(), exit::BUDGET_EXCEEDED);
        assert_eq!(
            run(&RunConfig::new("missing.casper", "search"))
                .unwrap_err()
                .exit_code(),
            exit::INPUT_ERROR
        );
    }
}
