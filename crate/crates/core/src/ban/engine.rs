use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use super::{Formula, Idealization};
use crate::term::Name;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Assumption(u32),
    Receipt(u32),
    /// Seeing a conjunction means seeing each conjunct.
    SeeingComponents,
    /// Seeing `{X}K` with a believed good key `K` one shares means seeing `X`.
    Decryption,
    MessageMeaning,
    /// Believing a conjunct fresh means believing the conjunction fresh.
    Freshness,
    NonceVerification,
    ConjunctionElimination,
    Jurisdiction,
    ConjunctionIntroduction,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::Assumption(i) => write!(f, "assumption ({i})"),
            Rule::Receipt(i) => write!(f, "receipt of message {i}"),
            Rule::SeeingComponents => f.write_str("seeing components"),
            Rule::Decryption => f.write_str("decryption"),
            Rule::MessageMeaning => f.write_str("message meaning"),
            Rule::Freshness => f.write_str("freshness"),
            Rule::NonceVerification => f.write_str("nonce verification"),
            Rule::ConjunctionElimination => f.write_str("conjunction elimination"),
            Rule::Jurisdiction => f.write_str("jurisdiction"),
            Rule::ConjunctionIntroduction => f.write_str("conjunction introduction"),
        }
    }
}

/// A derivation tree. Leaves are assumptions or message receipts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Derivation {
    pub conclusion: Formula,
    pub rule: Rule,
    pub premises: Vec<Derivation>,
}

impl Derivation {
    /// Assumption numbers at the leaves.
    pub fn assumptions(&self) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<u32>) {
        if let Rule::Assumption(i) = self.rule {
            out.insert(i);
        }
        self.premises.iter().for_each(|p| p.collect(out));
    }

    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(Derivation::size).sum::<usize>()
    }
}

/// Indented tree, one node per line: `formula  [rule]`.
pub fn render_derivation(d: &Derivation) -> String {
    fn go(d: &Derivation, depth: usize, out: &mut String) {
        out.push_str(&"  ".repeat(depth));
        out.push_str(&format!("{}  [{}]\n", d.conclusion, d.rule));
        for p in &d.premises {
            go(p, depth + 1, out);
        }
    }
    let mut out = String::new();
    go(d, 0, &mut out);
    out
}

type FactId = usize;

#[derive(Clone, Debug)]
struct Fact {
    formula: Formula,
    /// Every way the fact was obtained; the first one is the earliest and
    /// only uses older facts.
    justifications: Vec<(Rule, Vec<FactId>)>,
}

/// The fixed point of the inference rules over an idealized protocol.
#[derive(Clone, Debug)]
pub struct Saturation {
    facts: Vec<Fact>,
    index: HashMap<Formula, FactId>,
    closure: BTreeSet<Formula>,
    principals: BTreeSet<Name>,
    /// Smallest known assumption support per fact, with the justification
    /// achieving it.
    support: Vec<Option<(BTreeSet<u32>, usize)>>,
}

impl Saturation {
    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Derived formulas in derivation order.
    pub fn formulas(&self) -> impl Iterator<Item = &Formula> {
        self.facts.iter().map(|f| &f.formula)
    }

    pub fn closure_size(&self) -> usize {
        self.closure.len()
    }

    pub fn principal_count(&self) -> usize {
        self.principals.len()
    }

    /// Whether a goal holds. A conjunction of statements holds when every
    /// conjunct does.
    pub fn holds(&self, goal: &Formula) -> bool {
        goal.conjuncts().iter().all(|g| self.index.contains_key(g))
    }

    pub fn derivation(&self, goal: &Formula) -> Option<Derivation> {
        if let Some(&id) = self.index.get(goal) {
            return Some(self.tree(id, &mut Vec::new()));
        }
        match goal {
            Formula::Conjunction(items) => {
                let premises = items
                    .iter()
                    .map(|g| self.derivation(g))
                    .collect::<Option<Vec<_>>>()?;
                Some(Derivation {
                    conclusion: goal.clone(),
                    rule: Rule::ConjunctionIntroduction,
                    premises,
                })
            }
            _ => None,
        }
    }

    fn tree(&self, id: FactId, path: &mut Vec<FactId>) -> Derivation {
        let fact = &self.facts[id];
        let preferred = self.support[id].as_ref().map(|(_, j)| *j);
        let acyclic = |j: usize| fact.justifications[j].1.iter().all(|p| !path.contains(p));
        let j = match preferred {
            Some(j) if acyclic(j) => j,
            _ => 0,
        };
        let (rule, premises) = &fact.justifications[j];
        path.push(id);
        let premises = premises.iter().map(|&p| self.tree(p, path)).collect();
        path.pop();
        Derivation {
            conclusion: fact.formula.clone(),
            rule: *rule,
            premises,
        }
    }

    fn add(&mut self, formula: Formula, rule: Rule, premises: Vec<FactId>) -> bool {
        match self.index.get(&formula) {
            Some(&id) => {
                let just = &mut self.facts[id].justifications;
                if !just.iter().any(|(r, p)| *r == rule && *p == premises) {
                    just.push((rule, premises));
                }
                false
            }
            None => {
                self.index.insert(formula.clone(), self.facts.len());
                self.facts.push(Fact {
                    formula,
                    justifications: vec![(rule, premises)],
                });
                true
            }
        }
    }

    fn id(&self, f: &Formula) -> Option<FactId> {
        self.index.get(f).copied()
    }

    /// One round of every rule over the current facts, in priority order.
    fn round(&mut self) -> bool {
        let n = self.facts.len();
        let mut found: Vec<(Formula, Rule, Vec<FactId>)> = Vec::new();
        let conjunctions: Vec<&Formula> = self
            .closure
            .iter()
            .filter(|f| matches!(f, Formula::Conjunction(_)))
            .collect();

        // Decomposition of what is seen.
        for id in 0..n {
            if let Formula::Sees(p, x) = &self.facts[id].formula {
                match &**x {
                    Formula::Conjunction(items) => {
                        for item in items {
                            found.push((
                                Formula::Sees(p.clone(), Box::new(item.clone())),
                                Rule::SeeingComponents,
                                vec![id],
                            ));
                        }
                    }
                    Formula::EncryptedWith(inner, k) => {
                        for (kid, _) in self.key_beliefs(p, k) {
                            found.push((
                                Formula::Sees(p.clone(), inner.clone()),
                                Rule::Decryption,
                                vec![id, kid],
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
        // Message meaning.
        for id in 0..n {
            if let Formula::Sees(p, x) = &self.facts[id].formula {
                if let Formula::EncryptedWith(inner, k) = &**x {
                    for (kid, q) in self.key_beliefs(p, k) {
                        found.push((
                            Formula::Believes(
                                p.clone(),
                                Box::new(Formula::OnceSaid(q, inner.clone())),
                            ),
                            Rule::MessageMeaning,
                            vec![id, kid],
                        ));
                    }
                }
            }
        }
        // Freshness of enclosing conjunctions.
        for id in 0..n {
            if let Formula::Believes(p, b) = &self.facts[id].formula {
                if let Formula::Fresh(y) = &**b {
                    for c in &conjunctions {
                        if c.conjuncts().contains(y) {
                            found.push((
                                Formula::believes(p, Formula::fresh((*c).clone())),
                                Rule::Freshness,
                                vec![id],
                            ));
                        }
                    }
                }
            }
        }
        // Nonce verification.
        for id in 0..n {
            if let Formula::Believes(p, b) = &self.facts[id].formula {
                if let Formula::OnceSaid(q, x) = &**b {
                    let fresh = Formula::Believes(p.clone(), Box::new(Formula::Fresh(x.clone())));
                    if let Some(fid) = self.id(&fresh) {
                        found.push((
                            Formula::Believes(
                                p.clone(),
                                Box::new(Formula::Believes(q.clone(), x.clone())),
                            ),
                            Rule::NonceVerification,
                            vec![id, fid],
                        ));
                    }
                }
            }
        }
        // Conjunction elimination inside beliefs.
        for id in 0..n {
            if let Formula::Believes(p, b) = &self.facts[id].formula {
                let wrap: Box<dyn Fn(Formula) -> Formula> = match &**b {
                    Formula::Conjunction(_) => Box::new(|x| x),
                    Formula::Believes(q, _) => {
                        let q = q.clone();
                        Box::new(move |x| Formula::Believes(q.clone(), Box::new(x)))
                    }
                    Formula::OnceSaid(q, _) => {
                        let q = q.clone();
                        Box::new(move |x| Formula::OnceSaid(q.clone(), Box::new(x)))
                    }
                    _ => continue,
                };
                let inner = match &**b {
                    Formula::Believes(_, x) | Formula::OnceSaid(_, x) => &**x,
                    other => other,
                };
                if let Formula::Conjunction(items) = inner {
                    for item in items {
                        found.push((
                            Formula::Believes(p.clone(), Box::new(wrap(item.clone()))),
                            Rule::ConjunctionElimination,
                            vec![id],
                        ));
                    }
                }
            }
        }
        // Jurisdiction.
        for id in 0..n {
            if let Formula::Believes(p, b) = &self.facts[id].formula {
                if let Formula::Jurisdiction(q, x) = &**b {
                    let said = Formula::Believes(
                        p.clone(),
                        Box::new(Formula::Believes(q.clone(), x.clone())),
                    );
                    if let Some(sid) = self.id(&said) {
                        found.push((
                            Formula::Believes(p.clone(), x.clone()),
                            Rule::Jurisdiction,
                            vec![id, sid],
                        ));
                    }
                }
            }
        }
        // Conjunction introduction, only towards conjunctions in the closure.
        for p in &self.principals {
            for c in &conjunctions {
                let premises: Option<Vec<FactId>> = c
                    .conjuncts()
                    .iter()
                    .map(|x| self.id(&Formula::Believes(p.clone(), Box::new(x.clone()))))
                    .collect();
                if let Some(premises) = premises {
                    found.push((
                        Formula::Believes(p.clone(), Box::new((*c).clone())),
                        Rule::ConjunctionIntroduction,
                        premises,
                    ));
                }
            }
        }

        let mut changed = false;
        for (f, rule, premises) in found {
            changed |= self.add(f, rule, premises);
        }
        changed
    }

    /// Facts `P |= P<-K->Q` (or `Q<-K->P`), with the partner `Q`.
    fn key_beliefs(&self, p: &Name, k: &Name) -> Vec<(FactId, Name)> {
        self.principals
            .iter()
            .filter_map(|q| {
                let f = Formula::Believes(p.clone(), Box::new(Formula::good_key(k, p, q)));
                self.id(&f).map(|id| (id, q.clone()))
            })
            .collect()
    }

    fn fixpoint(&mut self) {
        while self.round() {}
    }

    fn compute_support(&mut self) {
        let mut support: Vec<Option<(BTreeSet<u32>, usize)>> = vec![None; self.facts.len()];
        let better = |a: &BTreeSet<u32>, b: &BTreeSet<u32>| (a.len(), a) < (b.len(), b);
        loop {
            let mut changed = false;
            for id in 0..self.facts.len() {
                for (j, (rule, premises)) in self.facts[id].justifications.iter().enumerate() {
                    let mut cand = BTreeSet::new();
                    if let Rule::Assumption(i) = rule {
                        cand.insert(*i);
                    }
                    let mut complete = true;
                    for p in premises {
                        match &support[*p] {
                            Some((s, _)) => cand.extend(s.iter().copied()),
                            None => {
                                complete = false;
                                break;
                            }
                        }
                    }
                    if !complete {
                        continue;
                    }
                    let improves = match &support[id] {
                        None => true,
                        Some((s, _)) => better(&cand, s),
                    };
                    if improves {
                        support[id] = Some((cand, j));
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        self.support = support;
    }
}

/// Forward-chains from the assumptions, then processes each message in
/// order, saturating after every receipt.
pub fn saturate(ideal: &Idealization) -> Saturation {
    let mut closure = BTreeSet::new();
    for a in &ideal.assumptions {
        a.formula.subformulas(&mut closure);
    }
    for s in &ideal.steps {
        s.content.subformulas(&mut closure);
    }
    let mut sat = Saturation {
        facts: Vec::new(),
        index: HashMap::new(),
        closure,
        principals: ideal.principals(),
        support: Vec::new(),
    };
    for a in &ideal.assumptions {
        sat.add(a.formula.clone(), Rule::Assumption(a.index), Vec::new());
    }
    sat.fixpoint();
    for s in &ideal.steps {
        let seen = Formula::Sees(s.receiver.clone(), Box::new(s.content.clone()));
        sat.add(seen, Rule::Receipt(s.index), Vec::new());
        sat.fixpoint();
    }
    // Every derived fact has one of five shapes around a closure element.
    let p = sat.principals.len().max(1);
    debug_assert!(
        sat.facts.len() <= sat.closure.len() * (3 * p + 2 * p * p) + ideal.assumptions.len()
    );
    sat.compute_support();
    sat
}

/// Re-checks every node of a derivation against its rule.
pub fn verify_derivation(ideal: &Idealization, d: &Derivation) -> bool {
    let c = &d.conclusion;
    let ps: Vec<&Formula> = d.premises.iter().map(|p| &p.conclusion).collect();
    let ok = match (d.rule, ps.as_slice()) {
        (Rule::Assumption(i), []) => ideal
            .assumptions
            .iter()
            .any(|a| a.index == i && a.formula == *c),
        (Rule::Receipt(i), []) => ideal.steps.iter().any(|s| {
            s.index == i && *c == Formula::Sees(s.receiver.clone(), Box::new(s.content.clone()))
        }),
        (Rule::SeeingComponents, [Formula::Sees(p, x)]) => {
            matches!(c, Formula::Sees(q, y) if q == p && x.conjuncts().len() > 1 && x.conjuncts().contains(y))
        }
        (Rule::Decryption, [Formula::Sees(p, x), Formula::Believes(p2, key)]) => {
            match (&**x, &**key, c) {
                (
                    Formula::EncryptedWith(inner, k),
                    Formula::GoodKey(k2, a, b),
                    Formula::Sees(q, y),
                ) => p == p2 && q == p && k == k2 && (a == p || b == p) && inner == y,
                _ => false,
            }
        }
        (Rule::MessageMeaning, [Formula::Sees(p, x), Formula::Believes(p2, key)]) => {
            match (&**x, &**key, c) {
                (
                    Formula::EncryptedWith(inner, k),
                    Formula::GoodKey(k2, a, b),
                    Formula::Believes(q, said),
                ) => {
                    let partner = if a == p { b } else { a };
                    p == p2
                        && q == p
                        && k == k2
                        && (a == p || b == p)
                        && **said == Formula::OnceSaid(partner.clone(), inner.clone())
                }
                _ => false,
            }
        }
        (Rule::Freshness, [Formula::Believes(p, fy)]) => match (&**fy, c) {
            (Formula::Fresh(y), Formula::Believes(q, fx)) => match &**fx {
                Formula::Fresh(x) => p == q && x.conjuncts().len() > 1 && x.conjuncts().contains(y),
                _ => false,
            },
            _ => false,
        },
        (Rule::NonceVerification, [Formula::Believes(p, said), Formula::Believes(p2, fresh)]) => {
            match (&**said, &**fresh) {
                (Formula::OnceSaid(q, x), Formula::Fresh(x2)) => {
                    p == p2
                        && x == x2
                        && *c
                            == Formula::Believes(
                                p.clone(),
                                Box::new(Formula::Believes(q.clone(), x.clone())),
                            )
                }
                _ => false,
            }
        }
        (Rule::ConjunctionElimination, [Formula::Believes(p, b)]) => {
            let ok_item =
                |x: &Formula, y: &Formula| x.conjuncts().len() > 1 && x.conjuncts().contains(y);
            match (&**b, c) {
                (Formula::Believes(q, x), Formula::Believes(p2, inner)) if p == p2 => {
                    matches!(&**inner, Formula::Believes(q2, y) if q2 == q && ok_item(x, y))
                }
                (Formula::OnceSaid(q, x), Formula::Believes(p2, inner)) if p == p2 => {
                    matches!(&**inner, Formula::OnceSaid(q2, y) if q2 == q && ok_item(x, y))
                }
                (x, Formula::Believes(p2, y)) => p == p2 && ok_item(x, y),
                _ => false,
            }
        }
        (Rule::Jurisdiction, [Formula::Believes(p, j), Formula::Believes(p2, b)]) => {
            match (&**j, &**b) {
                (Formula::Jurisdiction(q, x), Formula::Believes(q2, x2)) => {
                    p == p2 && q == q2 && x == x2 && *c == Formula::Believes(p.clone(), x.clone())
                }
                _ => false,
            }
        }
        (Rule::ConjunctionIntroduction, ps) if !ps.is_empty() => {
            let top = Formula::conj(ps.iter().map(|f| (*f).clone()));
            *c == top
                || match c {
                    Formula::Believes(p, x) => {
                        x.conjuncts().len() == ps.len()
                            && x.conjuncts().iter().zip(ps.iter()).all(|(y, f)| {
                                **f == Formula::Believes(p.clone(), Box::new(y.clone()))
                            })
                    }
                    _ => false,
                }
        }
        _ => false,
    };
    ok && d.premises.iter().all(|p| verify_derivation(ideal, p))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GoalVerdict {
    pub name: String,
    #[serde(serialize_with = "crate::report::display_str")]
    pub goal: Formula,
    pub derivable: bool,
    /// Leaf assumptions of the reported derivation.
    pub assumptions: Vec<u32>,
    /// Derivable only thanks to assumptions marked unjustified.
    pub flagged: bool,
    /// Unjustified assumptions whose removal alone loses the goal; when
    /// none does on its own, every unjustified assumption the derivation
    /// uses.
    pub load_bearing: Vec<u32>,
    /// Principals named by the goal but unknown to the protocol.
    pub unknown_principals: Vec<String>,
    #[serde(skip)]
    pub derivation: Option<Derivation>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GoalReport {
    pub goals: Vec<GoalVerdict>,
}

impl GoalReport {
    pub fn any_flagged(&self) -> bool {
        self.goals.iter().any(|g| g.flagged)
    }

    pub fn all_derivable(&self) -> bool {
        self.goals.iter().all(|g| g.derivable)
    }
}

/// Evaluates the idealization's goals against a saturation of it.
pub fn audit_goals(ideal: &Idealization, sat: &Saturation) -> GoalReport {
    let known = ideal.principals();
    let justified = ideal.with_assumptions(
        &ideal
            .assumption_indices()
            .difference(&ideal.unjustified)
            .copied()
            .collect(),
    );
    let without_unjustified = saturate(&justified);
    let mut goals = Vec::new();
    for g in &ideal.goals {
        let mut named = BTreeSet::new();
        g.formula.principals(&mut named);
        let unknown: Vec<String> = named.difference(&known).map(|n| n.to_string()).collect();
        let derivation = if unknown.is_empty() {
            sat.derivation(&g.formula)
        } else {
            None
        };
        let derivable = derivation.is_some();
        let assumptions: BTreeSet<u32> = derivation
            .as_ref()
            .map(Derivation::assumptions)
            .unwrap_or_default();
        let flagged = derivable && !without_unjustified.holds(&g.formula);
        let mut load_bearing = Vec::new();
        if flagged {
            for &u in &ideal.unjustified {
                let mut keep = ideal.assumption_indices();
                keep.remove(&u);
                if !saturate(&ideal.with_assumptions(&keep)).holds(&g.formula) {
                    load_bearing.push(u);
                }
            }
            if load_bearing.is_empty() {
                load_bearing = assumptions
                    .intersection(&ideal.unjustified)
                    .copied()
                    .collect();
            }
        }
        goals.push(GoalVerdict {
            name: g.name.clone(),
            goal: g.formula.clone(),
            derivable,
            assumptions: assumptions.into_iter().collect(),
            flagged,
            load_bearing,
            unknown_principals: unknown,
            derivation,
        });
    }
    GoalReport { goals }
}

#[cfg(test)]
mod tests {
    use super::super::{parse_formula, parse_idealization};
    use super::*;
    use crate::fixtures;

    fn fixture() -> Idealization {
        parse_idealization(fixtures::NSPK_SYM_BAN).unwrap()
    }

    fn f(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    #[test]
    fn empty_input_derives_nothing() {
        assert!(saturate(&Idealization::default()).is_empty());
    }

    #[test]
    fn message_two_is_seen_and_attributed_to_the_server() {
        let sat = saturate(&fixture());
        assert!(sat.holds(&f("A <| {Na, A<-Kab->B, #(A<-Kab->B), {A<-Kab->B}Kbs}Kas")));
        assert!(sat.holds(&f(
            "A |= S |~ (Na, A<-Kab->B, #(A<-Kab->B), {A<-Kab->B}Kbs)"
        )));
        assert!(sat.holds(&f("A |= #(Na, A<-Kab->B, #(A<-Kab->B), {A<-Kab->B}Kbs)")));
        assert!(sat.holds(&f("A |= S |= A<-Kab->B & A |= S |= #(A<-Kab->B)")));
        assert!(sat.holds(&f("B <| {A<-Kab->B}Kbs")));
        assert!(sat.holds(&f("B |= S |~ A<-Kab->B")));
        assert!(sat.holds(&f("B |= S |= A<-Kab->B")));
    }

    #[test]
    fn fixture_goals_hold() {
        let sat = saturate(&fixture());
        for g in &fixture().goals {
            assert!(sat.holds(&g.formula), "{} not derived", g.name);
        }
        assert!(sat.holds(&f("A |= A<-Kab->B & A |= #(A<-Kab->B)")));
        assert!(sat.holds(&f("B |= A<-Kab->B")));
        assert!(sat.holds(&f("A |= B |= A<-Kab->B & B |= A |= A<-Kab->B")));
    }

    #[test]
    fn key_mismatch_blocks_message_meaning() {
        let ideal = parse_idealization("(1) A |= A<-Kas->S\n2. S -> A : {Na}Kbs\n").unwrap();
        let sat = saturate(&ideal);
        assert!(!sat
            .formulas()
            .any(|x| matches!(x, Formula::Believes(_, b) if matches!(**b, Formula::OnceSaid(..)))));
    }

    #[test]
    fn missing_jurisdiction_blocks_the_conclusion() {
        let ideal = parse_idealization(
            "(1) B |= B<-Kbs->S\n(8) B |= #(A<-Kab->B)\n3. A -> B : {A<-Kab->B}Kbs\n",
        )
        .unwrap();
        let sat = saturate(&ideal);
        assert!(sat.holds(&f("B |= S |= A<-Kab->B")));
        assert!(!sat.holds(&f("B |= A<-Kab->B")));
    }

    #[test]
    fn every_derivation_replays() {
        let ideal = fixture();
        let sat = saturate(&ideal);
        for x in sat.formulas() {
            let d = sat.derivation(x).unwrap();
            assert!(
                verify_derivation(&ideal, &d),
                "bad derivation:\n{}",
                render_derivation(&d)
            );
        }
    }

    #[test]
    fn size_stays_within_bound() {
        let sat = saturate(&fixture());
        let p = sat.principal_count();
        assert!(sat.len() <= sat.closure_size() * p * p);
    }

    #[test]
    fn assumption_eight_is_flagged_for_the_responder() {
        let ideal = fixture();
        let report = audit_goals(&ideal, &saturate(&ideal));
        let by_name = |n: &str| report.goals.iter().find(|g| g.name == n).unwrap();
        assert!(!by_name("R1").flagged);
        assert!(by_name("R2").flagged);
        assert_eq!(by_name("R2").load_bearing, vec![8]);
        assert!(by_name("R3").flagged);
        assert_eq!(by_name("R3").load_bearing, vec![8]);
    }

    #[test]
    fn unknown_principal_is_not_derivable() {
        let mut ideal = fixture();
        ideal.goals = vec![super::super::NamedGoal {
            name: "X".into(),
            formula: f("C |= A<-Kab->B"),
        }];
        let report = audit_goals(&ideal, &saturate(&ideal));
        assert!(!report.goals[0].derivable);
        assert_eq!(report.goals[0].unknown_principals, vec!["C".to_string()]);
    }
}
