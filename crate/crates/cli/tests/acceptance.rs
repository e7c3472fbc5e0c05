//! One PASS/FAIL line per acceptance criterion. Run with
//! `cargo test -p protocheck --test acceptance -- --nocapture`.

mod support;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use protocheck_core::ban::{
    audit_goals, parse_formula, parse_idealization, render_derivation, saturate, Formula,
};
use protocheck_core::checker::{
    enumerate_violations, honest_run, replay, search, validate_trace, Bounds, Model,
};
use protocheck_core::dsl::load;
use protocheck_core::fixtures::{NSL, NSPK, NSPK_SYM_BAN};
use protocheck_core::intruder::{analz_close, can_synthesize, KnowledgeSet};
use protocheck_core::report::{run, Format, RunConfig};
use protocheck_core::strand::{
    check_wellformed, lift, minimal_nodes, responder_guarantee, role_map, Bundle, Guarantee, Sign,
};
use protocheck_core::term::{normalize, subterm, Term};
use serde_json::Value;
use support::{deduction, renaming::equal_up_to_renaming};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, why: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why.into())
    }
}

fn protocheck(args: &[&str]) -> (i32, String, Duration) {
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_protocheck"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        started.elapsed(),
    )
}

fn model(src: &str) -> Model {
    Model::new(load(src).unwrap(), Bounds::default()).unwrap()
}

const LOWE_STEPS: [&str; 6] = [
    "1.1) A -> I : {Na, A}{PK(I)}",
    "2.1) I(A) -> B : {Na, A}{PK(B)}",
    "2.2) B -> I(A) : {Na, Nb}{PK(A)}",
    "1.2) I -> A : {Na, Nb}{PK(A)}",
    "1.3) A -> I : {Nb}{PK(I)}",
    "2.3) I(A) -> B : {Nb}{PK(B)}",
];

fn search_json(args: &[&str]) -> Result<(i32, Value, Duration), String> {
    let mut full = vec!["--engine", "search", "--format", "json"];
    full.extend_from_slice(args);
    let (code, out, elapsed) = protocheck(&full);
    let v: Value = serde_json::from_str(&out).map_err(|e| format!("bad JSON: {e}"))?;
    Ok((code, v, elapsed))
}

fn trace_lines(v: &Value) -> Vec<String> {
    v["search"]["trace_text"]
        .as_array()
        .map(|a| a.iter().map(|l| l.as_str().unwrap().to_string()).collect())
        .unwrap_or_default()
}

fn violated(v: &Value) -> BTreeSet<String> {
    v["search"]["violations"]
        .as_array()
        .map(|a| {
            a.iter()
                .map(|x| x["goal"].as_str().unwrap().to_string())
                .collect()
        })
        .unwrap_or_default()
}

fn lowe_reproduction() -> Verdict {
    let (code, v, elapsed) = search_json(&["--protocol", "nspk", "--max-depth", "12"])?;
    ensure(code == 10, format!("exit code {code}"))?;
    let lines = trace_lines(&v);
    ensure(lines.len() == 6, format!("{} events", lines.len()))?;
    ensure(
        equal_up_to_renaming(&lines.join("\n"), &LOWE_STEPS.join("\n")),
        format!("trace differs: {lines:?}"),
    )?;
    let goals = violated(&v);
    ensure(
        goals.contains("Secret(B, nb, [A])"),
        format!("violations {goals:?}"),
    )?;
    // The agreement goal that authenticates A to B; B is the one fooled.
    ensure(
        goals.contains("Agreement(A, B, [na, nb])"),
        format!("violations {goals:?}"),
    )?;
    let states = v["statistics"]["states_explored"]
        .as_u64()
        .unwrap_or(u64::MAX);
    ensure(states < 100_000, format!("{states} states"))?;
    ensure(elapsed < Duration::from_secs(60), format!("{elapsed:?}"))?;
    Ok(format!(
        "6 events matching 1.1 2.1 2.2 1.2 1.3 2.3; violated {goals:?} \
         (agreement named initiator-first, B fooled about A); {states} states; \
         {:.3} s wall (target 5 s, limit 60 s)",
        elapsed.as_secs_f64()
    ))
}

fn fix_certification() -> Verdict {
    let (code, v, _) = search_json(&["--protocol", "nsl"])?;
    ensure(code == 0, format!("NSL exit code {code}"))?;
    ensure(v["search"]["outcome"] == "exhausted", "NSL not exhausted")?;
    let states = v["statistics"]["states_explored"].as_u64().unwrap_or(0);
    let dir = std::env::temp_dir().join(format!("protocheck-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mutated = NSL.replace("{na, nb, B}{PK(A)}", "{na, nb}{PK(A)}");
    ensure(mutated != NSL, "mutation did not apply")?;
    let path = dir.join("nsl-reverted.casper");
    std::fs::write(&path, mutated).map_err(|e| e.to_string())?;
    let (mcode, mv, _) = search_json(&["--protocol", path.to_str().unwrap()])?;
    let _ = std::fs::remove_dir_all(&dir);
    ensure(mcode == 10, format!("reverted NSL exit code {mcode}"))?;
    let lines = trace_lines(&mv);
    ensure(
        equal_up_to_renaming(&lines.join("\n"), &LOWE_STEPS.join("\n")),
        format!("reverted NSL trace {lines:?}"),
    )?;
    Ok(format!(
        "NSL exhausted after {states} states, exit 0; restoring the original message 2 \
         brings back the 6-event attack (exit 10)"
    ))
}

fn ban_goldens() -> Verdict {
    let ideal = parse_idealization(NSPK_SYM_BAN).map_err(|e| e.to_string())?;
    let sat = saturate(&ideal);
    let report = audit_goals(&ideal, &sat);
    let golden_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    for g in &report.goals {
        let d = g
            .derivation
            .as_ref()
            .ok_or(format!("{} underivable", g.name))?;
        let path = golden_dir.join(format!("ban_{}.txt", g.name));
        let expected =
            std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        ensure(
            render_derivation(d) == expected,
            format!("{} differs from golden", g.name),
        )?;
    }
    let mut keep = ideal.assumption_indices();
    keep.remove(&8);
    let reduced = saturate(&ideal.with_assumptions(&keep));
    let full: BTreeSet<&Formula> = sat.formulas().collect();
    let less: BTreeSet<&Formula> = reduced.formulas().collect();
    ensure(less.is_subset(&full), "dropping (8) added facts")?;
    let lost: Vec<&&Formula> = full.difference(&less).collect();
    ensure(
        lost.iter().all(|f| f.subject().map(|n| &**n) == Some("B")),
        "dropping (8) lost a fact about A",
    )?;
    let f = |s: &str| parse_formula(s).unwrap();
    ensure(
        !reduced.holds(&f("B |= A<-Kab->B")),
        "R2 survives without (8)",
    )?;
    ensure(
        !reduced.holds(&f("B |= A |= A<-Kab->B")),
        "B-side of R3 survives",
    )?;
    ensure(
        reduced.holds(&f("A |= B |= A<-Kab->B")),
        "A-side of R3 lost",
    )?;
    for name in ["R2", "R3"] {
        let g = report
            .goals
            .iter()
            .find(|g| g.name == name)
            .ok_or(format!("no {name}"))?;
        ensure(
            g.flagged && g.load_bearing == [8],
            format!("(8) not flagged for {name}"),
        )?;
    }
    let r1 = report
        .goals
        .iter()
        .find(|g| g.name == "R1")
        .ok_or("no R1")?;
    ensure(!r1.flagged, "R1 flagged")?;
    Ok(format!(
        "R1, R2, R3 match golden trees; dropping (8) loses {} facts, all B's; \
         (8) B |= #(A<-Kab->B) flagged load-bearing for R2 and R3",
        lost.len()
    ))
}

fn lemma_minimal_node(b: &Bundle) -> Result<usize, String> {
    let nb = Term::nonce("Nb");
    let t0 = Term::aenc(Term::pk("A"), Term::pair(Term::nonce("Na"), nb.clone()));
    let mins = minimal_nodes(b, |n| subterm(&nb, b.term(n)) && !subterm(&t0, b.term(n)));
    ensure(!mins.is_empty(), "S has no minimal node")?;
    for n in &mins {
        ensure(
            b.sign(*n) == Sign::Plus,
            format!("minimal node {n} is negative"),
        )?;
        ensure(
            b.strands[n.strand].is_regular(),
            format!("minimal node {n} is a penetrator node"),
        )?;
    }
    Ok(mins.len())
}

fn strand_verdicts() -> Verdict {
    let m = model(NSPK);
    let roles = role_map(m.spec()).ok_or("no role map")?;
    let honest = lift(&m, &honest_run(&m).ok_or("no honest run")?).map_err(|e| e.to_string())?;
    match responder_guarantee(&honest, 1, &roles).map_err(|e| e.to_string())? {
        Guarantee::Holds { initiator } => ensure(
            honest.strands[initiator].to_string() == "Init[A, B, Na, Nb]",
            format!("holds with {}", honest.strands[initiator]),
        )?,
        other => return Err(format!("honest bundle: {other:?}")),
    }
    let trace = search(&m)
        .map_err(|e| e.to_string())?
        .attack()
        .ok_or("no attack")?
        .trace
        .clone();
    let attack = lift(&m, &trace).map_err(|e| e.to_string())?;
    match responder_guarantee(&attack, 1, &roles).map_err(|e| e.to_string())? {
        Guarantee::Fails { witnesses } => {
            let names: Vec<String> = witnesses
                .iter()
                .map(|&w| attack.strands[w].to_string())
                .collect();
            ensure(
                names == ["Init[A, I, Na, Nb]"],
                format!("witnesses {names:?}"),
            )?;
        }
        other => return Err(format!("attack bundle: {other:?}")),
    }
    let h = lemma_minimal_node(&honest)?;
    let a = lemma_minimal_node(&attack)?;
    Ok(format!(
        "Holds(Init[A, B, Na, Nb]) on the honest bundle; Fails with witness Init[A, I, Na, Nb] \
         on the Lowe bundle; minimal nodes of S positive and regular ({h} and {a} checked)"
    ))
}

/// Terms over A, Na, Nb, K, PK(A), SK(A), up to depth three, picked so that
/// decryption chains, keys hidden under other keys, signatures and nested
/// pairs all occur.
fn deduction_pool() -> Vec<Term> {
    let (a, na, nb, k, pk, sk) = (
        Term::agent("A"),
        Term::nonce("Na"),
        Term::nonce("Nb"),
        Term::sym_key("K"),
        Term::pk("A"),
        Term::sk("A"),
    );
    let p = |x: &Term, y: &Term| Term::pair(x.clone(), y.clone());
    let ae = |key: &Term, m: &Term| Term::aenc(key.clone(), m.clone());
    let se = |m: &Term| Term::senc(k.clone(), m.clone());
    vec![
        a.clone(),
        na.clone(),
        nb.clone(),
        k.clone(),
        pk.clone(),
        sk.clone(),
        ae(&pk, &na),
        ae(&pk, &k),
        se(&nb),
        se(&sk),
        p(&na, &nb),
        p(&k, &a),
        ae(&sk, &na),
        ae(&pk, &a),
        ae(&pk, &p(&na, &k)),
        p(&se(&nb), &na),
        ae(&pk, &se(&na)),
        se(&p(&a, &sk)),
        se(&ae(&pk, &k)),
        p(&se(&sk), &ae(&pk, &nb)),
        se(&ae(&sk, &nb)),
        ae(&pk, &p(&se(&na), &nb)),
        se(&ae(&pk, &se(&nb))),
        p(&se(&ae(&sk, &k)), &nb),
        ae(&pk, &p(&na, &se(&sk))),
        ae(&sk, &ae(&pk, &p(&k, &na))),
    ]
}

/// Every term of depth at most one over the six atoms.
fn shallow_terms() -> Vec<Term> {
    let atoms = [
        Term::agent("A"),
        Term::nonce("Na"),
        Term::nonce("Nb"),
        Term::sym_key("K"),
        Term::pk("A"),
        Term::sk("A"),
    ];
    let mut out: Vec<Term> = atoms.to_vec();
    for x in &atoms {
        for y in &atoms {
            out.push(Term::pair(x.clone(), y.clone()));
        }
        out.push(Term::aenc(Term::pk("A"), x.clone()));
        out.push(Term::aenc(Term::sk("A"), x.clone()));
        out.push(Term::senc(Term::sym_key("K"), x.clone()));
    }
    out
}

fn subsets(
    n: usize,
    max: usize,
    f: &mut impl FnMut(&[usize]) -> Result<(), String>,
) -> Result<usize, String> {
    fn go(
        start: usize,
        n: usize,
        max: usize,
        cur: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]) -> Result<(), String>,
        count: &mut usize,
    ) -> Result<(), String> {
        f(cur)?;
        *count += 1;
        if cur.len() == max {
            return Ok(());
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, max, cur, f, count)?;
            cur.pop();
        }
        Ok(())
    }
    let mut count = 0;
    go(0, n, max, &mut Vec::new(), f, &mut count)?;
    Ok(count)
}

fn agree_with_oracle(set: &[Term], targets: &[Term]) -> Result<(), String> {
    let closed = analz_close(&KnowledgeSet::from_terms(set.iter().cloned()));
    let u = deduction::universe(set.iter().chain(targets));
    let analysed = deduction::analysis(set, &u);
    if closed.terms() != &analysed {
        return Err(format!("analz_close differs on {set:?}"));
    }
    let derivable = deduction::derivable(set, &u);
    for t in u.iter().chain(targets) {
        let t = normalize(t);
        if can_synthesize(&closed, &t) != derivable.contains(&t) {
            return Err(format!("can_synthesize({t}) differs on {set:?}"));
        }
    }
    Ok(())
}

fn deduction_equivalence() -> Verdict {
    let started = Instant::now();
    let pool = deduction_pool();
    let pooled = subsets(pool.len(), 5, &mut |idx| {
        let set: Vec<Term> = idx.iter().map(|&i| pool[i].clone()).collect();
        agree_with_oracle(&set, &pool)
    })?;
    let shallow = shallow_terms();
    let small = subsets(shallow.len(), 3, &mut |idx| {
        let set: Vec<Term> = idx.iter().map(|&i| shallow[i].clone()).collect();
        agree_with_oracle(&set, &pool)
    })?;
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("{elapsed:?}"))?;
    Ok(format!(
        "reduced scope: all {pooled} sets of <= 5 terms from a {}-term depth-3 pool, and all \
         {small} sets of <= 3 from the {} terms of depth <= 1, over A, Na, Nb, K, PK(A), SK(A); \
         the full depth-3 space is too large to enumerate; {:.1} s",
        pool.len(),
        shallow.len(),
        elapsed.as_secs_f64()
    ))
}

fn property_suites() -> Verdict {
    // Subterm partial order on the deduction pool's subterms.
    let terms: Vec<Term> = deduction::universe(&deduction_pool()).into_iter().collect();
    for a in &terms {
        ensure(subterm(a, a), format!("{a} not reflexive"))?;
        for b in &terms {
            if subterm(a, b) && subterm(b, a) {
                ensure(a == b, format!("{a}, {b} antisymmetry"))?;
            }
            if subterm(a, b) {
                for c in &terms {
                    if subterm(b, c) {
                        ensure(subterm(a, c), format!("{a} {b} {c} transitivity"))?;
                    }
                }
            }
        }
    }
    // Closure idempotence and monotonicity.
    let pool = deduction_pool();
    subsets(pool.len(), 3, &mut |idx| {
        let set: Vec<Term> = idx.iter().map(|&i| pool[i].clone()).collect();
        let c = analz_close(&KnowledgeSet::from_terms(set.clone()));
        let again = analz_close(&KnowledgeSet::from_terms(c.iter().cloned()));
        ensure(again.terms() == c.terms(), "closure not idempotent")?;
        for extra in &pool {
            let bigger = analz_close(&KnowledgeSet::from_terms(
                set.iter().cloned().chain([extra.clone()]),
            ));
            ensure(c.is_subset(&bigger), "closure not monotone")?;
        }
        Ok(())
    })?;
    // Replay soundness and bundle well-formedness.
    let m = model(NSPK);
    let attacks = enumerate_violations(&m, 8);
    for a in &attacks {
        replay(&m, &a.trace).map_err(|e| e.to_string())?;
        validate_trace(&m, &a.trace).map_err(|e| e.to_string())?;
        let b = lift(&m, &a.trace).map_err(|e| e.to_string())?;
        check_wellformed(&b).map_err(|v| format!("{v:?}"))?;
    }
    let mut bundles = attacks.len();
    for src in [NSPK, NSL] {
        let m = model(src);
        let b = lift(&m, &honest_run(&m).ok_or("no honest run")?).map_err(|e| e.to_string())?;
        check_wellformed(&b).map_err(|v| format!("{v:?}"))?;
        bundles += 1;
    }
    // Byte-identical reports.
    let mut reports = 0;
    for protocol in ["nspk", "nsl"] {
        let mut config = RunConfig::new(protocol, "all");
        config.idealization = Some("nspk-sym.ban".into());
        let mut seen = BTreeSet::new();
        for workers in [1, 2, 4, 1, 4] {
            config.bounds.workers = workers;
            let r = run(&config).map_err(|e| e.to_string())?.without_timing();
            seen.insert((r.render(Format::Text), r.render(Format::Json)));
            reports += 1;
        }
        ensure(
            seen.len() == 1,
            format!("{protocol} reports differ across runs"),
        )?;
    }
    Ok(format!(
        "subterm order over {} terms; closure laws; {} attack traces replayed; {bundles} bundles \
         well-formed; {reports} reports byte-identical across workers 1/2/4",
        terms.len(),
        attacks.len()
    ))
}

#[test]
fn acceptance() {
    let criteria: [Criterion; 6] = [
        ("Lowe-attack reproduction", lowe_reproduction),
        ("Fix certification", fix_certification),
        ("BAN derivation goldens", ban_goldens),
        ("Strand verdicts", strand_verdicts),
        ("Deduction oracle equivalence", deduction_equivalence),
        ("Property suites", property_suites),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                println!("FAIL {name}: {why}");
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
