use std::collections::BTreeMap;
use std::rc::Rc;

use thiserror::Error;

use super::{Bundle, Node, PenetratorType, RoleMap, SignedTerm, Strand, StrandKind};
use crate::checker::{replay, CheckerError, Event, EventKind, Model, SessionId};
use crate::dsl::ProtocolSpec;
use crate::term::{dual, normalize, Term};

#[derive(Debug, Error)]
pub enum LiftError {
    #[error(transparent)]
    Replay(#[from] CheckerError),
    #[error("event {time}: no penetrator derivation of `{message}`")]
    NoDerivation { time: usize, message: Term },
}

/// How the penetrator obtains a term.
#[derive(Debug)]
enum Recipe {
    /// A message some regular strand sent.
    Source(Node),
    /// An atom or key it starts with.
    Emit(Term),
    Separate(Rc<Recipe>, bool),
    Decrypt {
        key: Rc<Recipe>,
        cipher: Rc<Recipe>,
    },
    Concat(Rc<Recipe>, Rc<Recipe>),
    Encrypt {
        key: Rc<Recipe>,
        payload: Rc<Recipe>,
    },
}

type Costed = (usize, Rc<Recipe>);

/// Cheapest analysis of every reachable term. Each penetrator strand
/// costs one; reading a regular strand's output is free.
fn analyse(sources: &[(Term, Node)], initial: &[Term]) -> BTreeMap<Term, Costed> {
    let mut known: BTreeMap<Term, Costed> = BTreeMap::new();
    for (t, n) in sources {
        known
            .entry(t.clone())
            .or_insert((0, Rc::new(Recipe::Source(*n))));
    }
    for t in initial {
        known
            .entry(t.clone())
            .or_insert((1, Rc::new(Recipe::Emit(t.clone()))));
    }
    loop {
        let mut offers: Vec<(Term, Costed)> = Vec::new();
        for (t, (c, r)) in &known {
            match t {
                Term::Pair(a, b) => {
                    offers.push((
                        (**a).clone(),
                        (c + 1, Rc::new(Recipe::Separate(r.clone(), true))),
                    ));
                    offers.push((
                        (**b).clone(),
                        (c + 1, Rc::new(Recipe::Separate(r.clone(), false))),
                    ));
                }
                Term::AsymEnc(k, h) | Term::SymEnc(k, h) => {
                    if let Some((ck, rk)) = dual(k).ok().and_then(|d| known.get(&d)) {
                        let recipe = Recipe::Decrypt {
                            key: rk.clone(),
                            cipher: r.clone(),
                        };
                        offers.push(((**h).clone(), (c + ck + 1, Rc::new(recipe))));
                    }
                }
                _ => {}
            }
        }
        let mut changed = false;
        for (t, offer) in offers {
            let better = known.get(&t).is_none_or(|(c, _)| offer.0 < *c);
            if better {
                known.insert(t, offer);
                changed = true;
            }
        }
        if !changed {
            return known;
        }
    }
}

/// Cheapest way to build `m`: analysis result or composition, ties going to
/// analysis.
fn synth(known: &BTreeMap<Term, Costed>, m: &Term) -> Option<Costed> {
    let mut best = known.get(m).cloned();
    let composed = match m {
        Term::Pair(a, b) => synth(known, a)
            .zip(synth(known, b))
            .map(|(x, y)| (1 + x.0 + y.0, Rc::new(Recipe::Concat(x.1, y.1)))),
        Term::AsymEnc(k, h) | Term::SymEnc(k, h) => {
            synth(known, k).zip(synth(known, h)).map(|(x, y)| {
                let recipe = Recipe::Encrypt {
                    key: x.1,
                    payload: y.1,
                };
                (1 + x.0 + y.0, Rc::new(recipe))
            })
        }
        _ => None,
    };
    if let Some(c) = composed {
        if best.as_ref().is_none_or(|b| c.0 < b.0) {
            best = Some(c);
        }
    }
    best
}

struct Builder {
    strands: Vec<Strand>,
    comm: Vec<(Node, Node)>,
}

impl Builder {
    fn penetrator(&mut self, kind: PenetratorType, trace: Vec<SignedTerm>) -> usize {
        self.strands.push(Strand {
            kind: StrandKind::Penetrator(kind),
            trace,
        });
        self.strands.len() - 1
    }

    fn term(&self, n: Node) -> Term {
        self.strands[n.strand].trace[n.index].term.clone()
    }

    /// Builds the strands of a recipe; returns the node carrying its output.
    fn realize(&mut self, r: &Recipe) -> Node {
        match r {
            Recipe::Source(n) => *n,
            Recipe::Emit(t) => {
                let kind = if t.is_key() {
                    PenetratorType::KeyEmit
                } else {
                    PenetratorType::Text
                };
                Node::new(self.penetrator(kind, vec![SignedTerm::send(t.clone())]), 0)
            }
            Recipe::Separate(pair, left) => {
                let from = self.realize(pair);
                let Term::Pair(g, h) = self.term(from) else {
                    unreachable!("separating a non-pair")
                };
                let s = self.penetrator(
                    PenetratorType::Separate,
                    vec![
                        SignedTerm::recv(self.term(from)),
                        SignedTerm::send((*g).clone()),
                        SignedTerm::send((*h).clone()),
                    ],
                );
                self.comm.push((from, Node::new(s, 0)));
                Node::new(s, if *left { 1 } else { 2 })
            }
            Recipe::Decrypt { key, cipher } => {
                let k = self.realize(key);
                let c = self.realize(cipher);
                let (Term::AsymEnc(_, h) | Term::SymEnc(_, h)) = self.term(c) else {
                    unreachable!("decrypting a non-encryption")
                };
                let s = self.penetrator(
                    PenetratorType::Decrypt,
                    vec![
                        SignedTerm::recv(self.term(k)),
                        SignedTerm::recv(self.term(c)),
                        SignedTerm::send((*h).clone()),
                    ],
                );
                self.comm.push((k, Node::new(s, 0)));
                self.comm.push((c, Node::new(s, 1)));
                Node::new(s, 2)
            }
            Recipe::Concat(a, b) => {
                let x = self.realize(a);
                let y = self.realize(b);
                let out = normalize(&Term::pair(self.term(x), self.term(y)));
                let s = self.penetrator(
                    PenetratorType::Concat,
                    vec![
                        SignedTerm::recv(self.term(x)),
                        SignedTerm::recv(self.term(y)),
                        SignedTerm::send(out),
                    ],
                );
                self.comm.push((x, Node::new(s, 0)));
                self.comm.push((y, Node::new(s, 1)));
                Node::new(s, 2)
            }
            Recipe::Encrypt { key, payload } => {
                let k = self.realize(key);
                let p = self.realize(payload);
                let out =
                    Term::encrypt(self.term(k), self.term(p)).expect("encryption under a key");
                let s = self.penetrator(
                    PenetratorType::Encrypt,
                    vec![
                        SignedTerm::recv(self.term(k)),
                        SignedTerm::recv(self.term(p)),
                        SignedTerm::send(out),
                    ],
                );
                self.comm.push((k, Node::new(s, 0)));
                self.comm.push((p, Node::new(s, 1)));
                Node::new(s, 2)
            }
        }
    }

    /// A positive node feeding several receivers is routed through a chain
    /// of Tee strands so every output is consumed once.
    fn insert_tees(&mut self) {
        let mut uses: BTreeMap<Node, Vec<Node>> = BTreeMap::new();
        for &(a, b) in &self.comm {
            uses.entry(a).or_default().push(b);
        }
        let mut comm = Vec::new();
        for (from, targets) in uses {
            if targets.len() == 1 {
                comm.push((from, targets[0]));
                continue;
            }
            let term = self.term(from);
            let mut current = from;
            let k = targets.len();
            for (i, &target) in targets.iter().enumerate().take(k - 1) {
                let s = self.penetrator(
                    PenetratorType::Tee,
                    vec![
                        SignedTerm::recv(term.clone()),
                        SignedTerm::send(term.clone()),
                        SignedTerm::send(term.clone()),
                    ],
                );
                comm.push((current, Node::new(s, 0)));
                comm.push((Node::new(s, 1), target));
                if i == k - 2 {
                    comm.push((Node::new(s, 2), targets[k - 1]));
                } else {
                    current = Node::new(s, 2);
                }
            }
        }
        comm.sort();
        self.comm = comm;
    }
}

fn strand_label(spec: &ProtocolSpec, role: &str) -> String {
    let roles = spec.roles();
    if roles.len() == 2 {
        if spec.initiator() == Some(role) {
            "Init".into()
        } else {
            "Resp".into()
        }
    } else {
        role.to_string()
    }
}

/// Initiator, responder and the responder's fresh values of a two-party
/// protocol.
pub fn role_map(spec: &ProtocolSpec) -> Option<RoleMap> {
    let roles = spec.roles();
    if roles.len() != 2 {
        return None;
    }
    let initiator = spec.initiator()?;
    let responder = roles.iter().find(|r| **r != initiator)?;
    Some(RoleMap {
        initiator_role: initiator.to_string(),
        responder_role: responder.to_string(),
        responder_fresh: spec
            .fresh_variables(responder)
            .into_iter()
            .map(String::from)
            .collect(),
    })
}

/// Turns a valid trace into a bundle: one regular strand per session that
/// acted, plus the cheapest penetrator strands explaining each delivery.
pub fn lift(model: &Model, trace: &[Event]) -> Result<Bundle, LiftError> {
    let end = replay(model, trace)?;
    let spec = model.spec();
    let initial = model.initial_state().intruder;
    let emit: Vec<Term> = initial.iter().filter(|t| t.is_atom()).cloned().collect();

    let mut strand_of: BTreeMap<SessionId, usize> = BTreeMap::new();
    let mut b = Builder {
        strands: Vec::new(),
        comm: Vec::new(),
    };
    for e in trace {
        strand_of.entry(e.session).or_insert_with(|| {
            let s = end.session(e.session);
            let params = spec
                .free_variables
                .keys()
                .map(|v| (v.clone(), s.binding(v).cloned()))
                .collect();
            b.strands.push(Strand {
                kind: StrandKind::Regular {
                    role: s.role.clone(),
                    label: strand_label(spec, &s.role),
                    params,
                    length: spec.role_steps(&s.role).len(),
                },
                trace: Vec::new(),
            });
            b.strands.len() - 1
        });
    }

    let mut sources: Vec<(Term, Node)> = Vec::new();
    for e in trace {
        let s = strand_of[&e.session];
        let node = Node::new(s, b.strands[s].trace.len());
        match e.kind {
            EventKind::Send => {
                b.strands[s].trace.push(SignedTerm::send(e.message.clone()));
                sources.push((e.message.clone(), node));
            }
            EventKind::Deliver => {
                b.strands[s].trace.push(SignedTerm::recv(e.message.clone()));
                let known = analyse(&sources, &emit);
                let (_, recipe) =
                    synth(&known, &e.message).ok_or_else(|| LiftError::NoDerivation {
                        time: e.time,
                        message: e.message.clone(),
                    })?;
                let from = b.realize(&recipe);
                b.comm.push((from, node));
            }
        }
    }
    b.insert_tees();
    Ok(Bundle {
        succession: Bundle::natural_succession(&b.strands),
        strands: b.strands,
        comm: b.comm,
        penetrator_knowledge: initial,
    })
}
