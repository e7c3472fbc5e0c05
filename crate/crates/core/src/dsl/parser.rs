use std::collections::HashMap;

use indexmap::IndexMap;
use thiserror::Error;

use super::{EnvironmentInput, Goal, MessageStep, Pattern, ProtocolSpec, Sort, SystemEntry};
use crate::term::{parse_term, AtomSort, Name};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("line {line}, column {column}: {kind}")]
pub struct DslError {
    pub line: usize,
    pub column: usize,
    pub kind: DslErrorKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DslErrorKind {
    #[error("no #Protocol description section")]
    MissingProtocolSection,
    #[error("unknown section header `#{0}`")]
    UnknownSection(String),
    #[error("text outside any section")]
    OutsideSection,
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("undeclared variable `{0}`")]
    UndeclaredVariable(String),
    #[error("variable `{0}` declared twice")]
    DuplicateDeclaration(String),
    #[error("unknown sort `{0}`")]
    UnknownSort(String),
    #[error("duplicate step number {0}")]
    DuplicateStep(u32),
    #[error("step {found} out of order, expected step {expected}")]
    NonConsecutiveStep { expected: u32, found: u32 },
    #[error("`{name}` must be of sort {expected}")]
    SortMismatch {
        name: String,
        expected: &'static str,
    },
    #[error("step {0} has the same sender and receiver")]
    SelfMessage(u32),
    #[error("`{0}` is not a role of the protocol")]
    UnknownRole(String),
    #[error("no intruder declared")]
    MissingIntruder,
}

const SECTIONS: [&str; 5] = [
    "Free variables",
    "Protocol description",
    "Specification",
    "Intruder Information",
    "System",
];

/// Parses a protocol description.
pub fn parse(source: &str) -> Result<ProtocolSpec, DslError> {
    let mut sections: HashMap<&str, Vec<(usize, &str)>> = HashMap::new();
    let mut current: Option<&str> = None;
    for (i, raw) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end();
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with("--") {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('#') {
            let header = header.trim();
            let Some(name) = SECTIONS.iter().find(|s| s.eq_ignore_ascii_case(header)) else {
                return Err(err(lineno, 1, DslErrorKind::UnknownSection(header.into())));
            };
            current = Some(name);
            sections.entry(name).or_default();
            continue;
        }
        let Some(section) = current else {
            return Err(err(lineno, 1, DslErrorKind::OutsideSection));
        };
        sections.entry(section).or_default().push((lineno, line));
    }

    let Some(protocol_lines) = sections.get("Protocol description") else {
        return Err(err(1, 1, DslErrorKind::MissingProtocolSection));
    };

    let mut free_variables = IndexMap::new();
    for &(lineno, line) in sections.get("Free variables").into_iter().flatten() {
        parse_declaration(lineno, line, &mut free_variables)?;
    }

    let mut environment = None;
    let mut steps: Vec<MessageStep> = Vec::new();
    for &(lineno, line) in protocol_lines {
        match parse_step(lineno, line, &free_variables)? {
            StepLine::Environment(env) => {
                if environment.is_some() {
                    return Err(err(lineno, 1, DslErrorKind::DuplicateStep(0)));
                }
                environment = Some(env);
            }
            StepLine::Message(step) => {
                let expected = steps.len() as u32 + 1;
                if steps.iter().any(|s| s.index == step.index) {
                    return Err(err(lineno, 1, DslErrorKind::DuplicateStep(step.index)));
                }
                if step.index != expected {
                    return Err(err(
                        lineno,
                        1,
                        DslErrorKind::NonConsecutiveStep {
                            expected,
                            found: step.index,
                        },
                    ));
                }
                steps.push(step);
            }
        }
    }

    let mut goals = Vec::new();
    for &(lineno, line) in sections.get("Specification").into_iter().flatten() {
        goals.push(parse_goal(lineno, line, &free_variables)?);
    }

    let mut system = Vec::new();
    for &(lineno, line) in sections.get("System").into_iter().flatten() {
        system.push(parse_system_entry(lineno, line)?);
    }

    let mut intruder: Option<Name> = None;
    let mut knowledge_src: Option<(usize, usize, &str)> = None;
    for &(lineno, line) in sections.get("Intruder Information").into_iter().flatten() {
        let Some((key, value)) = line.split_once('=') else {
            return Err(syntax(lineno, line, 0, "expected `Key = value`"));
        };
        let value_col = line.find('=').unwrap() + 2;
        match key.trim() {
            "Intruder" => {
                let name = value.trim();
                if !is_ident(name) {
                    return Err(syntax(
                        lineno,
                        line,
                        value_col - 1,
                        "expected intruder name",
                    ));
                }
                intruder = Some(name.into());
            }
            "IntruderKnowledge" => knowledge_src = Some((lineno, value_col, value)),
            other => {
                return Err(syntax(
                    lineno,
                    line,
                    0,
                    &format!("unknown intruder field `{other}`"),
                ))
            }
        }
    }
    let Some(intruder) = intruder else {
        return Err(err(1, 1, DslErrorKind::MissingIntruder));
    };

    let mut agent_names: Vec<Name> = system.iter().map(|e| e.agent.clone()).collect();
    agent_names.push(intruder.clone());
    let mut intruder_knowledge = Vec::new();
    if let Some((lineno, col, value)) = knowledge_src {
        let inner = value.trim();
        let inner = inner
            .strip_prefix('{')
            .and_then(|s| s.strip_suffix('}'))
            .ok_or_else(|| err(lineno, col, DslErrorKind::Syntax("expected `{...}`".into())))?;
        for item in split_top_level(inner) {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let env = |name: &str| {
                if agent_names.iter().any(|a| &**a == name) {
                    Some(AtomSort::Agent)
                } else {
                    Some(AtomSort::Nonce)
                }
            };
            let t = parse_term(item, &env)
                .map_err(|e| err(lineno, col, DslErrorKind::Syntax(e.message)))?;
            intruder_knowledge.push(t);
        }
    }

    let spec = ProtocolSpec {
        free_variables,
        environment,
        steps,
        goals,
        intruder,
        intruder_knowledge,
        system,
    };
    validate_roles(&spec, &sections)?;
    Ok(spec)
}

fn validate_roles(
    spec: &ProtocolSpec,
    sections: &HashMap<&str, Vec<(usize, &str)>>,
) -> Result<(), DslError> {
    let roles = spec.roles();
    for (goal, &(lineno, _)) in spec
        .goals
        .iter()
        .zip(sections.get("Specification").into_iter().flatten())
    {
        let role_args: Vec<&String> = match goal {
            Goal::Secret { owner, .. } => vec![owner],
            Goal::Agreement {
                initiator,
                responder,
                ..
            } => vec![initiator, responder],
        };
        for r in role_args {
            if !roles.contains(&r.as_str()) {
                return Err(err(lineno, 1, DslErrorKind::UnknownRole(r.clone())));
            }
        }
    }
    for (entry, &(lineno, _)) in spec
        .system
        .iter()
        .zip(sections.get("System").into_iter().flatten())
    {
        if !roles.contains(&entry.role.as_str()) {
            return Err(err(
                lineno,
                1,
                DslErrorKind::UnknownRole(entry.role.clone()),
            ));
        }
    }
    Ok(())
}

fn err(line: usize, column: usize, kind: DslErrorKind) -> DslError {
    DslError { line, column, kind }
}

fn syntax(line: usize, _src: &str, offset: usize, msg: &str) -> DslError {
    err(line, offset + 1, DslErrorKind::Syntax(msg.into()))
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '\'')
        && !s.starts_with(|c: char| c.is_ascii_digit())
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' | '{' | '[' => depth += 1,
            ')' | '}' | ']' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

/// Column (1-based) of `part` within `line`; `part` must be a subslice.
fn col_of(line: &str, part: &str) -> usize {
    (part.as_ptr() as usize - line.as_ptr() as usize) + 1
}

fn parse_declaration(
    lineno: usize,
    line: &str,
    vars: &mut IndexMap<String, Sort>,
) -> Result<(), DslError> {
    let Some((names, sort)) = line.split_once(':') else {
        return Err(syntax(lineno, line, 0, "expected `names : Sort`"));
    };
    let sort_name = sort.trim();
    let Some(sort) = Sort::from_keyword(sort_name) else {
        return Err(err(
            lineno,
            col_of(line, sort.trim_start()),
            DslErrorKind::UnknownSort(sort_name.into()),
        ));
    };
    for name in names.split(',') {
        let trimmed = name.trim();
        if !is_ident(trimmed) {
            return Err(syntax(lineno, line, 0, "expected variable name"));
        }
        if vars.insert(trimmed.to_string(), sort).is_some() {
            return Err(err(
                lineno,
                col_of(line, name.trim_start()),
                DslErrorKind::DuplicateDeclaration(trimmed.into()),
            ));
        }
    }
    Ok(())
}

enum StepLine {
    Environment(EnvironmentInput),
    Message(MessageStep),
}

fn parse_step(
    lineno: usize,
    line: &str,
    vars: &IndexMap<String, Sort>,
) -> Result<StepLine, DslError> {
    let trimmed = line.trim_start();
    let Some((num, rest)) = trimmed.split_once('.') else {
        return Err(syntax(lineno, line, 0, "expected `n. A -> B : message`"));
    };
    let index: u32 = num
        .trim()
        .parse()
        .map_err(|_| syntax(lineno, line, 0, "expected step number"))?;
    let Some((route, message)) = rest.split_once(':') else {
        return Err(syntax(lineno, line, 0, "expected `:` before the message"));
    };
    let Some((sender, receiver)) = route.split_once("->") else {
        return Err(syntax(
            lineno,
            line,
            col_of(line, route) - 1,
            "expected `->`",
        ));
    };
    let (sender, receiver) = (sender.trim(), receiver.trim());
    let check_agent = |name: &str, at: &str| -> Result<(), DslError> {
        let column = col_of(line, at.trim_start());
        match vars.get(name) {
            None => Err(err(
                lineno,
                column,
                DslErrorKind::UndeclaredVariable(name.into()),
            )),
            Some(Sort::Agent) => Ok(()),
            Some(_) => Err(err(
                lineno,
                column,
                DslErrorKind::SortMismatch {
                    name: name.into(),
                    expected: "Agent",
                },
            )),
        }
    };
    check_agent(receiver, route.split_once("->").unwrap().1)?;

    if index == 0 {
        if !sender.is_empty() {
            return Err(syntax(lineno, line, 0, "step 0 has no sender"));
        }
        let mut variables = Vec::new();
        for item in message.split(',') {
            let name = item.trim();
            check_agent(name, item)?;
            variables.push(name.to_string());
        }
        return Ok(StepLine::Environment(EnvironmentInput {
            receiver: receiver.into(),
            variables,
        }));
    }
    check_agent(sender, route)?;
    if sender == receiver {
        return Err(err(lineno, 1, DslErrorKind::SelfMessage(index)));
    }
    let offset = col_of(line, message) - 1;
    let mut p = PatternParser {
        src: message,
        pos: 0,
        vars,
        line: lineno,
        offset,
    };
    let pattern = p.tuple()?;
    p.skip_ws();
    if p.pos != message.len() {
        return Err(p.error("trailing input"));
    }
    Ok(StepLine::Message(MessageStep {
        index,
        sender: sender.into(),
        receiver: receiver.into(),
        pattern,
    }))
}

struct PatternParser<'a> {
    src: &'a str,
    pos: usize,
    vars: &'a IndexMap<String, Sort>,
    line: usize,
    offset: usize,
}

impl PatternParser<'_> {
    fn error(&self, msg: &str) -> DslError {
        err(
            self.line,
            self.offset + self.pos + 1,
            DslErrorKind::Syntax(msg.into()),
        )
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += self.src[self.pos..].chars().next().unwrap().len_utf8();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<(), DslError> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<(usize, String), DslError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[start..];
        let len = rest
            .find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '\''))
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error("expected identifier"));
        }
        self.pos += len;
        Ok((start, rest[..len].to_string()))
    }

    fn variable(&mut self, want: Option<Sort>) -> Result<(String, Sort), DslError> {
        let (start, name) = self.ident()?;
        let column = self.offset + start + 1;
        let Some(&sort) = self.vars.get(&name) else {
            return Err(err(
                self.line,
                column,
                DslErrorKind::UndeclaredVariable(name),
            ));
        };
        if let Some(w) = want {
            if w != sort {
                return Err(err(
                    self.line,
                    column,
                    DslErrorKind::SortMismatch {
                        name,
                        expected: w.keyword(),
                    },
                ));
            }
        }
        Ok((name, sort))
    }

    fn tuple(&mut self) -> Result<Pattern, DslError> {
        let first = self.primary()?;
        if self.peek() == Some(',') {
            self.pos += 1;
            let rest = self.tuple()?;
            Ok(Pattern::Pair(Box::new(first), Box::new(rest)))
        } else {
            Ok(first)
        }
    }

    fn primary(&mut self) -> Result<Pattern, DslError> {
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let p = self.tuple()?;
                self.expect(')')?;
                Ok(p)
            }
            Some('{') => {
                self.pos += 1;
                let payload = self.tuple()?;
                self.expect('}')?;
                let braced = self.peek() == Some('{');
                if braced {
                    self.pos += 1;
                }
                let key_at = self.pos;
                let key = self.primary()?;
                if braced {
                    self.expect('}')?;
                }
                let asym = match &key {
                    Pattern::PubKeyOf(_) | Pattern::PrivKeyOf(_) => true,
                    Pattern::Var(v) => match self.vars[v] {
                        Sort::PublicKey => true,
                        Sort::SymmetricKey => false,
                        _ => {
                            self.pos = key_at;
                            return Err(self.error(&format!("`{v}` is not a key")));
                        }
                    },
                    _ => {
                        self.pos = key_at;
                        return Err(self.error("encryption key must be atomic"));
                    }
                };
                let (k, m) = (Box::new(key), Box::new(payload));
                Ok(if asym {
                    Pattern::AsymEnc(k, m)
                } else {
                    Pattern::SymEnc(k, m)
                })
            }
            Some(_) => {
                let save = self.pos;
                let (_, name) = self.ident()?;
                if (name == "PK" || name == "SK")
                    && !self.vars.contains_key(&name)
                    && self.peek() == Some('(')
                {
                    self.pos += 1;
                    let (agent, _) = self.variable(Some(Sort::Agent))?;
                    self.expect(')')?;
                    return Ok(if name == "PK" {
                        Pattern::PubKeyOf(agent)
                    } else {
                        Pattern::PrivKeyOf(agent)
                    });
                }
                self.pos = save;
                let (name, _) = self.variable(None)?;
                Ok(Pattern::Var(name))
            }
            None => Err(self.error("unexpected end of message")),
        }
    }
}

fn parse_call(lineno: usize, line: &str) -> Result<(&str, Vec<&str>), DslError> {
    let trimmed = line.trim();
    let open = trimmed
        .find('(')
        .ok_or_else(|| syntax(lineno, line, 0, "expected `Name(...)`"))?;
    let inner = trimmed[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| syntax(lineno, line, trimmed.len(), "expected `)`"))?;
    Ok((trimmed[..open].trim(), split_top_level(inner)))
}

fn parse_var_list<'a>(lineno: usize, line: &str, item: &'a str) -> Result<Vec<&'a str>, DslError> {
    let inner = item
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| syntax(lineno, line, 0, "expected `[...]`"))?;
    Ok(inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect())
}

fn parse_goal(lineno: usize, line: &str, vars: &IndexMap<String, Sort>) -> Result<Goal, DslError> {
    let (name, args) = parse_call(lineno, line)?;
    let declared = |v: &str| -> Result<String, DslError> {
        if vars.contains_key(v) {
            Ok(v.to_string())
        } else {
            let column = line.find(v).map_or(1, |c| c + 1);
            Err(err(
                lineno,
                column,
                DslErrorKind::UndeclaredVariable(v.into()),
            ))
        }
    };
    let agent = |v: &str| -> Result<String, DslError> {
        let v = declared(v)?;
        if vars[&v] != Sort::Agent {
            return Err(err(
                lineno,
                1,
                DslErrorKind::SortMismatch {
                    name: v,
                    expected: "Agent",
                },
            ));
        }
        Ok(v)
    };
    match (name, args.as_slice()) {
        ("Secret", [owner, value, peers]) => Ok(Goal::Secret {
            owner: agent(owner.trim())?,
            value: declared(value.trim())?,
            peers: parse_var_list(lineno, line, peers)?
                .into_iter()
                .map(agent)
                .collect::<Result<_, _>>()?,
        }),
        ("Agreement", [a, b, data]) => Ok(Goal::Agreement {
            initiator: agent(a.trim())?,
            responder: agent(b.trim())?,
            data: parse_var_list(lineno, line, data)?
                .into_iter()
                .map(declared)
                .collect::<Result<_, _>>()?,
        }),
        _ => Err(syntax(
            lineno,
            line,
            0,
            "expected `Secret(R, v, [..])` or `Agreement(R1, R2, [..])`",
        )),
    }
}

fn parse_system_entry(lineno: usize, line: &str) -> Result<SystemEntry, DslError> {
    let (head, count) = match line.rsplit_once(" x ") {
        Some((h, c)) => {
            let n: usize = c
                .trim()
                .parse()
                .map_err(|_| syntax(lineno, line, 0, "expected session count"))?;
            (h, n)
        }
        None => (line, 1),
    };
    let (role, args) = parse_call(lineno, head)?;
    match args.as_slice() {
        [agent] if is_ident(agent.trim()) && is_ident(role) => Ok(SystemEntry {
            role: role.into(),
            agent: agent.trim().into(),
            count,
        }),
        _ => Err(syntax(lineno, line, 0, "expected `Role(agent)`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn parses_bundled_nspk() {
        let spec = parse(fixtures::NSPK).unwrap();
        let steps: Vec<String> = spec.steps.iter().map(|s| s.to_string()).collect();
        assert_eq!(
            steps,
            [
                "1. A -> B : {na, A}{PK(B)}",
                "2. B -> A : {na, nb}{PK(A)}",
                "3. A -> B : {nb}{PK(B)}",
            ]
        );
        assert_eq!(spec.goals.len(), 4);
        assert_eq!(spec.goals[0].to_string(), "Secret(A, na, [B])");
        assert_eq!(spec.goals[3].to_string(), "Agreement(B, A, [na, nb])");
        let env = spec.environment.as_ref().unwrap();
        assert_eq!(
            (env.receiver.as_str(), env.variables.as_slice()),
            ("A", &["B".to_string()][..])
        );
        assert_eq!(&*spec.intruder, "I");
        assert_eq!(spec.roles(), ["A", "B"]);
        assert_eq!(spec.fresh_variables("A"), ["na"]);
        assert_eq!(spec.fresh_variables("B"), ["nb"]);
    }

    #[test]
    fn empty_input_has_no_protocol_section() {
        let e = parse("").unwrap_err();
        assert_eq!(e.kind, DslErrorKind::MissingProtocolSection);
        assert_eq!(
            e.to_string(),
            "line 1, column 1: no #Protocol description section"
        );
    }

    #[test]
    fn undeclared_variable_is_reported_with_position() {
        let src = fixtures::NSPK.replace("{nb}{PK(B)}", "{nc}{PK(B)}");
        let e = parse(&src).unwrap_err();
        assert_eq!(e.kind, DslErrorKind::UndeclaredVariable("nc".into()));
        let line = src.lines().nth(e.line - 1).unwrap();
        assert!(line.contains("{nc}"));
        assert_eq!(&line[e.column - 1..e.column + 1], "nc");
    }

    #[test]
    fn duplicate_and_unknown_sections_rejected() {
        let dup = fixtures::NSPK.replace("3.  A -> B", "2.  A -> B");
        assert_eq!(
            parse(&dup).unwrap_err().kind,
            DslErrorKind::DuplicateStep(2)
        );

        let bad = format!("{}\n#Functions\nfoo\n", fixtures::NSPK);
        assert_eq!(
            parse(&bad).unwrap_err().kind,
            DslErrorKind::UnknownSection("Functions".into())
        );
    }

    #[test]
    fn steps_must_be_consecutive() {
        let gap = fixtures::NSPK.replace("3.  A -> B", "4.  A -> B");
        assert!(matches!(
            parse(&gap).unwrap_err().kind,
            DslErrorKind::NonConsecutiveStep {
                expected: 3,
                found: 4
            }
        ));
    }

    #[test]
    fn sender_must_differ_from_receiver() {
        let src = fixtures::NSPK.replace("2.  B -> A", "2.  B -> B");
        assert_eq!(parse(&src).unwrap_err().kind, DslErrorKind::SelfMessage(2));
    }

    #[test]
    fn nonce_as_encryption_key_rejected() {
        let src = fixtures::NSPK.replace("{nb}{PK(B)}", "{nb}{na}");
        assert!(matches!(
            parse(&src).unwrap_err().kind,
            DslErrorKind::Syntax(_)
        ));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let src = format!("-- leading comment\n\n{}", fixtures::NSPK);
        assert_eq!(parse(&src).unwrap(), parse(fixtures::NSPK).unwrap());
    }
}
