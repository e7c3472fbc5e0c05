//! Equality of texts up to a consistent renaming of identifiers.

use std::collections::BTreeMap;

fn tokens(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() || c == '_' {
            cur.push(c);
        } else {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !c.is_whitespace() {
                out.push(c.to_string());
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn is_ident(t: &str) -> bool {
    t.chars().next().is_some_and(char::is_alphabetic) && !matches!(t, "PK" | "SK")
}

/// Whether `a` becomes `b` under some bijection on identifiers.
pub fn equal_up_to_renaming(a: &str, b: &str) -> bool {
    let (ta, tb) = (tokens(a), tokens(b));
    if ta.len() != tb.len() {
        return false;
    }
    let mut fwd: BTreeMap<&str, &str> = BTreeMap::new();
    let mut back: BTreeMap<&str, &str> = BTreeMap::new();
    for (x, y) in ta.iter().zip(&tb) {
        match (is_ident(x), is_ident(y)) {
            (true, true) => {
                if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
                    return false;
                }
            }
            (false, false) if x == y => {}
            _ => return false,
        }
    }
    true
}

#[test]
fn renaming_is_consistent() {
    assert!(equal_up_to_renaming(
        "1.1) A -> I : {Na}{PK(I)}",
        "1.1) X -> E : {N1}{PK(E)}"
    ));
    assert!(!equal_up_to_renaming("A -> B : {A}", "X -> Y : {Y}"));
    assert!(!equal_up_to_renaming("{Na}{PK(A)}", "{Na}{SK(A)}"));
}
