//! Minimal path-expression dialect over JSON documents: `$`, `.member`,
//! `['member']`, `[n]`, `.*` and `[*]`.

use std::fmt;

use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid path expression `{expr}`: {message}")]
pub struct PathError {
    pub expr: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Member(String),
    Index(usize),
    Wildcard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathExpr {
    text: String,
    segments: Vec<Segment>,
}

impl fmt::Display for PathExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl PathExpr {
    pub fn parse(expr: &str) -> Result<Self, PathError> {
        let fail = |message: &str| PathError {
            expr: expr.to_string(),
            message: message.to_string(),
        };
        let text = expr.trim();
        let mut chars = text.char_indices().peekable();
        match chars.next() {
            Some((_, '$')) => {}
            _ => return Err(fail("must start with `$`")),
        }
        let mut segments = Vec::new();
        while let Some((_, c)) = chars.next() {
            match c {
                '.' => {
                    if chars.peek().map(|p| p.1) == Some('*') {
                        chars.next();
                        segments.push(Segment::Wildcard);
                        continue;
                    }
                    let mut name = String::new();
                    while let Some(&(_, c)) = chars.peek() {
                        if c.is_alphanumeric() || c == '_' || c == '-' {
                            name.push(c);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    if name.is_empty() {
                        return Err(fail("empty member name after `.`"));
                    }
                    segments.push(Segment::Member(name));
                }
                '[' => {
                    let mut inner = String::new();
                    let mut closed = false;
                    let mut quote: Option<char> = None;
                    for (_, c) in chars.by_ref() {
                        match (quote, c) {
                            (None, ']') => {
                                closed = true;
                                break;
                            }
                            (None, '\'' | '"') => {
                                quote = Some(c);
                                inner.push(c);
                            }
                            (Some(q), c) if c == q => {
                                quote = None;
                                inner.push(c);
                            }
                            _ => inner.push(c),
                        }
                    }
                    if !closed {
                        return Err(fail("unclosed `[`"));
                    }
                    let inner = inner.trim();
                    if inner == "*" {
                        segments.push(Segment::Wildcard);
                    } else if let Some(name) = quoted(inner) {
                        segments.push(Segment::Member(name.to_string()));
                    } else {
                        let n = inner
                            .parse::<usize>()
                            .map_err(|_| fail(&format!("bad index `{inner}`")))?;
                        segments.push(Segment::Index(n));
                    }
                }
                c if c.is_whitespace() => return Err(fail("unexpected whitespace")),
                c => return Err(fail(&format!("unexpected character `{c}`"))),
            }
        }
        Ok(Self {
            text: text.to_string(),
            segments,
        })
    }

    /// Every value the expression selects, in document order.
    pub fn evaluate<'a>(&self, doc: &'a Value) -> Vec<&'a Value> {
        let mut current = vec![doc];
        for seg in &self.segments {
            let mut next = Vec::new();
            for v in current {
                match (seg, v) {
                    (Segment::Member(name), Value::Object(map)) => next.extend(map.get(name)),
                    (Segment::Index(i), Value::Array(items)) => next.extend(items.get(*i)),
                    (Segment::Wildcard, Value::Array(items)) => next.extend(items.iter()),
                    (Segment::Wildcard, Value::Object(map)) => next.extend(map.values()),
                    _ => {}
                }
            }
            current = next;
        }
        current
    }
}

fn quoted(s: &str) -> Option<&str> {
    let b = s.as_bytes();
    if b.len() >= 2 && (b[0] == b'\'' || b[0] == b'"') && b[b.len() - 1] == b[0] {
        Some(&s[1..s.len() - 1])
    } else {
        None
    }
}

pub const EMPTY_MATCH_KEY: &str = "empty_match";

/// Marker standing in for an expression that selected nothing.
pub fn empty_match(expr: &str) -> Value {
    json!({ EMPTY_MATCH_KEY: expr })
}

pub fn is_empty_match(v: &Value) -> bool {
    v.as_object()
        .is_some_and(|m| m.len() == 1 && m.contains_key(EMPTY_MATCH_KEY))
}

/// Evaluates each expression and concatenates the matches in expression order.
pub fn resolve_refs(refs: &[String], doc: &Value) -> Result<Value, PathError> {
    let mut out = Vec::new();
    for r in refs {
        let expr = PathExpr::parse(r)?;
        let matches = expr.evaluate(doc);
        if matches.is_empty() {
            out.push(empty_match(r));
        } else {
            out.extend(matches.into_iter().cloned());
        }
    }
    Ok(Value::Array(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Value {
        json!({
            "task_24": ["line one", "line two"],
            "cells": [{"m": "a"}, {"m": "b"}],
            "odd key": 3
        })
    }

    #[test]
    fn root_is_identity() {
        let d = doc();
        assert_eq!(PathExpr::parse("$").unwrap().evaluate(&d), vec![&d]);
    }

    #[test]
    fn member_and_index() {
        let d = doc();
        let got = PathExpr::parse("$.task_24[0]").unwrap().evaluate(&d);
        assert_eq!(got, vec![&json!("line one")]);
        let got = PathExpr::parse("$['odd key']").unwrap().evaluate(&d);
        assert_eq!(got, vec![&json!(3)]);
    }

    #[test]
    fn wildcard_flattens() {
        let d = doc();
        let got = PathExpr::parse("$.cells[*].m").unwrap().evaluate(&d);
        assert_eq!(got, vec![&json!("a"), &json!("b")]);
        assert_eq!(PathExpr::parse("$.cells.*").unwrap().evaluate(&d).len(), 2);
    }

    #[test]
    fn unmatched_path_yields_marker() {
        let v = resolve_refs(&["$.missing".into(), "$.cells[1]".into()], &doc()).unwrap();
        assert_eq!(v, json!([{"empty_match": "$.missing"}, {"m": "b"}]));
        assert!(is_empty_match(&v[0]));
    }

    #[test]
    fn invalid_expressions_name_themselves() {
        for bad in ["cells", "$.", "$[1", "$[x]", "$.a b"] {
            let err = PathExpr::parse(bad).unwrap_err();
            assert_eq!(err.expr, bad);
        }
    }
}
