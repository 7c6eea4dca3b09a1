//! Parsers for planner replies. Every parser tolerates prose around the payload.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};
use thiserror::Error;

use dagcrew_worldsim::{ActionKind, Arg};

use crate::taskgraph::{NodeId, SubtaskSpec};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON array found in reply: `{snippet}`")]
    NoStructure { snippet: String },
    #[error("element {position}: {message}")]
    Element { position: usize, message: String },
    #[error("element {position}: predecessor {index} must refer to an earlier element")]
    ForwardReference { position: usize, index: usize },
    #[error("unknown agents {agents:?} / nodes {nodes:?}")]
    Unknown { agents: Vec<String>, nodes: Vec<NodeId> },
    #[error("agent {0} assigned more than once")]
    DuplicateAgent(String),
    #[error("node {node} assigned to {count} agents but needs {required}")]
    DuplicateNode { node: NodeId, count: usize, required: u32 },
    #[error("no action or finish marker in reply: `{snippet}`")]
    NoAction { snippet: String },
    #[error("bad arguments `{0}`")]
    Arguments(String),
}

fn snippet(text: &str) -> String {
    let t = text.trim();
    let mut s: String = t.chars().take(80).collect();
    if t.chars().count() > 80 {
        s.push_str("...");
    }
    s
}

/// First JSON array in `text` whose elements are all objects.
fn first_object_array(text: &str) -> Result<Vec<serde_json::Map<String, Value>>, ParseError> {
    for (i, _) in text.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Array(items))) = stream.next() {
            if items.iter().all(Value::is_object) {
                return Ok(items
                    .into_iter()
                    .map(|v| match v {
                        Value::Object(m) => m,
                        _ => unreachable!(),
                    })
                    .collect());
            }
        }
    }
    Err(ParseError::NoStructure { snippet: snippet(text) })
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, names: &[&str]) -> Option<&'a Value> {
    names.iter().find_map(|n| obj.get(*n)).filter(|v| !v.is_null())
}

fn as_index(v: &Value) -> Option<usize> {
    match v {
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

pub fn parse_decomposition(text: &str) -> Result<Vec<SubtaskSpec>, ParseError> {
    let items = first_object_array(text)?;
    let mut specs = Vec::with_capacity(items.len());
    for (i, obj) in items.iter().enumerate() {
        let position = i + 1;
        let bad = |message: &str| ParseError::Element {
            position,
            message: message.to_string(),
        };
        let description = field(obj, &["description", "task", "subtask"])
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| bad("missing description"))?;
        let mut preds = Vec::new();
        if let Some(v) = field(obj, &["predecessors", "predecessor_indices", "depends_on"]) {
            let list = match v {
                Value::Array(a) => a.clone(),
                other => vec![other.clone()],
            };
            for p in &list {
                let index = as_index(p).ok_or_else(|| bad("predecessors must be integers"))?;
                if index == 0 || index >= position {
                    return Err(ParseError::ForwardReference { position, index });
                }
                if !preds.contains(&index) {
                    preds.push(index);
                }
            }
        }
        let mut refs = Vec::new();
        if let Some(v) = field(obj, &["data_paths", "data_refs", "paths"]) {
            let list = match v {
                Value::Array(a) => a.clone(),
                other => vec![other.clone()],
            };
            for r in list {
                let r = r.as_str().ok_or_else(|| bad("data paths must be strings"))?;
                refs.push(r.to_string());
            }
        }
        let agents = match field(obj, &["agents", "agents_required", "agent_count"]) {
            Some(v) => v
                .as_u64()
                .filter(|&n| n >= 1)
                .ok_or_else(|| bad("agents must be a positive integer"))? as u32,
            None => 1,
        };
        specs.push(SubtaskSpec {
            description: description.to_string(),
            predecessor_indices: preds,
            data_refs: refs,
            agents,
        });
    }
    Ok(specs)
}

/// Inverse of [`parse_decomposition`].
pub fn render_decomposition(specs: &[SubtaskSpec]) -> String {
    let items: Vec<Value> = specs
        .iter()
        .map(|s| {
            json!({
                "description": s.description,
                "predecessors": s.predecessor_indices,
                "data_paths": s.data_refs,
                "agents": s.agents,
            })
        })
        .collect();
    serde_json::to_string_pretty(&Value::Array(items)).expect("specs serialize")
}

/// Parses `[{"agent": .., "task": ..}]` pairs and validates them against the
/// known agents and the ready nodes (with their required agent counts).
pub fn parse_allocation(
    text: &str,
    known_agents: &BTreeSet<String>,
    known_nodes: &BTreeMap<NodeId, u32>,
) -> Result<Vec<(String, NodeId)>, ParseError> {
    let items = first_object_array(text)?;
    let mut pairs = Vec::with_capacity(items.len());
    for (i, obj) in items.iter().enumerate() {
        let bad = |message: &str| ParseError::Element {
            position: i + 1,
            message: message.to_string(),
        };
        let agent = field(obj, &["agent", "agent_id", "player"])
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing agent"))?;
        let node = field(obj, &["task", "node", "task_id", "node_id"])
            .and_then(as_index)
            .ok_or_else(|| bad("missing task id"))?;
        pairs.push((agent.trim().to_string(), node as NodeId));
    }
    let agents: Vec<String> = pairs
        .iter()
        .filter(|(a, _)| !known_agents.contains(a))
        .map(|(a, _)| a.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let nodes: Vec<NodeId> = pairs
        .iter()
        .filter(|(_, n)| !known_nodes.contains_key(n))
        .map(|(_, n)| *n)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !agents.is_empty() || !nodes.is_empty() {
        return Err(ParseError::Unknown { agents, nodes });
    }
    let mut seen = BTreeSet::new();
    let mut per_node: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (a, n) in &pairs {
        if !seen.insert(a.clone()) {
            return Err(ParseError::DuplicateAgent(a.clone()));
        }
        *per_node.entry(*n).or_default() += 1;
    }
    for (&node, &count) in &per_node {
        let required = known_nodes[&node];
        if count > 1 && count as u32 > required {
            return Err(ParseError::DuplicateNode { node, count, required });
        }
    }
    Ok(pairs)
}

/// One parsed ReAct reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReactReply {
    Action { kind: ActionKind, args: Vec<Arg> },
    Finish { succeeded: bool },
}

pub fn parse_react(text: &str) -> Result<ReactReply, ParseError> {
    if let Some(start) = text.find("Finish[") {
        let rest = &text[start + "Finish[".len()..];
        let claim = rest.split(']').next().unwrap_or("").trim().to_ascii_lowercase();
        return Ok(ReactReply::Finish {
            succeeded: matches!(claim.as_str(), "succeeded" | "success" | "done" | "true"),
        });
    }
    for line in text.lines() {
        let line = line.trim().trim_start_matches("Action:").trim();
        let Some(open) = line.find('(') else { continue };
        let name = line[..open].trim();
        let name = name
            .rsplit(|c: char| c.is_whitespace() || c == '`')
            .next()
            .unwrap_or(name);
        let Ok(kind) = name.parse::<ActionKind>() else { continue };
        let Some(close) = line.rfind(')') else { continue };
        if close < open {
            continue;
        }
        let args = parse_args(&line[open + 1..close])?;
        return Ok(ReactReply::Action { kind, args });
    }
    Err(ParseError::NoAction { snippet: snippet(text) })
}

fn parse_args(s: &str) -> Result<Vec<Arg>, ParseError> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    // (text, was quoted)
    let mut tokens: Vec<(String, bool)> = vec![(String::new(), false)];
    let mut quote: Option<char> = None;
    for c in s.chars() {
        let last = tokens.last_mut().expect("non-empty");
        match (quote, c) {
            (None, '"' | '\'') => {
                quote = Some(c);
                last.1 = true;
            }
            (Some(q), c) if c == q => quote = None,
            (None, ',') => tokens.push((String::new(), false)),
            _ => last.0.push(c),
        }
    }
    if quote.is_some() {
        return Err(ParseError::Arguments(s.to_string()));
    }
    tokens
        .into_iter()
        .map(|(t, quoted)| {
            let t = t.trim();
            if quoted {
                Ok(Arg::Text(t.to_string()))
            } else if t.is_empty() {
                Err(ParseError::Arguments(s.to_string()))
            } else if let Ok(v) = t.parse::<i64>() {
                Ok(Arg::Int(v))
            } else {
                Ok(Arg::Text(t.to_string()))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_inside_prose() {
        let text = "Here is the plan [as requested]:\n```json\n[{\"description\": \"a\"}, \
                    {\"description\": \"b\", \"predecessors\": [1], \"data_paths\": [\"$.x\"]}]\n```";
        let specs = parse_decomposition(text).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[1].predecessor_indices, vec![1]);
        assert_eq!(specs[1].data_refs, vec!["$.x".to_string()]);
    }

    #[test]
    fn forward_reference_names_position() {
        let err = parse_decomposition(r#"[{"description":"a","predecessors":[2]},{"description":"b"}]"#).unwrap_err();
        assert_eq!(err, ParseError::ForwardReference { position: 1, index: 2 });
    }

    #[test]
    fn prose_without_structure_fails() {
        assert!(matches!(
            parse_decomposition("I would start by building a wall."),
            Err(ParseError::NoStructure { .. })
        ));
        assert_eq!(parse_decomposition("nothing left: []").unwrap(), vec![]);
    }

    fn agents() -> BTreeSet<String> {
        ["Alice", "Bob"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn allocation_rules() {
        let nodes: BTreeMap<NodeId, u32> = [(2, 1), (3, 1), (4, 2)].into_iter().collect();
        let ok = parse_allocation(
            r#"[{"agent":"Alice","task":2},{"agent":"Bob","task":3}]"#,
            &agents(),
            &nodes,
        );
        assert_eq!(ok.unwrap(), vec![("Alice".into(), 2), ("Bob".into(), 3)]);
        let dup = parse_allocation(
            r#"[{"agent":"Alice","task":2},{"agent":"Alice","task":3}]"#,
            &agents(),
            &nodes,
        );
        assert_eq!(dup.unwrap_err(), ParseError::DuplicateAgent("Alice".into()));
        let both = parse_allocation(
            r#"[{"agent":"Alice","task":4},{"agent":"Bob","task":4}]"#,
            &agents(),
            &nodes,
        );
        assert_eq!(both.unwrap().len(), 2);
        let twice = parse_allocation(
            r#"[{"agent":"Alice","task":2},{"agent":"Bob","task":2}]"#,
            &agents(),
            &nodes,
        );
        assert!(matches!(twice, Err(ParseError::DuplicateNode { node: 2, .. })));
        let unknown = parse_allocation(r#"[{"agent":"Eve","task":9}]"#, &agents(), &nodes).unwrap_err();
        assert_eq!(
            unknown,
            ParseError::Unknown {
                agents: vec!["Eve".into()],
                nodes: vec![9]
            }
        );
        assert_eq!(parse_allocation("[]", &agents(), &nodes).unwrap(), vec![]);
    }

    #[test]
    fn react_actions_and_finish() {
        assert_eq!(
            parse_react("Thought: go\nAction: navigateTo(130,-60,131)").unwrap(),
            ReactReply::Action {
                kind: ActionKind::NavigateTo,
                args: vec![Arg::Int(130), Arg::Int(-60), Arg::Int(131)]
            }
        );
        assert_eq!(
            parse_react("placeBlock(\"oak_planks\", 1, -60, 2, E)").unwrap(),
            ReactReply::Action {
                kind: ActionKind::PlaceBlock,
                args: vec!["oak_planks".into(), 1.into(), (-60).into(), 2.into(), "E".into()]
            }
        );
        assert_eq!(
            parse_react("All done. Finish[succeeded]").unwrap(),
            ReactReply::Finish { succeeded: true }
        );
        assert_eq!(
            parse_react("Finish[failed]").unwrap(),
            ReactReply::Finish { succeeded: false }
        );
        assert!(parse_react("zzz qqq").is_err());
        assert!(parse_react("fly(1,2)").is_err());
        assert_eq!(
            parse_react("Action: scanNearbyEntities()").unwrap(),
            ReactReply::Action {
                kind: ActionKind::ScanNearbyEntities,
                args: vec![]
            }
        );
    }
}
