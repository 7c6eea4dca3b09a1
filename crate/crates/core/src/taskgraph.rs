//! Subtask DAG: construction from ordered planner output, ready-set queries,
//! status transitions, export and import.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Running,
    Succeeded,
    Failed,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::Running => "running",
            Status::Succeeded => "succeeded",
            Status::Failed => "failed",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, Status::Succeeded | Status::Failed)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskNode {
    pub id: NodeId,
    pub description: String,
    /// Payload resolved from the task document.
    pub data: Value,
    /// Path expressions the payload was resolved from.
    #[serde(default)]
    pub data_refs: Vec<String>,
    pub assigned: BTreeSet<String>,
    pub feedback: Option<String>,
    pub status: Status,
    pub round: u32,
    /// Agents that must execute the node together.
    pub agents_required: u32,
}

/// One element of a decomposition reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskSpec {
    pub description: String,
    /// 1-based positions of earlier specs in the same batch.
    #[serde(default)]
    pub predecessor_indices: Vec<usize>,
    #[serde(default)]
    pub data_refs: Vec<String>,
    #[serde(default = "one")]
    pub agents: u32,
}

fn one() -> u32 {
    1
}

impl SubtaskSpec {
    pub fn new(description: &str) -> Self {
        Self {
            description: description.to_string(),
            predecessor_indices: Vec::new(),
            data_refs: Vec::new(),
            agents: 1,
        }
    }

    pub fn after(mut self, preds: &[usize]) -> Self {
        self.predecessor_indices = preds.to_vec();
        self
    }

    pub fn with_refs(mut self, refs: &[&str]) -> Self {
        self.data_refs = refs.iter().map(|s| s.to_string()).collect();
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("spec {position}: predecessor index {index} must refer to an earlier spec")]
    BadPredecessor { position: usize, index: usize },
    #[error("spec {position}: agent count must be at least 1")]
    NoAgents { position: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {id}: cannot go from {from} to {to}")]
    IllegalTransition { id: NodeId, from: Status, to: Status },
    #[error("node {id}: {message}")]
    Feedback { id: NodeId, message: String },
    #[error("line {line}: {message}")]
    Import { line: usize, message: String },
}

/// Validates the predecessor invariant of a spec list.
pub fn validate_specs(specs: &[SubtaskSpec]) -> Result<(), GraphError> {
    for (i, s) in specs.iter().enumerate() {
        let position = i + 1;
        if let Some(&index) = s.predecessor_indices.iter().find(|&&p| p == 0 || p >= position) {
            return Err(GraphError::BadPredecessor { position, index });
        }
        if s.agents == 0 {
            return Err(GraphError::NoAgents { position });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskGraph {
    nodes: BTreeMap<NodeId, SubtaskNode>,
    edges: BTreeSet<(NodeId, NodeId)>,
    order: Vec<NodeId>,
    /// Failed node → nodes appended to replace it.
    replaced_by: BTreeMap<NodeId, Vec<NodeId>>,
    next_id: NodeId,
}

/// Extra inputs for appending one batch.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub round: u32,
    /// Resolved payload per spec; missing entries default to null.
    pub data: Vec<Value>,
    /// Predecessors inherited by a leading spec that lists none.
    pub seed_predecessors: BTreeSet<NodeId>,
    /// Failed node this batch replaces.
    pub replaces: Option<NodeId>,
}

impl TaskGraph {
    pub fn new() -> Self {
        Self {
            next_id: 1,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&SubtaskNode> {
        self.nodes.get(&id)
    }

    /// Nodes in insertion order.
    pub fn nodes(&self) -> impl Iterator<Item = &SubtaskNode> {
        self.order.iter().map(|id| &self.nodes[id])
    }

    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn insertion_order(&self) -> &[NodeId] {
        &self.order
    }

    pub fn predecessors(&self, id: NodeId) -> BTreeSet<NodeId> {
        self.edges.iter().filter(|e| e.1 == id).map(|e| e.0).collect()
    }

    pub fn replacements(&self, id: NodeId) -> &[NodeId] {
        self.replaced_by.get(&id).map_or(&[], Vec::as_slice)
    }

    /// Appends one decomposition batch and returns the new node ids.
    ///
    /// A spec without predecessors inherits the effective predecessor set of
    /// the spec before it in the same batch; the first spec inherits
    /// `seed_predecessors`.
    pub fn append(&mut self, specs: &[SubtaskSpec], batch: Batch) -> Result<Vec<NodeId>, GraphError> {
        validate_specs(specs)?;
        if let Some(f) = batch.replaces {
            if !self.nodes.contains_key(&f) {
                return Err(GraphError::UnknownNode(f));
            }
        }
        if let Some(&p) = batch.seed_predecessors.iter().find(|p| !self.nodes.contains_key(p)) {
            return Err(GraphError::UnknownNode(p));
        }
        if self.next_id == 0 {
            self.next_id = 1;
        }
        let mut ids = Vec::with_capacity(specs.len());
        let mut previous = batch.seed_predecessors.clone();
        for (i, spec) in specs.iter().enumerate() {
            let id = self.next_id;
            self.next_id += 1;
            let preds: BTreeSet<NodeId> = if spec.predecessor_indices.is_empty() {
                previous.clone()
            } else {
                spec.predecessor_indices.iter().map(|&p| ids[p - 1]).collect()
            };
            for &p in &preds {
                self.edges.insert((p, id));
            }
            previous = preds;
            self.nodes.insert(
                id,
                SubtaskNode {
                    id,
                    description: spec.description.clone(),
                    data: batch.data.get(i).cloned().unwrap_or(Value::Null),
                    data_refs: spec.data_refs.clone(),
                    assigned: BTreeSet::new(),
                    feedback: None,
                    status: Status::Pending,
                    round: batch.round,
                    agents_required: spec.agents,
                },
            );
            self.order.push(id);
            ids.push(id);
        }
        if let Some(f) = batch.replaces {
            self.replaced_by.entry(f).or_default().extend(ids.iter().copied());
        }
        Ok(ids)
    }

    /// Nodes that count as executed for readiness: succeeded nodes, and failed
    /// nodes whose replacements have all been resolved.
    pub fn executed(&self) -> BTreeSet<NodeId> {
        let mut memo = BTreeMap::new();
        self.nodes
            .keys()
            .copied()
            .filter(|&id| self.resolved(id, &mut memo))
            .collect()
    }

    fn resolved(&self, id: NodeId, memo: &mut BTreeMap<NodeId, bool>) -> bool {
        if let Some(&r) = memo.get(&id) {
            return r;
        }
        let r = match self.nodes[&id].status {
            Status::Succeeded => true,
            Status::Failed => {
                let reps = self.replacements(id);
                // replacements always have larger ids, so recursion terminates
                !reps.is_empty() && reps.iter().all(|&r| self.resolved(r, memo))
            }
            _ => false,
        };
        memo.insert(id, r);
        r
    }

    pub fn with_status(&self, status: Status) -> BTreeSet<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.status == status)
            .map(|n| n.id)
            .collect()
    }

    /// Moves a node along pending → running → {succeeded, failed}.
    pub fn mark_status(&mut self, id: NodeId, status: Status, feedback: Option<String>) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        let legal = matches!(
            (node.status, status),
            (Status::Pending, Status::Running)
                | (Status::Running, Status::Succeeded)
                | (Status::Running, Status::Failed)
        );
        if !legal {
            return Err(GraphError::IllegalTransition {
                id,
                from: node.status,
                to: status,
            });
        }
        let has_text = feedback.as_deref().is_some_and(|f| !f.trim().is_empty());
        if status.is_terminal() && !has_text {
            return Err(GraphError::Feedback {
                id,
                message: format!("{status} requires non-empty feedback"),
            });
        }
        if !status.is_terminal() && feedback.is_some() {
            return Err(GraphError::Feedback {
                id,
                message: format!("{status} carries no feedback"),
            });
        }
        node.status = status;
        node.feedback = feedback;
        Ok(())
    }

    /// Records the allocated agents and marks the node running.
    pub fn start(&mut self, id: NodeId, agents: BTreeSet<String>) -> Result<(), GraphError> {
        self.mark_status(id, Status::Running, None)?;
        self.nodes.get_mut(&id).expect("checked").assigned = agents;
        Ok(())
    }

    pub fn export(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Dot => self.to_dot(),
            ExportFormat::Structured => self.to_structured(),
        }
    }

    fn to_dot(&self) -> String {
        let mut out = String::from("digraph taskgraph {\n");
        for n in self.nodes() {
            let label = format!("{}: {}\\n({})", n.id, escape_dot(&n.description), n.status);
            out.push_str(&format!("  n{} [label=\"{}\"];\n", n.id, label));
        }
        for (u, v) in &self.edges {
            out.push_str(&format!("  n{u} -> n{v};\n"));
        }
        out.push_str("}\n");
        out
    }

    fn to_structured(&self) -> String {
        let replaces: BTreeMap<NodeId, NodeId> = self
            .replaced_by
            .iter()
            .flat_map(|(f, reps)| reps.iter().map(move |r| (*r, *f)))
            .collect();
        let mut out = format!("{STRUCTURED_HEADER}\n");
        for n in self.nodes() {
            let rec = NodeRecord {
                id: n.id,
                status: n.status,
                description: n.description.clone(),
                preds: self.predecessors(n.id).into_iter().collect(),
                data: n.data.clone(),
                data_refs: n.data_refs.clone(),
                assigned: n.assigned.iter().cloned().collect(),
                feedback: n.feedback.clone(),
                round: n.round,
                agents_required: n.agents_required,
                replaces: replaces.get(&n.id).copied(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn import_structured(text: &str) -> Result<Self, GraphError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == STRUCTURED_HEADER => {}
            _ => {
                return Err(GraphError::Import {
                    line: 1,
                    message: format!("expected header `{STRUCTURED_HEADER}`"),
                })
            }
        }
        let mut g = TaskGraph::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| GraphError::Import { line: i + 1, message };
            let rec: NodeRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if g.nodes.contains_key(&rec.id) {
                return Err(err(format!("duplicate node {}", rec.id)));
            }
            for &p in &rec.preds {
                if !g.nodes.contains_key(&p) {
                    return Err(err(format!("predecessor {p} does not precede node {}", rec.id)));
                }
                g.edges.insert((p, rec.id));
            }
            if let Some(f) = rec.replaces {
                if !g.nodes.contains_key(&f) {
                    return Err(err(format!("replaced node {f} is unknown")));
                }
                g.replaced_by.entry(f).or_default().push(rec.id);
            }
            g.next_id = g.next_id.max(rec.id + 1);
            g.order.push(rec.id);
            g.nodes.insert(
                rec.id,
                SubtaskNode {
                    id: rec.id,
                    description: rec.description,
                    data: rec.data,
                    data_refs: rec.data_refs,
                    assigned: rec.assigned.into_iter().collect(),
                    feedback: rec.feedback,
                    status: rec.status,
                    round: rec.round,
                    agents_required: rec.agents_required,
                },
            );
        }
        Ok(g)
    }
}

/// Returns a new graph holding `existing` plus one batch of specs.
pub fn build_graph(existing: &TaskGraph, specs: &[SubtaskSpec]) -> Result<TaskGraph, GraphError> {
    let mut g = existing.clone();
    g.append(specs, Batch::default())?;
    Ok(g)
}

/// Unexecuted nodes whose predecessors are all executed.
pub fn ready_set(
    graph: &TaskGraph,
    executed: &BTreeSet<NodeId>,
    unexecuted: &BTreeSet<NodeId>,
) -> Result<BTreeSet<NodeId>, GraphError> {
    if let Some(&id) = executed
        .iter()
        .chain(unexecuted)
        .find(|id| !graph.nodes.contains_key(id))
    {
        return Err(GraphError::UnknownNode(id));
    }
    let mut blocked = BTreeSet::new();
    for &(u, v) in &graph.edges {
        if !executed.contains(&u) {
            blocked.insert(v);
        }
    }
    Ok(unexecuted.difference(&blocked).copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Structured,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "structured" | "jsonl" => Ok(ExportFormat::Structured),
            other => Err(format!("unknown graph format `{other}`")),
        }
    }
}

pub const STRUCTURED_HEADER: &str = "# dagcrew-graph v1";

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    status: Status,
    description: String,
    preds: Vec<NodeId>,
    #[serde(default)]
    data: Value,
    #[serde(default)]
    data_refs: Vec<String>,
    #[serde(default)]
    assigned: Vec<String>,
    #[serde(default)]
    feedback: Option<String>,
    #[serde(default)]
    round: u32,
    #[serde(default = "one")]
    agents_required: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    replaces: Option<NodeId>,
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ")
}
