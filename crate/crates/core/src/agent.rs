//! Base agent: bounded ReAct loop over the action API plus self-reflection.

use std::collections::{BTreeSet, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use dagcrew_worldsim::world::AgentSnapshot;
use dagcrew_worldsim::{ActionKind, ActionRequest, ActionResult, Arg, Enrollment, WorldState};

use crate::planner::{
    self, or_none, parse_react, CallRecord, PlannerBackend, PlannerRequest, ReactReply, TemplateId, TokenUsage,
};
use crate::statemgr::AgentStateSummary;
use crate::taskgraph::SubtaskNode;

pub const DEFAULT_HISTORY: usize = 6;
pub const MAX_ITERATIONS: u32 = 6;
pub const SCRIPTED_TICK_BUDGET: u64 = 240;
pub const LIVE_WALL_BUDGET: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub kind: ActionKind,
    pub args: Vec<Arg>,
    pub observation: String,
    /// Tick at which the action completed.
    pub tick: u64,
    pub accepted: bool,
}

impl HistoryRecord {
    pub fn from_pair(req: &ActionRequest, res: &ActionResult) -> Self {
        Self {
            kind: req.kind,
            args: req.args.clone(),
            observation: res.observation.clone(),
            tick: res.tick,
            accepted: res.accepted,
        }
    }

    pub fn line(&self) -> String {
        let args: Vec<String> = self.args.iter().map(Arg::to_string).collect();
        format!(
            "[tick {}] {}({}) -> {}",
            self.tick,
            self.kind,
            args.join(", "),
            self.observation
        )
    }
}

/// The last `capacity` actions of one agent, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionHistory {
    capacity: usize,
    records: VecDeque<HistoryRecord>,
}

impl Default for ActionHistory {
    fn default() -> Self {
        Self::new(DEFAULT_HISTORY)
    }
}

impl ActionHistory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            records: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &HistoryRecord> {
        self.records.iter()
    }

    /// Appends, evicting the oldest record when full.
    pub fn push(&mut self, record: HistoryRecord) {
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.records).expect("records serialize")
    }
}

pub fn push_history(mut history: ActionHistory, record: HistoryRecord) -> ActionHistory {
    history.push(record);
    history
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: String,
    pub capabilities: BTreeSet<ActionKind>,
    pub state: AgentStateSummary,
    pub history: ActionHistory,
}

impl AgentProfile {
    pub fn new(id: &str, capabilities: BTreeSet<ActionKind>, history: usize) -> Self {
        Self {
            id: id.to_string(),
            capabilities,
            state: AgentStateSummary::new(id),
            history: ActionHistory::new(history),
        }
    }

    fn api_listing(&self) -> String {
        self.capabilities
            .iter()
            .map(|k| k.signature())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Succeeded,
    Failed,
}

/// Per-execution limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    /// Simulated ticks from the start of the execution.
    pub ticks: Option<u64>,
    pub wall: Option<Duration>,
    pub max_iterations: u32,
}

impl Budget {
    pub fn scripted() -> Self {
        Self {
            ticks: Some(SCRIPTED_TICK_BUDGET),
            wall: None,
            max_iterations: MAX_ITERATIONS,
        }
    }

    pub fn live() -> Self {
        Self {
            ticks: None,
            wall: Some(LIVE_WALL_BUDGET),
            max_iterations: MAX_ITERATIONS,
        }
    }
}

/// Where actions go: straight into a world, or through the shared gate.
pub trait WorldPort {
    fn submit(&mut self, req: ActionRequest) -> ActionResult;
}

impl WorldPort for WorldState {
    fn submit(&mut self, req: ActionRequest) -> ActionResult {
        self.apply_action(&req)
    }
}

impl WorldPort for Enrollment<'_> {
    fn submit(&mut self, req: ActionRequest) -> ActionResult {
        Enrollment::submit(self, req)
    }
}

/// Everything an execution sees besides the agent itself.
#[derive(Debug, Clone)]
pub struct ExecContext<'a> {
    pub node: &'a SubtaskNode,
    /// Position of this agent among the node's agents (sorted by id).
    pub role: usize,
    pub team: Vec<String>,
    pub predecessor_states: Vec<AgentStateSummary>,
    pub env: String,
    pub start: AgentSnapshot,
    pub start_tick: u64,
    pub budget: Budget,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionResult {
    pub agent: String,
    pub history: ActionHistory,
    pub feedback: String,
    pub outcome: Outcome,
    /// What the agent claimed in its terminal reply, if it sent one.
    pub claim: Option<bool>,
    pub iterations: u32,
    pub tokens: TokenUsage,
    pub calls: Vec<CallRecord>,
    pub actions: Vec<(ActionRequest, ActionResult)>,
    pub budget_exhausted: bool,
    pub end_tick: u64,
}

pub const BUDGET_EXHAUSTED: &str = "budget exhausted";

/// Runs the ReAct loop for one node, then reflects.
pub fn execute(
    profile: &mut AgentProfile,
    ctx: &ExecContext<'_>,
    backend: &dyn PlannerBackend,
    world: &mut dyn WorldPort,
) -> ExecutionResult {
    let started = Instant::now();
    let mut tick = ctx.start_tick;
    let mut calls = Vec::new();
    let mut actions = Vec::new();
    let mut records: Vec<HistoryRecord> = Vec::new();
    let mut scratchpad = String::new();
    let mut claim = None;
    let mut iterations = 0;
    let mut exhausted = false;
    let self_state = json!({"position": ctx.start.pos, "inventory": ctx.start.inventory}).to_string();
    let task_data = serde_json::to_string(&ctx.node.data).unwrap_or_default();
    let team = serde_json::to_string(&ctx.team).unwrap_or_default();
    let preds: Vec<String> = ctx.predecessor_states.iter().map(|s| s.text.clone()).collect();
    while iterations < ctx.budget.max_iterations {
        let over_ticks = ctx.budget.ticks.is_some_and(|b| tick >= ctx.start_tick + b);
        let over_wall = ctx.budget.wall.is_some_and(|w| started.elapsed() >= w);
        if over_ticks || over_wall {
            exhausted = true;
            break;
        }
        iterations += 1;
        let mut req = PlannerRequest::new(TemplateId::React)
            .slot("agent", profile.id.as_str())
            .slot("task", ctx.node.description.as_str())
            .slot("actions", profile.api_listing())
            .slot("self_state", self_state.as_str())
            .slot("task_data", task_data.as_str())
            .slot("role", ctx.role.to_string())
            .slot("team", team.as_str())
            .slot("scratchpad", or_none(&scratchpad));
        if !ctx.env.trim().is_empty() {
            req = req.slot("environment", ctx.env.as_str());
        }
        if !preds.is_empty() {
            req = req.slot("predecessor_states", preds.join("\n\n"));
        }
        let reply = match planner::call(backend, &req, &mut calls) {
            Ok(r) => r.text,
            Err(e) => {
                scratchpad.push_str(&format!("Observation: planner error: {e}\n"));
                continue;
            }
        };
        match parse_react(&reply) {
            Ok(ReactReply::Finish { succeeded }) => {
                claim = Some(succeeded);
                break;
            }
            Ok(ReactReply::Action { kind, args }) => {
                let request = ActionRequest::new(&profile.id, kind, args, tick);
                let result = world.submit(request.clone());
                tick = tick.max(result.tick);
                let rec = HistoryRecord::from_pair(&request, &result);
                scratchpad.push_str(&format!(
                    "Action: {}\nObservation: {}\n",
                    request.call_text(),
                    result.observation
                ));
                profile.history.push(rec.clone());
                records.push(rec);
                actions.push((request, result));
            }
            Err(e) => {
                scratchpad.push_str(&format!("Observation: could not parse reply: {e}\n"));
            }
        }
    }
    let claim_text = match claim {
        Some(true) => "succeeded",
        Some(false) => "failed",
        None => "(none)",
    };
    let mut feedback = reflect(
        backend,
        &profile.id,
        &ctx.node.description,
        &records,
        claim_text,
        &mut calls,
    );
    if exhausted {
        feedback = format!("{BUDGET_EXHAUSTED} at tick {tick}. {feedback}");
    }
    let mut tokens = TokenUsage::default();
    for c in &calls {
        tokens.add(c.usage);
    }
    ExecutionResult {
        agent: profile.id.clone(),
        history: profile.history.clone(),
        feedback,
        outcome: if claim == Some(true) && !exhausted {
            Outcome::Succeeded
        } else {
            Outcome::Failed
        },
        claim,
        iterations,
        tokens,
        calls,
        actions,
        budget_exhausted: exhausted,
        end_tick: tick,
    }
}

/// Feedback text for the planner; never empty.
pub fn reflect(
    backend: &dyn PlannerBackend,
    agent: &str,
    task: &str,
    records: &[HistoryRecord],
    claim: &str,
    log: &mut Vec<CallRecord>,
) -> String {
    let history: Vec<String> = records.iter().map(HistoryRecord::line).collect();
    let req = PlannerRequest::new(TemplateId::Reflect)
        .slot("agent", agent)
        .slot("task", task)
        .slot("history", or_none(&history.join("\n")))
        .slot("claim", claim);
    match planner::call(backend, &req, log) {
        Ok(r) if !r.text.trim().is_empty() => r.text.trim().to_string(),
        _ => fallback_feedback(task, records),
    }
}

fn fallback_feedback(task: &str, records: &[HistoryRecord]) -> String {
    match records.last() {
        Some(r) => format!(
            "Reflection unavailable for '{task}'. Last observation: {}",
            r.observation
        ),
        None => format!("Reflection unavailable for '{task}'; no actions were taken."),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(tick: u64) -> HistoryRecord {
        HistoryRecord {
            kind: ActionKind::NavigateTo,
            args: vec![],
            observation: String::new(),
            tick,
            accepted: true,
        }
    }

    #[test]
    fn history_is_fifo_bounded() {
        let mut h = ActionHistory::new(2);
        h = push_history(h, rec(1));
        assert_eq!(h.len(), 1);
        h = push_history(h, rec(2));
        h = push_history(h, rec(3));
        let ticks: Vec<u64> = h.records().map(|r| r.tick).collect();
        assert_eq!(ticks, vec![2, 3]);
    }
}
