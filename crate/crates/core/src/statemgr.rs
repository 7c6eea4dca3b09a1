//! Global environment view and per-agent state summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use dagcrew_worldsim::world::ObsKind;
use dagcrew_worldsim::{Observation, Pos, WorldState};

use crate::agent::ActionHistory;
use crate::planner::{self, CallRecord, PlannerBackend, PlannerRequest, TemplateId};

pub const DEFAULT_SUMMARY_CAP: usize = 1200;

/// Natural-language summary of one agent, refreshed after each execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentStateSummary {
    pub agent: String,
    pub text: String,
    pub updated_round: u32,
}

impl AgentStateSummary {
    pub fn new(agent: &str) -> Self {
        Self {
            agent: agent.to_string(),
            text: String::new(),
            updated_round: 0,
        }
    }
}

/// Per-agent local views plus their deduplicated union.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalEnvState {
    pub views: BTreeMap<String, Vec<Observation>>,
    pub merged: Vec<Observation>,
}

/// Collects each agent's local view. Agents are visited in id order and the
/// first occurrence of an observation key wins.
pub fn global_env(world: &WorldState) -> GlobalEnvState {
    let mut views = BTreeMap::new();
    let mut merged: BTreeMap<(ObsKind, Option<Pos>, String), Observation> = BTreeMap::new();
    for agent in world.agents.keys() {
        let view = world.local_view(agent);
        for o in &view {
            let (k, p, s) = o.key();
            merged.entry((k, p, s.to_string())).or_insert_with(|| o.clone());
        }
        views.insert(agent.clone(), view);
    }
    GlobalEnvState {
        views,
        merged: merged.into_values().collect(),
    }
}

fn kind_name(k: ObsKind) -> &'static str {
    match k {
        ObsKind::Agent => "agent",
        ObsKind::Block => "block",
        ObsKind::Container => "container",
        ObsKind::Activator => "activator",
        ObsKind::Entity => "entity",
        ObsKind::Sign => "sign",
    }
}

/// One line per observation: `<kind> <subject> at <pos>: <detail>`.
pub fn render_observations(obs: &[Observation]) -> String {
    obs.iter()
        .map(|o| match o.pos {
            Some(p) => format!("{} {} at {}: {}", kind_name(o.kind), o.subject, p, o.detail),
            None => format!("{} {}: {}", kind_name(o.kind), o.subject, o.detail),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Goal-relevant subset of the merged view. Falls back to the unfiltered
/// rendering when the planner call fails.
pub fn retrieve_env(
    backend: &dyn PlannerBackend,
    goal: &str,
    env: &GlobalEnvState,
    log: &mut Vec<CallRecord>,
) -> String {
    if env.merged.is_empty() {
        return String::new();
    }
    let full = render_observations(&env.merged);
    let req = PlannerRequest::new(TemplateId::EnvRetrieve)
        .slot("goal", goal)
        .slot("observations", full.as_str());
    match planner::call(backend, &req, log) {
        Ok(r) => r.text,
        Err(_) => full,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateUpdate {
    pub summary: AgentStateSummary,
    pub truncated: bool,
    pub warning: Option<String>,
}

/// Cuts `text` to at most `cap` bytes on a char boundary.
pub fn truncate_chars(text: &str, cap: usize) -> (&str, bool) {
    if text.len() <= cap {
        return (text, false);
    }
    let mut end = cap;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    (&text[..end], true)
}

/// Folds recent history into the summary, which always starts with the agent
/// id. With an empty history the summary is returned unchanged; a failed call
/// keeps the old summary and warns.
pub fn update_agent_state(
    backend: &dyn PlannerBackend,
    old: &AgentStateSummary,
    history: &ActionHistory,
    round: u32,
    cap: usize,
    log: &mut Vec<CallRecord>,
) -> StateUpdate {
    if history.is_empty() {
        return StateUpdate {
            summary: old.clone(),
            truncated: false,
            warning: None,
        };
    }
    let mut req = PlannerRequest::new(TemplateId::AgentStateUpdate)
        .slot("agent", old.agent.as_str())
        .slot("history", history.to_json());
    if !old.text.trim().is_empty() {
        req = req.slot("summary", old.text.as_str());
    }
    match planner::call(backend, &req, log) {
        Ok(reply) => {
            let mut text = reply.text.trim().to_string();
            if !text.starts_with(&old.agent) {
                text = format!("{}: {text}", old.agent);
            }
            let (cut, truncated) = truncate_chars(&text, cap);
            StateUpdate {
                summary: AgentStateSummary {
                    agent: old.agent.clone(),
                    text: cut.to_string(),
                    updated_round: round,
                },
                truncated,
                warning: None,
            }
        }
        Err(e) => StateUpdate {
            summary: old.clone(),
            truncated: false,
            warning: Some(format!("state update for {} failed: {e}", old.agent)),
        },
    }
}
