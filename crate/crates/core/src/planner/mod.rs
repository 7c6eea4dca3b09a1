//! Planner abstraction: request templates, backends and reply parsing.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod faulty;
pub mod http;
pub mod parse;
pub mod scripted;

pub use faulty::{FaultMode, FaultyPlanner};
pub use http::{HttpConfig, HttpPlanner};
pub use parse::{parse_allocation, parse_decomposition, parse_react, render_decomposition, ParseError, ReactReply};
pub use scripted::ScriptedPlanner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Decompose,
    Redecompose,
    Allocate,
    AgentStateUpdate,
    EnvRetrieve,
    React,
    Reflect,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::Decompose,
        TemplateId::Redecompose,
        TemplateId::Allocate,
        TemplateId::AgentStateUpdate,
        TemplateId::EnvRetrieve,
        TemplateId::React,
        TemplateId::Reflect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Decompose => "decompose",
            TemplateId::Redecompose => "redecompose",
            TemplateId::Allocate => "allocate",
            TemplateId::AgentStateUpdate => "agent_state_update",
            TemplateId::EnvRetrieve => "env_retrieve",
            TemplateId::React => "react",
            TemplateId::Reflect => "reflect",
        }
    }

    pub fn template(self) -> &'static Template {
        TEMPLATES
            .iter()
            .find(|t| t.id == self)
            .expect("every id has a template")
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown template `{s}`"))
    }
}

/// Prompt layout: a system instruction plus named slots rendered in order.
#[derive(Debug)]
pub struct Template {
    pub id: TemplateId,
    pub system: &'static str,
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
    pub reply_format: &'static str,
}

pub static TEMPLATES: [Template; 7] = [
    Template {
        id: TemplateId::Decompose,
        system: "You are the task decomposer of a team of game-playing agents. Break the goal into \
                 subtasks that individual agents can finish quickly. Only add subtasks that are not \
                 already covered by the existing nodes.",
        required: &["goal", "environment", "agent_states", "existing_nodes"],
        optional: &["document", "progress", "parse_error"],
        reply_format: "A JSON array. Each element: {\"description\": text, \"predecessors\": [1-based \
                       indices of earlier elements], \"data_paths\": [path expressions into the \
                       document], \"agents\": number of agents needed}. Return [] if nothing is left \
                       to plan.",
    },
    Template {
        id: TemplateId::Redecompose,
        system: "You are the task decomposer. A subtask failed. Propose replacement subtasks that \
                 achieve what the failed one was meant to achieve, using its feedback.",
        required: &["goal", "environment", "agent_states", "failed_task", "feedback"],
        optional: &[
            "failed_data_paths",
            "failed_agents",
            "existing_nodes",
            "document",
            "parse_error",
        ],
        reply_format: "A JSON array in the same shape as for decomposition.",
    },
    Template {
        id: TemplateId::Allocate,
        system: "You are the agent controller. Assign ready subtasks to idle agents, taking each \
                 agent's state and position into account. An agent takes at most one subtask.",
        required: &["environment", "ready_tasks", "agents"],
        optional: &["agent_states", "parse_error"],
        reply_format: "A JSON array of {\"agent\": agent id, \"task\": node id}. List a task several \
                       times only if it needs several agents.",
    },
    Template {
        id: TemplateId::AgentStateUpdate,
        system: "Maintain a compact long-term summary of one agent: its recent actions, what it \
                 holds and what is around it. Replace outdated quantities instead of appending.",
        required: &["agent", "history"],
        optional: &["summary"],
        reply_format: "The new summary as plain text.",
    },
    Template {
        id: TemplateId::EnvRetrieve,
        system: "Select the parts of the observed environment that matter for the goal.",
        required: &["goal"],
        optional: &["observations"],
        reply_format: "One relevant fact per line.",
    },
    Template {
        id: TemplateId::React,
        system: "You control one agent. Think about the subtask, then issue exactly one action from \
                 the API list, or finish when the subtask is done.",
        required: &["agent", "task", "actions", "self_state"],
        optional: &[
            "task_data",
            "environment",
            "predecessor_states",
            "role",
            "team",
            "scratchpad",
        ],
        reply_format: "Thought: ...\nAction: name(arg, ...)  or  Finish[succeeded] / Finish[failed]",
    },
    Template {
        id: TemplateId::Reflect,
        system: "Review what the agent did for the subtask and write short feedback for the planner: \
                 what was achieved, what went wrong, what is still missing.",
        required: &["agent", "task"],
        optional: &["history", "claim"],
        reply_format: "A few sentences of plain text.",
    },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerRequest {
    pub template: TemplateId,
    pub slots: BTreeMap<String, String>,
    /// Maximum completion tokens.
    pub budget: u32,
}

pub const DEFAULT_OUTPUT_BUDGET: u32 = 4096;

impl PlannerRequest {
    pub fn new(template: TemplateId) -> Self {
        Self {
            template,
            slots: BTreeMap::new(),
            budget: DEFAULT_OUTPUT_BUDGET,
        }
    }

    pub fn slot(mut self, name: &str, value: impl Into<String>) -> Self {
        self.slots.insert(name.to_string(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.slots.get(name).map(String::as_str)
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let t = self.template.template();
        for name in t.required {
            if self.get(name).is_none_or(|v| v.trim().is_empty()) {
                return Err(PlannerError::Request(format!(
                    "{} requires a non-empty `{name}` slot",
                    self.template
                )));
            }
        }
        if let Some(extra) = self
            .slots
            .keys()
            .find(|k| !t.required.contains(&k.as_str()) && !t.optional.contains(&k.as_str()))
        {
            return Err(PlannerError::Request(format!(
                "{} has no `{extra}` slot",
                self.template
            )));
        }
        Ok(())
    }

    /// System and user messages for a chat-style model.
    pub fn render(&self) -> Vec<Message> {
        let t = self.template.template();
        let mut user = String::new();
        for name in t.required.iter().chain(t.optional) {
            if let Some(v) = self.get(name) {
                user.push_str(&format!("## {name}\n{v}\n\n"));
            }
        }
        user.push_str(&format!("## reply format\n{}\n", t.reply_format));
        vec![
            Message {
                role: "system".into(),
                content: t.system.to_string(),
            },
            Message {
                role: "user".into(),
                content: user,
            },
        ]
    }

    pub fn prompt_chars(&self) -> usize {
        self.render().iter().map(|m| m.content.chars().count()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

/// Rough token count used when a backend reports none: one token per four characters.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannerReply {
    pub text: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PlannerError {
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("completion truncated at the output budget")]
    Truncated { partial: String, usage: TokenUsage },
    #[error("invalid request: {0}")]
    Request(String),
    #[error("unexpected response: {0}")]
    Response(String),
}

impl PlannerError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, PlannerError::Transport { retryable: true, .. })
    }

    pub fn usage(&self) -> TokenUsage {
        match self {
            PlannerError::Truncated { usage, .. } => *usage,
            _ => TokenUsage::default(),
        }
    }
}

pub trait PlannerBackend: Send + Sync {
    fn complete(&self, request: &PlannerRequest) -> Result<PlannerReply, PlannerError>;

    /// True when completions come from a live model, so time limits are wall-clock.
    fn is_live(&self) -> bool {
        false
    }
}

/// One planner call as recorded in the episode trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub template: TemplateId,
    pub usage: TokenUsage,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Calls the backend and appends exactly one record to `log`.
pub fn call(
    backend: &dyn PlannerBackend,
    request: &PlannerRequest,
    log: &mut Vec<CallRecord>,
) -> Result<PlannerReply, PlannerError> {
    let result = request.validate().and_then(|_| backend.complete(request));
    log.push(match &result {
        Ok(reply) => CallRecord {
            template: request.template,
            usage: reply.usage,
            ok: true,
            error: None,
        },
        Err(e) => CallRecord {
            template: request.template,
            usage: e.usage(),
            ok: false,
            error: Some(e.to_string()),
        },
    });
    result
}

/// Placeholder for slots that would otherwise be empty.
pub fn or_none(text: &str) -> String {
    if text.trim().is_empty() {
        "(none)".to_string()
    } else {
        text.to_string()
    }
}
