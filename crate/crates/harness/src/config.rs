//! TOML run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use dagcrew_core::orchestrator::Limits;
use dagcrew_core::planner::HttpConfig;
use dagcrew_core::scenario::ScenarioSpec;
use dagcrew_worldsim::{default_capabilities, generate_escape, ActionKind, EscapeSpec, ScenarioKind};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const DEFAULT_NAMES: [&str; 8] = ["Alice", "Bob", "Charlie", "Dana", "Eve", "Frank", "Grace", "Heidi"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    /// Bundled task id for construction and cooking.
    pub task: Option<String>,
    /// Episode seed; also the generator seed for escape runs without `escape_file`.
    #[serde(default)]
    pub seed: u64,
    /// Generator difficulty for escape runs.
    pub difficulty: Option<u32>,
    /// A spec written by `dagcrew generate`, relative to the config file.
    pub escape_file: Option<PathBuf>,
    #[serde(default)]
    pub agents: AgentsConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub limits: LimitsConfig,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub count: usize,
    pub names: Vec<String>,
    /// Per-agent action lists; agents not listed get the scenario default.
    pub capabilities: BTreeMap<String, Vec<String>>,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        Self {
            count: 2,
            names: Vec::new(),
            capabilities: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlannerConfig {
    #[default]
    Scripted,
    Http(HttpConfig),
}

impl PlannerConfig {
    pub fn is_live(&self) -> bool {
        matches!(self, PlannerConfig::Http(_))
    }
}

/// Unset fields keep the scripted or live defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub max_rounds: Option<u32>,
    pub tick_budget: Option<u64>,
    pub wall_budget_secs: Option<u64>,
    pub exec_ticks: Option<u64>,
    pub exec_wall_secs: Option<u64>,
    pub max_iterations: Option<u32>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `escape_file` is resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let (Some(f), Some(dir)) = (&cfg.escape_file, path.parent()) {
            if f.is_relative() {
                cfg.escape_file = Some(dir.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.agents.count == 0 {
            return bad("agents.count must be at least 1".into());
        }
        if !self.agents.names.is_empty() && self.agents.names.len() != self.agents.count {
            return bad(format!(
                "agents.names has {} entries but agents.count is {}",
                self.agents.names.len(),
                self.agents.count
            ));
        }
        let unique: BTreeSet<&String> = self.agents.names.iter().collect();
        if unique.len() != self.agents.names.len() {
            return bad("agent names must be unique".into());
        }
        for (name, caps) in &self.agents.capabilities {
            if !self.agent_names().contains(name) {
                return bad(format!("capabilities given for unknown agent `{name}`"));
            }
            for c in caps {
                c.parse::<ActionKind>().map_err(HarnessError::Config)?;
            }
        }
        match self.scenario {
            ScenarioKind::Construction | ScenarioKind::Cooking if self.task.is_none() => {
                return bad(format!("{} scenario needs `task`", self.scenario));
            }
            ScenarioKind::Escape if self.escape_file.is_none() => match self.difficulty {
                None => return bad("escape scenario needs `difficulty` or `escape_file`".into()),
                Some(d) if !(1..=5).contains(&d) => return bad(format!("difficulty {d} is outside 1..=5")),
                _ => {}
            },
            _ => {}
        }
        let l = &self.limits;
        if l.max_rounds == Some(0) {
            return bad("limits.max_rounds must be positive".into());
        }
        for (name, v) in [
            ("tick_budget", l.tick_budget),
            ("wall_budget_secs", l.wall_budget_secs),
            ("exec_ticks", l.exec_ticks),
            ("exec_wall_secs", l.exec_wall_secs),
        ] {
            if v == Some(0) {
                return bad(format!("limits.{name} must be positive"));
            }
        }
        if l.max_iterations == Some(0) {
            return bad("limits.max_iterations must be positive".into());
        }
        if let PlannerConfig::Http(h) = &self.planner {
            if h.max_output_tokens == 0 || h.context_tokens == 0 || h.attempts == 0 {
                return bad("planner budgets must be positive".into());
            }
        }
        Ok(())
    }

    /// Configured names, padded from the default pool and then `agent_<k>`.
    pub fn agent_names(&self) -> Vec<String> {
        if !self.agents.names.is_empty() {
            return self.agents.names.clone();
        }
        (0..self.agents.count)
            .map(|k| {
                DEFAULT_NAMES
                    .get(k)
                    .map_or_else(|| format!("agent_{}", k + 1), |n| n.to_string())
            })
            .collect()
    }

    /// Changes the agent count, keeping configured names where possible.
    pub fn set_agent_count(&mut self, n: usize) {
        let mut names = self.agent_names();
        names.truncate(n);
        let mut k = 0;
        while names.len() < n {
            let candidate = DEFAULT_NAMES
                .get(k)
                .map_or_else(|| format!("agent_{}", k + 1), |s| s.to_string());
            if !names.contains(&candidate) {
                names.push(candidate);
            }
            k += 1;
        }
        self.agents.count = n;
        self.agents.names = names;
        self.agents.capabilities.retain(|a, _| self.agents.names.contains(a));
    }

    pub fn agent_list(&self) -> Result<Vec<(String, BTreeSet<ActionKind>)>, HarnessError> {
        self.agent_names()
            .into_iter()
            .map(|name| {
                let caps = match self.agents.capabilities.get(&name) {
                    Some(list) => list
                        .iter()
                        .map(|c| c.parse::<ActionKind>())
                        .collect::<Result<_, _>>()
                        .map_err(HarnessError::Config)?,
                    None => default_capabilities(self.scenario),
                };
                Ok((name, caps))
            })
            .collect()
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec, HarnessError> {
        let escape = match self.scenario {
            ScenarioKind::Escape => Some(match &self.escape_file {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                    EscapeSpec::from_json(&text).map_err(|e| HarnessError::Config(e.to_string()))?
                }
                None => {
                    let d = self.difficulty.unwrap_or(1);
                    generate_escape(self.seed, d, self.agents.count).map_err(|e| HarnessError::Config(e.to_string()))?
                }
            }),
            _ => None,
        };
        Ok(ScenarioSpec {
            kind: self.scenario,
            task: if escape.is_some() { None } else { self.task.clone() },
            escape,
        })
    }

    pub fn limits(&self) -> Limits {
        let mut out = if self.planner.is_live() {
            Limits::live()
        } else {
            Limits::scripted()
        };
        let l = &self.limits;
        if let Some(v) = l.max_rounds {
            out.max_rounds = v;
        }
        if let Some(v) = l.tick_budget {
            out.tick_budget = Some(v);
        }
        if let Some(v) = l.wall_budget_secs {
            out.wall_budget = Some(Duration::from_secs(v));
        }
        if let Some(v) = l.exec_ticks {
            out.exec.ticks = Some(v);
        }
        if let Some(v) = l.exec_wall_secs {
            out.exec.wall = Some(Duration::from_secs(v));
        }
        if let Some(v) = l.max_iterations {
            out.exec.max_iterations = v;
        }
        out
    }

    /// `output_dir`, or `runs/<task>_s<seed>` when unset.
    pub fn out_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| {
            let task = match self.scenario {
                ScenarioKind::Escape => format!("escape_d{}", self.difficulty.unwrap_or(0)),
                _ => self.task.clone().unwrap_or_default(),
            };
            PathBuf::from("runs").join(format!("{task}_s{}", self.seed))
        })
    }
}
