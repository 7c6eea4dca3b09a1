//! The three task families behind one interface.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use dagcrew_worldsim::escape::RoomSpec;
use dagcrew_worldsim::tasks::{construction_task, cooking_task, ConstructionTask, CookingTask};
use dagcrew_worldsim::{ActionKind, BlockTuple, EscapeError, EscapeSpec, ItemBag, ScenarioKind, WorldState};

use crate::metrics::{self, completion_construction, completion_cooking, completion_escape};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown {kind} task `{task}`")]
    UnknownTask { kind: ScenarioKind, task: String },
    #[error("{0} scenario needs a task id")]
    MissingTask(ScenarioKind),
    #[error("escape scenario needs an escape spec")]
    MissingSpec,
    #[error(transparent)]
    Escape(#[from] EscapeError),
}

/// Serializable selector stored in the trace header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape: Option<EscapeSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Construction(ConstructionTask),
    Cooking(CookingTask),
    Escape(EscapeSpec),
}

impl Scenario {
    pub fn from_spec(spec: &ScenarioSpec) -> Result<Self, ScenarioError> {
        let task = || spec.task.clone().ok_or(ScenarioError::MissingTask(spec.kind));
        let unknown = |task: String| ScenarioError::UnknownTask { kind: spec.kind, task };
        Ok(match spec.kind {
            ScenarioKind::Construction => {
                let t = task()?;
                Scenario::Construction(construction_task(&t).ok_or_else(|| unknown(t))?)
            }
            ScenarioKind::Cooking => {
                let t = task()?;
                Scenario::Cooking(cooking_task(&t).ok_or_else(|| unknown(t))?)
            }
            ScenarioKind::Escape => {
                let s = spec.escape.clone().ok_or(ScenarioError::MissingSpec)?;
                s.validate()?;
                Scenario::Escape(s)
            }
        })
    }

    pub fn spec(&self) -> ScenarioSpec {
        match self {
            Scenario::Construction(t) => ScenarioSpec {
                kind: ScenarioKind::Construction,
                task: Some(t.id.clone()),
                escape: None,
            },
            Scenario::Cooking(t) => ScenarioSpec {
                kind: ScenarioKind::Cooking,
                task: Some(t.id.clone()),
                escape: None,
            },
            Scenario::Escape(s) => ScenarioSpec {
                kind: ScenarioKind::Escape,
                task: None,
                escape: Some(s.clone()),
            },
        }
    }

    pub fn kind(&self) -> ScenarioKind {
        match self {
            Scenario::Construction(_) => ScenarioKind::Construction,
            Scenario::Cooking(_) => ScenarioKind::Cooking,
            Scenario::Escape(_) => ScenarioKind::Escape,
        }
    }

    pub fn task_id(&self) -> String {
        match self {
            Scenario::Construction(t) => t.id.clone(),
            Scenario::Cooking(t) => t.id.clone(),
            Scenario::Escape(s) => format!("escape_s{}_d{}", s.seed, s.difficulty),
        }
    }

    pub fn goal(&self) -> String {
        match self {
            Scenario::Construction(t) => t.goal(),
            Scenario::Cooking(t) => t.goal(),
            Scenario::Escape(s) => format!(
                "Escape through all {} rooms and reach the exit at {}. Each room opens once its puzzle is solved.",
                s.rooms.len(),
                s.exit
            ),
        }
    }

    /// Structured task document the planner resolves data paths against.
    pub fn document(&self) -> Value {
        match self {
            Scenario::Construction(t) => t.document(),
            Scenario::Cooking(t) => t.document(),
            Scenario::Escape(s) => serde_json::to_value(s).expect("spec serializes"),
        }
    }

    pub fn build_world(&self, agents: &[(String, BTreeSet<ActionKind>)], seed: u64) -> WorldState {
        match self {
            Scenario::Construction(t) => t.build_world(agents, seed),
            Scenario::Cooking(t) => t.build_world(agents, seed),
            Scenario::Escape(s) => s.build_world(agents),
        }
    }

    pub fn blueprint(&self) -> Option<BTreeSet<BlockTuple>> {
        match self {
            Scenario::Construction(t) => Some(t.blueprint.block_set()),
            _ => None,
        }
    }

    /// Completion from the world, plus the cooking indicators latched so far.
    pub fn completion(&self, world: &WorldState, latched: &BTreeSet<String>) -> f64 {
        match self {
            Scenario::Construction(t) => {
                completion_construction(&world.placed_blocks(), &t.blueprint.block_set()).unwrap_or(0.0)
            }
            Scenario::Cooking(t) => {
                if world.has_item_anywhere(&t.goal_item) {
                    return 1.0;
                }
                match t.book.tree(&t.goal_item) {
                    Ok(tree) => completion_cooking(latched, &tree),
                    Err(_) => 0.0,
                }
            }
            Scenario::Escape(_) => match &world.escape {
                Some(e) => {
                    let (met, req): (Vec<usize>, Vec<usize>) = e.progress().into_iter().unzip();
                    completion_escape(&req, &met)
                }
                None => 0.0,
            },
        }
    }

    /// Folds one agent inventory into the latched cooking indicators.
    pub fn latch(&self, latched: &mut BTreeSet<String>, inventory: &ItemBag) {
        if let Scenario::Cooking(t) = self {
            if let Ok(tree) = t.book.tree(&t.goal_item) {
                latched.extend(metrics::cooking_latched(&t.book, &tree, [inventory]));
            }
        }
    }

    /// World-grounded check of a node's payload; `None` when the payload has
    /// no observable end state.
    pub fn verify_node(&self, data: &Value, world: &WorldState) -> Option<bool> {
        let items = data.as_array()?;
        match self {
            Scenario::Construction(_) => {
                if items.first().is_some_and(|v| v.get("stand").is_some()) {
                    return None;
                }
                let cells: Vec<BlockTuple> = items
                    .iter()
                    .filter(|v| v.get("material").is_some())
                    .filter_map(|v| serde_json::from_value(v.clone()).ok())
                    .collect();
                if cells.is_empty() {
                    return None;
                }
                let placed = world.placed_blocks();
                Some(cells.iter().all(|c| placed.contains(c)))
            }
            Scenario::Cooking(_) => {
                let step = items.iter().find(|v| v.get("produces").is_some())?;
                let produces: Vec<&str> = step["produces"].as_array()?.iter().filter_map(Value::as_str).collect();
                if produces.is_empty() {
                    return None;
                }
                let totals = world.item_totals();
                Some(produces.iter().all(|p| totals.count(p) > 0))
            }
            Scenario::Escape(_) => {
                let room: RoomSpec = items.iter().find_map(|v| serde_json::from_value(v.clone()).ok())?;
                let state = world.escape.as_ref()?;
                let r = state.rooms.iter().find(|r| r.center == room.center)?;
                Some(r.passed())
            }
        }
    }

    /// Items a node's executor will need, used to rank agents for allocation.
    pub fn requirements(&self, data: &Value) -> ItemBag {
        let mut bag = ItemBag::new();
        let Some(items) = data.as_array() else {
            return bag;
        };
        match self {
            Scenario::Construction(_) => {
                for m in items.iter().filter_map(|v| v.get("material").and_then(Value::as_str)) {
                    bag.add(m, 1);
                }
            }
            Scenario::Cooking(_) => {
                let ops = items.iter().filter_map(|v| v["ops"].as_array()).flatten();
                for op in ops.filter(|op| op["op"] == "gather") {
                    for it in op["items"].as_array().into_iter().flatten() {
                        if let (Some(n), Some(c)) = (it["name"].as_str(), it["count"].as_u64()) {
                            bag.add(n, c as u32);
                        }
                    }
                }
            }
            Scenario::Escape(_) => {}
        }
        bag
    }

    pub fn dependency_complexity(&self) -> f64 {
        match self {
            Scenario::Construction(t) => {
                metrics::dep_construction(&t.placement_order(), dagcrew_worldsim::tasks::GROUND_Y)
            }
            Scenario::Cooking(t) => metrics::dep_cooking(&t.book, &t.goal_item).unwrap_or(0.0),
            Scenario::Escape(s) => metrics::dep_escape(s).unwrap_or(0.0),
        }
    }
}
