//! Evaluation kernels. Pure functions over plain inputs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dagcrew_worldsim::recipe::DependencyTree;
use dagcrew_worldsim::{BlockTuple, EscapeSpec, ItemBag, Pos, RecipeBook};

pub const TICKS_PER_MINUTE: f64 = 1200.0;
pub const HEIGHT_WEIGHT: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("blueprint is empty")]
    EmptyBlueprint,
    #[error("elapsed time must be positive")]
    NoElapsed,
    #[error("no viewpoints given")]
    NoViews,
    #[error("unknown ingredient `{0}`")]
    Unknown(String),
    #[error("rooms are not a connected chain: {0}")]
    Disconnected(String),
}

/// Population standard deviation.
pub fn pop_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn completion_construction(
    placed: &BTreeSet<BlockTuple>,
    blueprint: &BTreeSet<BlockTuple>,
) -> Result<f64, MetricError> {
    if blueprint.is_empty() {
        return Err(MetricError::EmptyBlueprint);
    }
    Ok(placed.intersection(blueprint).count() as f64 / blueprint.len() as f64)
}

/// Uniform weights over the raw and processed indicators of the tree.
pub fn completion_cooking(latched: &BTreeSet<String>, tree: &DependencyTree) -> f64 {
    let indicators: BTreeSet<&String> = tree.raws.iter().chain(&tree.processed).collect();
    if indicators.is_empty() {
        return 0.0;
    }
    let hit = indicators.iter().filter(|i| latched.contains(i.as_str())).count();
    hit as f64 / indicators.len() as f64
}

/// Mean over rooms of met/required, each room weighted 1.
pub fn completion_escape(required: &[usize], met: &[usize]) -> f64 {
    if required.is_empty() {
        return 0.0;
    }
    let sum: f64 = required
        .iter()
        .zip(met)
        .map(|(&m, &c)| if m == 0 { 1.0 } else { c.min(m) as f64 / m as f64 })
        .sum();
    sum / required.len() as f64
}

pub fn efficiency(completion: f64, minutes: f64) -> Result<f64, MetricError> {
    if minutes <= 0.0 || minutes.is_nan() {
        return Err(MetricError::NoElapsed);
    }
    Ok(completion / minutes)
}

/// `None` when fewer than two agents.
pub fn balance(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Some(1.0);
    }
    let norm: Vec<f64> = times.iter().map(|t| (t - lo) / (hi - lo)).collect();
    Some((1.0 - pop_std(&norm)).clamp(0.0, 1.0))
}

/// `None` when fewer than two agents or nobody contributed.
pub fn acr(contributions: &[f64]) -> Option<f64> {
    if contributions.len() < 2 {
        return None;
    }
    let total: f64 = contributions.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut worst = vec![0.0; contributions.len()];
    worst[0] = total;
    let max = pop_std(&worst);
    Some((1.0 - pop_std(contributions) / max).clamp(0.0, 1.0))
}

pub fn token_cost(avg_tokens: f64, score: f64, actions: u64) -> f64 {
    avg_tokens / ((score + 1.0) + actions as f64)
}

/// Σ (1/EP + W_h·(H − G) + D) over cells in placement order. Ground counts as
/// an occupied neighbour for cells at ground height; D is 0 because every
/// material is supplied from the chest.
pub fn dep_construction(order: &[BlockTuple], ground_y: i32) -> f64 {
    let mut occupied: BTreeSet<Pos> = BTreeSet::new();
    let mut total = 0.0;
    for cell in order {
        let p = cell.position;
        let mut ep = p.face_neighbors().iter().filter(|n| occupied.contains(n)).count();
        if p.y == ground_y {
            ep += 1;
        }
        total += 1.0 / ep.max(1) as f64 + HEIGHT_WEIGHT * (p.y - ground_y) as f64;
        occupied.insert(p);
    }
    total
}

/// Σ count·depth over the goal's direct inputs.
pub fn dep_cooking(book: &RecipeBook, goal: &str) -> Result<f64, MetricError> {
    let inputs: Vec<(String, u32)> = if let Some(r) = book.recipe_for(goal) {
        r.ingredients.iter().map(|i| (i.name.clone(), i.count)).collect()
    } else if let Some(i) = book.interaction_for(goal) {
        vec![(i.tool.clone(), 1)]
    } else if book.raw.contains(goal) {
        Vec::new()
    } else {
        return Err(MetricError::Unknown(goal.to_string()));
    };
    let mut total = 0.0;
    for (name, count) in inputs {
        let d = book.depth(&name).map_err(|_| MetricError::Unknown(name.clone()))?;
        total += count as f64 * d as f64;
    }
    Ok(total)
}

/// Σ condition counts over rooms reached walking back from the exit.
pub fn dep_escape(spec: &EscapeSpec) -> Result<f64, MetricError> {
    let Some(last) = spec.rooms.last() else {
        return Ok(0.0);
    };
    if spec.exit != last.center.offset(0, 0, 10) {
        return Err(MetricError::Disconnected("exit does not adjoin the last room".into()));
    }
    let mut total = 0.0;
    for (i, room) in spec.rooms.iter().enumerate().rev() {
        if i > 0 {
            let prev = spec.rooms[i - 1].center;
            let c = room.center;
            if c.x != prev.x || c.y != prev.y || c.z - prev.z != 10 {
                return Err(MetricError::Disconnected(format!(
                    "room {i} does not adjoin room {}",
                    i - 1
                )));
            }
        }
        total += room.condition_count() as f64;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum View {
    PosX,
    NegX,
    PosZ,
    NegZ,
    Top,
}

pub const DEFAULT_VIEWS: [View; 5] = [View::PosX, View::NegX, View::PosZ, View::NegZ, View::Top];

/// Cells seen from `view`: the first hit along each projection ray.
pub fn project(cells: &BTreeSet<BlockTuple>, view: View) -> BTreeSet<BlockTuple> {
    let ray = |p: Pos| match view {
        View::PosX => ((p.y, p.z), p.x),
        View::NegX => ((p.y, p.z), -p.x),
        View::PosZ => ((p.x, p.y), p.z),
        View::NegZ => ((p.x, p.y), -p.z),
        View::Top => ((p.x, p.z), p.y),
    };
    let mut seen: BTreeMap<(i32, i32), &BlockTuple> = BTreeMap::new();
    for c in cells {
        let (key, depth) = ray(c.position);
        match seen.get(&key) {
            Some(old) if ray(old.position).1 >= depth => {}
            _ => {
                seen.insert(key, c);
            }
        }
    }
    seen.into_values().cloned().collect()
}

fn iou(a: &BTreeSet<BlockTuple>, b: &BTreeSet<BlockTuple>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn vhr(
    placed: &BTreeSet<BlockTuple>,
    blueprint: &BTreeSet<BlockTuple>,
    views: &[View],
) -> Result<f64, MetricError> {
    if blueprint.is_empty() {
        return Err(MetricError::EmptyBlueprint);
    }
    if views.is_empty() {
        return Err(MetricError::NoViews);
    }
    let sum: f64 = views
        .iter()
        .map(|&v| iou(&project(placed, v), &project(blueprint, v)))
        .sum();
    Ok(sum / views.len() as f64)
}

/// Indicators latched by agents holding items. Holding a processed item
/// latches its whole subtree.
pub fn cooking_latched<'a>(
    book: &RecipeBook,
    tree: &DependencyTree,
    inventories: impl IntoIterator<Item = &'a ItemBag>,
) -> BTreeSet<String> {
    let indicators: BTreeSet<&String> = tree.raws.iter().chain(&tree.processed).collect();
    let mut latched = BTreeSet::new();
    for inv in inventories {
        for (item, n) in inv.iter() {
            if n == 0 || !indicators.contains(&item.to_string()) || latched.contains(item) {
                continue;
            }
            for sub in book.subtree(item) {
                if indicators.contains(&sub) {
                    latched.insert(sub);
                }
            }
        }
    }
    latched
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    /// Ticks spent inside actions.
    pub active_ticks: u64,
    pub active_minutes: f64,
    pub contribution: f64,
    pub actions: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub scenario: String,
    pub task: String,
    pub completion: f64,
    pub efficiency: f64,
    pub balance: Option<f64>,
    pub vhr: Option<f64>,
    pub acr: Option<f64>,
    pub token_cost: f64,
    pub dependency_complexity: f64,
    pub elapsed_minutes: f64,
    pub ticks: u64,
    pub rounds: u32,
    pub actions: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub per_agent: BTreeMap<String, AgentMetrics>,
}
