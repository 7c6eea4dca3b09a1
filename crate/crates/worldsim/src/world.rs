//! World state and action semantics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::blueprint::BlockTuple;
use crate::catalogue::{harvest_drop, is_material, ActionKind, CRAFTING_TABLE, FURNACE};
use crate::escape::{Condition, EscapeState};
use crate::geom::{Axis, Facing, Pos};
use crate::items::ItemBag;
use crate::recipe::{RecipeBook, Station};

pub const TICKS_PER_SECOND: u64 = 20;
/// 30 seconds at 20 ticks/s.
pub const DEFAULT_SIM_WINDOW: u64 = 30 * TICKS_PER_SECOND;
pub const SCAN_RADIUS: i64 = 16;
pub const REACH: u32 = 4;
pub const INTERACT_RANGE: u32 = 3;
pub const HANDOVER_RANGE: u32 = 2;
pub const DEFAULT_MAX_PATH: u64 = 512;

mod pos_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::geom::Pos;

    pub fn serialize<V: Serialize, S: Serializer>(map: &BTreeMap<Pos, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, V: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Pos, V>, D::Error> {
        let pairs: Vec<(Pos, V)> = Vec::deserialize(d)?;
        Ok(pairs.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub material: String,
    #[serde(default)]
    pub facing: Facing,
    #[serde(default)]
    pub axis: Axis,
    /// Set for blocks placed by agents; scenery has none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placed_by: Option<String>,
}

impl Block {
    pub fn scenery(material: &str) -> Self {
        Self {
            material: material.to_string(),
            facing: Facing::None,
            axis: Axis::None,
            placed_by: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivatorKind {
    PressurePlate,
    Lever,
    Button,
    Door,
    Trapdoor,
}

impl ActivatorKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivatorKind::PressurePlate => "pressure_plate",
            ActivatorKind::Lever => "lever",
            ActivatorKind::Button => "button",
            ActivatorKind::Door => "door",
            ActivatorKind::Trapdoor => "trapdoor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activator {
    pub kind: ActivatorKind,
    pub powered: bool,
    pub last_change_tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pressed_by: Option<String>,
}

impl Activator {
    pub fn new(kind: ActivatorKind) -> Self {
        Self {
            kind,
            powered: false,
            last_change_tick: None,
            pressed_by: None,
        }
    }

    /// Half-open tick interval during which this activator counts as held.
    pub fn held_interval(&self, window: u64) -> Option<(u64, u64)> {
        match (self.powered, self.last_change_tick) {
            (true, Some(t)) => Some((t, t + window)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentBody {
    pub pos: Pos,
    pub inventory: ItemBag,
    pub capabilities: BTreeSet<ActionKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equipped: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_plate: Option<Pos>,
}

/// What an agent knows about itself after an action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub pos: Pos,
    pub inventory: ItemBag,
}

impl From<&AgentBody> for AgentSnapshot {
    fn from(b: &AgentBody) -> Self {
        Self {
            pos: b.pos,
            inventory: b.inventory.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    pub pos: Pos,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop: Option<crate::recipe::ItemCount>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arena {
    pub min: Pos,
    pub max: Pos,
}

impl Arena {
    pub fn contains(&self, p: Pos) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }
}

/// Action argument: integers or bare/quoted words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Arg {
    Int(i64),
    Text(String),
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Int(v) => write!(f, "{v}"),
            Arg::Text(s) => write!(f, "{s}"),
        }
    }
}

impl From<i32> for Arg {
    fn from(v: i32) -> Self {
        Arg::Int(v as i64)
    }
}

impl From<u32> for Arg {
    fn from(v: u32) -> Self {
        Arg::Int(v as i64)
    }
}

impl From<&str> for Arg {
    fn from(v: &str) -> Self {
        Arg::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub agent: String,
    pub kind: ActionKind,
    pub args: Vec<Arg>,
    /// Agent-local submission tick.
    pub tick: u64,
}

impl ActionRequest {
    pub fn new(agent: &str, kind: ActionKind, args: Vec<Arg>, tick: u64) -> Self {
        Self {
            agent: agent.to_string(),
            kind,
            args,
            tick,
        }
    }

    /// `name(a, b, c)` call syntax.
    pub fn call_text(&self) -> String {
        let args: Vec<String> = self.args.iter().map(Arg::to_string).collect();
        format!("{}({})", self.kind.name(), args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionResult {
    pub accepted: bool,
    pub observation: String,
    /// Tick at which the action completed; never before submission.
    pub tick: u64,
    /// Global application order.
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsKind {
    Agent,
    Block,
    Container,
    Activator,
    Entity,
    Sign,
}

/// One fact in an agent's local view.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub kind: ObsKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Pos>,
    pub subject: String,
    pub detail: String,
}

impl Observation {
    /// Identity used when merging views from several agents.
    pub fn key(&self) -> (ObsKind, Option<Pos>, &str) {
        (self.kind, self.pos, self.subject.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    #[serde(with = "pos_map")]
    pub blocks: BTreeMap<Pos, Block>,
    #[serde(with = "pos_map")]
    pub containers: BTreeMap<Pos, ItemBag>,
    #[serde(with = "pos_map")]
    pub activators: BTreeMap<Pos, Activator>,
    pub agents: BTreeMap<String, AgentBody>,
    pub entities: BTreeMap<u32, Entity>,
    #[serde(with = "pos_map")]
    pub signs: BTreeMap<Pos, String>,
    pub recipes: RecipeBook,
    pub ground_y: i32,
    pub arena: Arena,
    pub clock: u64,
    pub seed: u64,
    pub sim_window: u64,
    pub max_path: u64,
    pub next_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escape: Option<EscapeState>,
}

/// Error for `tick` preconditions.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("tick count must be at least 1")]
pub struct ZeroTick;

type Outcome = Result<(String, u64), String>;

impl WorldState {
    pub fn new(arena: Arena, ground_y: i32, seed: u64) -> Self {
        Self {
            blocks: BTreeMap::new(),
            containers: BTreeMap::new(),
            activators: BTreeMap::new(),
            agents: BTreeMap::new(),
            entities: BTreeMap::new(),
            signs: BTreeMap::new(),
            recipes: RecipeBook::default(),
            ground_y,
            arena,
            clock: 0,
            seed,
            sim_window: DEFAULT_SIM_WINDOW,
            max_path: DEFAULT_MAX_PATH,
            next_seq: 0,
            escape: None,
        }
    }

    pub fn add_agent(&mut self, id: &str, pos: Pos, capabilities: BTreeSet<ActionKind>) {
        self.agents.insert(
            id.to_string(),
            AgentBody {
                pos,
                inventory: ItemBag::new(),
                capabilities,
                equipped: None,
                held_plate: None,
            },
        );
    }

    pub fn add_entity(&mut self, entity: Entity) -> u32 {
        let id = self.entities.keys().next_back().map_or(1, |k| k + 1);
        self.entities.insert(id, entity);
        id
    }

    pub fn is_occupied(&self, p: Pos) -> bool {
        self.blocks.contains_key(&p) || self.containers.contains_key(&p) || self.activators.contains_key(&p)
    }

    /// Blocks placed by agents, as comparable tuples.
    pub fn placed_blocks(&self) -> BTreeSet<BlockTuple> {
        self.blocks
            .iter()
            .filter(|(_, b)| b.placed_by.is_some())
            .map(|(&p, b)| BlockTuple {
                position: p,
                material: b.material.clone(),
                facing: b.facing,
                axis: b.axis,
            })
            .collect()
    }

    /// Item counts over all inventories and containers.
    pub fn item_totals(&self) -> ItemBag {
        let mut bag = ItemBag::new();
        for a in self.agents.values() {
            bag.merge(&a.inventory);
        }
        for c in self.containers.values() {
            bag.merge(c);
        }
        bag
    }

    pub fn has_item_anywhere(&self, item: &str) -> bool {
        self.item_totals().count(item) > 0
    }

    /// Advances the clock by `n` ticks and re-evaluates room conditions.
    pub fn tick(&mut self, n: u64) -> Result<(), ZeroTick> {
        if n == 0 {
            return Err(ZeroTick);
        }
        self.clock += n;
        self.evaluate_conditions(None);
        Ok(())
    }

    /// Applies one request. Rejections leave the world unchanged apart from the sequence counter.
    pub fn apply_action(&mut self, req: &ActionRequest) -> ActionResult {
        let seq = self.next_seq;
        self.next_seq += 1;
        let Some(body) = self.agents.get(&req.agent) else {
            return ActionResult {
                accepted: false,
                observation: format!("unknown agent `{}`", req.agent),
                tick: req.tick + 1,
                seq,
                agent: None,
            };
        };
        if !body.capabilities.contains(&req.kind) {
            return self.rejected(req, seq, format!("{} is not in your capability set", req.kind));
        }
        let mut event = None;
        let outcome = match req.kind {
            ActionKind::NavigateTo => self.navigate(req),
            ActionKind::PlaceBlock => self.place(req),
            ActionKind::MineBlock => self.mine(req),
            ActionKind::ScanNearbyEntities => self.scan(req),
            ActionKind::FetchContainerContents => self.fetch(req),
            ActionKind::WithdrawItem => self.transfer(req, true),
            ActionKind::StoreItem => self.transfer(req, false),
            ActionKind::EquipItem => self.equip(req),
            ActionKind::CraftBlock => self.process(req, false),
            ActionKind::SmeltingCooking => self.process(req, true),
            ActionKind::AttackTarget => self.attack(req),
            ActionKind::UseItemOnEntity => self.use_on_entity(req),
            ActionKind::HandoverBlock => {
                let r = self.handover(req);
                if r.is_ok() {
                    event = Some(req);
                }
                r
            }
            ActionKind::ToggleAction => self.toggle(req),
            ActionKind::ErectDirtLadder | ActionKind::DismantleDirtLadder => Ok((format!("{} done", req.kind), 0)),
        };
        match outcome {
            Ok((observation, extra)) => {
                let done = req.tick + 1 + extra;
                self.clock = self.clock.max(done);
                if req.kind == ActionKind::ToggleAction {
                    self.stamp_toggle(req, done);
                }
                self.evaluate_conditions(event);
                let snap = self.agents.get(&req.agent).map(AgentSnapshot::from);
                let inv = snap.as_ref().map(|s| s.inventory.to_string()).unwrap_or_default();
                ActionResult {
                    accepted: true,
                    observation: format!("{observation}. Inventory: {inv}"),
                    tick: done,
                    seq,
                    agent: snap,
                }
            }
            Err(why) => self.rejected(req, seq, why),
        }
    }

    fn rejected(&self, req: &ActionRequest, seq: u64, why: String) -> ActionResult {
        ActionResult {
            accepted: false,
            observation: format!("{} rejected: {why}", req.kind),
            tick: req.tick + 1,
            seq,
            agent: self.agents.get(&req.agent).map(AgentSnapshot::from),
        }
    }

    fn body(&self, id: &str) -> &AgentBody {
        &self.agents[id]
    }

    fn body_mut(&mut self, id: &str) -> &mut AgentBody {
        self.agents.get_mut(id).expect("agent checked by apply_action")
    }

    /// Index of the escape room containing `p`, or `rooms.len()` for the exit zone.
    fn room_index(&self, p: Pos) -> Option<usize> {
        let esc = self.escape.as_ref()?;
        let first = esc.rooms.first()?.center;
        let rel = p.z - (first.z - 5);
        if rel < 0 {
            return None;
        }
        Some(((rel / 10) as usize).min(esc.rooms.len()))
    }

    fn navigate(&mut self, req: &ActionRequest) -> Outcome {
        let target = pos_arg(&req.args, 0)?;
        if !self.arena.contains(target) {
            return Err(format!("{target} is outside the arena"));
        }
        let from = self.body(&req.agent).pos;
        let dist = from.manhattan(target);
        if dist > self.max_path {
            return Err(format!("no path of length <= {} to {target}", self.max_path));
        }
        if let (Some(esc), Some(room)) = (self.escape.as_ref(), self.room_index(target)) {
            if let Some(blocked) = esc.rooms[..room].iter().position(|r| !r.passed()) {
                return Err(format!("the way is blocked: room {blocked} is not solved yet"));
            }
        }
        self.body_mut(&req.agent).pos = target;
        Ok((format!("arrived at {target}"), dist))
    }

    fn place(&mut self, req: &ActionRequest) -> Outcome {
        let item = text_arg(&req.args, 0)?;
        let p = pos_arg(&req.args, 1)?;
        let facing = match req.args.get(4) {
            Some(a) => a.to_string().parse::<Facing>()?,
            None => Facing::None,
        };
        let axis = match req.args.get(5) {
            Some(a) => a.to_string().parse::<Axis>()?,
            None => Axis::None,
        };
        if !is_material(&item) {
            return Err(format!("`{item}` is not a placeable block"));
        }
        let body = self.body(&req.agent);
        if body.inventory.count(&item) == 0 {
            return Err(format!("no {item} in inventory"));
        }
        if body.pos.reach(p) > REACH {
            return Err(format!("{p} is out of reach"));
        }
        if !self.arena.contains(p) || p.y < self.ground_y {
            return Err(format!("{p} is outside the buildable area"));
        }
        if self.is_occupied(p) {
            return Err(format!("{p} is occupied"));
        }
        let supported = p.y == self.ground_y || p.face_neighbors().iter().any(|&n| self.is_occupied(n));
        if !supported {
            return Err(format!("{p} has no adjacent block to place against"));
        }
        let agent = req.agent.clone();
        self.body_mut(&agent).inventory.take(&item, 1);
        self.blocks.insert(
            p,
            Block {
                material: item.clone(),
                facing,
                axis,
                placed_by: Some(agent),
            },
        );
        Ok((format!("placed {item} at {p}"), 0))
    }

    fn mine(&mut self, req: &ActionRequest) -> Outcome {
        let p = pos_arg(&req.args, 0)?;
        if self.body(&req.agent).pos.reach(p) > REACH {
            return Err(format!("{p} is out of reach"));
        }
        let Some(block) = self.blocks.remove(&p) else {
            return Err(format!("no block at {p}"));
        };
        let drop = harvest_drop(&block.material).to_string();
        self.body_mut(&req.agent).inventory.add(&drop, 1);
        Ok((format!("mined {} at {p}, got {drop}", block.material), 0))
    }

    fn scan(&self, req: &ActionRequest) -> Outcome {
        let name = req.args.first().map(Arg::to_string);
        let radius = req
            .args
            .get(1)
            .and_then(|a| match a {
                Arg::Int(v) => Some(*v),
                _ => None,
            })
            .unwrap_or(SCAN_RADIUS)
            .clamp(0, SCAN_RADIUS);
        let here = self.body(&req.agent).pos;
        let found: Vec<String> = self
            .entities
            .values()
            .filter(|e| here.dist_sq(e.pos) <= radius * radius)
            .filter(|e| name.as_deref().is_none_or(|n| n == e.name || n == "all"))
            .map(|e| format!("{} at {}", e.name, e.pos))
            .collect();
        if found.is_empty() {
            Ok(("no matching entities nearby".to_string(), 0))
        } else {
            Ok((format!("found {}", found.join("; ")), 0))
        }
    }

    fn fetch(&self, req: &ActionRequest) -> Outcome {
        let p = pos_arg(&req.args, 0)?;
        if self.body(&req.agent).pos.dist_sq(p) > SCAN_RADIUS * SCAN_RADIUS {
            return Err(format!("{p} is too far away"));
        }
        let bag = self.containers.get(&p).ok_or_else(|| format!("no container at {p}"))?;
        Ok((format!("container at {p} holds {bag}"), 0))
    }

    fn transfer(&mut self, req: &ActionRequest, withdraw: bool) -> Outcome {
        let p = pos_arg(&req.args, 0)?;
        let item = text_arg(&req.args, 3)?;
        let count = count_arg(&req.args, 4)?;
        if self.body(&req.agent).pos.reach(p) > INTERACT_RANGE {
            return Err(format!("container at {p} is out of range"));
        }
        if !self.containers.contains_key(&p) {
            return Err(format!("no container at {p}"));
        }
        let agent = req.agent.clone();
        if withdraw {
            if !self.containers.get_mut(&p).unwrap().take(&item, count) {
                return Err(format!("container at {p} does not hold {count} {item}"));
            }
            self.body_mut(&agent).inventory.add(&item, count);
            Ok((format!("withdrew {count} {item} from {p}"), 0))
        } else {
            if !self.body_mut(&agent).inventory.take(&item, count) {
                return Err(format!("you do not hold {count} {item}"));
            }
            self.containers.get_mut(&p).unwrap().add(&item, count);
            Ok((format!("stored {count} {item} in {p}"), 0))
        }
    }

    fn equip(&mut self, req: &ActionRequest) -> Outcome {
        let item = text_arg(&req.args, 0)?;
        let body = self.body_mut(&req.agent);
        if body.inventory.count(&item) == 0 {
            return Err(format!("no {item} in inventory"));
        }
        body.equipped = Some(item.clone());
        Ok((format!("equipped {item}"), 0))
    }

    fn station_near(&self, at: Pos, material: &str) -> bool {
        self.blocks
            .iter()
            .any(|(&p, b)| b.material == material && p.reach(at) <= INTERACT_RANGE)
    }

    fn process(&mut self, req: &ActionRequest, smelt: bool) -> Outcome {
        let item = text_arg(&req.args, 0)?;
        let times = match req.args.get(1) {
            Some(_) => count_arg(&req.args, 1)?,
            None => 1,
        };
        let recipe = self
            .recipes
            .recipe_for(&item)
            .cloned()
            .ok_or_else(|| format!("no recipe for {item}"))?;
        let here = self.body(&req.agent).pos;
        match (smelt, recipe.station) {
            (true, Station::Smelting) => {
                if !self.station_near(here, FURNACE) {
                    return Err("no furnace within range".into());
                }
            }
            (false, Station::Crafting) => {
                if !self.station_near(here, CRAFTING_TABLE) {
                    return Err("no crafting table within range".into());
                }
            }
            (false, Station::None) => {}
            (true, _) => return Err(format!("{item} cannot be smelted")),
            (false, Station::Smelting) => return Err(format!("{item} must be smelted")),
        }
        let mut need = ItemBag::new();
        for ing in &recipe.ingredients {
            need.add(&ing.name, ing.count * times);
        }
        let body = self.body_mut(&req.agent);
        if !body.inventory.contains_all(&need) {
            return Err(format!("missing ingredients for {item}: need {need}"));
        }
        for (k, n) in need.iter() {
            body.inventory.take(k, n);
        }
        let made = recipe.result.count * times;
        body.inventory.add(&item, made);
        let verb = if smelt { "smelted" } else { "crafted" };
        Ok((format!("{verb} {made} {item}"), 0))
    }

    fn nearest_entity(&self, at: Pos, name: &str) -> Option<u32> {
        self.entities
            .iter()
            .filter(|(_, e)| e.name == name && e.pos.reach(at) <= INTERACT_RANGE)
            .min_by_key(|(id, e)| (e.pos.dist_sq(at), **id))
            .map(|(id, _)| *id)
    }

    fn attack(&mut self, req: &ActionRequest) -> Outcome {
        let name = text_arg(&req.args, 0)?;
        let here = self.body(&req.agent).pos;
        let id = self
            .nearest_entity(here, &name)
            .ok_or_else(|| format!("no {name} within range"))?;
        let entity = self.entities.remove(&id).expect("id from lookup");
        match entity.drop {
            Some(drop) => {
                self.body_mut(&req.agent).inventory.add(&drop.name, drop.count);
                Ok((format!("defeated {name}, got {} {}", drop.count, drop.name), 0))
            }
            None => Ok((format!("defeated {name}"), 0)),
        }
    }

    fn use_on_entity(&mut self, req: &ActionRequest) -> Outcome {
        let item = text_arg(&req.args, 0)?;
        let name = text_arg(&req.args, 1)?;
        let here = self.body(&req.agent).pos;
        let rule = self
            .recipes
            .interactions
            .iter()
            .find(|i| i.tool == item && i.entity == name)
            .cloned()
            .ok_or_else(|| format!("using {item} on {name} does nothing"))?;
        if self.nearest_entity(here, &name).is_none() {
            return Err(format!("no {name} within range"));
        }
        let body = self.body_mut(&req.agent);
        if !body.inventory.take(&item, 1) {
            return Err(format!("no {item} in inventory"));
        }
        body.inventory.add(&rule.result.name, rule.result.count);
        Ok((format!("used {item} on {name}, got {}", rule.result.name), 0))
    }

    fn handover(&mut self, req: &ActionRequest) -> Outcome {
        let other = text_arg(&req.args, 0)?;
        let item = text_arg(&req.args, 1)?;
        let count = match req.args.get(2) {
            Some(_) => count_arg(&req.args, 2)?,
            None => 1,
        };
        if other == req.agent {
            return Err("cannot hand items to yourself".into());
        }
        let Some(target) = self.agents.get(&other) else {
            return Err(format!("no player named {other}"));
        };
        if target.pos.reach(self.body(&req.agent).pos) > HANDOVER_RANGE {
            return Err(format!("{other} is too far away"));
        }
        if !self.body_mut(&req.agent).inventory.take(&item, count) {
            return Err(format!("you do not hold {count} {item}"));
        }
        self.body_mut(&other).inventory.add(&item, count);
        Ok((format!("handed {count} {item} to {other}"), 0))
    }

    fn toggle(&mut self, req: &ActionRequest) -> Outcome {
        let p = pos_arg(&req.args, 0)?;
        if self.body(&req.agent).pos.reach(p) > INTERACT_RANGE {
            return Err(format!("{p} is out of range"));
        }
        let act = self
            .activators
            .get(&p)
            .ok_or_else(|| format!("nothing to operate at {p}"))?;
        Ok((format!("operated {} at {p}", act.kind.name()), 0))
    }

    /// Applies the activator change of an accepted toggle at completion tick `t`.
    fn stamp_toggle(&mut self, req: &ActionRequest, t: u64) {
        let Ok(p) = pos_arg(&req.args, 0) else { return };
        let kind = self.activators[&p].kind;
        match kind {
            ActivatorKind::PressurePlate => {
                let previous = self.body(&req.agent).held_plate;
                if let Some(prev) = previous.filter(|&q| q != p) {
                    if let Some(a) = self.activators.get_mut(&prev) {
                        a.powered = false;
                        a.last_change_tick = Some(t);
                        a.pressed_by = None;
                    }
                }
                let a = self.activators.get_mut(&p).unwrap();
                a.powered = true;
                a.last_change_tick = Some(t);
                a.pressed_by = Some(req.agent.clone());
                self.body_mut(&req.agent).held_plate = Some(p);
            }
            ActivatorKind::Button => {
                let a = self.activators.get_mut(&p).unwrap();
                a.powered = true;
                a.last_change_tick = Some(t);
            }
            ActivatorKind::Lever | ActivatorKind::Door | ActivatorKind::Trapdoor => {
                let a = self.activators.get_mut(&p).unwrap();
                a.powered = !a.powered;
                a.last_change_tick = Some(t);
            }
        }
    }

    /// Latches every room condition that currently holds.
    fn evaluate_conditions(&mut self, handover: Option<&ActionRequest>) {
        let handover_room = handover.and_then(|req| {
            let giver = self.agents.get(&req.agent)?.pos;
            let other = self.agents.get(&req.args.first()?.to_string())?.pos;
            let (a, b) = (self.room_index(giver)?, self.room_index(other)?);
            (a == b).then(|| (a, req.args.get(1).map(Arg::to_string).unwrap_or_default()))
        });
        let Some(mut esc) = self.escape.take() else { return };
        for (ri, room) in esc.rooms.iter_mut().enumerate() {
            for ci in 0..room.conditions.len() {
                if room.conditions[ci].latched_tick.is_some() {
                    continue;
                }
                let latch = match &room.conditions[ci].condition {
                    Condition::Simultaneous { activators } => {
                        let mut start = 0u64;
                        let mut end = u64::MAX;
                        let mut all = !activators.is_empty();
                        for p in activators {
                            match self.activators.get(p).and_then(|a| a.held_interval(self.sim_window)) {
                                Some((s, e)) => {
                                    start = start.max(s);
                                    end = end.min(e);
                                }
                                None => all = false,
                            }
                        }
                        (all && start < end && start <= self.clock).then_some(start)
                    }
                    Condition::LeverInOrder { lever, previous } => {
                        let after = match previous {
                            Some(i) => room.conditions[*i].latched_tick,
                            None => Some(0),
                        };
                        match (self.activators.get(lever), after) {
                            (Some(a), Some(after)) if a.powered => a.last_change_tick.filter(|&t| t >= after),
                            _ => None,
                        }
                    }
                    Condition::BlockAt { position, material } => self
                        .blocks
                        .get(position)
                        .filter(|b| &b.material == material)
                        .map(|_| self.clock),
                    Condition::Cleared { position } => (!self.blocks.contains_key(position)).then_some(self.clock),
                    Condition::Handover { item } => handover_room
                        .as_ref()
                        .filter(|(r, it)| *r == ri && it == item)
                        .map(|_| self.clock),
                };
                room.conditions[ci].latched_tick = latch;
            }
        }
        self.escape = Some(esc);
    }

    /// Everything within the scan radius of `agent`, plus the agent itself.
    pub fn local_view(&self, agent: &str) -> Vec<Observation> {
        let Some(me) = self.agents.get(agent) else {
            return Vec::new();
        };
        let near = |p: Pos| me.pos.dist_sq(p) <= SCAN_RADIUS * SCAN_RADIUS;
        let mut out = vec![Observation {
            kind: ObsKind::Agent,
            pos: None,
            subject: agent.to_string(),
            detail: format!("at {}; inventory: {}", me.pos, me.inventory),
        }];
        for (&p, b) in self.blocks.iter().filter(|(p, _)| near(**p)) {
            let mut detail = b.material.clone();
            if b.facing != Facing::None {
                detail.push_str(&format!(" facing:{}", b.facing.token()));
            }
            if b.axis != Axis::None {
                detail.push_str(&format!(" axis:{}", b.axis.token()));
            }
            if b.placed_by.is_some() {
                detail.push_str(" (placed)");
            }
            out.push(Observation {
                kind: ObsKind::Block,
                pos: Some(p),
                subject: b.material.clone(),
                detail,
            });
        }
        for (&p, bag) in self.containers.iter().filter(|(p, _)| near(**p)) {
            out.push(Observation {
                kind: ObsKind::Container,
                pos: Some(p),
                subject: "chest".into(),
                detail: bag.to_string(),
            });
        }
        for (&p, a) in self.activators.iter().filter(|(p, _)| near(**p)) {
            out.push(Observation {
                kind: ObsKind::Activator,
                pos: Some(p),
                subject: a.kind.name().into(),
                detail: if a.powered {
                    "powered".into()
                } else {
                    "unpowered".into()
                },
            });
        }
        for e in self.entities.values().filter(|e| near(e.pos)) {
            out.push(Observation {
                kind: ObsKind::Entity,
                pos: Some(e.pos),
                subject: e.name.clone(),
                detail: match &e.drop {
                    Some(d) => format!("drops {}", d.name),
                    None => String::new(),
                },
            });
        }
        for (&p, text) in self.signs.iter().filter(|(p, _)| near(**p)) {
            out.push(Observation {
                kind: ObsKind::Sign,
                pos: Some(p),
                subject: "sign".into(),
                detail: text.clone(),
            });
        }
        out
    }
}

fn int_arg(args: &[Arg], i: usize) -> Result<i64, String> {
    match args.get(i) {
        Some(Arg::Int(v)) => Ok(*v),
        Some(Arg::Text(t)) => t
            .trim()
            .parse::<i64>()
            .map_err(|_| format!("argument {} should be a number, got `{t}`", i + 1)),
        None => Err(format!("missing argument {}", i + 1)),
    }
}

fn pos_arg(args: &[Arg], i: usize) -> Result<Pos, String> {
    let c = |k| int_arg(args, i + k).and_then(|v| i32::try_from(v).map_err(|_| "coordinate out of range".to_string()));
    Ok(Pos::new(c(0)?, c(1)?, c(2)?))
}

fn text_arg(args: &[Arg], i: usize) -> Result<String, String> {
    match args.get(i) {
        Some(a) => Ok(a.to_string()),
        None => Err(format!("missing argument {}", i + 1)),
    }
}

fn count_arg(args: &[Arg], i: usize) -> Result<u32, String> {
    let v = int_arg(args, i)?;
    if v < 1 {
        return Err(format!("count must be positive, got {v}"));
    }
    u32::try_from(v).map_err(|_| "count too large".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recipe::{ItemCount, Recipe};

    fn arena() -> Arena {
        Arena {
            min: Pos::new(-32, -60, -32),
            max: Pos::new(32, -40, 32),
        }
    }

    fn world_with(agent_caps: &[ActionKind]) -> WorldState {
        let mut w = WorldState::new(arena(), -60, 1);
        w.add_agent("Alice", Pos::new(0, -60, 0), agent_caps.iter().copied().collect());
        w
    }

    fn req(kind: ActionKind, args: Vec<Arg>) -> ActionRequest {
        ActionRequest::new("Alice", kind, args, 0)
    }

    #[test]
    fn place_consumes_the_item() {
        let mut w = world_with(&[ActionKind::PlaceBlock]);
        w.agents.get_mut("Alice").unwrap().inventory.add("grass_block", 1);
        let r = w.apply_action(&req(
            ActionKind::PlaceBlock,
            vec!["grass_block".into(), 1.into(), (-60).into(), 0.into()],
        ));
        assert!(r.accepted, "{}", r.observation);
        assert_eq!(w.agents["Alice"].inventory.count("grass_block"), 0);
        assert_eq!(w.blocks[&Pos::new(1, -60, 0)].material, "grass_block");
        assert_eq!(r.tick, 1);
    }

    #[test]
    fn place_into_occupied_cell_leaves_world_unchanged() {
        let mut w = world_with(&[ActionKind::PlaceBlock]);
        w.blocks.insert(Pos::new(1, -60, 0), Block::scenery("stone"));
        w.agents.get_mut("Alice").unwrap().inventory.add("grass_block", 1);
        let before = w.clone();
        let r = w.apply_action(&req(
            ActionKind::PlaceBlock,
            vec!["grass_block".into(), 1.into(), (-60).into(), 0.into()],
        ));
        assert!(!r.accepted);
        assert!(r.observation.contains("occupied"));
        let mut after = w.clone();
        after.next_seq = before.next_seq;
        assert_eq!(after, before);
    }

    #[test]
    fn floating_placement_rejected() {
        let mut w = world_with(&[ActionKind::PlaceBlock]);
        w.agents.get_mut("Alice").unwrap().inventory.add("stone", 1);
        let r = w.apply_action(&req(
            ActionKind::PlaceBlock,
            vec!["stone".into(), 0.into(), (-58).into(), 0.into()],
        ));
        assert!(!r.accepted);
    }

    #[test]
    fn missing_capability_rejected() {
        let mut w = world_with(&[ActionKind::NavigateTo]);
        w.agents.get_mut("Alice").unwrap().inventory.add("stone", 1);
        let r = w.apply_action(&req(
            ActionKind::PlaceBlock,
            vec!["stone".into(), 0.into(), (-60).into(), 1.into()],
        ));
        assert!(!r.accepted);
        assert!(r.observation.contains("capability"));
    }

    #[test]
    fn navigation_costs_manhattan_distance() {
        let mut w = world_with(&[ActionKind::NavigateTo]);
        let r = w.apply_action(&ActionRequest::new(
            "Alice",
            ActionKind::NavigateTo,
            vec![3.into(), (-60).into(), (-4).into()],
            10,
        ));
        assert!(r.accepted);
        assert_eq!(r.tick, 10 + 1 + 7);
        assert_eq!(w.clock, 18);
        assert_eq!(w.agents["Alice"].pos, Pos::new(3, -60, -4));
    }

    #[test]
    fn craft_requires_full_ingredient_multiset() {
        let mut w = world_with(&[ActionKind::CraftBlock]);
        w.recipes.recipes.push(Recipe {
            result: ItemCount::new("oak_planks", 4),
            ingredients: vec![ItemCount::new("oak_log", 1)],
            station: Station::None,
        });
        let r = w.apply_action(&req(ActionKind::CraftBlock, vec!["oak_planks".into()]));
        assert!(!r.accepted);
        w.agents.get_mut("Alice").unwrap().inventory.add("oak_log", 2);
        let r = w.apply_action(&req(ActionKind::CraftBlock, vec!["oak_planks".into(), 2.into()]));
        assert!(r.accepted, "{}", r.observation);
        assert_eq!(w.agents["Alice"].inventory.count("oak_planks"), 8);
        assert_eq!(w.agents["Alice"].inventory.count("oak_log"), 0);
    }

    #[test]
    fn crafting_station_must_be_in_range() {
        let mut w = world_with(&[ActionKind::CraftBlock]);
        w.recipes.recipes.push(Recipe {
            result: ItemCount::new("bowl", 4),
            ingredients: vec![ItemCount::new("oak_planks", 3)],
            station: Station::Crafting,
        });
        w.agents.get_mut("Alice").unwrap().inventory.add("oak_planks", 3);
        w.blocks.insert(Pos::new(10, -60, 0), Block::scenery(CRAFTING_TABLE));
        assert!(
            !w.apply_action(&req(ActionKind::CraftBlock, vec!["bowl".into()]))
                .accepted
        );
        w.blocks.insert(Pos::new(2, -60, 0), Block::scenery(CRAFTING_TABLE));
        assert!(
            w.apply_action(&req(ActionKind::CraftBlock, vec!["bowl".into()]))
                .accepted
        );
    }

    #[test]
    fn withdraw_and_store_respect_range() {
        let mut w = world_with(&[ActionKind::WithdrawItem, ActionKind::StoreItem]);
        w.containers
            .insert(Pos::new(2, -60, 2), [("carrot", 3)].into_iter().collect());
        w.containers
            .insert(Pos::new(9, -60, 9), [("carrot", 3)].into_iter().collect());
        let far = w.apply_action(&req(
            ActionKind::WithdrawItem,
            vec![9.into(), (-60).into(), 9.into(), "carrot".into(), 1.into()],
        ));
        assert!(!far.accepted);
        let ok = w.apply_action(&req(
            ActionKind::WithdrawItem,
            vec![2.into(), (-60).into(), 2.into(), "carrot".into(), 2.into()],
        ));
        assert!(ok.accepted);
        let back = w.apply_action(&req(
            ActionKind::StoreItem,
            vec![2.into(), (-60).into(), 2.into(), "carrot".into(), 1.into()],
        ));
        assert!(back.accepted);
        assert_eq!(w.containers[&Pos::new(2, -60, 2)].count("carrot"), 2);
        assert_eq!(w.agents["Alice"].inventory.count("carrot"), 1);
    }

    #[test]
    fn handover_needs_proximity() {
        let mut w = world_with(&[ActionKind::HandoverBlock]);
        w.add_agent("Bob", Pos::new(5, -60, 0), BTreeSet::new());
        w.agents.get_mut("Alice").unwrap().inventory.add("bowl", 1);
        let r = w.apply_action(&req(
            ActionKind::HandoverBlock,
            vec!["Bob".into(), "bowl".into(), 1.into()],
        ));
        assert!(!r.accepted);
        w.agents.get_mut("Bob").unwrap().pos = Pos::new(1, -60, 1);
        let r = w.apply_action(&req(
            ActionKind::HandoverBlock,
            vec!["Bob".into(), "bowl".into(), 1.into()],
        ));
        assert!(r.accepted);
        assert_eq!(w.agents["Bob"].inventory.count("bowl"), 1);
    }

    #[test]
    fn attack_yields_drop_and_removes_entity() {
        let mut w = world_with(&[ActionKind::AttackTarget]);
        w.add_entity(Entity {
            name: "rabbit".into(),
            pos: Pos::new(1, -60, 1),
            drop: Some(ItemCount::new("rabbit", 1)),
        });
        let r = w.apply_action(&req(ActionKind::AttackTarget, vec!["rabbit".into()]));
        assert!(r.accepted);
        assert!(w.entities.is_empty());
        assert_eq!(w.agents["Alice"].inventory.count("rabbit"), 1);
        assert!(
            !w.apply_action(&req(ActionKind::AttackTarget, vec!["rabbit".into()]))
                .accepted
        );
    }

    #[test]
    fn lever_toggles_and_stamps_completion_tick() {
        let mut w = world_with(&[ActionKind::ToggleAction]);
        w.activators
            .insert(Pos::new(1, -60, 0), Activator::new(ActivatorKind::Lever));
        let r = w.apply_action(&ActionRequest::new(
            "Alice",
            ActionKind::ToggleAction,
            vec![1.into(), (-60).into(), 0.into()],
            40,
        ));
        assert!(r.accepted);
        let a = &w.activators[&Pos::new(1, -60, 0)];
        assert!(a.powered);
        assert_eq!(a.last_change_tick, Some(41));
    }

    #[test]
    fn zero_tick_rejected() {
        let mut w = world_with(&[]);
        assert_eq!(w.tick(0), Err(ZeroTick));
        w.tick(5).unwrap();
        assert_eq!(w.clock, 5);
    }

    #[test]
    fn local_view_of_empty_arena_is_only_self() {
        let w = world_with(&[]);
        let view = w.local_view("Alice");
        assert_eq!(view.len(), 1);
        assert_eq!(view[0].kind, ObsKind::Agent);
    }

    #[test]
    fn local_view_includes_nearby_chest_only() {
        let mut w = world_with(&[]);
        w.containers.insert(Pos::new(1, -60, 0), ItemBag::new());
        w.containers.insert(Pos::new(30, -60, 0), ItemBag::new());
        let view = w.local_view("Alice");
        let chests: Vec<_> = view.iter().filter(|o| o.kind == ObsKind::Container).collect();
        assert_eq!(chests.len(), 1);
        assert_eq!(chests[0].pos, Some(Pos::new(1, -60, 0)));
    }

    #[test]
    fn world_round_trips_through_json() {
        let mut w = world_with(&[ActionKind::PlaceBlock]);
        w.containers
            .insert(Pos::new(1, -60, 0), [("stone", 2)].into_iter().collect());
        w.signs.insert(Pos::new(0, -60, 3), "hello".into());
        let text = serde_json::to_string(&w).unwrap();
        let back: WorldState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
    }
}
