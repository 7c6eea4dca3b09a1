//! Escape-room chain: atom library, pass conditions, seeded generator.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalogue::ActionKind;
use crate::geom::Pos;
use crate::world::{Activator, ActivatorKind, Arena, Block, WorldState, DEFAULT_SIM_WINDOW};

/// Center of room 0; rooms follow every 10 cells along +z.
pub const ORIGIN: Pos = Pos { x: 130, y: -60, z: 131 };
pub const ROOM_SPACING: i32 = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EscapeError {
    #[error("difficulty must be within 1..=5, got {0}")]
    Difficulty(u32),
    #[error("agent count must be at least 1")]
    NoAgents,
    #[error("no atom task fits {0} agent(s)")]
    Infeasible(usize),
    #[error("invalid escape spec: {0}")]
    Invalid(String),
}

/// Parameterized puzzle template placed in one room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Atom {
    SimultaneousPlates { plates: Vec<Pos> },
    LeverSequence { levers: Vec<Pos> },
    FetchAndPlace { item: String, chest: Pos, target: Pos },
    HandoverRelay { item: String, chest: Pos },
    ButtonHold { plate: Pos, button: Pos },
    BarrierMining { blocks: Vec<Pos>, material: String },
}

impl Atom {
    pub fn id(&self) -> &'static str {
        match self {
            Atom::SimultaneousPlates { .. } => "simultaneous_plates",
            Atom::LeverSequence { .. } => "lever_sequence",
            Atom::FetchAndPlace { .. } => "fetch_and_place",
            Atom::HandoverRelay { .. } => "handover_relay",
            Atom::ButtonHold { .. } => "button_hold",
            Atom::BarrierMining { .. } => "barrier_mining",
        }
    }

    /// Agents that must act together for the room to pass.
    pub fn actors(&self) -> usize {
        match self {
            Atom::SimultaneousPlates { plates } => plates.len(),
            Atom::HandoverRelay { .. } => 2,
            _ => 1,
        }
    }

    pub fn conditions(&self) -> Vec<Condition> {
        match self {
            Atom::SimultaneousPlates { plates } => vec![Condition::Simultaneous {
                activators: plates.clone(),
            }],
            Atom::LeverSequence { levers } => levers
                .iter()
                .enumerate()
                .map(|(i, &lever)| Condition::LeverInOrder {
                    lever,
                    previous: i.checked_sub(1),
                })
                .collect(),
            Atom::FetchAndPlace { item, target, .. } => vec![Condition::BlockAt {
                position: *target,
                material: item.clone(),
            }],
            Atom::HandoverRelay { item, .. } => vec![Condition::Handover { item: item.clone() }],
            Atom::ButtonHold { plate, button } => vec![Condition::Simultaneous {
                activators: vec![*plate, *button],
            }],
            Atom::BarrierMining { blocks, .. } => {
                blocks.iter().map(|&position| Condition::Cleared { position }).collect()
            }
        }
    }

    /// Activators that must be held at one common tick.
    pub fn simultaneous_set(&self) -> Vec<Pos> {
        match self {
            Atom::SimultaneousPlates { plates } => plates.clone(),
            Atom::ButtonHold { plate, button } => vec![*plate, *button],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Condition {
    Simultaneous {
        activators: Vec<Pos>,
    },
    /// Lever powered no earlier than the previous lever condition latched.
    LeverInOrder {
        lever: Pos,
        previous: Option<usize>,
    },
    BlockAt {
        position: Pos,
        material: String,
    },
    Cleared {
        position: Pos,
    },
    /// Latched by a handover of `item` between two agents inside the room.
    Handover {
        item: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionState {
    pub condition: Condition,
    pub latched_tick: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomState {
    pub center: Pos,
    pub conditions: Vec<ConditionState>,
}

impl RoomState {
    pub fn met(&self) -> usize {
        self.conditions.iter().filter(|c| c.latched_tick.is_some()).count()
    }

    pub fn passed(&self) -> bool {
        self.met() == self.conditions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscapeState {
    pub rooms: Vec<RoomState>,
    pub exit: Pos,
}

impl EscapeState {
    /// (met, required) per room.
    pub fn progress(&self) -> Vec<(usize, usize)> {
        self.rooms.iter().map(|r| (r.met(), r.conditions.len())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub center: Pos,
    pub atom: Atom,
    pub hint: String,
}

impl RoomSpec {
    pub fn condition_count(&self) -> usize {
        self.atom.conditions().len()
    }

    pub fn contains(&self, p: Pos) -> bool {
        (self.center.x - 5..=self.center.x + 4).contains(&p.x) && (self.center.z - 5..=self.center.z + 4).contains(&p.z)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscapeSpec {
    pub seed: u64,
    pub difficulty: u32,
    pub agents: usize,
    #[serde(default = "default_window")]
    pub window: u64,
    pub rooms: Vec<RoomSpec>,
    pub exit: Pos,
}

fn default_window() -> u64 {
    DEFAULT_SIM_WINDOW
}

const FETCH_ITEMS: &[&str] = &["gold_block", "diamond_block", "emerald_block", "lapis_block"];
const RELAY_ITEMS: &[&str] = &["iron_bars", "lantern", "torch"];
const BARRIER_MATERIALS: &[&str] = &["stone", "cobblestone", "bricks"];

fn mix(seed: u64, difficulty: u32, agents: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ ((difficulty as u64) << 48)
        ^ (agents as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Builds a deterministic room chain for `(seed, difficulty, agents)`.
pub fn generate_escape(seed: u64, difficulty: u32, agents: usize) -> Result<EscapeSpec, EscapeError> {
    if !(1..=5).contains(&difficulty) {
        return Err(EscapeError::Difficulty(difficulty));
    }
    if agents == 0 {
        return Err(EscapeError::NoAgents);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, difficulty, agents));
    // (template index, minimum actors)
    let templates: Vec<usize> = [(0, 2), (1, 1), (2, 1), (3, 2), (4, 1), (5, 1)]
        .into_iter()
        .filter(|&(_, need)| need <= agents)
        .map(|(i, _)| i)
        .collect();
    if templates.is_empty() {
        return Err(EscapeError::Infeasible(agents));
    }
    let n = difficulty as usize + 1;
    let mut rooms = Vec::with_capacity(n);
    for i in 0..n {
        let c = ORIGIN.offset(0, 0, ROOM_SPACING * i as i32);
        let pick = templates[rng.random_range(0..templates.len())];
        let atom = match pick {
            0 => {
                let k = rng.random_range(2..=agents.min(3));
                let spots = [c.offset(-4, 0, 2), c.offset(3, 0, 2), c.offset(0, 0, -3)];
                Atom::SimultaneousPlates {
                    plates: spots[..k].to_vec(),
                }
            }
            1 => {
                let k = rng.random_range(2..=3);
                Atom::LeverSequence {
                    levers: (0..k).map(|j| c.offset(-2 + 2 * j, 0, -4)).collect(),
                }
            }
            2 => {
                let item = FETCH_ITEMS[rng.random_range(0..FETCH_ITEMS.len())];
                // The supply chest sits in the previous room when there is one.
                let home = if i == 0 { c } else { c.offset(0, 0, -ROOM_SPACING) };
                Atom::FetchAndPlace {
                    item: item.to_string(),
                    chest: home.offset(3, 0, 3),
                    target: c,
                }
            }
            3 => {
                let item = RELAY_ITEMS[rng.random_range(0..RELAY_ITEMS.len())];
                Atom::HandoverRelay {
                    item: item.to_string(),
                    chest: c.offset(-3, 0, 3),
                }
            }
            4 => Atom::ButtonHold {
                plate: c.offset(2, 0, -2),
                button: c.offset(3, 0, -2),
            },
            _ => {
                let k = rng.random_range(1..=2);
                let material = BARRIER_MATERIALS[rng.random_range(0..BARRIER_MATERIALS.len())];
                Atom::BarrierMining {
                    blocks: (0..k).map(|j| c.offset(-1 + 2 * j, 0, -4)).collect(),
                    material: material.to_string(),
                }
            }
        };
        let hint = hint_for(&atom);
        rooms.push(RoomSpec { center: c, atom, hint });
    }
    let spec = EscapeSpec {
        seed,
        difficulty,
        agents,
        window: DEFAULT_SIM_WINDOW,
        exit: ORIGIN.offset(0, 0, ROOM_SPACING * n as i32),
        rooms,
    };
    spec.validate()?;
    Ok(spec)
}

fn list(ps: &[Pos]) -> String {
    ps.iter().map(Pos::to_string).collect::<Vec<_>>().join(" ")
}

fn hint_for(atom: &Atom) -> String {
    match atom {
        Atom::SimultaneousPlates { plates } => format!(
            "Step on all the pressure plates at the same time to open the way. Plates: {}",
            list(plates)
        ),
        Atom::LeverSequence { levers } => {
            format!("Pull the levers in order from left to right: {}", list(levers))
        }
        Atom::FetchAndPlace { item, chest, target } => {
            format!("Take the {item} from the chest at {chest} and place it at {target}")
        }
        Atom::HandoverRelay { item, chest } => {
            format!("One of you takes the {item} from the chest at {chest} and hands it to a partner inside this room")
        }
        Atom::ButtonHold { plate, button } => {
            format!("Stand on the plate at {plate} and press the button at {button} while standing there")
        }
        Atom::BarrierMining { blocks, material } => {
            format!("Mine the {material} barrier blocks at {}", list(blocks))
        }
    }
}

impl EscapeSpec {
    pub fn max_actors(&self) -> usize {
        self.rooms.iter().map(|r| r.atom.actors()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), EscapeError> {
        for (i, pair) in self.rooms.windows(2).enumerate() {
            let (a, b) = (pair[0].center, pair[1].center);
            if b.z - a.z != ROOM_SPACING || a.x != b.x || a.y != b.y {
                return Err(EscapeError::Invalid(format!(
                    "room {} is not 10 cells after room {i}",
                    i + 1
                )));
            }
        }
        for (i, room) in self.rooms.iter().enumerate() {
            if let Some(p) = room.atom.simultaneous_set().into_iter().find(|&p| !room.contains(p)) {
                return Err(EscapeError::Invalid(format!("activator {p} lies outside room {i}")));
            }
            if room.atom.actors() > self.agents {
                return Err(EscapeError::Invalid(format!(
                    "room {i} needs {} actors but only {} agents",
                    room.atom.actors(),
                    self.agents
                )));
            }
            if let Atom::FetchAndPlace { chest, .. } = &room.atom {
                let earlier = self.rooms[..=i].iter().any(|r| r.contains(*chest));
                if !earlier {
                    return Err(EscapeError::Invalid(format!(
                        "room {i} supply chest is not reachable before the room"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EscapeError> {
        let spec: EscapeSpec = serde_json::from_str(text).map_err(|e| EscapeError::Invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn arena(&self) -> Arena {
        let n = self.rooms.len() as i32;
        Arena {
            min: Pos::new(ORIGIN.x - 5, ORIGIN.y, ORIGIN.z - 5),
            max: Pos::new(ORIGIN.x + 4, ORIGIN.y + 5, ORIGIN.z + ROOM_SPACING * n + 4),
        }
    }

    /// Spawn cells for agents, all inside room 0.
    pub fn spawn(&self, k: usize) -> Pos {
        let c = self.rooms.first().map_or(ORIGIN, |r| r.center);
        c.offset(-2 + (k % 5) as i32, 0, -1 + (k / 5) as i32)
    }

    pub fn build_world(&self, agents: &[(String, BTreeSet<ActionKind>)]) -> WorldState {
        let mut w = WorldState::new(self.arena(), ORIGIN.y, self.seed);
        w.sim_window = self.window;
        for (k, (id, caps)) in agents.iter().enumerate() {
            w.add_agent(id, self.spawn(k), caps.clone());
        }
        let mut rooms = Vec::new();
        for room in &self.rooms {
            match &room.atom {
                Atom::SimultaneousPlates { plates } => {
                    for &p in plates {
                        w.activators.insert(p, Activator::new(ActivatorKind::PressurePlate));
                    }
                }
                Atom::LeverSequence { levers } => {
                    for &p in levers {
                        w.activators.insert(p, Activator::new(ActivatorKind::Lever));
                    }
                }
                Atom::FetchAndPlace { item, chest, .. } | Atom::HandoverRelay { item, chest } => {
                    w.containers.entry(*chest).or_default().add(item, 1);
                }
                Atom::ButtonHold { plate, button } => {
                    w.activators
                        .insert(*plate, Activator::new(ActivatorKind::PressurePlate));
                    w.activators.insert(*button, Activator::new(ActivatorKind::Button));
                }
                Atom::BarrierMining { blocks, material } => {
                    for &p in blocks {
                        w.blocks.insert(p, Block::scenery(material));
                    }
                }
            }
            w.signs.insert(room.center.offset(0, 1, 4), room.hint.clone());
            rooms.push(RoomState {
                center: room.center,
                conditions: room
                    .atom
                    .conditions()
                    .into_iter()
                    .map(|condition| ConditionState {
                        condition,
                        latched_tick: None,
                    })
                    .collect(),
            });
        }
        w.escape = Some(EscapeState { rooms, exit: self.exit });
        w
    }
}
