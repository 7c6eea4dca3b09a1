//! Bundled construction and cooking tasks.

use std::collections::BTreeSet;

use serde_json::{json, Value};

use crate::blueprint::{BlockTuple, Blueprint};
use crate::catalogue::{ActionKind, CRAFTING_TABLE, FURNACE};
use crate::geom::{Axis, Facing, Pos};
use crate::items::ItemBag;
use crate::recipe::{ItemCount, RecipeBook};
use crate::world::{Arena, Block, Entity, WorldState};

pub const GROUND_Y: i32 = -60;

pub fn flat_arena() -> Arena {
    Arena {
        min: Pos::new(-32, GROUND_Y, -32),
        max: Pos::new(32, GROUND_Y + 20, 32),
    }
}

const BLUEPRINTS: &[(&str, &str)] = &[
    ("task_0", include_str!("../data/construction/task_0.txt")),
    ("task_24", include_str!("../data/construction/task_24.txt")),
    ("task_single", include_str!("../data/construction/task_single.txt")),
    ("task_pillar", include_str!("../data/construction/task_pillar.txt")),
    ("task_gate", include_str!("../data/construction/task_gate.txt")),
    ("task_wall", include_str!("../data/construction/task_wall.txt")),
];

pub fn construction_task_ids() -> Vec<&'static str> {
    BLUEPRINTS.iter().map(|(id, _)| *id).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionTask {
    pub id: String,
    pub lines: Vec<String>,
    pub blueprint: Blueprint,
    pub chest: Pos,
    pub spawn: Pos,
}

pub fn construction_task(id: &str) -> Option<ConstructionTask> {
    let (id, text) = BLUEPRINTS.iter().find(|(k, _)| *k == id)?;
    let lines: Vec<String> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect();
    let blueprint = Blueprint::parse_lines(&lines).expect("bundled blueprint parses");
    Some(ConstructionTask {
        id: id.to_string(),
        lines,
        blueprint,
        chest: Pos::new(0, GROUND_Y, -6),
        spawn: Pos::new(0, GROUND_Y, -8),
    })
}

fn cell_json(c: &BlockTuple) -> Value {
    json!({
        "material": c.material,
        "position": c.position,
        "facing": c.facing,
        "axis": c.axis,
    })
}

impl ConstructionTask {
    /// Blueprint cells ordered bottom-up, declaration order within a layer.
    pub fn placement_order(&self) -> Vec<BlockTuple> {
        placement_order(&self.blueprint)
    }

    pub fn goal(&self) -> String {
        format!(
            "Build the structure `{}` exactly as the blueprint specifies ({} blocks). Materials are in the chest at {}.",
            self.id,
            self.blueprint.len(),
            self.chest
        )
    }

    /// Planner-facing document: raw blueprint lines under the task id, plus
    /// the cell list and material chest.
    pub fn document(&self) -> Value {
        let cells: Vec<Value> = self.placement_order().iter().map(cell_json).collect();
        let mut doc = serde_json::Map::new();
        doc.insert(self.id.clone(), json!(self.lines));
        doc.insert("cells".into(), Value::Array(cells));
        doc.insert(
            "chest".into(),
            json!({"at": self.chest, "stand": self.chest.offset(0, 0, -1)}),
        );
        Value::Object(doc)
    }

    pub fn build_world(&self, agents: &[(String, BTreeSet<ActionKind>)], seed: u64) -> WorldState {
        let mut w = WorldState::new(flat_arena(), GROUND_Y, seed);
        w.containers.insert(self.chest, self.blueprint.material_counts());
        for (k, (id, caps)) in agents.iter().enumerate() {
            w.add_agent(id, self.spawn.offset(k as i32, 0, 0), caps.clone());
        }
        w
    }
}

pub fn placement_order(bp: &Blueprint) -> Vec<BlockTuple> {
    let mut cells = bp.cells();
    cells.sort_by_key(|c| c.position.y);
    cells
}

/// Station layout shared by the cooking tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Kitchen {
    pub spot: Pos,
    pub pantry: Pos,
    pub chest: Pos,
    pub crafting_table: Pos,
    pub furnace: Pos,
}

pub const KITCHEN: Kitchen = Kitchen {
    spot: Pos {
        x: 0,
        y: GROUND_Y,
        z: 0,
    },
    pantry: Pos {
        x: 2,
        y: GROUND_Y,
        z: 1,
    },
    chest: Pos {
        x: -2,
        y: GROUND_Y,
        z: 1,
    },
    crafting_table: Pos {
        x: 2,
        y: GROUND_Y,
        z: -1,
    },
    furnace: Pos {
        x: -2,
        y: GROUND_Y,
        z: -1,
    },
};

#[derive(Debug, Clone, PartialEq)]
pub struct CookingTask {
    pub id: String,
    pub goal_item: String,
    pub book: RecipeBook,
    pub pantry: ItemBag,
    pub blocks: Vec<(Pos, String)>,
    pub entities: Vec<Entity>,
    pub steps: Vec<Value>,
}

pub fn cooking_task_ids() -> Vec<&'static str> {
    vec!["rabbit_stew", "cake"]
}

fn load_book(text: &str) -> (String, RecipeBook) {
    let v: Value = serde_json::from_str(text).expect("bundled recipe document");
    let goal = v["goal"].as_str().expect("goal").to_string();
    let book: RecipeBook = serde_json::from_value(v).expect("bundled recipe book");
    book.validate().expect("bundled recipe book is acyclic");
    (goal, book)
}

fn at(op: &str, p: Pos) -> Value {
    json!({"op": op, "at": p, "stand": KITCHEN.spot})
}

fn with(mut v: Value, extra: Value) -> Value {
    if let (Value::Object(a), Value::Object(b)) = (&mut v, extra) {
        a.extend(b);
    }
    v
}

fn step(description: &str, preds: &[usize], produces: &[&str], ops: Vec<Value>) -> Value {
    json!({
        "description": description,
        "predecessors": preds,
        "agents": 1,
        "produces": produces,
        "ops": ops,
    })
}

fn gather(from: Pos, items: &[(&str, u32)]) -> Value {
    let items: Vec<Value> = items.iter().map(|(n, c)| json!({"name": n, "count": c})).collect();
    with(at("gather", from), json!({"items": items}))
}

pub fn cooking_task(id: &str) -> Option<CookingTask> {
    let k = KITCHEN;
    match id {
        "rabbit_stew" => {
            let (goal_item, book) = load_book(include_str!("../data/cooking/rabbit_stew.json"));
            let carrots = Pos::new(6, GROUND_Y, 4);
            let mushroom = Pos::new(-6, GROUND_Y, 5);
            let rabbit = Pos::new(7, GROUND_Y, -5);
            let steps = vec![
                step(
                    "Bake a potato and store the baked_potato in the kitchen chest",
                    &[],
                    &["baked_potato"],
                    vec![
                        with(at("withdraw", k.pantry), json!({"item": "potato", "count": 1})),
                        with(at("smelt", k.furnace), json!({"item": "baked_potato", "count": 1})),
                        with(at("store", k.chest), json!({"item": "baked_potato", "count": 1})),
                    ],
                ),
                step(
                    "Hunt the rabbit, cook it and store the cooked_rabbit in the kitchen chest",
                    &[],
                    &["cooked_rabbit"],
                    vec![
                        json!({"op": "attack", "entity": "rabbit", "at": rabbit, "stand": rabbit.offset(-1, 0, 0)}),
                        with(at("smelt", k.furnace), json!({"item": "cooked_rabbit", "count": 1})),
                        with(at("store", k.chest), json!({"item": "cooked_rabbit", "count": 1})),
                    ],
                ),
                step(
                    "Turn an oak_log into planks, craft a bowl and store it in the kitchen chest",
                    &[],
                    &["bowl"],
                    vec![
                        with(at("withdraw", k.pantry), json!({"item": "oak_log", "count": 1})),
                        json!({"op": "craft", "item": "oak_planks", "count": 1}),
                        with(at("craft", k.crafting_table), json!({"item": "bowl", "count": 1})),
                        with(at("store", k.chest), json!({"item": "bowl", "count": 1})),
                    ],
                ),
                step(
                    "Harvest a carrot and store it in the kitchen chest",
                    &[],
                    &["carrot"],
                    vec![
                        json!({"op": "mine", "at": carrots, "stand": carrots.offset(-1, 0, 0)}),
                        with(at("store", k.chest), json!({"item": "carrot", "count": 1})),
                    ],
                ),
                step(
                    "Pick a brown_mushroom and store it in the kitchen chest",
                    &[],
                    &["brown_mushroom"],
                    vec![
                        json!({"op": "mine", "at": mushroom, "stand": mushroom.offset(1, 0, 0)}),
                        with(at("store", k.chest), json!({"item": "brown_mushroom", "count": 1})),
                    ],
                ),
                step(
                    "Collect the baked_potato, cooked_rabbit and bowl from the kitchen chest",
                    &[1, 2, 3],
                    &["baked_potato", "cooked_rabbit", "bowl"],
                    vec![gather(
                        k.chest,
                        &[("baked_potato", 1), ("cooked_rabbit", 1), ("bowl", 1)],
                    )],
                ),
                step(
                    "Craft the rabbit_stew",
                    &[4, 5, 6],
                    &["rabbit_stew"],
                    vec![
                        gather(
                            k.chest,
                            &[
                                ("baked_potato", 1),
                                ("cooked_rabbit", 1),
                                ("bowl", 1),
                                ("carrot", 1),
                                ("brown_mushroom", 1),
                            ],
                        ),
                        json!({"op": "craft", "item": "rabbit_stew", "count": 1}),
                    ],
                ),
            ];
            Some(CookingTask {
                id: id.to_string(),
                goal_item,
                book,
                pantry: [("potato", 1), ("oak_log", 1)].into_iter().collect(),
                blocks: vec![
                    (carrots, "carrots".into()),
                    (mushroom, "brown_mushroom".into()),
                    (Pos::new(-7, GROUND_Y, -7), "oak_leaves".into()),
                ],
                entities: vec![Entity {
                    name: "rabbit".into(),
                    pos: rabbit,
                    drop: Some(ItemCount::new("rabbit", 1)),
                }],
                steps,
            })
        }
        "cake" => {
            let (goal_item, book) = load_book(include_str!("../data/cooking/cake.json"));
            let cow = Pos::new(6, GROUND_Y, -5);
            let canes = [Pos::new(5, GROUND_Y, 5), Pos::new(6, GROUND_Y, 5)];
            let milk = |n: usize| {
                step(
                    &format!("Fill bucket {n} with milk from the cow and store the milk_bucket in the kitchen chest"),
                    &[],
                    &["milk_bucket"],
                    vec![
                        with(at("withdraw", k.pantry), json!({"item": "bucket", "count": 1})),
                        json!({"op": "use", "item": "bucket", "entity": "cow", "at": cow, "stand": cow.offset(-1, 0, 0)}),
                        with(at("store", k.chest), json!({"item": "milk_bucket", "count": 1})),
                    ],
                )
            };
            let steps = vec![
                milk(1),
                milk(2),
                milk(3),
                step(
                    "Harvest two sugar_cane, make sugar and store it in the kitchen chest",
                    &[],
                    &["sugar"],
                    vec![
                        json!({"op": "mine", "at": canes[0], "stand": canes[0].offset(0, 0, -1)}),
                        json!({"op": "mine", "at": canes[1], "stand": canes[0].offset(0, 0, -1)}),
                        json!({"op": "craft", "item": "sugar", "count": 2}),
                        with(at("store", k.chest), json!({"item": "sugar", "count": 2})),
                    ],
                ),
                step(
                    "Bake the cake at the crafting table",
                    &[1, 2, 3, 4],
                    &["cake"],
                    vec![
                        gather(k.chest, &[("milk_bucket", 3), ("sugar", 2)]),
                        gather(k.pantry, &[("egg", 1), ("wheat", 3)]),
                        with(at("craft", k.crafting_table), json!({"item": "cake", "count": 1})),
                    ],
                ),
            ];
            Some(CookingTask {
                id: id.to_string(),
                goal_item,
                book,
                pantry: [("bucket", 3), ("egg", 1), ("wheat", 3)].into_iter().collect(),
                blocks: vec![(canes[0], "sugar_cane".into()), (canes[1], "sugar_cane".into())],
                entities: vec![Entity {
                    name: "cow".into(),
                    pos: cow,
                    drop: None,
                }],
                steps,
            })
        }
        _ => None,
    }
}

impl CookingTask {
    pub fn goal(&self) -> String {
        format!(
            "Cook {} together. Ingredients come from the pantry chest at {}, the surroundings and hunting; stations are next to {}.",
            self.goal_item, KITCHEN.pantry, KITCHEN.spot
        )
    }

    pub fn document(&self) -> Value {
        json!({
            "goal": self.goal_item,
            "recipes": self.book.recipes,
            "interactions": self.book.interactions,
            "kitchen": {
                "spot": KITCHEN.spot,
                "pantry": KITCHEN.pantry,
                "chest": KITCHEN.chest,
                "crafting_table": KITCHEN.crafting_table,
                "furnace": KITCHEN.furnace,
            },
            "steps": self.steps,
        })
    }

    pub fn build_world(&self, agents: &[(String, BTreeSet<ActionKind>)], seed: u64) -> WorldState {
        let mut w = WorldState::new(flat_arena(), GROUND_Y, seed);
        w.recipes = self.book.clone();
        w.containers.insert(KITCHEN.pantry, self.pantry.clone());
        w.containers.insert(KITCHEN.chest, ItemBag::new());
        w.blocks.insert(KITCHEN.crafting_table, Block::scenery(CRAFTING_TABLE));
        w.blocks.insert(KITCHEN.furnace, Block::scenery(FURNACE));
        for (p, m) in &self.blocks {
            w.blocks.insert(*p, Block::scenery(m));
        }
        for e in &self.entities {
            w.add_entity(e.clone());
        }
        for (k, (id, caps)) in agents.iter().enumerate() {
            w.add_agent(id, KITCHEN.spot.offset(k as i32 - 1, 0, -2), caps.clone());
        }
        w
    }
}

/// Tuple helper used when comparing placed cells.
pub fn tuple(x: i32, y: i32, z: i32, material: &str, facing: Facing, axis: Axis) -> BlockTuple {
    BlockTuple {
        position: Pos::new(x, y, z),
        material: material.to_string(),
        facing,
        axis,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_bundled_construction_tasks_load() {
        for id in construction_task_ids() {
            let t = construction_task(id).unwrap();
            assert!(!t.blueprint.is_empty(), "{id}");
        }
        assert_eq!(construction_task("task_0").unwrap().blueprint.len(), 8);
    }

    #[test]
    fn task_24_has_daisy_above_center() {
        let t = construction_task("task_24").unwrap();
        assert!(t
            .blueprint
            .block_set()
            .contains(&tuple(-9, -59, 0, "oxeye_daisy", Facing::None, Axis::None)));
        assert_eq!(t.blueprint.len(), 12);
    }

    #[test]
    fn placement_order_is_bottom_up() {
        let t = construction_task("task_gate").unwrap();
        let ys: Vec<i32> = t.placement_order().iter().map(|c| c.position.y).collect();
        let mut sorted = ys.clone();
        sorted.sort();
        assert_eq!(ys, sorted);
    }

    #[test]
    fn chest_stocks_exact_materials() {
        let t = construction_task("task_24").unwrap();
        let w = t.build_world(&[], 0);
        assert_eq!(w.containers[&t.chest].count("oak_trapdoor"), 6);
        assert_eq!(w.containers[&t.chest].count("grass_block"), 3);
    }

    #[test]
    fn cooking_books_validate() {
        for id in cooking_task_ids() {
            let t = cooking_task(id).unwrap();
            assert!(t.book.tree(&t.goal_item).is_ok());
        }
    }

    #[test]
    fn stations_within_reach_of_the_kitchen_spot() {
        for p in [KITCHEN.pantry, KITCHEN.chest, KITCHEN.crafting_table, KITCHEN.furnace] {
            assert!(KITCHEN.spot.reach(p) <= crate::world::INTERACT_RANGE);
        }
    }
}
