//! Action catalogue, block materials and default capability profiles.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    #[serde(rename = "placeBlock")]
    PlaceBlock,
    #[serde(rename = "MineBlock")]
    MineBlock,
    #[serde(rename = "navigateTo")]
    NavigateTo,
    #[serde(rename = "scanNearbyEntities")]
    ScanNearbyEntities,
    #[serde(rename = "fetchContainerContents")]
    FetchContainerContents,
    #[serde(rename = "withdrawItem")]
    WithdrawItem,
    #[serde(rename = "storeItem")]
    StoreItem,
    #[serde(rename = "equipItem")]
    EquipItem,
    #[serde(rename = "craftBlock")]
    CraftBlock,
    #[serde(rename = "SmeltingCooking")]
    SmeltingCooking,
    #[serde(rename = "attackTarget")]
    AttackTarget,
    #[serde(rename = "UseItemOnEntity")]
    UseItemOnEntity,
    #[serde(rename = "handoverBlock")]
    HandoverBlock,
    #[serde(rename = "ToggleAction")]
    ToggleAction,
    #[serde(rename = "erectDirtLadder")]
    ErectDirtLadder,
    #[serde(rename = "dismantleDirtLadder")]
    DismantleDirtLadder,
}

impl ActionKind {
    pub const ALL: [ActionKind; 16] = [
        ActionKind::PlaceBlock,
        ActionKind::MineBlock,
        ActionKind::NavigateTo,
        ActionKind::ScanNearbyEntities,
        ActionKind::FetchContainerContents,
        ActionKind::WithdrawItem,
        ActionKind::StoreItem,
        ActionKind::EquipItem,
        ActionKind::CraftBlock,
        ActionKind::SmeltingCooking,
        ActionKind::AttackTarget,
        ActionKind::UseItemOnEntity,
        ActionKind::HandoverBlock,
        ActionKind::ToggleAction,
        ActionKind::ErectDirtLadder,
        ActionKind::DismantleDirtLadder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActionKind::PlaceBlock => "placeBlock",
            ActionKind::MineBlock => "MineBlock",
            ActionKind::NavigateTo => "navigateTo",
            ActionKind::ScanNearbyEntities => "scanNearbyEntities",
            ActionKind::FetchContainerContents => "fetchContainerContents",
            ActionKind::WithdrawItem => "withdrawItem",
            ActionKind::StoreItem => "storeItem",
            ActionKind::EquipItem => "equipItem",
            ActionKind::CraftBlock => "craftBlock",
            ActionKind::SmeltingCooking => "SmeltingCooking",
            ActionKind::AttackTarget => "attackTarget",
            ActionKind::UseItemOnEntity => "UseItemOnEntity",
            ActionKind::HandoverBlock => "handoverBlock",
            ActionKind::ToggleAction => "ToggleAction",
            ActionKind::ErectDirtLadder => "erectDirtLadder",
            ActionKind::DismantleDirtLadder => "dismantleDirtLadder",
        }
    }

    /// Argument signature shown to planners.
    pub fn signature(self) -> &'static str {
        match self {
            ActionKind::PlaceBlock => "placeBlock(item, x, y, z, facing?, axis?)",
            ActionKind::MineBlock => "MineBlock(x, y, z)",
            ActionKind::NavigateTo => "navigateTo(x, y, z)",
            ActionKind::ScanNearbyEntities => "scanNearbyEntities(name?, radius?)",
            ActionKind::FetchContainerContents => "fetchContainerContents(x, y, z)",
            ActionKind::WithdrawItem => "withdrawItem(x, y, z, item, count)",
            ActionKind::StoreItem => "storeItem(x, y, z, item, count)",
            ActionKind::EquipItem => "equipItem(item)",
            ActionKind::CraftBlock => "craftBlock(item, times?)",
            ActionKind::SmeltingCooking => "SmeltingCooking(item, times?)",
            ActionKind::AttackTarget => "attackTarget(name)",
            ActionKind::UseItemOnEntity => "UseItemOnEntity(item, entity)",
            ActionKind::HandoverBlock => "handoverBlock(player, item, count)",
            ActionKind::ToggleAction => "ToggleAction(x, y, z)",
            ActionKind::ErectDirtLadder => "erectDirtLadder(x, y, z)",
            ActionKind::DismantleDirtLadder => "dismantleDirtLadder(x, y, z)",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().trim_start_matches("Agent.");
        ActionKind::ALL
            .iter()
            .copied()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

/// Which scenario a default capability profile is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Construction,
    Cooking,
    Escape,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Construction => "construction",
            ScenarioKind::Cooking => "cooking",
            ScenarioKind::Escape => "escape",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "construction" => Ok(ScenarioKind::Construction),
            "cooking" => Ok(ScenarioKind::Cooking),
            "escape" => Ok(ScenarioKind::Escape),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

/// API subsets handed to agents per scenario.
pub fn default_capabilities(kind: ScenarioKind) -> BTreeSet<ActionKind> {
    use ActionKind::*;
    let list: &[ActionKind] = match kind {
        ScenarioKind::Construction => &[
            PlaceBlock,
            FetchContainerContents,
            MineBlock,
            ScanNearbyEntities,
            EquipItem,
            NavigateTo,
            WithdrawItem,
            DismantleDirtLadder,
            ErectDirtLadder,
            HandoverBlock,
        ],
        ScenarioKind::Cooking => &[
            FetchContainerContents,
            MineBlock,
            ScanNearbyEntities,
            EquipItem,
            SmeltingCooking,
            NavigateTo,
            WithdrawItem,
            StoreItem,
            CraftBlock,
            AttackTarget,
            UseItemOnEntity,
            HandoverBlock,
        ],
        ScenarioKind::Escape => &[
            PlaceBlock,
            FetchContainerContents,
            MineBlock,
            ScanNearbyEntities,
            EquipItem,
            NavigateTo,
            WithdrawItem,
            ToggleAction,
            HandoverBlock,
        ],
    };
    list.iter().copied().collect()
}

/// Placeable block materials known to the simulator.
pub const MATERIALS: &[&str] = &[
    "air",
    "birch_planks",
    "bricks",
    "brown_mushroom",
    "carrots",
    "chest",
    "cobblestone",
    "cobblestone_wall",
    "crafting_table",
    "dandelion",
    "diamond_block",
    "dirt",
    "emerald_block",
    "furnace",
    "glass",
    "gold_block",
    "grass_block",
    "hay_block",
    "iron_bars",
    "iron_block",
    "ladder",
    "lantern",
    "lapis_block",
    "oak_door",
    "oak_fence",
    "oak_leaves",
    "oak_log",
    "oak_planks",
    "oak_slab",
    "oak_stairs",
    "oak_trapdoor",
    "oxeye_daisy",
    "poppy",
    "potatoes",
    "quartz_block",
    "red_mushroom",
    "red_wool",
    "sandstone",
    "smooth_stone",
    "spruce_log",
    "spruce_planks",
    "spruce_trapdoor",
    "stone",
    "stone_bricks",
    "sugar_cane",
    "torch",
    "wheat",
    "white_wool",
];

pub fn is_material(name: &str) -> bool {
    MATERIALS.binary_search(&name).is_ok()
}

/// Item dropped when a block is mined or harvested.
pub fn harvest_drop(material: &str) -> &str {
    match material {
        "carrots" => "carrot",
        "potatoes" => "potato",
        other => other,
    }
}

/// Blocks that act as processing stations.
pub const CRAFTING_TABLE: &str = "crafting_table";
pub const FURNACE: &str = "furnace";
