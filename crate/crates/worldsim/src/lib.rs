//! Deterministic block-world simulator for construction, cooking and escape-room tasks.

pub mod blueprint;
pub mod catalogue;
pub mod escape;
pub mod gate;
pub mod geom;
pub mod items;
pub mod recipe;
pub mod tasks;
pub mod world;

pub use blueprint::{BlockTuple, Blueprint, BlueprintError};
pub use catalogue::{default_capabilities, ActionKind, ScenarioKind};
pub use escape::{generate_escape, Atom, EscapeError, EscapeSpec};
pub use gate::{Enrollment, SharedWorld};
pub use geom::{Axis, Facing, Pos};
pub use items::ItemBag;
pub use recipe::{Recipe, RecipeBook, Station};
pub use world::{ActionRequest, ActionResult, Arg, Observation, WorldState};
