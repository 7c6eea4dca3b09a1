//! Recipes and the item dependency tree.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::items::ItemBag;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecipeError {
    #[error("recipe for `{0}` has a zero count")]
    ZeroCount(String),
    #[error("`{0}` is its own transitive ingredient")]
    Cycle(String),
    #[error("unknown ingredient `{0}`")]
    Unknown(String),
    #[error("malformed recipe document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemCount {
    pub name: String,
    pub count: u32,
}

impl ItemCount {
    pub fn new(name: &str, count: u32) -> Self {
        Self {
            name: name.to_string(),
            count,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Station {
    Crafting,
    Smelting,
    #[default]
    None,
}

/// Recipe in the `{"result": .., "ingredients": [..]}` document shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub result: ItemCount,
    pub ingredients: Vec<ItemCount>,
    #[serde(default)]
    pub station: Station,
}

impl Recipe {
    pub fn from_json(text: &str) -> Result<Self, RecipeError> {
        let r: Recipe = serde_json::from_str(text).map_err(|e| RecipeError::Document(e.to_string()))?;
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RecipeError> {
        if self.result.count == 0 || self.ingredients.iter().any(|i| i.count == 0) {
            return Err(RecipeError::ZeroCount(self.result.name.clone()));
        }
        Ok(())
    }

    pub fn ingredient_bag(&self) -> ItemBag {
        self.ingredients.iter().map(|i| (i.name.clone(), i.count)).collect()
    }
}

/// Using a tool item on an entity transforms the tool (bucket on cow gives milk).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub result: ItemCount,
    pub tool: String,
    pub entity: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecipeBook {
    #[serde(default)]
    pub recipes: Vec<Recipe>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    /// Items obtained directly from the world (containers, harvest, hunting).
    #[serde(default)]
    pub raw: BTreeSet<String>,
}

/// Indicator sets of a goal's dependency tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyTree {
    pub goal: String,
    pub raws: BTreeSet<String>,
    pub processed: BTreeSet<String>,
}

impl RecipeBook {
    pub fn validate(&self) -> Result<(), RecipeError> {
        for r in &self.recipes {
            r.validate()?;
        }
        for i in &self.interactions {
            if i.result.count == 0 {
                return Err(RecipeError::ZeroCount(i.result.name.clone()));
            }
        }
        let items: BTreeSet<&str> = self
            .recipes
            .iter()
            .map(|r| r.result.name.as_str())
            .chain(self.interactions.iter().map(|i| i.result.name.as_str()))
            .collect();
        for item in items {
            self.depth(item)?;
        }
        Ok(())
    }

    pub fn recipe_for(&self, item: &str) -> Option<&Recipe> {
        self.recipes.iter().find(|r| r.result.name == item)
    }

    pub fn interaction_for(&self, item: &str) -> Option<&Interaction> {
        self.interactions.iter().find(|i| i.result.name == item)
    }

    fn inputs(&self, item: &str) -> Option<Vec<&str>> {
        if let Some(r) = self.recipe_for(item) {
            return Some(r.ingredients.iter().map(|i| i.name.as_str()).collect());
        }
        self.interaction_for(item).map(|i| vec![i.tool.as_str()])
    }

    /// Processing-step depth: raw items are 1, each craft/smelt/interaction adds 1.
    pub fn depth(&self, item: &str) -> Result<u32, RecipeError> {
        let mut memo = BTreeMap::new();
        self.depth_inner(item, &mut Vec::new(), &mut memo)
    }

    fn depth_inner<'a>(
        &'a self,
        item: &'a str,
        stack: &mut Vec<&'a str>,
        memo: &mut BTreeMap<&'a str, u32>,
    ) -> Result<u32, RecipeError> {
        if let Some(&d) = memo.get(item) {
            return Ok(d);
        }
        if stack.contains(&item) {
            return Err(RecipeError::Cycle(item.to_string()));
        }
        let d = match self.inputs(item) {
            Some(inputs) => {
                stack.push(item);
                let mut best = 0;
                for i in inputs {
                    best = best.max(self.depth_inner(i, stack, memo)?);
                }
                stack.pop();
                best + 1
            }
            None if self.raw.contains(item) => 1,
            None => return Err(RecipeError::Unknown(item.to_string())),
        };
        memo.insert(item, d);
        Ok(d)
    }

    /// Every item reachable from `item` through producers, including itself.
    pub fn subtree(&self, item: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut stack = vec![item.to_string()];
        while let Some(it) = stack.pop() {
            if !out.insert(it.clone()) {
                continue;
            }
            if let Some(inputs) = self.inputs(&it) {
                stack.extend(inputs.into_iter().map(str::to_string));
            }
        }
        out
    }

    pub fn tree(&self, goal: &str) -> Result<DependencyTree, RecipeError> {
        self.depth(goal)?;
        let mut raws = BTreeSet::new();
        let mut processed = BTreeSet::new();
        for item in self.subtree(goal) {
            if self.inputs(&item).is_some() {
                processed.insert(item);
            } else {
                raws.insert(item);
            }
        }
        Ok(DependencyTree {
            goal: goal.to_string(),
            raws,
            processed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RABBIT_STEW: &str = r#"{
        "result": {"name": "rabbit_stew", "count": 1},
        "ingredients": [
            {"name": "baked_potato", "count": 1},
            {"name": "cooked_rabbit", "count": 1},
            {"name": "bowl", "count": 1},
            {"name": "carrot", "count": 1},
            {"name": "brown_mushroom", "count": 1}
        ]
    }"#;

    #[test]
    fn appendix_document_shape_parses_without_station() {
        let r = Recipe::from_json(RABBIT_STEW).unwrap();
        assert_eq!(r.station, Station::None);
        assert_eq!(r.ingredients.len(), 5);
        assert_eq!(r.ingredient_bag().count("bowl"), 1);
    }

    #[test]
    fn zero_count_rejected() {
        let err = Recipe::from_json(r#"{"result":{"name":"x","count":0},"ingredients":[{"name":"y","count":1}]}"#)
            .unwrap_err();
        assert_eq!(err, RecipeError::ZeroCount("x".into()));
    }

    #[test]
    fn cycle_detected() {
        let book = RecipeBook {
            recipes: vec![
                Recipe {
                    result: ItemCount::new("a", 1),
                    ingredients: vec![ItemCount::new("b", 1)],
                    station: Station::None,
                },
                Recipe {
                    result: ItemCount::new("b", 1),
                    ingredients: vec![ItemCount::new("a", 1)],
                    station: Station::None,
                },
            ],
            ..Default::default()
        };
        assert!(matches!(book.validate(), Err(RecipeError::Cycle(_))));
    }

    #[test]
    fn depth_counts_processing_steps() {
        let book = RecipeBook {
            recipes: vec![
                Recipe {
                    result: ItemCount::new("planks", 4),
                    ingredients: vec![ItemCount::new("log", 1)],
                    station: Station::None,
                },
                Recipe {
                    result: ItemCount::new("bowl", 4),
                    ingredients: vec![ItemCount::new("planks", 3)],
                    station: Station::Crafting,
                },
            ],
            raw: ["log".to_string()].into(),
            ..Default::default()
        };
        assert_eq!(book.depth("log").unwrap(), 1);
        assert_eq!(book.depth("bowl").unwrap(), 3);
        assert_eq!(book.depth("ghost"), Err(RecipeError::Unknown("ghost".into())));
        let tree = book.tree("bowl").unwrap();
        assert_eq!(tree.raws.len(), 1);
        assert_eq!(tree.processed.len(), 2);
    }
}
