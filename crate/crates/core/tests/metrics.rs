use std::collections::{BTreeMap, BTreeSet};

use dagcrew_core::metrics::*;
use dagcrew_worldsim::escape::{Atom, EscapeSpec, RoomSpec, ORIGIN};
use dagcrew_worldsim::recipe::ItemCount;
use dagcrew_worldsim::tasks::{construction_task, cooking_task, tuple};
use dagcrew_worldsim::{Axis, BlockTuple, Facing, Pos, Recipe, RecipeBook, Station};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn block(x: i32, y: i32, z: i32, m: &str) -> BlockTuple {
    tuple(x, y, z, m, Facing::None, Axis::None)
}

#[test]
fn kernel_values() {
    assert!(close(balance(&[0.0, 10.0]).unwrap(), 0.5, 1e-9));
    assert!(close(balance(&[0.0, 10.0, 20.0]).unwrap(), 0.5918, 1e-4));
    assert_eq!(balance(&[60.0, 60.0]), Some(1.0));
    assert_eq!(balance(&[5.0]), None);
    assert!(close(acr(&[4.0, 2.0]).unwrap(), 0.6667, 1e-4));
    assert_eq!(acr(&[3.0, 3.0]), Some(1.0));
    assert!(close(acr(&[6.0, 0.0]).unwrap(), 0.0, 1e-12));
    assert_eq!(acr(&[0.0, 0.0]), None);
    assert_eq!(token_cost(120.0, 9.0, 50), 2.0);
    assert_eq!(token_cost(0.0, 3.0, 7), 0.0);
    assert_eq!(token_cost(100.0, 0.0, 0), 100.0);
    assert_eq!(completion_escape(&[2, 2], &[2, 1]), 0.75);
    assert_eq!(completion_escape(&[2, 2], &[0, 0]), 0.0);
    assert_eq!(completion_escape(&[1, 3], &[1, 3]), 1.0);
}

#[test]
fn efficiency_examples() {
    assert_eq!(efficiency(1.0, 2.0).unwrap(), 0.5);
    assert_eq!(efficiency(0.0, 3.0).unwrap(), 0.0);
    assert_eq!(efficiency(0.5, 0.5).unwrap(), 1.0);
    assert_eq!(efficiency(1.0, 0.0), Err(MetricError::NoElapsed));
}

#[test]
fn construction_completion_counts_full_tuples() {
    let blueprint: BTreeSet<BlockTuple> = (0..10).map(|x| block(x, -60, 0, "stone")).collect();
    assert_eq!(completion_construction(&blueprint, &blueprint).unwrap(), 1.0);
    assert_eq!(completion_construction(&BTreeSet::new(), &blueprint).unwrap(), 0.0);
    let mut placed: BTreeSet<BlockTuple> = (0..6).map(|x| block(x, -60, 0, "stone")).collect();
    placed.insert(tuple(6, -60, 0, "stone", Facing::North, Axis::None));
    let expected = placed.iter().filter(|b| blueprint.contains(b)).count() as f64 / blueprint.len() as f64;
    assert_eq!(completion_construction(&placed, &blueprint).unwrap(), expected);
    assert_eq!(expected, 0.6);
    placed.insert(block(7, -60, 0, "stone"));
    assert_eq!(completion_construction(&placed, &blueprint).unwrap(), 0.7);
    assert_eq!(
        completion_construction(&placed, &BTreeSet::new()),
        Err(MetricError::EmptyBlueprint)
    );
}

/// Visible iff no other cell on the same ray is closer to the viewer.
fn project_oracle(cells: &BTreeSet<BlockTuple>, view: View) -> BTreeSet<BlockTuple> {
    let key = |p: Pos| match view {
        View::PosX | View::NegX => (p.y, p.z),
        View::PosZ | View::NegZ => (p.x, p.y),
        View::Top => (p.x, p.z),
    };
    let closer = |a: Pos, b: Pos| match view {
        View::PosX => a.x > b.x,
        View::NegX => a.x < b.x,
        View::PosZ => a.z > b.z,
        View::NegZ => a.z < b.z,
        View::Top => a.y > b.y,
    };
    cells
        .iter()
        .filter(|c| {
            !cells
                .iter()
                .any(|o| key(o.position) == key(c.position) && closer(o.position, c.position))
        })
        .cloned()
        .collect()
}

fn vhr_oracle(placed: &BTreeSet<BlockTuple>, blueprint: &BTreeSet<BlockTuple>) -> f64 {
    let mut sum = 0.0;
    for v in DEFAULT_VIEWS {
        let (a, b) = (project_oracle(placed, v), project_oracle(blueprint, v));
        let union = a.union(&b).count();
        sum += if union == 0 {
            1.0
        } else {
            a.intersection(&b).count() as f64 / union as f64
        };
    }
    sum / DEFAULT_VIEWS.len() as f64
}

#[test]
fn vhr_on_platform_with_one_wrong_material() {
    let bp: BTreeSet<_> = [(0, 0), (1, 0), (0, 1), (1, 1)]
        .iter()
        .map(|&(x, z)| block(x, -60, z, "oak_planks"))
        .collect();
    let mut placed = bp.clone();
    placed.remove(&block(1, -60, 1, "oak_planks"));
    placed.insert(block(1, -60, 1, "stone"));
    let got = vhr(&placed, &bp, &DEFAULT_VIEWS).unwrap();
    assert!(close(got, vhr_oracle(&placed, &bp), 1e-12));
    assert!(got < 1.0);
    assert_eq!(vhr(&bp, &bp, &DEFAULT_VIEWS).unwrap(), 1.0);
    assert_eq!(vhr(&BTreeSet::new(), &bp, &DEFAULT_VIEWS).unwrap(), 0.0);
    assert_eq!(vhr(&bp, &bp, &[]), Err(MetricError::NoViews));
}

#[test]
fn construction_dependency_examples() {
    assert_eq!(dep_construction(&[block(0, -60, 0, "stone")], -60), 1.0);
    assert!(close(dep_construction(&[block(0, -59, 0, "stone")], -60), 1.1, 1e-12));
    assert_eq!(dep_construction(&[], -60), 0.0);
    // second block touches the first and the ground
    let two = [block(0, -60, 0, "stone"), block(1, -60, 0, "stone")];
    assert!(close(dep_construction(&two, -60), 1.5, 1e-12));
    let t = construction_task("task_0").unwrap();
    assert!(dep_construction(&t.placement_order(), -60) > 0.0);
}

fn recipe(result: &str, ingredients: &[(&str, u32)]) -> Recipe {
    Recipe {
        result: ItemCount::new(result, 1),
        ingredients: ingredients.iter().map(|&(n, c)| ItemCount::new(n, c)).collect(),
        station: Station::None,
    }
}

/// Depth straight from the recipe list: raw 1, each processing step +1.
fn depth_oracle(book: &RecipeBook, item: &str) -> u32 {
    match book.recipes.iter().find(|r| r.result.name == item) {
        Some(r) => {
            1 + r
                .ingredients
                .iter()
                .map(|i| depth_oracle(book, &i.name))
                .max()
                .unwrap_or(0)
        }
        None => 1,
    }
}

#[test]
fn cooking_dependency_examples() {
    let book = RecipeBook {
        recipes: vec![
            recipe("goal", &[("x", 2), ("y", 1)]),
            recipe("y", &[("z", 1)]),
            recipe("z", &[("w", 1)]),
        ],
        interactions: Vec::new(),
        raw: ["x", "w"].iter().map(|s| s.to_string()).collect(),
    };
    assert_eq!(dep_cooking(&book, "goal").unwrap(), 5.0);
    let flat = RecipeBook {
        recipes: vec![recipe("goal", &[("a", 2), ("b", 3)])],
        interactions: Vec::new(),
        raw: ["a", "b"].iter().map(|s| s.to_string()).collect(),
    };
    assert_eq!(dep_cooking(&flat, "goal").unwrap(), 5.0);
    assert!(matches!(dep_cooking(&flat, "nothing"), Err(MetricError::Unknown(_))));

    let stew = cooking_task("rabbit_stew").unwrap();
    let r = stew.book.recipe_for("rabbit_stew").unwrap();
    let expected: u32 = r
        .ingredients
        .iter()
        .map(|i| i.count * depth_oracle(&stew.book, &i.name))
        .sum();
    assert_eq!(expected, 9);
    assert_eq!(dep_cooking(&stew.book, "rabbit_stew").unwrap(), 9.0);
}

#[test]
fn cooking_completion_counts_indicators() {
    let stew = cooking_task("rabbit_stew").unwrap();
    let tree = stew.book.tree("rabbit_stew").unwrap();
    assert_eq!((tree.raws.len(), tree.processed.len()), (5, 5));
    let mut latched: BTreeSet<String> = tree.raws.clone();
    latched.insert("baked_potato".into());
    latched.insert("cooked_rabbit".into());
    assert!(close(completion_cooking(&latched, &tree), 0.7, 1e-12));
    assert_eq!(completion_cooking(&BTreeSet::new(), &tree), 0.0);
    let mut goal = dagcrew_worldsim::ItemBag::new();
    goal.add("rabbit_stew", 1);
    let all = cooking_latched(&stew.book, &tree, [&goal]);
    assert_eq!(completion_cooking(&all, &tree), 1.0);
}

fn chain(counts: &[usize]) -> EscapeSpec {
    let rooms: Vec<RoomSpec> = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let center = ORIGIN.offset(0, 0, 10 * i as i32);
            let levers = (0..c).map(|k| center.offset(k as i32 - 2, 0, -4)).collect();
            RoomSpec {
                center,
                atom: Atom::LeverSequence { levers },
                hint: String::new(),
            }
        })
        .collect();
    let exit = ORIGIN.offset(0, 0, 10 * counts.len() as i32);
    EscapeSpec {
        seed: 0,
        difficulty: 1,
        agents: 1,
        window: 600,
        rooms,
        exit,
    }
}

#[test]
fn escape_dependency_examples() {
    assert_eq!(dep_escape(&chain(&[2, 1, 3])).unwrap(), 6.0);
    assert_eq!(dep_escape(&chain(&[1])).unwrap(), 1.0);
    assert_eq!(dep_escape(&chain(&[])).unwrap(), 0.0);
    let mut broken = chain(&[1, 1]);
    broken.rooms[1].center = broken.rooms[1].center.offset(0, 0, 5);
    assert!(matches!(dep_escape(&broken), Err(MetricError::Disconnected(_))));
}

fn arb_times() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1000.0, 2..9)
}

fn arb_cells() -> impl Strategy<Value = BTreeSet<BlockTuple>> {
    let mat = prop_oneof![Just("stone"), Just("dirt"), Just("oak_planks")];
    prop::collection::btree_map((0i32..4, -60i32..-57, 0i32..4), mat, 0..20)
        .prop_map(|cells| cells.into_iter().map(|((x, y, z), m)| block(x, y, z, m)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn fraction_metrics_stay_in_unit_interval(
        times in arb_times(),
        contrib in prop::collection::vec(0.0f64..50.0, 2..9),
        req in prop::collection::vec(0usize..5, 1..7),
        met_raw in prop::collection::vec(0usize..8, 7),
        c in 0.0f64..=1.0,
        minutes in 0.01f64..100.0,
    ) {
        let b = balance(&times).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        if let Some(a) = acr(&contrib) {
            prop_assert!((0.0..=1.0).contains(&a));
        }
        let met: Vec<usize> = req.iter().zip(&met_raw).map(|(&m, &r)| r.min(m)).collect();
        let e = completion_escape(&req, &met);
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert!(efficiency(c, minutes).unwrap() >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn balance_lies_between_half_and_one(times in arb_times()) {
        let b = balance(&times).unwrap();
        prop_assert!((0.5 - 1e-12..=1.0).contains(&b), "{}", b);
    }

    #[test]
    fn balance_and_acr_ignore_agent_order(mut xs in prop::collection::vec(0.0f64..100.0, 2..9), seed in any::<u64>()) {
        let b = balance(&xs);
        let a = acr(&xs);
        let n = xs.len();
        xs.rotate_left((seed as usize) % n);
        xs.reverse();
        prop_assert!(close(balance(&xs).unwrap(), b.unwrap(), 1e-9));
        match (acr(&xs), a) {
            (Some(x), Some(y)) => prop_assert!(close(x, y, 1e-9)),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn acr_of_equal_vector_is_one(c in 0.001f64..100.0, k in 2usize..9) {
        prop_assert!(close(acr(&vec![c; k]).unwrap(), 1.0, 1e-9));
    }

    #[test]
    fn token_cost_is_monotone(t in 0.1f64..1000.0, s in 0.0f64..100.0, a in 0u64..500, d in 0.01f64..10.0) {
        prop_assert!(token_cost(t, s + d, a) < token_cost(t, s, a));
        prop_assert!(token_cost(t, s, a + 1) < token_cost(t, s, a));
        prop_assert!(token_cost(t + d, s, a) > token_cost(t, s, a));
    }

    #[test]
    fn vhr_matches_projection_oracle(placed in arb_cells(), bp in arb_cells()) {
        prop_assume!(!bp.is_empty());
        let got = vhr(&placed, &bp, &DEFAULT_VIEWS).unwrap();
        prop_assert!(close(got, vhr_oracle(&placed, &bp), 1e-12));
        prop_assert!((0.0..=1.0).contains(&got));
        prop_assert_eq!(vhr(&bp, &bp, &DEFAULT_VIEWS).unwrap(), 1.0);
    }

    #[test]
    fn construction_completion_grows_with_correct_blocks(bp in arb_cells(), order in any::<prop::sample::Index>()) {
        prop_assume!(!bp.is_empty());
        let cells: Vec<_> = bp.iter().cloned().collect();
        let start = order.index(cells.len());
        let mut placed = BTreeSet::new();
        let mut last = 0.0;
        for c in cells[start..].iter().chain(&cells[..start]) {
            placed.insert(c.clone());
            let now = completion_construction(&placed, &bp).unwrap();
            prop_assert!(now >= last);
            last = now;
        }
        prop_assert_eq!(last, 1.0);
    }

    #[test]
    fn dependency_scores_are_non_negative(cells in arb_cells()) {
        let order: Vec<_> = cells.into_iter().collect();
        prop_assert!(dep_construction(&order, -60) >= 0.0);
    }
}

#[test]
fn per_agent_metrics_serialize() {
    let mut per_agent = BTreeMap::new();
    per_agent.insert("Alice".to_string(), AgentMetrics::default());
    let json = serde_json::to_string(&per_agent).unwrap();
    assert!(json.contains("active_ticks"));
}
