#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dagcrew_core::orchestrator::{Limits, Session};
use dagcrew_core::planner::{PlannerBackend, ScriptedPlanner};
use dagcrew_core::scenario::{Scenario, ScenarioSpec};
use dagcrew_core::taskgraph::{NodeId, SubtaskSpec, TaskGraph, STRUCTURED_HEADER};
use dagcrew_core::trace::{EpisodeTrace, Termination};
use dagcrew_worldsim::catalogue::harvest_drop;
use dagcrew_worldsim::escape::{Atom, EscapeSpec, RoomSpec};
use dagcrew_worldsim::world::INTERACT_RANGE;
use dagcrew_worldsim::{
    default_capabilities, generate_escape, ActionKind, ActionRequest, Arg, ItemBag, Pos, ScenarioKind, WorldState,
};
use proptest::prelude::*;
use serde_json::json;

pub static SCRIPTED: ScriptedPlanner = ScriptedPlanner;

pub const NAMES: [&str; 4] = ["Alice", "Bob", "Charlie", "Dana"];

pub fn agents(kind: ScenarioKind, n: usize) -> Vec<(String, BTreeSet<ActionKind>)> {
    NAMES[..n]
        .iter()
        .map(|a| (a.to_string(), default_capabilities(kind)))
        .collect()
}

pub fn bundled(kind: ScenarioKind, task: &str) -> Scenario {
    Scenario::from_spec(&ScenarioSpec {
        kind,
        task: Some(task.into()),
        escape: None,
    })
    .unwrap()
}

pub fn session<'b>(
    scenario: Scenario,
    n: usize,
    seed: u64,
    limits: Limits,
    backend: &'b dyn PlannerBackend,
) -> Session<'b> {
    let kind = scenario.kind();
    Session::new(scenario, &agents(kind, n), seed, limits, backend, EpisodeTrace::new())
}

/// Runs a scripted episode to termination.
pub fn run_scripted(scenario: Scenario, n: usize, seed: u64) -> (Session<'static>, Termination) {
    let mut s = session(scenario, n, seed, Limits::scripted(), &SCRIPTED);
    let t = s.run(|_, _| {}).unwrap();
    (s, t)
}

/// Node count, forward edges and an executed subset.
pub fn arb_dag() -> impl Strategy<Value = (u32, BTreeSet<(NodeId, NodeId)>, BTreeSet<NodeId>)> {
    (1u32..=12).prop_flat_map(|n| {
        let pairs: Vec<(NodeId, NodeId)> = (1..=n).flat_map(|u| (u + 1..=n).map(move |v| (u, v))).collect();
        let m = pairs.len();
        (
            Just(n),
            prop::collection::vec(any::<bool>(), m).prop_map(move |mask| {
                pairs
                    .iter()
                    .zip(mask)
                    .filter(|(_, keep)| *keep)
                    .map(|(e, _)| *e)
                    .collect()
            }),
            prop::collection::btree_set(1..=n, 0..=n as usize),
        )
    })
}

/// Spec lists whose predecessor indices only point backwards.
pub fn arb_specs() -> impl Strategy<Value = Vec<SubtaskSpec>> {
    prop::collection::vec(
        (prop::collection::vec(any::<prop::sample::Index>(), 0..3), 1u32..3),
        1..12,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (picks, agents))| {
                let mut spec = SubtaskSpec::new(&format!("step {}", i + 1));
                if i > 0 {
                    let preds: BTreeSet<usize> = picks.iter().map(|p| p.index(i) + 1).collect();
                    spec = spec.after(&preds.into_iter().collect::<Vec<_>>());
                }
                spec.agents = agents;
                spec
            })
            .collect()
    })
}

/// Graph with nodes 1..=n and the given edges, built through the structured import.
pub fn graph_from_edges(n: u32, edges: &BTreeSet<(NodeId, NodeId)>) -> TaskGraph {
    let mut text = format!("{STRUCTURED_HEADER}\n");
    for v in 1..=n {
        let preds: Vec<NodeId> = edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect();
        let rec = json!({"id": v, "status": "pending", "description": format!("n{v}"), "preds": preds});
        text.push_str(&rec.to_string());
        text.push('\n');
    }
    TaskGraph::import_structured(&text).unwrap()
}

/// Brute force: unexecuted nodes none of whose in-edges start outside `executed`.
pub fn ready_oracle(
    edges: &BTreeSet<(NodeId, NodeId)>,
    executed: &BTreeSet<NodeId>,
    unexecuted: &BTreeSet<NodeId>,
) -> BTreeSet<NodeId> {
    unexecuted
        .iter()
        .copied()
        .filter(|v| {
            let preds: Vec<NodeId> = edges.iter().filter(|e| e.1 == *v).map(|e| e.0).collect();
            preds.iter().all(|p| executed.contains(p))
        })
        .collect()
}

/// Kahn's algorithm; true when every node gets a topological position.
pub fn is_acyclic(g: &TaskGraph) -> bool {
    let ids: Vec<NodeId> = g.nodes().map(|n| n.id).collect();
    let mut indeg: BTreeMap<NodeId, usize> = ids.iter().map(|&i| (i, 0)).collect();
    for &(_, v) in g.edges() {
        *indeg.get_mut(&v).unwrap() += 1;
    }
    let mut queue: Vec<NodeId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(i, _)| *i).collect();
    let mut seen = 0;
    while let Some(u) = queue.pop() {
        seen += 1;
        for &(a, b) in g.edges() {
            if a == u {
                let d = indeg.get_mut(&b).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(b);
                }
            }
        }
    }
    seen == ids.len()
}

/// Items held anywhere plus agent-placed blocks, counted by name.
pub fn ledger(w: &WorldState) -> ItemBag {
    let mut bag = w.item_totals();
    for b in w.blocks.values().filter(|b| b.placed_by.is_some()) {
        bag.add(&b.material, 1);
    }
    bag
}

pub fn diff(after: &ItemBag, before: &ItemBag) -> BTreeMap<String, i64> {
    let names: BTreeSet<&str> = after.iter().chain(before.iter()).map(|(k, _)| k).collect();
    names
        .into_iter()
        .map(|k| (k.to_string(), after.count(k) as i64 - before.count(k) as i64))
        .filter(|(_, d)| *d != 0)
        .collect()
}

/// Item delta an accepted action may cause; everything else only moves items.
pub fn expected_delta(before: &WorldState, req: &ActionRequest) -> BTreeMap<String, i64> {
    let mut out: BTreeMap<String, i64> = BTreeMap::new();
    let text = |i: usize| req.args.get(i).map(Arg::to_string).unwrap_or_default();
    let num = |i: usize| match req.args.get(i) {
        Some(Arg::Int(v)) => *v,
        _ => 1,
    };
    match req.kind {
        ActionKind::MineBlock => {
            let p = Pos::new(num(0) as i32, num(1) as i32, num(2) as i32);
            let b = &before.blocks[&p];
            *out.entry(harvest_drop(&b.material).to_string()).or_default() += 1;
            if b.placed_by.is_some() {
                *out.entry(b.material.clone()).or_default() -= 1;
            }
        }
        ActionKind::CraftBlock | ActionKind::SmeltingCooking => {
            let item = text(0);
            let times = if req.args.len() > 1 { num(1) } else { 1 };
            let r = before.recipes.recipe_for(&item).unwrap();
            for ing in &r.ingredients {
                *out.entry(ing.name.clone()).or_default() -= ing.count as i64 * times;
            }
            *out.entry(item).or_default() += r.result.count as i64 * times;
        }
        ActionKind::AttackTarget => {
            let here = before.agents[&req.agent].pos;
            let e = before
                .entities
                .values()
                .filter(|e| e.name == text(0) && e.pos.reach(here) <= INTERACT_RANGE)
                .min_by_key(|e| e.pos.dist_sq(here))
                .unwrap();
            if let Some(d) = &e.drop {
                *out.entry(d.name.clone()).or_default() += d.count as i64;
            }
        }
        ActionKind::UseItemOnEntity => {
            let rule = before
                .recipes
                .interactions
                .iter()
                .find(|i| i.tool == text(0) && i.entity == text(1))
                .unwrap();
            *out.entry(rule.tool.clone()).or_default() -= 1;
            *out.entry(rule.result.name.clone()).or_default() += rule.result.count as i64;
        }
        _ => {}
    }
    out.retain(|_, d| *d != 0);
    out
}

/// A generated room with two pressure plates, isolated into a one-room spec.
pub fn generated_plate_room(window: u64) -> EscapeSpec {
    for seed in 0..500 {
        for difficulty in 1..=5 {
            let spec = generate_escape(seed, difficulty, 2).unwrap();
            let room = spec
                .rooms
                .iter()
                .find(|r| matches!(&r.atom, Atom::SimultaneousPlates { plates } if plates.len() == 2));
            if let Some(room) = room {
                return EscapeSpec {
                    window,
                    rooms: vec![room.clone()],
                    exit: room.center.offset(0, 0, 10),
                    ..spec
                };
            }
        }
    }
    panic!("generator never produced a two-plate room");
}

pub fn plates(room: &RoomSpec) -> (Pos, Pos) {
    match &room.atom {
        Atom::SimultaneousPlates { plates } => (plates[0], plates[1]),
        _ => unreachable!(),
    }
}

/// Presses at t1 and t2 in tick order, then advances the clock; true when the room passed.
pub fn press_schedule(spec: &EscapeSpec, t1: u64, t2: u64) -> bool {
    let caps: BTreeSet<ActionKind> = [ActionKind::ToggleAction].into_iter().collect();
    let mut w = spec.build_world(&[("Alice".into(), caps.clone()), ("Bob".into(), caps)]);
    let (pa, pb) = plates(&spec.rooms[0]);
    w.agents.get_mut("Alice").unwrap().pos = pa;
    w.agents.get_mut("Bob").unwrap().pos = pb;
    let press = |w: &mut WorldState, agent: &str, p: Pos, t: u64| {
        let r = w.apply_action(&ActionRequest::new(
            agent,
            ActionKind::ToggleAction,
            vec![p.x.into(), p.y.into(), p.z.into()],
            t,
        ));
        assert!(r.accepted, "{}", r.observation);
    };
    if t1 <= t2 {
        press(&mut w, "Alice", pa, t1);
        press(&mut w, "Bob", pb, t2);
    } else {
        press(&mut w, "Bob", pb, t2);
        press(&mut w, "Alice", pa, t1);
    }
    w.tick(1).unwrap();
    w.escape.unwrap().rooms[0].passed()
}

/// Plates stay held for `window` ticks after the press completes; fire iff the
/// half-open hold intervals intersect.
pub fn intervals_overlap(t1: u64, t2: u64, window: u64) -> bool {
    let (s1, s2) = (t1 + 1, t2 + 1);
    s1.max(s2) < (s1 + window).min(s2 + window)
}
