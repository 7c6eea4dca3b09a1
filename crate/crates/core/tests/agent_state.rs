mod common;

use std::collections::BTreeSet;

use common::{agents, bundled, session, SCRIPTED};
use dagcrew_core::agent::{
    execute, push_history, reflect, ActionHistory, AgentProfile, Budget, ExecContext, HistoryRecord, Outcome,
    MAX_ITERATIONS,
};
use dagcrew_core::orchestrator::Limits;
use dagcrew_core::planner::{
    FaultMode, FaultyPlanner, PlannerBackend, PlannerError, PlannerReply, PlannerRequest, ScriptedPlanner, TemplateId,
    TokenUsage,
};
use dagcrew_core::statemgr::{global_env, render_observations, retrieve_env, update_agent_state, AgentStateSummary};
use dagcrew_core::taskgraph::SubtaskNode;
use dagcrew_worldsim::world::{AgentSnapshot, Arena};
use dagcrew_worldsim::{ActionKind, ItemBag, Pos, ScenarioKind, WorldState};
use proptest::prelude::*;

/// Same reply to every request.
struct Fixed(String);

impl PlannerBackend for Fixed {
    fn complete(&self, _: &PlannerRequest) -> Result<PlannerReply, PlannerError> {
        Ok(PlannerReply {
            text: self.0.clone(),
            usage: TokenUsage {
                prompt_tokens: 1,
                completion_tokens: 1,
            },
        })
    }
}

struct Down;

impl PlannerBackend for Down {
    fn complete(&self, _: &PlannerRequest) -> Result<PlannerReply, PlannerError> {
        Err(PlannerError::Transport {
            message: "offline".into(),
            retryable: false,
        })
    }
}

/// First node the scripted decomposer produces for a one-block build, plus its world.
fn first_node() -> (SubtaskNode, WorldState) {
    let mut s = session(
        bundled(ScenarioKind::Construction, "task_single"),
        1,
        0,
        Limits::scripted(),
        &SCRIPTED,
    );
    let ids = s.decompose("");
    (s.graph.node(ids[0]).unwrap().clone(), s.world.clone())
}

fn ctx<'a>(node: &'a SubtaskNode, world: &WorldState, budget: Budget) -> ExecContext<'a> {
    ExecContext {
        node,
        role: 0,
        team: vec!["Alice".into()],
        predecessor_states: Vec::new(),
        env: String::new(),
        start: AgentSnapshot::from(&world.agents["Alice"]),
        start_tick: world.clock,
        budget,
    }
}

fn alice(caps: BTreeSet<ActionKind>) -> AgentProfile {
    AgentProfile::new("Alice", caps, 6)
}

fn full_caps() -> BTreeSet<ActionKind> {
    agents(ScenarioKind::Construction, 1).remove(0).1
}

#[test]
fn scripted_node_succeeds_within_iteration_bound() {
    let (node, mut world) = first_node();
    let mut profile = alice(full_caps());
    let r = execute(
        &mut profile,
        &ctx(&node, &world, Budget::scripted()),
        &SCRIPTED,
        &mut world,
    );
    assert_eq!(r.outcome, Outcome::Succeeded, "{}", r.feedback);
    assert!(r.iterations <= MAX_ITERATIONS);
    assert!(!r.actions.is_empty());
    assert!(!r.feedback.trim().is_empty());
    // every world action sits in the history with its tick
    let hist: Vec<(ActionKind, u64)> = r.history.records().map(|h| (h.kind, h.tick)).collect();
    for (req, res) in &r.actions {
        assert!(hist.contains(&(req.kind, res.tick)));
    }
    assert_eq!(r.calls.len() as u32, r.iterations + 1);
}

#[test]
fn zero_tick_budget_fails_with_budget_feedback() {
    let (node, mut world) = first_node();
    let mut profile = alice(full_caps());
    let budget = Budget {
        ticks: Some(0),
        ..Budget::scripted()
    };
    let r = execute(&mut profile, &ctx(&node, &world, budget), &SCRIPTED, &mut world);
    assert_eq!(r.outcome, Outcome::Failed);
    assert!(r.budget_exhausted);
    assert_eq!(r.iterations, 0);
    assert!(r.feedback.contains("budget"));
}

#[test]
fn missing_capability_rejects_every_attempt() {
    let (node, mut world) = first_node();
    let mut caps = full_caps();
    caps.remove(&ActionKind::PlaceBlock);
    world.agents.get_mut("Alice").unwrap().capabilities = caps.clone();
    let mut profile = alice(caps);
    let r = execute(
        &mut profile,
        &ctx(&node, &world, Budget::scripted()),
        &SCRIPTED,
        &mut world,
    );
    let places: Vec<_> = r
        .actions
        .iter()
        .filter(|(req, _)| req.kind == ActionKind::PlaceBlock)
        .collect();
    assert!(!places.is_empty());
    assert!(places.iter().all(|(_, res)| !res.accepted));
    assert_eq!(r.outcome, Outcome::Failed);
}

#[test]
fn gibberish_reply_consumes_an_iteration() {
    let (node, mut w1) = first_node();
    let mut w2 = w1.clone();
    let clean = execute(
        &mut alice(full_caps()),
        &ctx(&node, &w1, Budget::scripted()),
        &SCRIPTED,
        &mut w1,
    );
    let faulty = FaultyPlanner::new(ScriptedPlanner::new(), TemplateId::React, 1, FaultMode::Garbage);
    let noisy = execute(
        &mut alice(full_caps()),
        &ctx(&node, &w2, Budget::scripted()),
        &faulty,
        &mut w2,
    );
    assert_eq!(
        noisy.actions.len(),
        clean.actions.len().min(noisy.iterations as usize - 1)
    );
    assert_eq!(noisy.iterations, (clean.iterations + 1).min(MAX_ITERATIONS));
}

#[test]
fn endless_actions_stop_at_six_iterations() {
    let (node, mut world) = first_node();
    let backend = Fixed("Action: scanNearbyEntities()".into());
    let r = execute(
        &mut alice(full_caps()),
        &ctx(&node, &world, Budget::scripted()),
        &backend,
        &mut world,
    );
    assert_eq!(r.iterations, MAX_ITERATIONS);
    assert_eq!(r.actions.len(), MAX_ITERATIONS as usize);
    assert_eq!(r.claim, None);
    assert_eq!(r.outcome, Outcome::Failed);
    assert!(r.history.len() <= 6);
}

#[test]
fn reflection_examples() {
    let mut log = Vec::new();
    let empty = reflect(&SCRIPTED, "Alice", "build", &[], "(none)", &mut log);
    assert!(empty.contains("No actions"));
    let rec = HistoryRecord {
        kind: ActionKind::PlaceBlock,
        args: Vec::new(),
        observation: "placed stone".into(),
        tick: 3,
        accepted: true,
    };
    let ok = reflect(
        &SCRIPTED,
        "Alice",
        "build",
        std::slice::from_ref(&rec),
        "succeeded",
        &mut log,
    );
    assert!(ok.contains("succeeded"));
    let down = reflect(&Down, "Alice", "build", &[rec], "succeeded", &mut log);
    assert!(down.contains("placed stone"));
    assert_eq!(log.len(), 3);
}

fn record(tick: u64) -> HistoryRecord {
    HistoryRecord {
        kind: ActionKind::NavigateTo,
        args: Vec::new(),
        observation: format!("t{tick}"),
        tick,
        accepted: true,
    }
}

proptest! {
    #[test]
    fn history_keeps_last_p_in_tick_order(p in 1usize..10, gaps in prop::collection::vec(0u64..5, 0..40)) {
        let mut h = ActionHistory::new(p);
        let mut tick = 0;
        let mut all = Vec::new();
        for g in gaps {
            tick += g;
            h = push_history(h, record(tick));
            all.push(tick);
            prop_assert!(h.len() <= p);
        }
        let kept: Vec<u64> = h.records().map(|r| r.tick).collect();
        prop_assert_eq!(&kept[..], &all[all.len().saturating_sub(p)..]);
    }
}

fn empty_world() -> WorldState {
    WorldState::new(
        Arena {
            min: Pos::new(-100, -64, -100),
            max: Pos::new(100, 0, 100),
        },
        -60,
        0,
    )
}

fn bag(items: &[(&str, u32)]) -> ItemBag {
    let mut b = ItemBag::new();
    for &(n, c) in items {
        b.add(n, c);
    }
    b
}

#[test]
fn global_env_examples() {
    let mut w = empty_world();
    w.add_agent("Alice", Pos::new(0, -60, 0), BTreeSet::new());
    w.containers.insert(Pos::new(2, -60, 0), bag(&[("carrot", 2)]));
    let one = global_env(&w);
    assert_eq!(one.merged, w.local_view("Alice"));

    // a second agent far away sees a different chest
    w.add_agent("Bob", Pos::new(80, -60, 80), BTreeSet::new());
    w.containers.insert(Pos::new(82, -60, 80), bag(&[("potato", 1)]));
    let two = global_env(&w);
    assert_eq!(
        two.merged.len(),
        w.local_view("Alice").len() + w.local_view("Bob").len()
    );

    // move Bob next to Alice: the shared chest appears once
    w.agents.get_mut("Bob").unwrap().pos = Pos::new(1, -60, 1);
    let shared = global_env(&w);
    let chests = shared
        .merged
        .iter()
        .filter(|o| o.pos == Some(Pos::new(2, -60, 0)))
        .count();
    assert_eq!(chests, 1);
    assert_eq!(global_env(&w), shared);
}

#[test]
fn merged_view_ignores_agent_insertion_order() {
    let build = |names: &[&str]| {
        let mut w = empty_world();
        for (i, n) in names.iter().enumerate() {
            w.add_agent(n, Pos::new(3 * i as i32, -60, 0), BTreeSet::new());
        }
        w.containers.insert(Pos::new(2, -60, 2), bag(&[("bowl", 1)]));
        w
    };
    let a = global_env(&build(&["Alice", "Bob", "Charlie"]));
    let b = global_env(&build(&["Charlie", "Alice", "Bob"]));
    let set = |g: &dagcrew_core::statemgr::GlobalEnvState| {
        g.merged.iter().map(|o| o.key().2.to_string()).collect::<BTreeSet<_>>()
    };
    assert_eq!(set(&a), set(&b));
}

#[test]
fn retrieve_env_examples() {
    let mut log = Vec::new();
    let mut w = empty_world();
    assert_eq!(retrieve_env(&SCRIPTED, "cook", &global_env(&w), &mut log), "");
    assert!(log.is_empty());
    w.add_agent("Alice", Pos::new(0, -60, 0), BTreeSet::new());
    w.containers.insert(Pos::new(2, -60, 0), bag(&[("carrot", 2)]));
    w.blocks
        .insert(Pos::new(3, -60, 3), dagcrew_worldsim::world::Block::scenery("gravel"));
    let env = global_env(&w);
    let full = render_observations(&env.merged);
    let relevant = retrieve_env(&SCRIPTED, "make rabbit stew", &env, &mut log);
    assert!(relevant.contains("carrot"));
    assert!(!relevant.contains("gravel"));
    assert_eq!(retrieve_env(&Down, "make rabbit stew", &env, &mut log), full);
}

fn history_of(n: u64) -> ActionHistory {
    let mut h = ActionHistory::new(6);
    for t in 1..=n {
        h.push(HistoryRecord {
            kind: ActionKind::PlaceBlock,
            args: Vec::new(),
            observation: format!("placed stone at [{t}, -60, 0]. Inventory: empty"),
            tick: t,
            accepted: true,
        });
    }
    h
}

#[test]
fn state_update_examples() {
    let mut log = Vec::new();
    let old = AgentStateSummary::new("Alice");
    let same = update_agent_state(&SCRIPTED, &old, &ActionHistory::new(6), 1, 1200, &mut log);
    assert_eq!(same.summary, old);
    assert!(log.is_empty());

    let folded = update_agent_state(&SCRIPTED, &old, &history_of(3), 1, 1200, &mut log);
    assert!(folded.summary.text.contains("placed stone"));
    assert_eq!(folded.summary.updated_round, 1);

    let long = Fixed("Alice did many things. ".repeat(100));
    let cut = update_agent_state(&long, &old, &history_of(1), 2, 50, &mut log);
    assert!(cut.truncated);
    assert!(cut.summary.text.len() <= 50);

    let failed = update_agent_state(&Down, &folded.summary, &history_of(1), 3, 1200, &mut log);
    assert_eq!(failed.summary, folded.summary);
    assert!(failed.warning.is_some());
}

proptest! {
    #[test]
    fn summaries_keep_id_and_cap(reply in "[a-zA-Zé ]{0,400}", cap in 16usize..400, n in 1u64..6) {
        let mut log = Vec::new();
        let r = update_agent_state(&Fixed(reply), &AgentStateSummary::new("Alice"), &history_of(n), 1, cap, &mut log);
        prop_assert!(r.summary.text.len() <= cap);
        prop_assert!(r.summary.text.starts_with("Alice"));
    }
}
