//! Scores a finished episode from its trace and final world.

use std::collections::{BTreeMap, BTreeSet};

use dagcrew_worldsim::{BlockTuple, WorldState};

use crate::metrics::{
    acr, balance, efficiency, token_cost, vhr, AgentMetrics, MetricReport, DEFAULT_VIEWS, TICKS_PER_MINUTE,
};
use crate::scenario::Scenario;
use crate::trace::{Event, TraceRecord};

/// Builds the metric report. `wall_minutes` replaces simulated time as the
/// efficiency denominator for live runs.
pub fn evaluate(
    scenario: &Scenario,
    records: &[TraceRecord],
    world: &WorldState,
    wall_minutes: Option<f64>,
) -> MetricReport {
    let mut per_agent: BTreeMap<String, AgentMetrics> = BTreeMap::new();
    if let Some(Event::EpisodeStart { agents, .. }) = records.first().map(|r| &r.event) {
        for a in agents {
            per_agent.insert(a.id.clone(), AgentMetrics::default());
        }
    }
    let mut latched = BTreeSet::new();
    let (mut prompt_tokens, mut completion_tokens, mut actions, mut rounds) = (0, 0, 0u64, 0);
    for r in records {
        match &r.event {
            Event::Action {
                agent, request, result, ..
            } => {
                let m = per_agent.entry(agent.clone()).or_default();
                m.active_ticks += result.tick.saturating_sub(request.tick);
                m.actions += 1;
                actions += 1;
                if let Some(snap) = &result.agent {
                    let before = latched.len();
                    scenario.latch(&mut latched, &snap.inventory);
                    if matches!(scenario, Scenario::Cooking(_)) {
                        m.contribution += (latched.len() - before) as f64;
                    }
                }
                if matches!(scenario, Scenario::Escape(_)) && result.accepted {
                    m.contribution += 1.0;
                }
            }
            Event::PlannerCall { agent, call } => {
                prompt_tokens += call.usage.prompt_tokens;
                completion_tokens += call.usage.completion_tokens;
                if let Some(a) = agent {
                    per_agent.entry(a.clone()).or_default().completion_tokens += call.usage.completion_tokens;
                }
            }
            Event::RoundStart { round } => rounds = rounds.max(*round),
            _ => {}
        }
    }
    if let Some(blueprint) = scenario.blueprint() {
        for (&p, b) in &world.blocks {
            let Some(by) = &b.placed_by else { continue };
            let t = BlockTuple {
                position: p,
                material: b.material.clone(),
                facing: b.facing,
                axis: b.axis,
            };
            if blueprint.contains(&t) {
                per_agent.entry(by.clone()).or_default().contribution += 1.0;
            }
        }
    }
    for m in per_agent.values_mut() {
        m.active_minutes = m.active_ticks as f64 / TICKS_PER_MINUTE;
    }

    let completion = scenario.completion(world, &latched).clamp(0.0, 1.0);
    let elapsed_minutes = wall_minutes.unwrap_or(world.clock as f64 / TICKS_PER_MINUTE);
    let times: Vec<f64> = per_agent.values().map(|m| m.active_minutes).collect();
    let contributions: Vec<f64> = per_agent.values().map(|m| m.contribution).collect();
    let vhr = scenario
        .blueprint()
        .and_then(|bp| vhr(&world.placed_blocks(), &bp, &DEFAULT_VIEWS).ok());
    let acr = match scenario {
        Scenario::Cooking(_) => acr(&contributions),
        _ => None,
    };
    let avg_tokens = if actions == 0 {
        0.0
    } else {
        completion_tokens as f64 / actions as f64
    };
    MetricReport {
        scenario: scenario.kind().to_string(),
        task: scenario.task_id(),
        completion,
        efficiency: efficiency(completion, elapsed_minutes).unwrap_or(0.0),
        balance: balance(&times),
        vhr,
        acr,
        token_cost: token_cost(avg_tokens, completion * 100.0, actions),
        dependency_complexity: scenario.dependency_complexity(),
        elapsed_minutes,
        ticks: world.clock,
        rounds,
        actions,
        prompt_tokens,
        completion_tokens,
        per_agent,
    }
}
