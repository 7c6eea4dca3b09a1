//! Round loop: decompose, re-decompose failures, compute the ready set,
//! allocate, dispatch concurrently, fold feedback back in.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use dagcrew_worldsim::world::AgentSnapshot;
use dagcrew_worldsim::{ActionKind, SharedWorld, WorldState};

use crate::agent::{execute, AgentProfile, Budget, ExecContext, ExecutionResult, Outcome, DEFAULT_HISTORY};
use crate::path::resolve_refs;
use crate::planner::{
    self, or_none, parse_allocation, parse_decomposition, CallRecord, PlannerBackend, PlannerRequest, TemplateId,
};
use crate::scenario::Scenario;
use crate::statemgr::{global_env, retrieve_env, update_agent_state, AgentStateSummary, DEFAULT_SUMMARY_CAP};
use crate::taskgraph::{ready_set, Batch, NodeId, Status, SubtaskNode, SubtaskSpec, TaskGraph};
use crate::trace::{AgentEntry, DroppedPair, EpisodeTrace, Event, RoundReport, Termination, TRACE_SCHEMA};

/// Consecutive rounds without new nodes or dispatches before giving up.
const STALL_ROUNDS: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_rounds: u32,
    /// Episode limit on the simulation clock.
    pub tick_budget: Option<u64>,
    pub wall_budget: Option<Duration>,
    pub exec: Budget,
    pub history: usize,
    pub summary_cap: usize,
}

impl Limits {
    pub fn scripted() -> Self {
        Self {
            max_rounds: 30,
            tick_budget: Some(24_000),
            wall_budget: None,
            exec: Budget::scripted(),
            history: DEFAULT_HISTORY,
            summary_cap: DEFAULT_SUMMARY_CAP,
        }
    }

    pub fn live() -> Self {
        Self {
            max_rounds: 30,
            tick_budget: None,
            wall_budget: Some(Duration::from_secs(30 * 60)),
            exec: Budget::live(),
            history: DEFAULT_HISTORY,
            summary_cap: DEFAULT_SUMMARY_CAP,
        }
    }
}

pub struct Session<'b> {
    pub scenario: Scenario,
    pub goal: String,
    pub document: Value,
    pub graph: TaskGraph,
    pub agents: BTreeMap<String, AgentProfile>,
    pub world: WorldState,
    pub trace: EpisodeTrace,
    pub round: u32,
    pub limits: Limits,
    backend: &'b dyn PlannerBackend,
    failed_last_round: Vec<NodeId>,
    latched: BTreeSet<String>,
    idle_rounds: u32,
    started: Instant,
    finished: Option<Termination>,
}

/// Pairs after validation, plus what was dropped and why.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Allocation {
    pub pairs: Vec<(String, NodeId)>,
    pub dropped: Vec<DroppedPair>,
    pub fallback: bool,
}

/// Deterministic allocation: ready nodes by ascending id, idle agents by ascending id.
pub fn fallback_allocation(ready: &BTreeMap<NodeId, u32>, idle: &BTreeSet<String>) -> Vec<(String, NodeId)> {
    let mut free: Vec<&String> = idle.iter().collect();
    let mut pairs = Vec::new();
    for (&node, &need) in ready {
        let need = need.max(1) as usize;
        if free.len() < need {
            continue;
        }
        for a in free.drain(..need) {
            pairs.push((a.clone(), node));
        }
    }
    pairs
}

/// Drops pairs naming busy agents, and nodes whose group is short of its required count.
pub fn validate_pairs(
    proposed: Vec<(String, NodeId)>,
    ready: &BTreeMap<NodeId, u32>,
    busy: &BTreeSet<String>,
) -> (Vec<(String, NodeId)>, Vec<DroppedPair>) {
    let mut dropped = Vec::new();
    let mut kept: Vec<(String, NodeId)> = Vec::new();
    for (agent, node) in proposed {
        if busy.contains(&agent) {
            dropped.push(DroppedPair {
                agent,
                node,
                reason: "agent is busy".into(),
            });
        } else {
            kept.push((agent, node));
        }
    }
    let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
    for (_, n) in &kept {
        *counts.entry(*n).or_default() += 1;
    }
    let (pairs, short): (Vec<_>, Vec<_>) = kept
        .into_iter()
        .partition(|(_, n)| counts[n] >= ready.get(n).copied().unwrap_or(1) as usize);
    for (agent, node) in short {
        dropped.push(DroppedPair {
            reason: format!(
                "node needs {} agents, got {}",
                ready.get(&node).copied().unwrap_or(1),
                counts[&node]
            ),
            agent,
            node,
        });
    }
    (pairs, dropped)
}

struct Job {
    profile: AgentProfile,
    node: SubtaskNode,
    role: usize,
    team: Vec<String>,
    predecessor_states: Vec<AgentStateSummary>,
    start: AgentSnapshot,
}

impl<'b> Session<'b> {
    pub fn new(
        scenario: Scenario,
        agents: &[(String, BTreeSet<ActionKind>)],
        seed: u64,
        limits: Limits,
        backend: &'b dyn PlannerBackend,
        mut trace: EpisodeTrace,
    ) -> Self {
        let world = scenario.build_world(agents, seed);
        let goal = scenario.goal();
        trace.push(
            world.clock,
            Event::EpisodeStart {
                schema: TRACE_SCHEMA,
                scenario: scenario.spec(),
                seed,
                agents: agents
                    .iter()
                    .map(|(id, caps)| AgentEntry {
                        id: id.clone(),
                        capabilities: caps.clone(),
                    })
                    .collect(),
                goal: goal.clone(),
            },
        );
        let profiles = agents
            .iter()
            .map(|(id, caps)| (id.clone(), AgentProfile::new(id, caps.clone(), limits.history)))
            .collect();
        Self {
            document: scenario.document(),
            scenario,
            goal,
            graph: TaskGraph::new(),
            agents: profiles,
            world,
            trace,
            round: 0,
            limits,
            backend,
            failed_last_round: Vec::new(),
            latched: BTreeSet::new(),
            idle_rounds: 0,
            started: Instant::now(),
            finished: None,
        }
    }

    pub fn completion(&self) -> f64 {
        self.scenario.completion(&self.world, &self.latched)
    }

    pub fn finished(&self) -> Option<Termination> {
        self.finished
    }

    fn log_calls(&mut self, agent: Option<&str>, calls: Vec<CallRecord>) {
        for call in calls {
            self.trace.push(
                self.world.clock,
                Event::PlannerCall {
                    agent: agent.map(str::to_string),
                    call,
                },
            );
        }
    }

    fn agent_states(&self) -> String {
        self.agents
            .values()
            .map(|a| {
                let text = if a.state.text.trim().is_empty() {
                    "(no summary yet)"
                } else {
                    a.state.text.trim()
                };
                format!("{}: {}", a.id, text)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn existing_nodes(&self) -> String {
        let lines: Vec<String> = self
            .graph
            .nodes()
            .map(|n| format!("{} [{}] {}", n.id, n.status, n.description))
            .collect();
        or_none(&lines.join("\n"))
    }

    fn progress(&self) -> String {
        let c = self.completion();
        if c >= 1.0 {
            "goal complete".into()
        } else {
            format!("completion {c:.2}")
        }
    }

    /// Parses a plan and resolves every data path; either failure is a parse error.
    fn parse_plan(&self, text: &str) -> Result<(Vec<SubtaskSpec>, Vec<Value>), String> {
        let specs = parse_decomposition(text).map_err(|e| e.to_string())?;
        let mut data = Vec::with_capacity(specs.len());
        for s in &specs {
            data.push(resolve_refs(&s.data_refs, &self.document).map_err(|e| e.to_string())?);
        }
        Ok((specs, data))
    }

    /// One planner request, re-prompted once with the parse error appended.
    fn plan_with_retry(&mut self, base: PlannerRequest) -> Result<(Vec<SubtaskSpec>, Vec<Value>), String> {
        let mut calls = Vec::new();
        let mut last_error = String::new();
        for attempt in 0..2 {
            let req = if attempt == 0 {
                base.clone()
            } else {
                base.clone().slot("parse_error", last_error.as_str())
            };
            match planner::call(self.backend, &req, &mut calls) {
                Ok(reply) => match self.parse_plan(&reply.text) {
                    Ok(plan) => {
                        self.log_calls(None, calls);
                        return Ok(plan);
                    }
                    Err(e) => last_error = e,
                },
                Err(e) => last_error = e.to_string(),
            }
        }
        self.log_calls(None, calls);
        Err(last_error)
    }

    fn degenerate(&mut self, stage: &str, reason: String) {
        self.trace.push(
            self.world.clock,
            Event::Degenerate {
                round: self.round,
                stage: stage.into(),
                reason,
            },
        );
    }

    /// Decomposition step; returns the ids of the new nodes.
    pub fn decompose(&mut self, env: &str) -> Vec<NodeId> {
        let req = PlannerRequest::new(TemplateId::Decompose)
            .slot("goal", self.goal.as_str())
            .slot("environment", or_none(env))
            .slot("agent_states", self.agent_states())
            .slot("existing_nodes", self.existing_nodes())
            .slot("document", self.document.to_string())
            .slot("progress", self.progress());
        match self.plan_with_retry(req) {
            Ok((specs, data)) => self.append(specs, data, BTreeSet::new(), None),
            Err(e) => {
                self.degenerate("decompose", e);
                Vec::new()
            }
        }
    }

    fn append(
        &mut self,
        specs: Vec<SubtaskSpec>,
        data: Vec<Value>,
        seed_predecessors: BTreeSet<NodeId>,
        replaces: Option<NodeId>,
    ) -> Vec<NodeId> {
        if specs.is_empty() {
            return Vec::new();
        }
        let batch = Batch {
            round: self.round,
            data,
            seed_predecessors,
            replaces,
        };
        match self.graph.append(&specs, batch) {
            Ok(nodes) => {
                self.trace.push(
                    self.world.clock,
                    Event::Decomposition {
                        round: self.round,
                        specs,
                        nodes: nodes.clone(),
                        replaces,
                    },
                );
                nodes
            }
            Err(e) => {
                self.degenerate("append", e.to_string());
                Vec::new()
            }
        }
    }

    /// Replacement specs for a failed node. The first spec inherits the failed
    /// node's predecessors. Returns `None` when the planner reply was unusable.
    pub fn redecompose(&mut self, failed: NodeId, env: &str) -> Option<Vec<NodeId>> {
        let node = self.graph.node(failed)?.clone();
        let feedback = node.feedback.clone().filter(|f| !f.trim().is_empty())?;
        let req = PlannerRequest::new(TemplateId::Redecompose)
            .slot("goal", self.goal.as_str())
            .slot("environment", or_none(env))
            .slot("agent_states", self.agent_states())
            .slot("failed_task", node.description.as_str())
            .slot("feedback", feedback)
            .slot(
                "failed_data_paths",
                serde_json::to_string(&node.data_refs).expect("paths serialize"),
            )
            .slot("failed_agents", node.agents_required.to_string())
            .slot("existing_nodes", self.existing_nodes())
            .slot("document", self.document.to_string());
        match self.plan_with_retry(req) {
            Ok((specs, data)) => {
                let preds = self.graph.predecessors(failed);
                Some(self.append(specs, data, preds, Some(failed)))
            }
            Err(e) => {
                self.degenerate("redecompose", e);
                None
            }
        }
    }

    /// Pairs idle agents with ready nodes; unusable replies fall back to
    /// [`fallback_allocation`].
    pub fn allocate(&mut self, ready: &BTreeSet<NodeId>, env: &str) -> Allocation {
        let required: BTreeMap<NodeId, u32> = ready
            .iter()
            .filter_map(|&id| self.graph.node(id).map(|n| (id, n.agents_required.max(1))))
            .collect();
        let busy: BTreeSet<String> = self
            .graph
            .nodes()
            .filter(|n| n.status == Status::Running)
            .flat_map(|n| n.assigned.iter().cloned())
            .collect();
        let idle: BTreeSet<String> = self.agents.keys().filter(|a| !busy.contains(*a)).cloned().collect();
        let tasks: Vec<Value> = ready
            .iter()
            .filter_map(|&id| self.graph.node(id))
            .map(|n| {
                let requires: BTreeMap<String, u32> = self
                    .scenario
                    .requirements(&n.data)
                    .iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect();
                json!({"id": n.id, "description": n.description, "agents": n.agents_required, "requires": requires})
            })
            .collect();
        let agents: Vec<Value> = idle
            .iter()
            .map(|a| {
                let inv: BTreeMap<String, u32> = self
                    .world
                    .agents
                    .get(a)
                    .map(|b| b.inventory.iter().map(|(k, v)| (k.to_string(), v)).collect())
                    .unwrap_or_default();
                json!({"id": a, "inventory": inv})
            })
            .collect();
        let req = PlannerRequest::new(TemplateId::Allocate)
            .slot("environment", or_none(env))
            .slot("ready_tasks", Value::Array(tasks).to_string())
            .slot("agents", Value::Array(agents).to_string())
            .slot("agent_states", self.agent_states());
        let mut calls = Vec::new();
        let known: BTreeSet<String> = self.agents.keys().cloned().collect();
        let parsed = planner::call(self.backend, &req, &mut calls)
            .map_err(|e| e.to_string())
            .and_then(|r| parse_allocation(&r.text, &known, &required).map_err(|e| e.to_string()));
        self.log_calls(None, calls);
        match parsed {
            Ok(proposed) => {
                let (pairs, dropped) = validate_pairs(proposed, &required, &busy);
                Allocation {
                    pairs,
                    dropped,
                    fallback: false,
                }
            }
            Err(e) => {
                self.degenerate("allocate", e);
                Allocation {
                    pairs: fallback_allocation(&required, &idle),
                    dropped: Vec::new(),
                    fallback: true,
                }
            }
        }
    }

    fn dispatch(&mut self, pairs: &[(String, NodeId)], env: &str) -> Vec<(NodeId, ExecutionResult)> {
        let mut groups: BTreeMap<NodeId, Vec<String>> = BTreeMap::new();
        for (a, n) in pairs {
            groups.entry(*n).or_default().push(a.clone());
        }
        let mut jobs = Vec::new();
        for (&node_id, team) in &mut groups {
            team.sort();
            let assigned: BTreeSet<String> = team.iter().cloned().collect();
            if let Err(e) = self.graph.start(node_id, assigned) {
                self.degenerate("dispatch", e.to_string());
                continue;
            }
            let node = self.graph.node(node_id).expect("started").clone();
            let mut pred_agents = BTreeSet::new();
            for p in self.graph.predecessors(node_id) {
                if let Some(pn) = self.graph.node(p) {
                    pred_agents.extend(pn.assigned.iter().cloned());
                }
            }
            let predecessor_states: Vec<AgentStateSummary> = pred_agents
                .iter()
                .filter_map(|a| self.agents.get(a))
                .map(|a| a.state.clone())
                .filter(|s| !s.text.trim().is_empty())
                .collect();
            for (role, agent) in team.iter().enumerate() {
                let body = &self.world.agents[agent];
                jobs.push(Job {
                    profile: self.agents[agent].clone(),
                    node: node.clone(),
                    role,
                    team: team.clone(),
                    predecessor_states: predecessor_states.clone(),
                    start: AgentSnapshot::from(body),
                });
            }
        }
        let shared = SharedWorld::new(self.world.clone());
        let start_tick = self.world.clock;
        let budget = self.limits.exec;
        let backend = self.backend;
        let finished: Vec<(AgentProfile, NodeId, ExecutionResult)> = std::thread::scope(|s| {
            // every worker is enrolled before any of them can submit
            let enrolled: Vec<_> = jobs.into_iter().map(|j| (shared.enroll(&j.profile.id), j)).collect();
            let handles: Vec<_> = enrolled
                .into_iter()
                .map(|(mut port, mut job)| {
                    s.spawn(move || {
                        let ctx = ExecContext {
                            node: &job.node,
                            role: job.role,
                            team: job.team.clone(),
                            predecessor_states: job.predecessor_states.clone(),
                            env: env.to_string(),
                            start: job.start.clone(),
                            start_tick,
                            budget,
                        };
                        let result = execute(&mut job.profile, &ctx, backend, &mut port);
                        drop(port);
                        (job.profile, job.node.id, result)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("agent worker panicked"))
                .collect()
        });
        self.world = shared.into_inner();
        let mut out = Vec::new();
        for (profile, node, result) in finished {
            self.agents.insert(profile.id.clone(), profile);
            out.push((node, result));
        }
        out
    }

    fn record_executions(&mut self, results: &[(NodeId, ExecutionResult)]) {
        let mut actions: Vec<(&str, NodeId, _, _)> = Vec::new();
        for (node, r) in results {
            for (req, res) in &r.actions {
                actions.push((r.agent.as_str(), *node, req, res));
            }
        }
        actions.sort_by_key(|a| a.3.seq);
        for (agent, node, req, res) in actions {
            if let Some(snap) = &res.agent {
                self.scenario.latch(&mut self.latched, &snap.inventory);
            }
            self.trace.push(
                res.tick,
                Event::Action {
                    agent: agent.to_string(),
                    node,
                    request: req.clone(),
                    result: res.clone(),
                },
            );
        }
        for (node, r) in results {
            self.log_calls(Some(&r.agent), r.calls.clone());
            self.trace.push(
                self.world.clock,
                Event::ExecutionEnd {
                    agent: r.agent.clone(),
                    node: *node,
                    outcome: r.outcome,
                    claim: r.claim,
                    iterations: r.iterations,
                    feedback: r.feedback.clone(),
                    tokens: r.tokens,
                    budget_exhausted: r.budget_exhausted,
                },
            );
        }
    }

    /// Sets each dispatched node to succeeded or failed. Budget exhaustion
    /// fails the node; otherwise the world check decides, and the agents'
    /// claims decide only where the world has nothing to check.
    fn resolve(&mut self, results: &[(NodeId, ExecutionResult)]) -> (Vec<NodeId>, Vec<NodeId>) {
        let mut by_node: BTreeMap<NodeId, Vec<&ExecutionResult>> = BTreeMap::new();
        for (n, r) in results {
            by_node.entry(*n).or_default().push(r);
        }
        let (mut completed, mut failed) = (Vec::new(), Vec::new());
        for (node, rs) in by_node {
            let exhausted = rs.iter().any(|r| r.budget_exhausted);
            let data = self.graph.node(node).map(|n| n.data.clone()).unwrap_or(Value::Null);
            let verified = self.scenario.verify_node(&data, &self.world);
            let claimed = rs.iter().all(|r| r.outcome == Outcome::Succeeded);
            let ok = !exhausted && verified.unwrap_or(claimed);
            let mut feedback: Vec<String> = rs.iter().map(|r| format!("{}: {}", r.agent, r.feedback)).collect();
            if verified == Some(false) && claimed {
                feedback.push("world check: the expected end state is not present".into());
            }
            let feedback = feedback.join("\n");
            let status = if ok { Status::Succeeded } else { Status::Failed };
            if let Err(e) = self.graph.mark_status(node, status, Some(feedback.clone())) {
                self.degenerate("resolve", e.to_string());
                continue;
            }
            self.trace.push(
                self.world.clock,
                Event::NodeResolved {
                    node,
                    status,
                    feedback,
                    verified,
                },
            );
            if ok {
                completed.push(node);
            } else {
                failed.push(node);
            }
        }
        (completed, failed)
    }

    fn update_states(&mut self, executed: &BTreeSet<String>) {
        for id in executed {
            let profile = self.agents[id].clone();
            let mut calls = Vec::new();
            let update = update_agent_state(
                self.backend,
                &profile.state,
                &profile.history,
                self.round,
                self.limits.summary_cap,
                &mut calls,
            );
            self.log_calls(Some(id), calls);
            self.trace.push(
                self.world.clock,
                Event::StateUpdate {
                    agent: id.clone(),
                    old_len: profile.state.text.len(),
                    new_len: update.summary.text.len(),
                    truncated: update.truncated,
                },
            );
            if let Some(w) = update.warning {
                self.trace.push(self.world.clock, Event::Warning { message: w });
            }
            self.agents.get_mut(id).expect("known agent").state = update.summary;
        }
    }

    pub fn run_round(&mut self) -> RoundReport {
        let wall = Instant::now();
        let tick0 = self.world.clock;
        self.round += 1;
        self.trace
            .push(self.world.clock, Event::RoundStart { round: self.round });

        let mut calls = Vec::new();
        let env = retrieve_env(self.backend, &self.goal, &global_env(&self.world), &mut calls);
        self.log_calls(None, calls);

        let mut new_nodes = self.decompose(&env).len();
        let mut still_failed = Vec::new();
        for f in std::mem::take(&mut self.failed_last_round) {
            match self.redecompose(f, &env) {
                Some(ids) => new_nodes += ids.len(),
                None => still_failed.push(f),
            }
        }

        let executed = self.graph.executed();
        let pending = self.graph.with_status(Status::Pending);
        let ready = ready_set(&self.graph, &executed, &pending).unwrap_or_default();
        let allocation = if ready.is_empty() {
            Allocation::default()
        } else {
            let a = self.allocate(&ready, &env);
            self.trace.push(
                self.world.clock,
                Event::Allocation {
                    round: self.round,
                    ready: ready.iter().copied().collect(),
                    pairs: a.pairs.clone(),
                    dropped: a.dropped.clone(),
                    fallback: a.fallback,
                },
            );
            a
        };

        let results = if allocation.pairs.is_empty() {
            Vec::new()
        } else {
            self.dispatch(&allocation.pairs, &env)
        };
        self.record_executions(&results);
        let (completed, failed) = self.resolve(&results);
        let ran: BTreeSet<String> = results.iter().map(|(_, r)| r.agent.clone()).collect();
        self.update_states(&ran);

        self.world.tick(1).expect("positive tick");
        self.trace.push(self.world.clock, Event::WorldTick { n: 1 });

        still_failed.extend(failed.iter().copied());
        self.failed_last_round = still_failed;
        let dispatched: Vec<(String, NodeId)> = results.iter().map(|(n, r)| (r.agent.clone(), *n)).collect();
        if new_nodes == 0 && dispatched.is_empty() {
            self.idle_rounds += 1;
        } else {
            self.idle_rounds = 0;
        }
        let report = RoundReport {
            round: self.round,
            new_nodes,
            dispatched,
            completed,
            failed,
            sim_ticks: self.world.clock - tick0,
            wall_secs: wall.elapsed().as_secs_f64(),
        };
        self.trace
            .push(self.world.clock, Event::RoundEnd { report: report.clone() });
        report
    }

    fn termination(&self) -> Option<Termination> {
        if self.completion() >= 1.0 {
            return Some(Termination::Success);
        }
        if self.round >= self.limits.max_rounds {
            return Some(Termination::MaxRounds);
        }
        let ticks_out = self.limits.tick_budget.is_some_and(|b| self.world.clock >= b);
        let wall_out = self.limits.wall_budget.is_some_and(|b| self.started.elapsed() >= b);
        if ticks_out || wall_out {
            return Some(Termination::Budget);
        }
        if self.idle_rounds >= STALL_ROUNDS && self.failed_last_round.is_empty() {
            return Some(Termination::Stalled);
        }
        None
    }

    fn finish(&mut self, reason: Termination) {
        let completion = self.completion();
        self.trace.push(
            self.world.clock,
            Event::EpisodeEnd {
                reason,
                completion,
                rounds: self.round,
                world_digest: crate::trace::world_digest(&self.world),
            },
        );
        self.finished = Some(reason);
    }

    /// Runs rounds until termination, flushing the trace after each round and
    /// handing every report to `on_round`.
    pub fn run(&mut self, mut on_round: impl FnMut(&Session<'b>, &RoundReport)) -> io::Result<Termination> {
        if let Some(t) = self.finished {
            return Ok(t);
        }
        loop {
            if let Some(t) = self.termination() {
                self.finish(t);
                self.trace.flush()?;
                return Ok(t);
            }
            let report = self.run_round();
            self.trace.flush()?;
            on_round(self, &report);
        }
    }
}
