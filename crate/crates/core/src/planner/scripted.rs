//! Deterministic planner: every reply is a pure function of the request slots.
//!
//! Decomposition reads the task document, allocation prefers agents already
//! holding what a task needs, and the ReAct policy replays a fixed plan derived
//! from the node payload and the agent's state when the subtask started.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use dagcrew_worldsim::{escape::RoomSpec, Atom, ItemBag, Pos};

use super::{
    estimate_tokens, render_decomposition, PlannerBackend, PlannerError, PlannerReply, PlannerRequest, TemplateId,
    TokenUsage,
};
use crate::taskgraph::SubtaskSpec;

/// Cells placed per construction subtask; keeps each node inside six ReAct steps.
pub const CELLS_PER_NODE: usize = 2;
/// Facts kept in a folded agent summary.
pub const SUMMARY_FACTS: usize = 8;

const PLACE_RANGE: u32 = 4;
const USE_RANGE: u32 = 3;

#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedPlanner;

impl ScriptedPlanner {
    pub fn new() -> Self {
        Self
    }

    pub fn reply_text(&self, req: &PlannerRequest) -> String {
        let slot = |n: &str| req.get(n).unwrap_or("");
        match req.template {
            TemplateId::Decompose => decompose(slot("document"), slot("existing_nodes"), slot("progress")),
            TemplateId::Redecompose => {
                redecompose(slot("failed_task"), slot("failed_data_paths"), slot("failed_agents"))
            }
            TemplateId::Allocate => allocate(slot("ready_tasks"), slot("agents")),
            TemplateId::AgentStateUpdate => fold_summary(slot("agent"), slot("summary"), slot("history")),
            TemplateId::EnvRetrieve => filter_env(slot("goal"), slot("observations")),
            TemplateId::React => react(req),
            TemplateId::Reflect => digest(slot("task"), slot("history"), slot("claim")),
        }
    }
}

impl PlannerBackend for ScriptedPlanner {
    fn complete(&self, request: &PlannerRequest) -> Result<PlannerReply, PlannerError> {
        let text = self.reply_text(request);
        let prompt: String = request.render().into_iter().map(|m| m.content).collect();
        let usage = TokenUsage {
            prompt_tokens: estimate_tokens(&prompt),
            completion_tokens: estimate_tokens(&text),
        };
        if usage.completion_tokens > request.budget as u64 {
            let partial: String = text.chars().take(request.budget as usize * 4).collect();
            return Err(PlannerError::Truncated {
                usage: TokenUsage {
                    completion_tokens: request.budget as u64,
                    ..usage
                },
                partial,
            });
        }
        Ok(PlannerReply { text, usage })
    }
}

fn is_none(slot: &str) -> bool {
    let s = slot.trim();
    s.is_empty() || s == "(none)"
}

fn wrap_plan(specs: &[SubtaskSpec]) -> String {
    format!(
        "Subtasks in dependency order:\n```json\n{}\n```",
        render_decomposition(specs)
    )
}

fn decompose(document: &str, existing: &str, progress: &str) -> String {
    if !is_none(existing) || progress.trim_start().starts_with("goal complete") {
        return "Nothing new to plan.\n```json\n[]\n```".to_string();
    }
    let Ok(doc) = serde_json::from_str::<Value>(document) else {
        return "[]".to_string();
    };
    let specs = if doc.get("cells").is_some() {
        construction_plan(&doc)
    } else if doc.get("steps").is_some() {
        cooking_plan(&doc)
    } else if doc.get("rooms").is_some() {
        escape_plan(&doc)
    } else {
        Vec::new()
    };
    wrap_plan(&specs)
}

fn construction_plan(doc: &Value) -> Vec<SubtaskSpec> {
    let cells = doc["cells"].as_array().cloned().unwrap_or_default();
    // (layer y, cell indices) in document order, which is already bottom-up
    let mut layers: Vec<(i64, Vec<usize>)> = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        let y = c["position"][1].as_i64().unwrap_or(0);
        match layers.last_mut() {
            Some((ly, idx)) if *ly == y => idx.push(i),
            _ => layers.push((y, vec![i])),
        }
    }
    let mut specs = Vec::new();
    let mut previous_layer: Vec<usize> = Vec::new();
    for (_, idx) in layers {
        let mut chunks: Vec<Vec<usize>> = Vec::new();
        for i in idx {
            let material = &cells[i]["material"];
            match chunks.last_mut() {
                Some(ch) if ch.len() < CELLS_PER_NODE && &cells[ch[0]]["material"] == material => ch.push(i),
                _ => chunks.push(vec![i]),
            }
        }
        let mut this_layer = Vec::new();
        for (k, ch) in chunks.iter().enumerate() {
            let material = cells[ch[0]]["material"].as_str().unwrap_or("block");
            let at: Vec<String> = ch.iter().map(|&i| compact(&cells[i]["position"])).collect();
            let mut refs: Vec<String> = ch.iter().map(|i| format!("$.cells[{i}]")).collect();
            refs.push("$.chest".into());
            let preds = if k == 0 { previous_layer.clone() } else { Vec::new() };
            specs.push(SubtaskSpec {
                description: format!("Place {} {material} at {}", ch.len(), at.join(" and ")),
                predecessor_indices: preds,
                data_refs: refs,
                agents: 1,
            });
            this_layer.push(specs.len());
        }
        previous_layer = this_layer;
    }
    specs
}

fn cooking_plan(doc: &Value) -> Vec<SubtaskSpec> {
    let steps = doc["steps"].as_array().cloned().unwrap_or_default();
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| SubtaskSpec {
            description: s["description"].as_str().unwrap_or("cooking step").to_string(),
            predecessor_indices: s["predecessors"]
                .as_array()
                .map(|a| a.iter().filter_map(|v| v.as_u64()).map(|v| v as usize).collect())
                .unwrap_or_default(),
            data_refs: vec![format!("$.steps[{i}]")],
            agents: s["agents"].as_u64().unwrap_or(1).max(1) as u32,
        })
        .collect()
}

fn escape_plan(doc: &Value) -> Vec<SubtaskSpec> {
    let rooms: Vec<RoomSpec> = serde_json::from_value(doc["rooms"].clone()).unwrap_or_default();
    rooms
        .iter()
        .enumerate()
        .map(|(i, r)| SubtaskSpec {
            description: format!("Room {}: {}", i + 1, r.hint),
            predecessor_indices: if i == 0 { Vec::new() } else { vec![i] },
            data_refs: vec![format!("$.rooms[{i}]")],
            agents: r.atom.actors() as u32,
        })
        .collect()
}

fn compact(v: &Value) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn redecompose(task: &str, refs: &str, agents: &str) -> String {
    let refs: Vec<String> = serde_json::from_str(refs).unwrap_or_default();
    let agents = agents.trim().parse::<u32>().unwrap_or(1).max(1);
    let cells: Vec<String> = refs.iter().filter(|r| r.starts_with("$.cells")).cloned().collect();
    let fetch_only = refs.first().is_some_and(|r| r == "$.chest");
    let specs = if !cells.is_empty() && !fetch_only {
        let mut fetch = vec!["$.chest".to_string()];
        fetch.extend(cells.iter().cloned());
        vec![
            SubtaskSpec {
                description: format!("Fetch the materials for: {task}"),
                predecessor_indices: Vec::new(),
                data_refs: fetch,
                agents: 1,
            },
            SubtaskSpec {
                description: format!("Retry: {task}"),
                predecessor_indices: vec![1],
                data_refs: refs,
                agents: 1,
            },
        ]
    } else {
        vec![SubtaskSpec {
            description: format!("Retry: {task}"),
            predecessor_indices: Vec::new(),
            data_refs: refs,
            agents,
        }]
    };
    wrap_plan(&specs)
}

fn bag_of(v: &Value) -> ItemBag {
    serde_json::from_value(v.clone()).unwrap_or_default()
}

fn allocate(ready: &str, agents: &str) -> String {
    let ready: Vec<Value> = serde_json::from_str(ready).unwrap_or_default();
    let agents: Vec<Value> = serde_json::from_str(agents).unwrap_or_default();
    let mut idle: BTreeMap<String, ItemBag> = agents
        .iter()
        .filter_map(|a| Some((a["id"].as_str()?.to_string(), bag_of(&a["inventory"]))))
        .collect();
    let mut tasks: Vec<&Value> = ready.iter().collect();
    tasks.sort_by_key(|t| t["id"].as_u64().unwrap_or(u64::MAX));
    let mut pairs = Vec::new();
    for t in tasks {
        let Some(id) = t["id"].as_u64() else { continue };
        let need = t["agents"].as_u64().unwrap_or(1).max(1) as usize;
        if idle.len() < need {
            continue;
        }
        let requires = bag_of(&t["requires"]);
        let mut ranked: Vec<(u32, &String)> = idle
            .iter()
            .map(|(a, inv)| (requires.iter().map(|(k, n)| inv.count(k).min(n)).sum(), a))
            .collect();
        ranked.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(y.1)));
        let chosen: Vec<String> = ranked.iter().take(need).map(|(_, a)| (*a).clone()).collect();
        for a in chosen {
            idle.remove(&a);
            pairs.push(json!({"agent": a, "task": id}));
        }
    }
    format!("Assignments:\n{}", Value::Array(pairs))
}

/// Summary layout: header with the last folded tick, position, inventory, then facts.
fn fold_summary(agent: &str, old: &str, history: &str) -> String {
    let mut since = 0u64;
    let mut position = String::from("unknown");
    let mut inventory = String::from("empty");
    let mut facts: Vec<String> = Vec::new();
    for line in old.lines() {
        if let Some(rest) = line.split(" as of tick ").nth(1) {
            since = rest.trim().parse().unwrap_or(0);
        } else if let Some(p) = line.strip_prefix("position: ") {
            position = p.to_string();
        } else if let Some(i) = line.strip_prefix("inventory: ") {
            inventory = i.to_string();
        } else if let Some(f) = line.strip_prefix("- ") {
            facts.push(f.to_string());
        }
    }
    let records: Vec<Value> = serde_json::from_str(history).unwrap_or_default();
    let mut latest = since;
    for r in &records {
        let tick = r["tick"].as_u64().unwrap_or(0);
        if tick <= since {
            continue;
        }
        latest = latest.max(tick);
        let accepted = r["accepted"].as_bool().unwrap_or(false);
        let obs = r["observation"].as_str().unwrap_or("");
        let (what, inv) = match obs.split_once(". Inventory: ") {
            Some((w, i)) => (w, Some(i)),
            None => (obs, None),
        };
        if accepted {
            if r["kind"] == "navigateTo" {
                if let Some(args) = r["args"].as_array() {
                    let xyz: Vec<String> = args.iter().take(3).map(|a| a.to_string()).collect();
                    position = format!("[{}]", xyz.join(", "));
                }
            }
            if let Some(i) = inv {
                inventory = i.to_string();
            }
            facts.push(format!("tick {tick}: {what}"));
        } else {
            facts.push(format!("tick {tick}: {what}"));
        }
    }
    let skip = facts.len().saturating_sub(SUMMARY_FACTS);
    let mut out = format!("{agent} as of tick {latest}\nposition: {position}\ninventory: {inventory}\n");
    for f in &facts[skip..] {
        out.push_str(&format!("- {f}\n"));
    }
    out
}

const STATIONS: &[&str] = &["crafting_table", "furnace", "chest"];
const HARVESTABLE: &[&str] = &["carrots", "potatoes", "brown_mushroom", "sugar_cane", "wheat"];

/// Keeps observation lines that bear on the goal; drops unrelated scenery.
fn filter_env(goal: &str, observations: &str) -> String {
    let goal = goal.to_ascii_lowercase();
    let mut kept = Vec::new();
    for line in observations.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let mut words = line.split_whitespace();
        let kind = words.next().unwrap_or("");
        let subject = words.next().unwrap_or("");
        let keep = match kind {
            "block" => {
                line.contains("(placed)")
                    || STATIONS.contains(&subject)
                    || HARVESTABLE.contains(&subject)
                    || goal.contains(subject)
            }
            _ => true,
        };
        if keep {
            kept.push(line);
        }
    }
    kept.join("\n")
}

/// One planned action in call syntax.
type Step = String;

fn call(name: &str, args: &[String]) -> Step {
    format!("{name}({})", args.join(", "))
}

fn xyz(p: Pos) -> [String; 3] {
    [p.x.to_string(), p.y.to_string(), p.z.to_string()]
}

fn nav(p: Pos) -> Step {
    call("navigateTo", &xyz(p))
}

fn pos_of(v: &Value) -> Option<Pos> {
    serde_json::from_value(v.clone()).ok()
}

/// Agent state the plan is derived from.
struct Start {
    pos: Pos,
    inv: ItemBag,
}

fn react(req: &PlannerRequest) -> String {
    let slot = |n: &str| req.get(n).unwrap_or("");
    let state: Value = serde_json::from_str(slot("self_state")).unwrap_or(Value::Null);
    let start = Start {
        pos: pos_of(&state["position"]).unwrap_or(Pos::new(0, 0, 0)),
        inv: bag_of(&state["inventory"]),
    };
    let data: Value = serde_json::from_str(slot("task_data")).unwrap_or(Value::Null);
    let role = slot("role").trim().parse::<usize>().unwrap_or(0);
    let team: Vec<String> = serde_json::from_str(slot("team")).unwrap_or_default();
    let plan = plan_for(&data, start, role, &team);
    let scratch = slot("scratchpad");
    let done = scratch.lines().filter(|l| l.starts_with("Action:")).count();
    match plan.get(done) {
        Some(step) => format!("Thought: step {} of {}.\nAction: {step}", done + 1, plan.len()),
        None => {
            let rejected = scratch
                .lines()
                .any(|l| l.starts_with("Observation:") && (l.contains(" rejected: ") || l.contains("could not parse")));
            if rejected {
                "Thought: some actions were rejected.\nFinish[failed]".into()
            } else {
                "Thought: the subtask is done.\nFinish[succeeded]".into()
            }
        }
    }
}

fn plan_for(data: &Value, start: Start, role: usize, team: &[String]) -> Vec<Step> {
    let items = data.as_array().cloned().unwrap_or_default();
    if items.iter().any(|v| v.get("material").is_some()) {
        construction_steps(&items, start)
    } else if let Some(step) = items.iter().find(|v| v.get("ops").is_some()) {
        cooking_steps(step, start)
    } else if let Some(room) = items
        .iter()
        .find_map(|v| serde_json::from_value::<RoomSpec>(v.clone()).ok())
    {
        escape_steps(&room, start, role, team)
    } else {
        Vec::new()
    }
}

fn construction_steps(items: &[Value], start: Start) -> Vec<Step> {
    let fetch_only = items.first().is_some_and(|v| v.get("stand").is_some());
    let chest = items.iter().find(|v| v.get("stand").is_some());
    let cells: Vec<&Value> = items.iter().filter(|v| v.get("material").is_some()).collect();
    let mut cur = start.pos;
    let mut steps = Vec::new();
    let mut need: Vec<(String, u32)> = Vec::new();
    for c in &cells {
        let m = c["material"].as_str().unwrap_or("").to_string();
        match need.iter_mut().find(|(k, _)| *k == m) {
            Some((_, n)) => *n += 1,
            None => need.push((m, 1)),
        }
    }
    if let Some(chest) = chest {
        let (Some(at), Some(stand)) = (pos_of(&chest["at"]), pos_of(&chest["stand"])) else {
            return steps;
        };
        for (m, n) in &need {
            let missing = n.saturating_sub(start.inv.count(m));
            if missing == 0 {
                continue;
            }
            if cur.reach(at) > USE_RANGE {
                steps.push(nav(stand));
                cur = stand;
            }
            let [x, y, z] = xyz(at);
            steps.push(call("withdrawItem", &[x, y, z, m.clone(), missing.to_string()]));
        }
    }
    if fetch_only {
        return steps;
    }
    let ground = chest.and_then(|c| pos_of(&c["at"])).map_or(cur.y, |p| p.y);
    for c in cells {
        let Some(p) = pos_of(&c["position"]) else { continue };
        if cur.reach(p) > PLACE_RANGE {
            let stand = Pos::new(p.x, ground, p.z - 2);
            steps.push(nav(stand));
            cur = stand;
        }
        let token = |v: &Value| match v.as_str() {
            Some("none") | None => "None".to_string(),
            Some(s) => s.to_string(),
        };
        let [x, y, z] = xyz(p);
        steps.push(call(
            "placeBlock",
            &[
                c["material"].as_str().unwrap_or("").to_string(),
                x,
                y,
                z,
                token(&c["facing"]),
                token(&c["axis"]),
            ],
        ));
    }
    steps
}

fn cooking_steps(step: &Value, start: Start) -> Vec<Step> {
    let mut cur = start.pos;
    let mut inv = start.inv;
    let mut steps = Vec::new();
    for op in step["ops"].as_array().cloned().unwrap_or_default() {
        let kind = op["op"].as_str().unwrap_or("");
        let item = op["item"].as_str().unwrap_or("").to_string();
        let count = op["count"].as_u64().unwrap_or(1) as u32;
        let at = pos_of(&op["at"]);
        if let (Some(at), Some(stand)) = (at, pos_of(&op["stand"])) {
            let range = if kind == "mine" { PLACE_RANGE } else { USE_RANGE };
            if cur.reach(at) > range {
                steps.push(nav(stand));
                cur = stand;
            }
        }
        let here = at.map(xyz);
        match (kind, here) {
            ("withdraw", Some([x, y, z])) => {
                steps.push(call("withdrawItem", &[x, y, z, item.clone(), count.to_string()]));
                inv.add(&item, count);
            }
            ("store", Some([x, y, z])) => {
                steps.push(call("storeItem", &[x, y, z, item.clone(), count.to_string()]));
                inv.take(&item, count);
            }
            ("gather", Some([x, y, z])) => {
                for it in op["items"].as_array().cloned().unwrap_or_default() {
                    let name = it["name"].as_str().unwrap_or("").to_string();
                    let want = it["count"].as_u64().unwrap_or(1) as u32;
                    let missing = want.saturating_sub(inv.count(&name));
                    if missing > 0 {
                        steps.push(call(
                            "withdrawItem",
                            &[x.clone(), y.clone(), z.clone(), name.clone(), missing.to_string()],
                        ));
                        inv.add(&name, missing);
                    }
                }
            }
            ("smelt", _) => steps.push(call("SmeltingCooking", &[item.clone(), count.to_string()])),
            ("craft", _) => steps.push(call("craftBlock", &[item.clone(), count.to_string()])),
            ("attack", _) => steps.push(call("attackTarget", &[op["entity"].as_str().unwrap_or("").into()])),
            ("use", _) => steps.push(call(
                "UseItemOnEntity",
                &[item.clone(), op["entity"].as_str().unwrap_or("").into()],
            )),
            ("mine", Some([x, y, z])) => steps.push(call("MineBlock", &[x, y, z])),
            _ => {}
        }
    }
    steps
}

fn escape_steps(room: &RoomSpec, start: Start, role: usize, team: &[String]) -> Vec<Step> {
    let c = room.center;
    let mut cur = start.pos;
    let mut steps = Vec::new();
    let go = |steps: &mut Vec<Step>, cur: &mut Pos, target: Pos, stand: Pos, range: u32| {
        if cur.reach(target) > range {
            steps.push(nav(stand));
            *cur = stand;
        }
    };
    let toggle = |p: Pos| call("ToggleAction", &xyz(p));
    match &room.atom {
        Atom::SimultaneousPlates { plates } => {
            if let Some(&p) = plates.get(role) {
                steps.push(nav(p));
                steps.push(toggle(p));
            }
        }
        Atom::LeverSequence { levers } => {
            let mid = levers[levers.len() / 2].offset(0, 0, 1);
            if levers.iter().any(|&l| cur.reach(l) > USE_RANGE) {
                steps.push(nav(mid));
            }
            steps.extend(levers.iter().map(|&l| toggle(l)));
        }
        Atom::FetchAndPlace { item, chest, target } => {
            go(&mut steps, &mut cur, *chest, chest.offset(-1, 0, 0), USE_RANGE);
            let [x, y, z] = xyz(*chest);
            steps.push(call("withdrawItem", &[x, y, z, item.clone(), "1".into()]));
            go(&mut steps, &mut cur, *target, target.offset(0, 0, -1), PLACE_RANGE);
            let [x, y, z] = xyz(*target);
            steps.push(call("placeBlock", &[item.clone(), x, y, z]));
        }
        Atom::HandoverRelay { item, chest } => {
            if role == 0 {
                steps.push(nav(chest.offset(1, 0, 0)));
                let [x, y, z] = xyz(*chest);
                steps.push(call("withdrawItem", &[x, y, z, item.clone(), "1".into()]));
                if let Some(partner) = team.get(1) {
                    steps.push(call("handoverBlock", &[partner.clone(), item.clone(), "1".into()]));
                }
            } else {
                steps.push(nav(chest.offset(1, 0, -1)));
            }
        }
        Atom::ButtonHold { plate, button } => {
            steps.push(nav(*plate));
            steps.push(toggle(*plate));
            steps.push(toggle(*button));
        }
        Atom::BarrierMining { blocks, .. } => {
            let stand = c.offset(0, 0, -2);
            if blocks.iter().any(|&b| cur.reach(b) > PLACE_RANGE) {
                steps.push(nav(stand));
            }
            steps.extend(blocks.iter().map(|&b| call("MineBlock", &xyz(b))));
        }
    }
    steps
}

/// Feedback digest: what was done, how it ended, what the agent claims.
fn digest(task: &str, history: &str, claim: &str) -> String {
    let lines: Vec<&str> = history.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if is_none(history) || lines.is_empty() {
        return format!("No actions were taken for '{task}'.");
    }
    let rejected: BTreeSet<&str> = lines.iter().copied().filter(|l| l.contains(" rejected: ")).collect();
    let last = lines.last().copied().unwrap_or("");
    let mut out = format!("{} action(s) taken for '{task}'. Last: {last}.", lines.len());
    if !rejected.is_empty() {
        out.push_str(&format!(" {} action(s) were rejected.", rejected.len()));
    }
    let claim = if is_none(claim) { "no claim" } else { claim.trim() };
    out.push_str(&format!(" Claimed outcome: {claim}."));
    out
}
