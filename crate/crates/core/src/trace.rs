//! Append-only episode trace, one JSON record per line.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dagcrew_worldsim::{ActionKind, ActionRequest, ActionResult, WorldState};

use crate::agent::Outcome;
use crate::planner::{CallRecord, TokenUsage};
use crate::scenario::ScenarioSpec;
use crate::taskgraph::{NodeId, Status, SubtaskSpec};

pub const TRACE_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentEntry {
    pub id: String,
    pub capabilities: BTreeSet<ActionKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub agent: String,
    pub node: NodeId,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    MaxRounds,
    Budget,
    Stalled,
}

impl Termination {
    pub fn name(self) -> &'static str {
        match self {
            Termination::Success => "success",
            Termination::MaxRounds => "max_rounds",
            Termination::Budget => "budget",
            Termination::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub new_nodes: usize,
    pub dispatched: Vec<(String, NodeId)>,
    pub completed: Vec<NodeId>,
    pub failed: Vec<NodeId>,
    pub sim_ticks: u64,
    /// Not persisted, so scripted traces stay byte-identical.
    #[serde(skip)]
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    EpisodeStart {
        schema: u32,
        scenario: ScenarioSpec,
        seed: u64,
        agents: Vec<AgentEntry>,
        goal: String,
    },
    RoundStart {
        round: u32,
    },
    Decomposition {
        round: u32,
        specs: Vec<SubtaskSpec>,
        nodes: Vec<NodeId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        replaces: Option<NodeId>,
    },
    PlannerCall {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agent: Option<String>,
        call: CallRecord,
    },
    Degenerate {
        round: u32,
        stage: String,
        reason: String,
    },
    Allocation {
        round: u32,
        ready: Vec<NodeId>,
        pairs: Vec<(String, NodeId)>,
        dropped: Vec<DroppedPair>,
        fallback: bool,
    },
    Action {
        agent: String,
        node: NodeId,
        request: ActionRequest,
        result: ActionResult,
    },
    ExecutionEnd {
        agent: String,
        node: NodeId,
        outcome: Outcome,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        claim: Option<bool>,
        iterations: u32,
        feedback: String,
        tokens: TokenUsage,
        budget_exhausted: bool,
    },
    NodeResolved {
        node: NodeId,
        status: Status,
        feedback: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        verified: Option<bool>,
    },
    StateUpdate {
        agent: String,
        old_len: usize,
        new_len: usize,
        truncated: bool,
    },
    Warning {
        message: String,
    },
    WorldTick {
        n: u64,
    },
    RoundEnd {
        report: RoundReport,
    },
    EpisodeEnd {
        reason: Termination,
        completion: f64,
        rounds: u32,
        world_digest: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub tick: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug)]
struct Sink {
    path: PathBuf,
    flushed: usize,
}

/// Ordered records; ticks never decrease.
#[derive(Debug, Default)]
pub struct EpisodeTrace {
    records: Vec<TraceRecord>,
    sink: Option<Sink>,
}

/// Hex SHA-256 of the world's JSON form.
pub fn world_digest(world: &WorldState) -> String {
    let json = serde_json::to_string(world).expect("world serializes");
    format!("{:x}", Sha256::digest(json.as_bytes()))
}

impl EpisodeTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Persists to `path`, truncating any earlier file; records are written on `flush`.
    pub fn with_file(path: &Path) -> io::Result<Self> {
        File::create(path)?;
        Ok(Self {
            records: Vec::new(),
            sink: Some(Sink {
                path: path.to_path_buf(),
                flushed: 0,
            }),
        })
    }

    pub fn push(&mut self, tick: u64, event: Event) {
        let last = self.records.last().map_or(0, |r| r.tick);
        let seq = self.records.len() as u64;
        self.records.push(TraceRecord {
            seq,
            tick: tick.max(last),
            event,
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends unwritten records to the file, if any.
    pub fn flush(&mut self) -> io::Result<()> {
        let Some(sink) = &mut self.sink else {
            return Ok(());
        };
        let mut f = OpenOptions::new().append(true).open(&sink.path)?;
        for r in &self.records[sink.flushed..] {
            writeln!(f, "{}", serde_json::to_string(r).expect("record serializes"))?;
        }
        sink.flushed = self.records.len();
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl(text: &str) -> Result<Vec<TraceRecord>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }
}
