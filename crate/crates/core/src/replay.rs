//! Rebuilds the world of a recorded episode by re-applying its actions.

use std::collections::BTreeSet;

use thiserror::Error;

use dagcrew_worldsim::{ActionKind, ActionResult, WorldState};

use crate::scenario::{Scenario, ScenarioError};
use crate::trace::{world_digest, Event, TraceRecord};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace does not begin with episode_start")]
    MissingStart,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("record {seq}: replayed result differs from the recorded one")]
    Diverged {
        seq: u64,
        recorded: Box<ActionResult>,
        replayed: Box<ActionResult>,
    },
    #[error("record {seq}: world tick of zero")]
    ZeroTick { seq: u64 },
    #[error("final world digest {replayed} does not match recorded {recorded}")]
    Digest { recorded: String, replayed: String },
}

/// Step-by-step replay cursor over a parsed trace.
pub struct Replay {
    records: Vec<TraceRecord>,
    cursor: usize,
    world: WorldState,
    pub scenario: Scenario,
}

impl Replay {
    pub fn new(records: Vec<TraceRecord>) -> Result<Self, ReplayError> {
        let Some(Event::EpisodeStart {
            scenario, seed, agents, ..
        }) = records.first().map(|r| &r.event)
        else {
            return Err(ReplayError::MissingStart);
        };
        let scenario = Scenario::from_spec(scenario)?;
        let agents: Vec<(String, BTreeSet<ActionKind>)> =
            agents.iter().map(|a| (a.id.clone(), a.capabilities.clone())).collect();
        let world = scenario.build_world(&agents, *seed);
        Ok(Self {
            records,
            cursor: 1,
            world,
            scenario,
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    /// Applies the next record, if any, and returns it. Only actions and world
    /// ticks touch the world; an episode end checks the digest.
    pub fn apply_next(&mut self) -> Result<Option<&TraceRecord>, ReplayError> {
        let Some(rec) = self.records.get(self.cursor) else {
            return Ok(None);
        };
        self.cursor += 1;
        match &rec.event {
            Event::Action { request, result, .. } => {
                let got = self.world.apply_action(request);
                if &got != result {
                    return Err(ReplayError::Diverged {
                        seq: rec.seq,
                        recorded: Box::new(result.clone()),
                        replayed: Box::new(got),
                    });
                }
            }
            Event::WorldTick { n } => {
                self.world
                    .tick(*n)
                    .map_err(|_| ReplayError::ZeroTick { seq: rec.seq })?;
            }
            Event::EpisodeEnd { world_digest: d, .. } => {
                let replayed = world_digest(&self.world);
                if &replayed != d {
                    return Err(ReplayError::Digest {
                        recorded: d.clone(),
                        replayed,
                    });
                }
            }
            _ => {}
        }
        Ok(Some(rec))
    }

    /// Applies every remaining record and returns the final world.
    pub fn finish(mut self) -> Result<WorldState, ReplayError> {
        while self.apply_next()?.is_some() {}
        Ok(self.world)
    }
}

pub fn replay(records: Vec<TraceRecord>) -> Result<WorldState, ReplayError> {
    Replay::new(records)?.finish()
}
