//! Serialization point for concurrent agent workers.
//!
//! Workers are enrolled on the control thread before they start. A submitted
//! request blocks until every enrolled worker is either waiting on a request
//! of its own or has left; then the pending request with the smallest
//! (submission tick, agent id) is applied. The apply order is therefore a
//! function of the requests alone, not of thread timing.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Condvar, Mutex, MutexGuard};

use crate::world::{ActionRequest, ActionResult, WorldState};

struct Gate {
    world: WorldState,
    active: BTreeSet<String>,
    pending: BTreeMap<String, ActionRequest>,
    done: BTreeMap<String, ActionResult>,
}

impl Gate {
    fn drain(&mut self) -> bool {
        let mut applied = false;
        while !self.pending.is_empty() && self.pending.len() == self.active.len() {
            let agent = self
                .pending
                .iter()
                .min_by(|a, b| (a.1.tick, a.0).cmp(&(b.1.tick, b.0)))
                .map(|(k, _)| k.clone())
                .expect("non-empty");
            let req = self.pending.remove(&agent).expect("present");
            let result = self.world.apply_action(&req);
            self.done.insert(agent, result);
            applied = true;
        }
        applied
    }
}

pub struct SharedWorld {
    gate: Mutex<Gate>,
    cv: Condvar,
}

impl SharedWorld {
    pub fn new(world: WorldState) -> Self {
        Self {
            gate: Mutex::new(Gate {
                world,
                active: BTreeSet::new(),
                pending: BTreeMap::new(),
                done: BTreeMap::new(),
            }),
            cv: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Gate> {
        self.gate.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Registers `agent` as a participant. Call before spawning its worker.
    pub fn enroll(&self, agent: &str) -> Enrollment<'_> {
        let mut g = self.lock();
        assert!(g.active.insert(agent.to_string()), "agent {agent} enrolled twice");
        Enrollment {
            shared: self,
            agent: agent.to_string(),
        }
    }

    pub fn snapshot(&self) -> WorldState {
        self.lock().world.clone()
    }

    /// Mutates the world directly; only valid while no worker is enrolled.
    pub fn with_world<R>(&self, f: impl FnOnce(&mut WorldState) -> R) -> R {
        let mut g = self.lock();
        assert!(g.active.is_empty(), "world mutated while workers are enrolled");
        f(&mut g.world)
    }

    pub fn into_inner(self) -> WorldState {
        self.gate.into_inner().unwrap_or_else(|p| p.into_inner()).world
    }
}

/// A worker's ticket to submit actions. Dropping it withdraws the worker.
pub struct Enrollment<'a> {
    shared: &'a SharedWorld,
    agent: String,
}

impl Enrollment<'_> {
    pub fn agent(&self) -> &str {
        &self.agent
    }

    /// Submits one request and blocks until it has been applied.
    pub fn submit(&self, req: ActionRequest) -> ActionResult {
        assert_eq!(req.agent, self.agent, "request from a different agent");
        let mut g = self.shared.lock();
        g.pending.insert(self.agent.clone(), req);
        if g.drain() {
            self.shared.cv.notify_all();
        }
        loop {
            if let Some(r) = g.done.remove(&self.agent) {
                return r;
            }
            g = self.shared.cv.wait(g).unwrap_or_else(|p| p.into_inner());
        }
    }
}

impl Drop for Enrollment<'_> {
    fn drop(&mut self) {
        let mut g = self.shared.lock();
        g.active.remove(&self.agent);
        g.pending.remove(&self.agent);
        g.done.remove(&self.agent);
        g.drain();
        self.shared.cv.notify_all();
    }
}
