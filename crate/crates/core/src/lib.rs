//! Orchestration engine: task graph, planner backends, agents, state manager,
//! orchestrator loop, metrics and episode traces.

pub mod agent;
pub mod evaluate;
pub mod metrics;
pub mod orchestrator;
pub mod path;
pub mod planner;
pub mod replay;
pub mod scenario;
pub mod statemgr;
pub mod taskgraph;
pub mod trace;
