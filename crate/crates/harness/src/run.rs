//! `dagcrew run`: one episode into a run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dagcrew_core::evaluate::evaluate;
use dagcrew_core::metrics::MetricReport;
use dagcrew_core::orchestrator::Session;
use dagcrew_core::planner::{HttpPlanner, PlannerBackend, ScriptedPlanner};
use dagcrew_core::scenario::Scenario;
use dagcrew_core::taskgraph::ExportFormat;
use dagcrew_core::trace::{EpisodeTrace, Termination};

use crate::config::{PlannerConfig, RunConfig};
use crate::HarnessError;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const WORLD_FILE: &str = "world_final.json";

pub fn graph_file(dir: &Path, round: u32, format: ExportFormat) -> PathBuf {
    let ext = match format {
        ExportFormat::Dot => "dot",
        ExportFormat::Structured => "txt",
    };
    dir.join(format!("graph_round_{round}.{ext}"))
}

#[derive(Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub termination: Termination,
    pub report: MetricReport,
}

fn write(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path.display(), e))
}

pub fn run(config: &RunConfig) -> Result<RunSummary, HarnessError> {
    let scenario = Scenario::from_spec(&config.scenario_spec()?).map_err(|e| HarnessError::Config(e.to_string()))?;
    let agents = config.agent_list()?;
    let backend: Box<dyn PlannerBackend> = match &config.planner {
        PlannerConfig::Scripted => Box::new(ScriptedPlanner),
        PlannerConfig::Http(h) => Box::new(HttpPlanner::new(h.clone())),
    };

    let dir = config.out_dir();
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(dir.display(), e))?;
    let trace_path = dir.join(TRACE_FILE);
    let trace = EpisodeTrace::with_file(&trace_path).map_err(|e| HarnessError::io(trace_path.display(), e))?;

    let started = Instant::now();
    let mut session = Session::new(scenario, &agents, config.seed, config.limits(), backend.as_ref(), trace);
    let mut export_error = None;
    let outcome = session.run(|s, report| {
        for format in [ExportFormat::Structured, ExportFormat::Dot] {
            let path = graph_file(&dir, report.round, format);
            if let Err(e) = fs::write(&path, s.graph.export(format)) {
                export_error.get_or_insert(HarnessError::io(path.display(), e));
            }
        }
    });
    let termination = match outcome {
        Ok(t) => t,
        Err(e) => {
            // whatever was recorded so far still goes to disk
            let _ = session.trace.flush();
            return Err(HarnessError::io(trace_path.display(), e));
        }
    };
    if let Some(e) = export_error {
        return Err(e);
    }

    let wall = backend.is_live().then(|| started.elapsed().as_secs_f64() / 60.0);
    let report = evaluate(&session.scenario, session.trace.records(), &session.world, wall);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write(&dir.join(REPORT_FILE), &(json + "\n"))?;
    let world = serde_json::to_string(&session.world).expect("world serializes");
    write(&dir.join(WORLD_FILE), &(world + "\n"))?;
    Ok(RunSummary {
        dir,
        termination,
        report,
    })
}
