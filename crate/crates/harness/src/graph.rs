//! `dagcrew graph`: re-export a saved round graph.

use std::path::Path;

use dagcrew_core::taskgraph::{ExportFormat, TaskGraph};

use crate::run::graph_file;
use crate::HarnessError;

pub fn graph(run_dir: &Path, round: u32, format: ExportFormat) -> Result<String, HarnessError> {
    let path = graph_file(run_dir, round, ExportFormat::Structured);
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(path.display(), e))?;
    let g = TaskGraph::import_structured(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    Ok(g.export(format))
}
