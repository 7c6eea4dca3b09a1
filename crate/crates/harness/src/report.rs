//! `dagcrew report`: comparison table over run directories.

use std::path::{Path, PathBuf};

use dagcrew_core::metrics::MetricReport;

use crate::run::REPORT_FILE;
use crate::HarnessError;

pub const ABSENT: &str = "—";
const HEADERS: [&str; 8] = ["run", "C", "E", "B", "VHR", "ACR", "Cost", "D"];

pub fn load(dir: &Path) -> Result<MetricReport, HarnessError> {
    let path = dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

fn cell(v: Option<f64>, places: usize) -> String {
    v.map_or_else(|| ABSENT.to_string(), |x| format!("{x:.places$}"))
}

fn row(name: &str, r: &MetricReport) -> [String; 8] {
    [
        name.to_string(),
        cell(Some(r.completion), 3),
        cell(Some(r.efficiency), 4),
        cell(r.balance, 3),
        cell(r.vhr, 3),
        cell(r.acr, 3),
        cell(Some(r.token_cost), 3),
        cell(Some(r.dependency_complexity), 2),
    ]
}

pub fn render(rows: &[(String, MetricReport)]) -> String {
    let lines: Vec<[String; 8]> = std::iter::once(HEADERS.map(String::from))
        .chain(rows.iter().map(|(n, r)| row(n, r)))
        .collect();
    let mut widths = [0; 8];
    for l in &lines {
        for (w, c) in widths.iter_mut().zip(l) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for l in &lines {
        let cells: Vec<String> = l
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = " ".repeat(w - c.chars().count());
                if i == 0 {
                    format!("{c}{pad}")
                } else {
                    format!("{pad}{c}")
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub struct ReportOutput {
    pub table: String,
    pub warnings: Vec<String>,
    pub rows: usize,
}

/// Rows are ordered by directory name; unreadable directories become warnings.
pub fn report(dirs: &[PathBuf]) -> Result<ReportOutput, HarnessError> {
    let mut sorted: Vec<&PathBuf> = dirs.iter().collect();
    sorted.sort_by_key(|d| d.file_name().map(|n| n.to_os_string()).unwrap_or_default());
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for d in sorted {
        match load(d) {
            Ok(r) => {
                let name = d
                    .file_name()
                    .map_or_else(|| d.display().to_string(), |n| n.to_string_lossy().to_string());
                rows.push((name, r));
            }
            Err(e) => warnings.push(format!("skipping {}: {e}", d.display())),
        }
    }
    if rows.is_empty() {
        return Err(HarnessError::Data(if warnings.is_empty() {
            "no run directories given".into()
        } else {
            warnings.join("\n")
        }));
    }
    Ok(ReportOutput {
        table: render(&rows),
        warnings,
        rows: rows.len(),
    })
}
