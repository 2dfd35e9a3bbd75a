//! CSV and JSON result files.
//!
//! CSV columns are `chunk_index,iou,mse,bundle_size,memory_scalars,wall_ms`,
//! preceded by `strategy` and/or `seed` when the rows carry them. Output is
//! byte-stable for identical rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use super::config::{ExperimentConfig, OutputFormat};
use crate::error::Result;
use crate::stream::Strategy;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub chunk_index: usize,
    pub iou: f64,
    pub mse: f64,
    pub bundle_size: usize,
    pub memory_scalars: usize,
    /// Zero when timing is disabled.
    pub wall_ms: f64,
}

pub const CSV_COLUMNS: &str = "chunk_index,iou,mse,bundle_size,memory_scalars,wall_ms";

pub fn render_csv(rows: &[MetricsRow]) -> String {
    let with_strategy = rows.iter().any(|r| r.strategy.is_some());
    let with_seed = rows.iter().any(|r| r.seed.is_some());
    let mut out = String::new();
    if with_strategy {
        out.push_str("strategy,");
    }
    if with_seed {
        out.push_str("seed,");
    }
    out.push_str(CSV_COLUMNS);
    out.push('\n');
    for r in rows {
        if with_strategy {
            let _ = write!(out, "{},", r.strategy.map(|s| s.as_str()).unwrap_or(""));
        }
        if with_seed {
            let _ = write!(out, "{},", r.seed.map(|s| s.to_string()).unwrap_or_default());
        }
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{},{},{:.3}",
            r.chunk_index, r.iou, r.mse, r.bundle_size, r.memory_scalars, r.wall_ms
        );
    }
    out
}

pub fn render_json(rows: &[MetricsRow], config: &ExperimentConfig) -> Result<String> {
    let doc = json!({ "config": config.echo(), "rows": rows });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

/// Writes `rows` to `path` in the requested format.
pub fn write_results(
    rows: &[MetricsRow],
    config: &ExperimentConfig,
    path: &Path,
    format: OutputFormat,
) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => render_csv(rows),
        OutputFormat::Json => render_json(rows, config)?,
    };
    fs::write(path, text)?;
    Ok(())
}
