//! Self-describing run artifacts (pretty JSON) and history files.

use std::fmt::Write as _;
use std::path::Path;

use beatbench_core::cost::{render_comparison_row, ComparisonRow, LatencyStats, PerfReport};
use beatbench_core::metrics::MetricsReport;
use beatbench_core::train::History;
use serde::{Deserialize, Serialize};

use crate::pipeline::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacSummary {
    pub exact: u64,
    pub formula: u64,
}

/// Wall-clock measurements. Everything outside this block (and the
/// time-derived fields it feeds) is deterministic for a fixed config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub training_time_s: f64,
    pub latency: LatencyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: RunConfig,
    pub metrics: MetricsReport,
    pub perf: PerfReport,
    pub macs: MacSummary,
    pub history: History,
    pub timing: Timing,
}

impl RunArtifact {
    pub fn new(config: RunConfig, metrics: MetricsReport, perf: PerfReport, macs: MacSummary, history: History, timing: Timing) -> Self {
        Self { schema_version: SCHEMA_VERSION, tool_version: TOOL_VERSION.to_string(), config, metrics, perf, macs, history, timing }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let a: RunArtifact = serde_json::from_str(text).map_err(|e| CliError::Data(format!("corrupt artifact: {e}")))?;
        if a.schema_version != SCHEMA_VERSION {
            return Err(CliError::Data(format!("unsupported artifact schema {}", a.schema_version)));
        }
        Ok(a)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.message())))
    }

    pub fn row(&self) -> ComparisonRow {
        render_comparison_row(&self.metrics, &self.perf, self.config.model.as_str())
    }

    /// Copy with every wall-clock-derived field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut a = self.clone();
        a.metrics.training_time_s = 0.0;
        a.perf.total_inference_time_s = 0.0;
        a.perf.simulation_time_s_per_sample = 0.0;
        a.perf.throughput_macs_per_s = 0.0;
        a.perf.throughput_gops = 0.0;
        a.history.epochs.iter_mut().for_each(|e| e.elapsed_s = 0.0);
        a.timing = Timing {
            training_time_s: 0.0,
            latency: LatencyStats {
                total_time_s: 0.0,
                best_pass_time_s: 0.0,
                per_sample_min_s: 0.0,
                per_sample_mean_s: 0.0,
                per_sample_std_s: 0.0,
                ..a.timing.latency
            },
        };
        a
    }
}

pub fn artifacts_to_json(artifacts: &[RunArtifact]) -> String {
    let mut s = serde_json::to_string_pretty(artifacts).expect("artifacts serialize");
    s.push('\n');
    s
}

/// Text holding either one artifact or an array of them.
pub fn artifacts_from_json(text: &str) -> Result<Vec<RunArtifact>, CliError> {
    if !text.trim_start().starts_with('[') {
        return Ok(vec![RunArtifact::from_json(text)?]);
    }
    let v: Vec<RunArtifact> = serde_json::from_str(text).map_err(|e| CliError::Data(format!("corrupt artifact list: {e}")))?;
    if let Some(bad) = v.iter().find(|a| a.schema_version != SCHEMA_VERSION) {
        return Err(CliError::Data(format!("unsupported artifact schema {}", bad.schema_version)));
    }
    Ok(v)
}

pub fn read_artifacts(path: &Path) -> Result<Vec<RunArtifact>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    artifacts_from_json(&text).map_err(|e| CliError::Data(format!("{}: {}", path.display(), e.message())))
}

/// Per-epoch history as CSV, one row per epoch.
pub fn history_csv(history: &History) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,elapsed_s\n");
    for e in &history.epochs {
        let _ = writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.elapsed_s);
    }
    out
}
