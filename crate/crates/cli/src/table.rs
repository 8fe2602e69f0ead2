//! Aligned text tables and their CSV counterparts.

use std::fmt::Write as _;

use beatbench_core::cost::{ImplementationRow, COMPARISON_COLUMNS, IMPLEMENTATION_ROWS};

use crate::artifact::{RunArtifact, TOOL_VERSION};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn render(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0; cols];
        for row in std::iter::once(&self.header).chain(&self.rows) {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |row: &[String]| {
            let cells: Vec<String> = row.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
            cells.join(" | ").trim_end().to_string()
        };
        let mut out = line(&self.header);
        out.push('\n');
        out.push_str(&width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    for r in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let _ = writeln!(out, "{}", r.iter().map(|c| csv_cell(c)).collect::<Vec<_>>().join(","));
    }
    out
}

fn versions_differ(artifacts: &[RunArtifact]) -> bool {
    artifacts.iter().any(|a| a.tool_version != TOOL_VERSION)
}

/// Model comparison table: a `Models` label plus the eight metric columns,
/// and a `Version` column only when some artifact came from another build.
pub fn comparison_table(artifacts: &[RunArtifact]) -> Table {
    let flag = versions_differ(artifacts);
    let mut header: Vec<String> = std::iter::once("Models").chain(COMPARISON_COLUMNS).map(String::from).collect();
    if flag {
        header.push("Version".into());
    }
    let rows = artifacts
        .iter()
        .map(|a| {
            let mut r: Vec<String> = std::iter::once(a.config.model.to_string()).chain(a.row().cells()).collect();
            if flag {
                r.push(if a.tool_version == TOOL_VERSION {
                    a.tool_version.clone()
                } else {
                    format!("{} (mismatch, current {TOOL_VERSION})", a.tool_version)
                });
            }
            r
        })
        .collect();
    Table { header, rows }
}

/// Same rows with raw numeric values, for machine consumption.
pub fn comparison_csv(artifacts: &[RunArtifact]) -> String {
    let mut header: Vec<String> = [
        "model",
        "accuracy",
        "precision",
        "recall",
        "f1_score",
        "training_time_s",
        "params",
        "throughput_gops",
        "latency_s",
    ]
    .map(String::from)
    .to_vec();
    let flag = versions_differ(artifacts);
    if flag {
        header.push("tool_version".into());
    }
    let rows: Vec<Vec<String>> = artifacts
        .iter()
        .map(|a| {
            let r = a.row();
            let mut v = vec![
                r.model,
                r.accuracy.to_string(),
                r.precision.to_string(),
                r.recall.to_string(),
                r.f1.to_string(),
                r.training_time_s.to_string(),
                r.params.to_string(),
                r.throughput_gops.to_string(),
                r.latency_s.to_string(),
            ];
            if flag {
                v.push(a.tool_version.clone());
            }
            v
        })
        .collect();
    to_csv(&header, &rows)
}

/// Implementation table: one row per attribute, one column per implementation.
pub fn implementation_table(columns: &[ImplementationRow]) -> Table {
    let header = std::iter::once(String::new()).chain(columns.iter().map(|c| c.label.clone())).collect();
    let cells: Vec<[String; 8]> = columns.iter().map(ImplementationRow::cells).collect();
    let rows = IMPLEMENTATION_ROWS
        .iter()
        .enumerate()
        .map(|(i, name)| std::iter::once(name.to_string()).chain(cells.iter().map(|c| c[i].clone())).collect())
        .collect();
    Table { header, rows }
}
