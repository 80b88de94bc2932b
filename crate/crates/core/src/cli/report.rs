//! Report rows and their CSV rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::hierarchy::HierarchySpec;
use crate::scoring::ScoreTable;

pub const CRPS_FILE: &str = "crps.csv";
pub const MAE_FILE: &str = "mae.csv";
pub const CV_WEIGHTS_FILE: &str = "cv_weights.csv";
pub const CV_NODE_WEIGHTS_FILE: &str = "cv_node_weights.csv";
pub const PER_ORIGIN_FILE: &str = "per_origin.csv";
pub const COHERENCE_FILE: &str = "coherence.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const FAILURE_FILE: &str = "failure.txt";

/// One line of a score table: level columns coarse to fine, then the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scheme: String,
    pub method: String,
    pub levels: Vec<f64>,
    pub mean: f64,
}

impl ReportRow {
    pub fn new(scheme: &str, method: &str, table: &ScoreTable) -> Self {
        Self {
            scheme: scheme.to_string(),
            method: method.to_string(),
            levels: table.levels.clone(),
            mean: table.overall,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRecord {
    pub scheme: String,
    pub method: String,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeWeightRecord {
    pub scheme: String,
    /// Weights in flat node order.
    pub weights: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OriginRecord {
    pub scheme: String,
    pub method: String,
    pub origin: usize,
    pub timestamp: String,
    pub crps: Vec<f64>,
    pub mae: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceRecord {
    pub scheme: String,
    pub method: String,
    pub origin: usize,
    pub max_violation: f64,
    pub coherent: bool,
}

/// Fixed four-decimal rendering; negative zero prints as zero.
pub fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

pub fn level_labels(h: &HierarchySpec) -> Vec<String> {
    h.freqs().iter().map(|f| format!("f{f}")).collect()
}

pub fn render_table(rows: &[ReportRow], h: &HierarchySpec) -> String {
    let mut out = String::from("scheme,method,");
    out.push_str(&level_labels(h).join(","));
    out.push_str(",mean\n");
    for row in rows {
        let _ = write!(out, "{},{}", row.scheme, row.method);
        for v in &row.levels {
            let _ = write!(out, ",{}", fmt4(*v));
        }
        let _ = writeln!(out, ",{}", fmt4(row.mean));
    }
    out
}

pub fn render_cv(records: &[CvRecord], h: &HierarchySpec) -> String {
    let mut out = String::from("scheme,method,");
    for label in level_labels(h) {
        let _ = write!(out, "v_{label},");
    }
    out.push_str("sum,objective,iterations,converged\n");
    for r in records {
        let _ = write!(out, "{},{}", r.scheme, r.method);
        for w in &r.weights {
            let _ = write!(out, ",{}", fmt4(*w));
        }
        let sum: f64 = r.weights.iter().sum();
        let _ = writeln!(
            out,
            ",{},{:.6},{},{}",
            fmt4(sum),
            r.objective,
            r.iterations,
            r.converged
        );
    }
    out
}

pub fn render_node_weights(records: &[NodeWeightRecord], h: &HierarchySpec) -> String {
    let mut out = String::from("scheme,level,node,weight\n");
    for r in records {
        for (flat, w) in r.weights.iter().enumerate() {
            let id = match h.node_at(flat) {
                Ok(id) => id,
                Err(_) => continue,
            };
            let _ = writeln!(
                out,
                "{},f{},{},{}",
                r.scheme,
                h.freq(id.level),
                id.position + 1,
                fmt4(*w)
            );
        }
    }
    out
}

pub fn render_per_origin(records: &[OriginRecord], h: &HierarchySpec) -> String {
    let mut out = String::from("scheme,method,origin,timestamp,level,node,crps,mae\n");
    let levels = h.node_levels();
    for r in records {
        for (flat, (c, m)) in r.crps.iter().zip(&r.mae).enumerate() {
            let level = levels[flat];
            let _ = writeln!(
                out,
                "{},{},{},{},f{},{},{},{}",
                r.scheme,
                r.method,
                r.origin,
                r.timestamp,
                h.freq(level),
                flat - h.level_offset(level) + 1,
                fmt4(*c),
                fmt4(*m)
            );
        }
    }
    out
}

pub fn render_coherence(records: &[CoherenceRecord]) -> String {
    let mut out = String::from("scheme,method,origin,max_violation,coherent\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{:.3e},{}",
            r.scheme, r.method, r.origin, r.max_violation, r.coherent
        );
    }
    out
}

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}
