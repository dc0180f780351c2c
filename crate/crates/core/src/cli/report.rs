//! `report.json` files and the comparison table built from several of them.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::model::{round_f64_half_up, ChangeKind, Condition, CutoffGroup, MetricReport};

/// Run metadata stored next to the metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetadata {
    pub model_id: String,
    pub condition: Condition,
    /// SHA-256 of the evaluated `tasks.jsonl`.
    pub dataset_hash: String,
    pub config_hash: String,
    /// True when no sandbox ran, so only static checks were scored.
    pub dry_run: bool,
    pub samples: u32,
    /// Settings assumed by this tool where the benchmark fixes no value.
    pub assumed_params: BTreeMap<String, u64>,
}

/// A [`MetricReport`] with a `metadata` member added at the top level.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub metrics: MetricReport,
    pub metadata: RunMetadata,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(&self.metrics).expect("metrics serialize");
        v["metadata"] = serde_json::to_value(&self.metadata).expect("metadata serializes");
        serde_json::to_string_pretty(&v).expect("value serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let mut v: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let obj = v.as_object_mut().ok_or("report is not a JSON object")?;
        let meta = obj.remove("metadata").ok_or("missing field `metadata`")?;
        let metadata: RunMetadata = serde_json::from_value(meta).map_err(|e| format!("metadata: {e}"))?;
        let metrics: MetricReport = serde_json::from_value(v).map_err(|e| e.to_string())?;
        metrics.validate().map_err(|e| e.to_string())?;
        Ok(Self { metrics, metadata })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
        Self::from_json(&text).map_err(|reason| CliError::SchemaMismatch { path: path.to_path_buf(), reason })
    }
}

/// Rows are models, columns are metrics under each condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComparisonTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{:.1}", round_f64_half_up(v * 100.0, 1))).unwrap_or_default()
}

fn kind_label(kind: ChangeKind) -> &'static str {
    match kind {
        ChangeKind::Stabilization => "stab",
        ChangeKind::SignatureChange => "sig",
        ChangeKind::BehavioralChange => "behav",
        ChangeKind::Deprecation => "depr",
    }
}

type Column = (String, Box<dyn Fn(&MetricReport) -> Option<f64>>);

fn columns_for(condition: Condition, reports: &[&RunReport]) -> Vec<Column> {
    let mut cols: Vec<Column> = Vec::new();
    let ks: BTreeSet<u32> = reports.iter().flat_map(|r| r.metrics.pass_at_k.keys().copied()).collect();
    for k in ks {
        cols.push((format!("{condition}:pass@{k}"), Box::new(move |m: &MetricReport| m.pass_at_k.get(&k).copied())));
    }
    cols.push((format!("{condition}:aua"), Box::new(|m: &MetricReport| Some(m.aua))));
    cols.push((format!("{condition}:coverage"), Box::new(|m: &MetricReport| Some(m.coverage))));
    for kind in ChangeKind::ALL {
        cols.push((
            format!("{condition}:pass@1:{}", kind_label(kind)),
            Box::new(move |m: &MetricReport| m.by_kind.get(&kind).map(|km| km.pass_at_1)),
        ));
    }
    if reports.iter().any(|r| !r.metrics.by_cutoff.is_empty()) {
        for (group, label) in [(CutoffGroup::Before, "before"), (CutoffGroup::After, "after")] {
            cols.push((
                format!("{condition}:pass@1:{label}"),
                Box::new(move |m: &MetricReport| m.by_cutoff.get(&group).copied()),
            ));
        }
    }
    cols
}

/// Builds the table; each (model, condition) pair may appear once.
pub fn comparison_table(reports: &[(std::path::PathBuf, RunReport)]) -> Result<ComparisonTable, CliError> {
    let mut cells: BTreeMap<(&str, Condition), &RunReport> = BTreeMap::new();
    for (path, r) in reports {
        let key = (r.metadata.model_id.as_str(), r.metadata.condition);
        if cells.insert(key, r).is_some() {
            return Err(CliError::SchemaMismatch {
                path: path.clone(),
                reason: format!("second report for model {} under {}", key.0, key.1),
            });
        }
    }
    let models: BTreeSet<&str> = cells.keys().map(|(m, _)| *m).collect();
    let conditions: BTreeSet<Condition> = cells.keys().map(|(_, c)| *c).collect();

    let mut header = vec!["model".to_string()];
    let mut rows: Vec<Vec<String>> = models.iter().map(|m| vec![m.to_string()]).collect();
    for condition in conditions {
        let in_condition: Vec<&RunReport> =
            cells.iter().filter(|((_, c), _)| *c == condition).map(|(_, r)| *r).collect();
        for (name, get) in columns_for(condition, &in_condition) {
            header.push(name);
            for (row, model) in rows.iter_mut().zip(&models) {
                row.push(cell(cells.get(&(*model, condition)).and_then(|r| get(&r.metrics))));
            }
        }
    }
    Ok(ComparisonTable { header, rows })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    /// Fixed-width text with one metric per line block, suited to terminals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let label_width = self.header.iter().map(String::len).max().unwrap_or(0);
        let widths: Vec<usize> = self.rows.iter().map(|r| r[0].len().max(6)).collect();
        out.push_str(&format!("{:label_width$}", "metric"));
        for (row, w) in self.rows.iter().zip(&widths) {
            out.push_str(&format!("  {:>w$}", row[0]));
        }
        out.push('\n');
        for (i, name) in self.header.iter().enumerate().skip(1) {
            out.push_str(&format!("{name:label_width$}"));
            for (row, w) in self.rows.iter().zip(&widths) {
                let v = if row[i].is_empty() { "-" } else { &row[i] };
                out.push_str(&format!("  {v:>w$}"));
            }
            out.push('\n');
        }
        out
    }
}
