//! Protocol x model grid with one column per (track, metric).

use std::fmt::Write;
use std::str::FromStr;

use serde::Serialize;

use super::{Board, Submission, Track};
use crate::manifest::Split;
use crate::task::{task_metric_spec, MetricKind, Protocol};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "json" => Ok(ReportFormat::Json),
            _ => Err(format!("unknown report format {s:?}")),
        }
    }
}

pub const MISSING: &str = "-";

#[derive(Debug, Serialize)]
struct Column {
    task: String,
    dataset: String,
    metric: &'static str,
    direction: &'static str,
    #[serde(skip)]
    track: Track,
    #[serde(skip)]
    kind: MetricKind,
}

#[derive(Debug, Serialize)]
struct Row {
    protocol: Protocol,
    model: String,
    model_type: &'static str,
    cells: Vec<Option<String>>,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    split: Split,
    columns: Vec<Column>,
    rows: Vec<Row>,
}

fn columns(board: &Board) -> Vec<Column> {
    board
        .tracks
        .iter()
        .flat_map(|t| {
            task_metric_spec(t.task).iter().map(move |d| Column {
                task: t.task.as_str().to_ascii_uppercase(),
                dataset: t.dataset.clone(),
                metric: d.metric.name(),
                direction: d.direction.arrow(),
                track: t.clone(),
                kind: d.metric,
            })
        })
        .collect()
}

/// Rows grouped by protocol; models in order of first submission.
fn rows(board: &Board, cols: &[Column], split: Split) -> Vec<Row> {
    let mut out = Vec::new();
    for protocol in Protocol::ALL {
        let mut models: Vec<&Submission> = Vec::new();
        for s in board.submissions.iter().filter(|s| s.protocol == protocol) {
            if !models.iter().any(|m| m.model == s.model) {
                models.push(s);
            }
        }
        for first in models {
            let cells = cols
                .iter()
                .map(|c| {
                    board
                        .submissions
                        .iter()
                        .find(|s| s.protocol == protocol && s.model == first.model && s.track == c.track)
                        .and_then(|s| s.score(split, c.kind))
                        .map(|v| format!("{:.1}", v * 100.0))
                })
                .collect();
            out.push(Row {
                protocol,
                model: first.model.clone(),
                model_type: first.model_type.as_str(),
                cells,
            });
        }
    }
    out
}

/// Render the board for `split` (the board's ranking split by default).
/// Output depends only on the board contents.
pub fn render_report(board: &Board, format: ReportFormat, split: Option<Split>) -> String {
    let split = split.unwrap_or(board.rank_split);
    let cols = columns(board);
    let rows = rows(board, &cols, split);
    match format {
        ReportFormat::Json => {
            let report = Report {
                label: board.label.as_deref(),
                split,
                columns: cols,
                rows,
            };
            let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => {
            let mut s = String::new();
            let _ = writeln!(s, "# Leaderboard ({split} split, values x100)\n");
            if let Some(label) = &board.label {
                let _ = writeln!(s, "> {label}\n");
            }
            s.push_str("| Protocol | Model | Type |");
            for c in &cols {
                let _ = write!(s, " {} {} {} {} |", c.task, c.dataset, c.metric, c.direction);
            }
            s.push_str("\n| --- | --- | --- |");
            for _ in &cols {
                s.push_str(" ---: |");
            }
            s.push('\n');
            for r in &rows {
                let _ = write!(s, "| {} | {} | {} |", r.protocol, r.model, r.model_type);
                for cell in &r.cells {
                    let _ = write!(s, " {} |", cell.as_deref().unwrap_or(MISSING));
                }
                s.push('\n');
            }
            s
        }
    }
}
