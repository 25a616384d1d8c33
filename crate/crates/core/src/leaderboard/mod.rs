//! Persistent submission store with validation, ranking and table rendering.
//!
//! Scores are stored as fractions (error rate for WER) per split and shown
//! scaled by 100 with one decimal.

mod fixture;
mod render;
mod store;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Split;
use crate::runner::RunResult;
use crate::task::{task_metric_spec, Direction, MetricKind, Protocol, TaskKind};

pub use fixture::{seed_board, SEED_LABEL};
pub use render::{render_report, ReportFormat};
pub use store::BoardLock;

pub const STORAGE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelType {
    #[serde(rename = "SSL")]
    Ssl,
    #[serde(rename = "ASR")]
    Asr,
    #[serde(rename = "SLU")]
    Slu,
}

impl ModelType {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelType::Ssl => "SSL",
            ModelType::Asr => "ASR",
            ModelType::Slu => "SLU",
        }
    }
}

impl FromStr for ModelType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        [ModelType::Ssl, ModelType::Asr, ModelType::Slu]
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown model type {s:?}"))
    }
}

/// A task on a particular corpus. ASR is scored on two corpora, so the
/// task alone does not identify a leaderboard column group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Track {
    pub task: TaskKind,
    pub dataset: String,
}

impl Track {
    pub fn new(task: TaskKind, dataset: impl Into<String>) -> Self {
        Self {
            task,
            dataset: dataset.into(),
        }
    }

    /// The corpus a task is evaluated on when none is named.
    pub fn default_for(task: TaskKind) -> Self {
        let dataset = match task {
            TaskKind::Sa | TaskKind::Asr => "voxceleb",
            TaskKind::Ner | TaskKind::Nel => "voxpopuli",
            TaskKind::Qa => "sqa5",
            TaskKind::Summ => "ted",
            TaskKind::Dac => "hvb",
        };
        Self::new(task, dataset)
    }

    /// The eight column groups of the standard report, in display order.
    pub fn standard() -> Vec<Track> {
        vec![
            Track::new(TaskKind::Sa, "voxceleb"),
            Track::new(TaskKind::Asr, "voxceleb"),
            Track::new(TaskKind::Ner, "voxpopuli"),
            Track::new(TaskKind::Asr, "voxpopuli"),
            Track::new(TaskKind::Nel, "voxpopuli"),
            Track::new(TaskKind::Qa, "sqa5"),
            Track::new(TaskKind::Summ, "ted"),
            Track::new(TaskKind::Dac, "hvb"),
        ]
    }
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.task, self.dataset)
    }
}

/// `task` or `task:dataset`.
impl FromStr for Track {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((task, dataset)) if !dataset.is_empty() => Ok(Track::new(task.parse()?, dataset.to_ascii_lowercase())),
            Some(_) => Err(format!("empty dataset in track {s:?}")),
            None => Ok(Track::default_for(s.parse()?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub model: String,
    pub model_type: ModelType,
    pub protocol: Protocol,
    pub track: Track,
    /// Per split, metric value as a fraction.
    pub scores: BTreeMap<Split, BTreeMap<MetricKind, f64>>,
    /// Trainable parameters in millions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_millions: Option<f64>,
    pub submitted_at: DateTime<Utc>,
    /// Where the scores came from, e.g. a run file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Provenance of externally computed metrics.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external: BTreeMap<MetricKind, String>,
}

impl Submission {
    pub fn new(model: impl Into<String>, model_type: ModelType, protocol: Protocol, track: Track) -> Self {
        Self {
            model: model.into(),
            model_type,
            protocol,
            track,
            scores: BTreeMap::new(),
            params_millions: None,
            submitted_at: Utc::now(),
            source: None,
            external: BTreeMap::new(),
        }
    }

    pub fn with_score(mut self, split: Split, metric: MetricKind, value: f64) -> Self {
        self.scores.entry(split).or_default().insert(metric, value);
        self
    }

    /// Scores of every evaluated split of a run. The track defaults to the
    /// task's usual corpus.
    pub fn from_run(run: &RunResult, model_type: ModelType, track: Option<Track>) -> Self {
        let mut sub = Submission::new(
            run.spec.model.clone(),
            model_type,
            run.spec.protocol,
            track.unwrap_or_else(|| Track::default_for(run.spec.task)),
        );
        sub.submitted_at = run.finished_at;
        for r in &run.results {
            for m in &r.metrics {
                sub = sub.with_score(r.split, m.metric, m.value);
                if let crate::metrics::Support::External { provenance } = &m.support {
                    sub.external.insert(m.metric, provenance.clone());
                }
            }
        }
        sub
    }

    pub fn key(&self) -> (&str, Protocol, &Track) {
        (&self.model, self.protocol, &self.track)
    }

    pub fn score(&self, split: Split, metric: MetricKind) -> Option<f64> {
        self.scores.get(&split)?.get(&metric).copied()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.model.trim().is_empty() {
            return bad("model name is empty".into());
        }
        if self.scores.values().all(BTreeMap::is_empty) {
            return bad("submission has no scores".into());
        }
        let spec = task_metric_spec(self.track.task);
        for (split, metrics) in &self.scores {
            for (metric, &value) in metrics {
                if !spec.iter().any(|d| d.metric == *metric) {
                    return bad(format!("{} does not report {}", self.track.task, metric.name()));
                }
                if !metric.in_range(value) {
                    return bad(format!("{split} {} = {value} is out of range", metric.name()));
                }
            }
            if let Some(missing) = spec.iter().find(|d| !d.external && !metrics.contains_key(&d.metric)) {
                return bad(format!("{split} scores lack {}", missing.metric.name()));
            }
        }
        if let Some(p) = self.params_millions {
            if !(p.is_finite() && p > 0.0) {
                return bad(format!("parameter count {p} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Board {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Split used for ranking and rendering unless another is requested.
    pub rank_split: Split,
    /// Per-task override of the ranking metric.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub primary: BTreeMap<TaskKind, MetricKind>,
    pub tracks: Vec<Track>,
    /// In submission order; replacements keep their slot.
    pub submissions: Vec<Submission>,
}

impl Default for Board {
    fn default() -> Self {
        Self {
            version: STORAGE_VERSION,
            label: None,
            rank_split: Split::Test,
            primary: BTreeMap::new(),
            tracks: Track::standard(),
            submissions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedRow<'a> {
    pub position: usize,
    pub value: Option<f64>,
    pub submission: &'a Submission,
}

impl Board {
    pub fn primary_metric(&self, task: TaskKind) -> MetricKind {
        self.primary
            .get(&task)
            .copied()
            .unwrap_or_else(|| task.primary_metric())
    }

    /// Validate and add `sub`. An existing entry with the same model,
    /// protocol and track is replaced only when `force` is set.
    pub fn submit(&mut self, sub: Submission, force: bool) -> Result<()> {
        sub.validate()?;
        if !self.tracks.contains(&sub.track) {
            self.tracks.push(sub.track.clone());
        }
        match self.submissions.iter().position(|s| s.key() == sub.key()) {
            Some(_) if !force => Err(Error::DuplicateSubmission(format!(
                "{} / {} / {}",
                sub.model, sub.protocol, sub.track
            ))),
            Some(i) => {
                self.submissions[i] = sub;
                Ok(())
            }
            None => {
                self.submissions.push(sub);
                Ok(())
            }
        }
    }

    pub fn rank(&self, track: &Track, protocol: Protocol) -> Result<Vec<RankedRow<'_>>> {
        self.rank_by(track, protocol, self.primary_metric(track.task), self.rank_split)
    }

    /// Best first. Missing scores sort last; ties go to fewer parameters,
    /// then the earlier submission, then the model name.
    pub fn rank_by(
        &self,
        track: &Track,
        protocol: Protocol,
        metric: MetricKind,
        split: Split,
    ) -> Result<Vec<RankedRow<'_>>> {
        let mut rows: Vec<RankedRow<'_>> = self
            .submissions
            .iter()
            .filter(|s| &s.track == track && s.protocol == protocol)
            .map(|s| RankedRow {
                position: 0,
                value: s.score(split, metric),
                submission: s,
            })
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyBoard(format!("{track} / {protocol}")));
        }
        let direction = metric.direction();
        rows.sort_by(|a, b| compare_rows(direction, a, b));
        for (i, r) in rows.iter_mut().enumerate() {
            r.position = i + 1;
        }
        Ok(rows)
    }
}

fn compare_rows(direction: Direction, a: &RankedRow<'_>, b: &RankedRow<'_>) -> Ordering {
    let by_value = match (a.value, b.value) {
        (Some(x), Some(y)) => match direction {
            Direction::HigherIsBetter => y.total_cmp(&x),
            Direction::LowerIsBetter => x.total_cmp(&y),
        },
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    let params = |r: &RankedRow<'_>| r.submission.params_millions.unwrap_or(f64::INFINITY);
    by_value
        .then_with(|| params(a).total_cmp(&params(b)))
        .then_with(|| a.submission.submitted_at.cmp(&b.submission.submitted_at))
        .then_with(|| a.submission.model.cmp(&b.submission.model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(model: &str, value: f64) -> Submission {
        Submission::new(
            model,
            ModelType::Ssl,
            Protocol::Lightweight,
            Track::default_for(TaskKind::Sa),
        )
        .with_score(Split::Test, MetricKind::MacroF1, value)
    }

    #[test]
    fn out_of_range_rejected() {
        let mut b = Board::default();
        assert!(matches!(b.submit(sub("m", 143.0), false), Err(Error::Validation(_))));
        assert!(matches!(b.submit(sub("m", f64::NAN), false), Err(Error::Validation(_))));
        let mut s = sub("m", 0.4);
        s.params_millions = Some(0.0);
        assert!(b.submit(s, false).is_err());
    }

    #[test]
    fn duplicates_need_force() {
        let mut b = Board::default();
        b.submit(sub("m", 0.4), false).unwrap();
        assert!(matches!(
            b.submit(sub("m", 0.5), false),
            Err(Error::DuplicateSubmission(_))
        ));
        b.submit(sub("m", 0.5), true).unwrap();
        assert_eq!(b.submissions.len(), 1);
        assert_eq!(b.submissions[0].score(Split::Test, MetricKind::MacroF1), Some(0.5));
    }

    #[test]
    fn incomplete_or_foreign_metrics_rejected() {
        let ner = Submission::new(
            "m",
            ModelType::Ssl,
            Protocol::Lightweight,
            Track::default_for(TaskKind::Ner),
        )
        .with_score(Split::Test, MetricKind::LabelF1, 0.8);
        assert!(ner.validate().is_err());
        assert!(sub("m", 0.4)
            .with_score(Split::Test, MetricKind::Wer, 0.1)
            .validate()
            .is_err());
        let summ = Submission::new(
            "m",
            ModelType::Ssl,
            Protocol::Complex,
            Track::default_for(TaskKind::Summ),
        )
        .with_score(Split::Test, MetricKind::RougeL, 0.16);
        summ.validate().unwrap();
    }

    #[test]
    fn ties_prefer_fewer_params() {
        let mut b = Board::default();
        let mut big = sub("big", 0.5);
        big.params_millions = Some(9.1);
        let mut small = sub("small", 0.5);
        small.params_millions = Some(6.5);
        b.submit(big, false).unwrap();
        b.submit(small, false).unwrap();
        let rows = b
            .rank(&Track::default_for(TaskKind::Sa), Protocol::Lightweight)
            .unwrap();
        assert_eq!(rows[0].submission.model, "small");
        assert_eq!(rows[1].position, 2);
    }

    #[test]
    fn empty_key_is_an_error() {
        let b = Board::default();
        assert!(matches!(
            b.rank(&Track::default_for(TaskKind::Qa), Protocol::Complex),
            Err(Error::EmptyBoard(_))
        ));
    }

    #[test]
    fn track_parsing() {
        assert_eq!(
            "asr:VoxPopuli".parse::<Track>().unwrap(),
            Track::new(TaskKind::Asr, "voxpopuli")
        );
        assert_eq!("ner".parse::<Track>().unwrap(), Track::new(TaskKind::Ner, "voxpopuli"));
        assert!("asr:".parse::<Track>().is_err());
        assert!("xyz".parse::<Track>().is_err());
    }
}
