//! Task registry: which metrics each benchmark task reports and in which
//! direction they improve.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "sa")]
    Sa,
    #[serde(rename = "ner")]
    Ner,
    #[serde(rename = "nel")]
    Nel,
    #[serde(rename = "dac")]
    Dac,
    #[serde(rename = "qa")]
    Qa,
    #[serde(rename = "summ")]
    Summ,
    #[serde(rename = "asr")]
    Asr,
}

impl TaskKind {
    pub const ALL: [TaskKind; 7] = [
        TaskKind::Sa,
        TaskKind::Ner,
        TaskKind::Nel,
        TaskKind::Dac,
        TaskKind::Qa,
        TaskKind::Summ,
        TaskKind::Asr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Sa => "sa",
            TaskKind::Ner => "ner",
            TaskKind::Nel => "nel",
            TaskKind::Dac => "dac",
            TaskKind::Qa => "qa",
            TaskKind::Summ => "summ",
            TaskKind::Asr => "asr",
        }
    }

    /// What the system under evaluation produces for this task.
    pub fn output_kind(self) -> OutputKind {
        match self {
            TaskKind::Sa => OutputKind::SentimentClass,
            TaskKind::Ner => OutputKind::EntityPairs,
            TaskKind::Nel => OutputKind::EntityTimes,
            TaskKind::Dac => OutputKind::DialogActClasses,
            TaskKind::Qa => OutputKind::AnswerTimes,
            TaskKind::Summ => OutputKind::TextSummary,
            TaskKind::Asr => OutputKind::TextTranscript,
        }
    }

    /// The metric a leaderboard ranks on unless configured otherwise.
    pub fn primary_metric(self) -> MetricKind {
        task_metric_spec(self)[0].metric
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown task {s:?}"))
    }
}

/// How a representation is evaluated on top of a frozen (or tuned) encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Protocol {
    #[serde(rename = "lightweight")]
    Lightweight,
    #[serde(rename = "complex")]
    Complex,
    #[serde(rename = "fine-tuned")]
    FineTuned,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Lightweight, Protocol::Complex, Protocol::FineTuned];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Lightweight => "lightweight",
            Protocol::Complex => "complex",
            Protocol::FineTuned => "fine-tuned",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['_', ' '], "-");
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == norm || (norm == "finetuned" && *p == Protocol::FineTuned))
            .ok_or_else(|| format!("unknown protocol {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    SentimentClass,
    EntityPairs,
    EntityTimes,
    DialogActClasses,
    AnswerTimes,
    TextSummary,
    TextTranscript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "macro-F1")]
    MacroF1,
    #[serde(rename = "label-F1")]
    LabelF1,
    #[serde(rename = "F1")]
    NerF1,
    #[serde(rename = "frame-F1")]
    FrameF1,
    #[serde(rename = "ROUGE-L")]
    RougeL,
    #[serde(rename = "external-BERTScore")]
    ExternalBertScore,
    #[serde(rename = "WER")]
    Wer,
}

impl MetricKind {
    pub const ALL: [MetricKind; 7] = [
        MetricKind::MacroF1,
        MetricKind::LabelF1,
        MetricKind::NerF1,
        MetricKind::FrameF1,
        MetricKind::RougeL,
        MetricKind::ExternalBertScore,
        MetricKind::Wer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::MacroF1 => "macro-F1",
            MetricKind::LabelF1 => "label-F1",
            MetricKind::NerF1 => "F1",
            MetricKind::FrameF1 => "frame-F1",
            MetricKind::RougeL => "ROUGE-L",
            MetricKind::ExternalBertScore => "external-BERTScore",
            MetricKind::Wer => "WER",
        }
    }

    pub fn direction(self) -> Direction {
        match self {
            MetricKind::Wer => Direction::LowerIsBetter,
            _ => Direction::HigherIsBetter,
        }
    }

    /// Admissible range for a stored value (fractions, not percentages).
    pub fn in_range(self, value: f64) -> bool {
        if !value.is_finite() || value < 0.0 {
            return false;
        }
        match self {
            MetricKind::Wer => true,
            _ => value <= 1.0,
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

impl Direction {
    pub fn arrow(self) -> &'static str {
        match self {
            Direction::HigherIsBetter => "↑",
            Direction::LowerIsBetter => "↓",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricDescriptor {
    pub metric: MetricKind,
    pub direction: Direction,
    /// Computed outside the engine and attached as a supplied number.
    pub external: bool,
}

impl MetricDescriptor {
    const fn new(metric: MetricKind, direction: Direction) -> Self {
        Self {
            metric,
            direction,
            external: false,
        }
    }
}

const SA_METRICS: [MetricDescriptor; 1] = [MetricDescriptor::new(MetricKind::MacroF1, Direction::HigherIsBetter)];
const NER_METRICS: [MetricDescriptor; 2] = [
    MetricDescriptor::new(MetricKind::LabelF1, Direction::HigherIsBetter),
    MetricDescriptor::new(MetricKind::NerF1, Direction::HigherIsBetter),
];
const FRAME_METRICS: [MetricDescriptor; 1] = [MetricDescriptor::new(MetricKind::FrameF1, Direction::HigherIsBetter)];
const SUMM_METRICS: [MetricDescriptor; 2] = [
    MetricDescriptor::new(MetricKind::RougeL, Direction::HigherIsBetter),
    MetricDescriptor {
        metric: MetricKind::ExternalBertScore,
        direction: Direction::HigherIsBetter,
        external: true,
    },
];
const ASR_METRICS: [MetricDescriptor; 1] = [MetricDescriptor::new(MetricKind::Wer, Direction::LowerIsBetter)];

/// Metrics reported for a task, primary metric first.
pub fn task_metric_spec(task: TaskKind) -> &'static [MetricDescriptor] {
    match task {
        TaskKind::Sa | TaskKind::Dac => &SA_METRICS,
        TaskKind::Ner => &NER_METRICS,
        TaskKind::Nel | TaskKind::Qa => &FRAME_METRICS,
        TaskKind::Summ => &SUMM_METRICS,
        TaskKind::Asr => &ASR_METRICS,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(task: TaskKind) -> Vec<MetricKind> {
        task_metric_spec(task).iter().map(|d| d.metric).collect()
    }

    #[test]
    fn metric_lists_per_task() {
        assert_eq!(metrics(TaskKind::Sa), [MetricKind::MacroF1]);
        assert_eq!(metrics(TaskKind::Ner), [MetricKind::LabelF1, MetricKind::NerF1]);
        assert_eq!(metrics(TaskKind::Nel), [MetricKind::FrameF1]);
        assert_eq!(metrics(TaskKind::Dac), [MetricKind::MacroF1]);
        assert_eq!(metrics(TaskKind::Qa), [MetricKind::FrameF1]);
        assert_eq!(
            metrics(TaskKind::Summ),
            [MetricKind::RougeL, MetricKind::ExternalBertScore]
        );
        assert_eq!(metrics(TaskKind::Asr), [MetricKind::Wer]);
    }

    #[test]
    fn every_task_has_metrics_with_consistent_directions() {
        for task in TaskKind::ALL {
            let spec = task_metric_spec(task);
            assert!(!spec.is_empty());
            for d in spec {
                assert_eq!(d.direction, d.metric.direction());
                let expected = if d.metric == MetricKind::Wer {
                    Direction::LowerIsBetter
                } else {
                    Direction::HigherIsBetter
                };
                assert_eq!(d.direction, expected);
            }
        }
        assert!(task_metric_spec(TaskKind::Summ)[1].external);
    }

    #[test]
    fn names_round_trip() {
        for task in TaskKind::ALL {
            assert_eq!(task.as_str().parse::<TaskKind>().unwrap(), task);
        }
        for m in MetricKind::ALL {
            assert_eq!(m.name().parse::<MetricKind>().unwrap(), m);
        }
        assert_eq!("NER".parse::<TaskKind>().unwrap(), TaskKind::Ner);
    }

    #[test]
    fn protocol_names() {
        for p in Protocol::ALL {
            assert_eq!(p.as_str().parse::<Protocol>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{p}\""));
        }
        assert_eq!("Fine_Tuned".parse::<Protocol>().unwrap(), Protocol::FineTuned);
        assert!("heavy".parse::<Protocol>().is_err());
    }
}
