//! Scoring functions and the shared score report.
//!
//! Every F1-style score is computed from integer counts as
//! `2·tp / (2·tp + fp + fn)`, which equals the harmonic mean of precision
//! and recall and is defined as 0 when there is nothing to count. Counts
//! merge by addition, so corpora may be scored in any order or in parallel.

mod classification;
mod frame;
mod ner;
mod rouge;
mod wer;

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::task::MetricKind;

pub use classification::{dac_f1, macro_f1};
pub use frame::{frame_counts, frame_f1, span_frames, tune_offset, OffsetGrid, TunedOffset, UtteranceSpans};
pub use ner::{label_f1, ner_f1, EntityMention, PhraseNormalization};
pub use rouge::{corpus_rouge_l, lcs_len, rouge_l};
pub use wer::{corpus_wer, edit_counts, wer, EditCounts};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl F1Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Add for F1Counts {
    type Output = F1Counts;

    fn add(self, rhs: Self) -> Self {
        F1Counts::new(self.tp + rhs.tp, self.fp + rhs.fp, self.fn_ + rhs.fn_)
    }
}

impl AddAssign for F1Counts {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for F1Counts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(F1Counts::default(), Add::add)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: usize,
    pub counts: F1Counts,
    pub f1: f64,
}

/// Raw counts behind a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Support {
    Counts {
        #[serde(flatten)]
        counts: F1Counts,
        precision: f64,
        recall: f64,
    },
    PerClass {
        classes: Vec<ClassScore>,
    },
    Edits(EditCounts),
    Lcs {
        items: usize,
        lcs_total: u64,
        hyp_tokens: u64,
        ref_tokens: u64,
    },
    External {
        provenance: String,
    },
}

impl Support {
    pub fn counts(counts: F1Counts) -> Self {
        Support::Counts {
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub metric: MetricKind,
    /// Fraction in [0, 1] for F1-style metrics, error rate for WER.
    pub value: f64,
    pub support: Support,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_utterance: Vec<UtteranceScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ScoreReport {
    pub(crate) fn new(metric: MetricKind, value: f64, support: Support) -> Self {
        Self {
            metric,
            value,
            support,
            per_utterance: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub(crate) fn with_per_utterance(mut self, values: impl IntoIterator<Item = f64>) -> Self {
        self.per_utterance = values
            .into_iter()
            .enumerate()
            .map(|(i, value)| UtteranceScore {
                id: i.to_string(),
                value,
            })
            .collect();
        self
    }

    pub(crate) fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    /// Replace positional utterance labels with real ids.
    pub fn with_ids<S: AsRef<str>>(mut self, ids: &[S]) -> Self {
        for (u, id) in self.per_utterance.iter_mut().zip(ids) {
            u.id = id.as_ref().to_string();
        }
        self
    }

    /// An externally computed score attached with its provenance.
    pub fn external(metric: MetricKind, value: f64, provenance: impl Into<String>) -> Self {
        Self::new(
            metric,
            value,
            Support::External {
                provenance: provenance.into(),
            },
        )
    }

    /// Value scaled by 100 with one decimal, as printed in result tables.
    pub fn display_value(&self) -> String {
        format!("{:.1}", self.value * 100.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_over_zero_is_zero() {
        let c = F1Counts::default();
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn f1_equals_harmonic_mean() {
        let c = F1Counts::new(3, 2, 5);
        let (p, r) = (c.precision(), c.recall());
        assert!((c.f1() - 2.0 * p * r / (p + r)).abs() < 1e-15);
    }

    #[test]
    fn report_serializes_counts_flat() {
        let r = ScoreReport::new(MetricKind::NerF1, 0.5, Support::counts(F1Counts::new(1, 1, 1)));
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["metric"], "F1");
        assert_eq!(json["support"]["kind"], "counts");
        assert_eq!(json["support"]["fn"], 1);
        assert_eq!(r.display_value(), "50.0");
        let back: ScoreReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }
}
