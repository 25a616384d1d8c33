use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::{F1Counts, ScoreReport, Support};
use crate::codec::DecodedEntity;
use crate::error::{Error, Result};
use crate::manifest::EntityAnnotation;
use crate::task::MetricKind;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityMention {
    pub tag: String,
    pub phrase: Vec<String>,
}

impl EntityMention {
    pub fn new(tag: impl Into<String>, phrase: &[&str]) -> Self {
        Self {
            tag: tag.into(),
            phrase: phrase.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl From<&DecodedEntity> for EntityMention {
    fn from(e: &DecodedEntity) -> Self {
        Self {
            tag: e.tag.clone(),
            phrase: e.phrase.clone(),
        }
    }
}

impl From<&EntityAnnotation> for EntityMention {
    fn from(e: &EntityAnnotation) -> Self {
        Self {
            tag: e.tag.clone(),
            phrase: e.phrase.clone(),
        }
    }
}

/// How entity phrases are normalized before pair matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseNormalization {
    pub lowercase: bool,
    /// Drop leading and trailing tokens made only of punctuation.
    pub strip_punctuation: bool,
}

impl Default for PhraseNormalization {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

impl PhraseNormalization {
    pub fn normalize(&self, phrase: &[String]) -> Vec<String> {
        let is_punct = |t: &String| t.chars().all(|c| c.is_ascii_punctuation() || !c.is_alphanumeric());
        let mut slice = phrase;
        if self.strip_punctuation {
            while let Some((first, rest)) = slice.split_first() {
                if !is_punct(first) {
                    break;
                }
                slice = rest;
            }
            while let Some((last, rest)) = slice.split_last() {
                if !is_punct(last) {
                    break;
                }
                slice = rest;
            }
        }
        slice
            .iter()
            .map(|t| if self.lowercase { t.to_lowercase() } else { t.clone() })
            .collect()
    }

    pub fn describe(&self) -> String {
        format!(
            "phrase normalization: lowercase={}, strip_punctuation={}",
            self.lowercase, self.strip_punctuation
        )
    }
}

fn multiset_counts<K: Eq + Hash>(hyp: impl IntoIterator<Item = K>, reference: impl IntoIterator<Item = K>) -> F1Counts {
    let mut pool: HashMap<K, i64> = HashMap::new();
    let mut n_ref = 0u64;
    for k in reference {
        *pool.entry(k).or_default() += 1;
        n_ref += 1;
    }
    let (mut tp, mut n_hyp) = (0u64, 0u64);
    for k in hyp {
        n_hyp += 1;
        if let Some(c) = pool.get_mut(&k) {
            if *c > 0 {
                *c -= 1;
                tp += 1;
            }
        }
    }
    F1Counts::new(tp, n_hyp - tp, n_ref - tp)
}

fn check_len<A, B>(hyp: &[A], reference: &[B]) -> Result<()> {
    if hyp.len() != reference.len() {
        return Err(Error::LengthMismatch {
            hyp: hyp.len(),
            reference: reference.len(),
        });
    }
    Ok(())
}

fn micro_report(metric: MetricKind, per_utt: Vec<F1Counts>) -> ScoreReport {
    let total: F1Counts = per_utt.iter().copied().sum();
    ScoreReport::new(metric, total.f1(), Support::counts(total)).with_per_utterance(per_utt.iter().map(F1Counts::f1))
}

/// Micro-averaged F1 over multisets of (tag, normalized phrase) pairs.
pub fn ner_f1(
    hyp: &[Vec<EntityMention>],
    reference: &[Vec<EntityMention>],
    norm: &PhraseNormalization,
) -> Result<ScoreReport> {
    check_len(hyp, reference)?;
    let key = |e: &EntityMention| (e.tag.clone(), norm.normalize(&e.phrase));
    let per_utt = hyp
        .iter()
        .zip(reference)
        .map(|(h, r)| multiset_counts(h.iter().map(key), r.iter().map(key)))
        .collect();
    Ok(micro_report(MetricKind::NerF1, per_utt).with_note(norm.describe()))
}

/// Micro-averaged F1 over multisets of tags only; phrase errors are ignored.
pub fn label_f1(hyp: &[Vec<EntityMention>], reference: &[Vec<EntityMention>]) -> Result<ScoreReport> {
    check_len(hyp, reference)?;
    let per_utt = hyp
        .iter()
        .zip(reference)
        .map(|(h, r)| multiset_counts(h.iter().map(|e| &e.tag), r.iter().map(|e| &e.tag)))
        .collect();
    Ok(micro_report(MetricKind::LabelF1, per_utt))
}
