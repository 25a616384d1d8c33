use serde::{Deserialize, Serialize};

use super::{ScoreReport, Support};
use crate::error::{Error, Result};
use crate::task::MetricKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub substitutions: u64,
    pub deletions: u64,
    pub insertions: u64,
    pub ref_len: u64,
}

impl EditCounts {
    pub fn errors(&self) -> u64 {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn rate(&self) -> f64 {
        self.errors() as f64 / self.ref_len as f64
    }

    fn add(self, o: Self) -> Self {
        Self {
            substitutions: self.substitutions + o.substitutions,
            deletions: self.deletions + o.deletions,
            insertions: self.insertions + o.insertions,
            ref_len: self.ref_len + o.ref_len,
        }
    }
}

/// Minimal unit-cost alignment of `hyp` against `reference`.
///
/// When several alignments share the minimal cost, the backtrace prefers
/// match/substitution, then deletion, then insertion.
pub fn edit_counts<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let mut dp = vec![0u32; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in 0..=n {
        dp[idx(i, 0)] = i as u32;
    }
    for j in 0..=m {
        dp[idx(0, j)] = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dp[idx(i - 1, j - 1)] + u32::from(reference[i - 1] != hyp[j - 1]);
            let del = dp[idx(i - 1, j)] + 1;
            let ins = dp[idx(i, j - 1)] + 1;
            dp[idx(i, j)] = sub.min(del).min(ins);
        }
    }

    let mut counts = EditCounts {
        ref_len: n as u64,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[idx(i, j)];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hyp[j - 1];
            if here == dp[idx(i - 1, j - 1)] + u32::from(!same) {
                if !same {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == dp[idx(i - 1, j)] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

pub fn wer<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<ScoreReport> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let c = edit_counts(hyp, reference);
    Ok(ScoreReport::new(MetricKind::Wer, c.rate(), Support::Edits(c)))
}

/// Corpus WER: edit counts pooled over utterances, divided by the total
/// reference length (not the mean of per-utterance rates).
pub fn corpus_wer<T: PartialEq, H: AsRef<[T]>, R: AsRef<[T]>>(pairs: &[(H, R)]) -> Result<ScoreReport> {
    let mut total = EditCounts::default();
    let mut per_utt = Vec::with_capacity(pairs.len());
    for (hyp, reference) in pairs {
        let (hyp, reference) = (hyp.as_ref(), reference.as_ref());
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        let c = edit_counts(hyp, reference);
        per_utt.push(c.rate());
        total = total.add(c);
    }
    if total.ref_len == 0 {
        return Err(Error::EmptyReference);
    }
    Ok(ScoreReport::new(MetricKind::Wer, total.rate(), Support::Edits(total)).with_per_utterance(per_utt))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_is_zero() {
        let r = wer(&w("a b c"), &w("a b c")).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(
            r.support,
            Support::Edits(EditCounts {
                ref_len: 3,
                ..Default::default()
            })
        );
    }

    #[test]
    fn one_substitution() {
        let c = edit_counts(&w("a x c"), &w("a b c"));
        assert_eq!((c.substitutions, c.deletions, c.insertions), (1, 0, 0));
        assert!((wer(&w("a x c"), &w("a b c")).unwrap().value - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_hypothesis_is_all_deletions() {
        let c = edit_counts::<&str>(&[], &w("a b"));
        assert_eq!(c.deletions, 2);
        assert_eq!(wer::<&str>(&[], &w("a b")).unwrap().value, 1.0);
    }

    #[test]
    fn insertions_counted() {
        let c = edit_counts(&w("a b c d"), &w("a c"));
        assert_eq!((c.substitutions, c.deletions, c.insertions), (0, 0, 2));
    }

    #[test]
    fn empty_reference_rejected() {
        assert!(matches!(wer(&w("a"), &[]), Err(Error::EmptyReference)));
    }

    #[test]
    fn corpus_pools_counts() {
        let pairs = [(w("a x c"), w("a b c")), (w(""), w("a b"))];
        let r = corpus_wer(&pairs).unwrap();
        assert!((r.value - 3.0 / 5.0).abs() < 1e-15);
        // Mean of per-utterance rates would be (1/3 + 1) / 2.
        let mean: f64 = r.per_utterance.iter().map(|u| u.value).sum::<f64>() / 2.0;
        assert!((mean - 2.0 / 3.0).abs() < 1e-15);
    }
}
