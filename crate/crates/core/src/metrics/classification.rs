use std::collections::BTreeSet;

use super::{ClassScore, F1Counts, ScoreReport, Support};
use crate::error::{Error, Result};
use crate::task::MetricKind;

fn macro_report(per_class: Vec<F1Counts>, per_utt: Vec<f64>) -> ScoreReport {
    let classes: Vec<ClassScore> = per_class
        .into_iter()
        .enumerate()
        .map(|(class, counts)| ClassScore {
            class,
            counts,
            f1: counts.f1(),
        })
        .collect();
    let value = if classes.is_empty() {
        0.0
    } else {
        classes.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64
    };
    ScoreReport::new(MetricKind::MacroF1, value, Support::PerClass { classes }).with_per_utterance(per_utt)
}

/// Single-label macro-F1: unweighted mean of one-vs-rest F1 over all
/// `n_classes` classes. Classes never seen in either side score 0.
pub fn macro_f1(hyp: &[usize], reference: &[usize], n_classes: usize) -> Result<ScoreReport> {
    if hyp.len() != reference.len() {
        return Err(Error::LengthMismatch {
            hyp: hyp.len(),
            reference: reference.len(),
        });
    }
    if let Some(bad) = hyp.iter().chain(reference).find(|&&c| c >= n_classes) {
        return Err(Error::UnknownClass(bad.to_string()));
    }
    let mut counts = vec![F1Counts::default(); n_classes];
    for (&h, &r) in hyp.iter().zip(reference) {
        if h == r {
            counts[h].tp += 1;
        } else {
            counts[h].fp += 1;
            counts[r].fn_ += 1;
        }
    }
    let per_utt = hyp.iter().zip(reference).map(|(h, r)| f64::from(u8::from(h == r)));
    Ok(macro_report(counts, per_utt.collect()))
}

/// Multi-label macro-F1 over label sets, averaged over all `n_classes`.
pub fn dac_f1(hyp: &[BTreeSet<usize>], reference: &[BTreeSet<usize>], n_classes: usize) -> Result<ScoreReport> {
    if hyp.len() != reference.len() {
        return Err(Error::LengthMismatch {
            hyp: hyp.len(),
            reference: reference.len(),
        });
    }
    if let Some(bad) = hyp.iter().chain(reference).flatten().find(|&&c| c >= n_classes) {
        return Err(Error::UnknownClass(bad.to_string()));
    }
    let mut counts = vec![F1Counts::default(); n_classes];
    let mut per_utt = Vec::with_capacity(hyp.len());
    for (h, r) in hyp.iter().zip(reference) {
        let mut utt = F1Counts::default();
        for &c in h.union(r) {
            let delta = match (h.contains(&c), r.contains(&c)) {
                (true, true) => F1Counts::new(1, 0, 0),
                (true, false) => F1Counts::new(0, 1, 0),
                _ => F1Counts::new(0, 0, 1),
            };
            counts[c] += delta;
            utt += delta;
        }
        per_utt.push(if h.is_empty() && r.is_empty() { 1.0 } else { utt.f1() });
    }
    Ok(macro_report(counts, per_utt))
}
