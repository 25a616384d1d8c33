use super::{ScoreReport, Support};
use crate::error::{Error, Result};
use crate::task::MetricKind;

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn rouge_f(lcs: usize, hyp: usize, reference: usize) -> f64 {
    if lcs == 0 {
        0.0
    } else {
        2.0 * lcs as f64 / (hyp + reference) as f64
    }
}

/// ROUGE-L F-measure with beta = 1 over whole-summary token sequences.
pub fn rouge_l<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<ScoreReport> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let l = lcs_len(hyp, reference);
    Ok(ScoreReport::new(
        MetricKind::RougeL,
        rouge_f(l, hyp.len(), reference.len()),
        Support::Lcs {
            items: 1,
            lcs_total: l as u64,
            hyp_tokens: hyp.len() as u64,
            ref_tokens: reference.len() as u64,
        },
    ))
}

/// Mean of per-item ROUGE-L scores.
pub fn corpus_rouge_l<T: PartialEq, H: AsRef<[T]>, R: AsRef<[T]>>(pairs: &[(H, R)]) -> Result<ScoreReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyReference);
    }
    let (mut lcs_total, mut hyp_tokens, mut ref_tokens) = (0u64, 0u64, 0u64);
    let mut scores = Vec::with_capacity(pairs.len());
    for (hyp, reference) in pairs {
        let (hyp, reference) = (hyp.as_ref(), reference.as_ref());
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        let l = lcs_len(hyp, reference);
        lcs_total += l as u64;
        hyp_tokens += hyp.len() as u64;
        ref_tokens += reference.len() as u64;
        scores.push(rouge_f(l, hyp.len(), reference.len()));
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(ScoreReport::new(
        MetricKind::RougeL,
        mean,
        Support::Lcs {
            items: pairs.len(),
            lcs_total,
            hyp_tokens,
            ref_tokens,
        },
    )
    .with_per_utterance(scores))
}
