#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use slu_bench::ctc::{write_posteriors, PosteriorMatrix};
use slu_bench::manifest::{Manifest, Reference, Split, Utterance};
use slu_bench::task::TaskKind;
use slu_bench::vocab::{TokenVocab, Vocabularies};

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn utt(id: &str, split: Split, transcript: &str, reference: Reference) -> Utterance {
    Utterance {
        id: id.into(),
        duration: 10.0,
        split,
        transcript: toks(transcript),
        audio: None,
        reference,
        meta: BTreeMap::new(),
    }
}

pub fn manifest(task: TaskKind, utterances: Vec<Utterance>) -> Manifest {
    Manifest {
        task,
        utterances,
        vocab: Vocabularies::default(),
    }
}

/// Posteriors with probability 1 on `path[t]` at every frame.
pub fn one_hot(path: &[usize], vocab: usize, frame_rate: f64) -> PosteriorMatrix {
    let mut p = Array2::zeros((path.len(), vocab));
    for (t, &k) in path.iter().enumerate() {
        p[[t, k]] = 1.0;
    }
    PosteriorMatrix::from_probs(p, frame_rate).unwrap()
}

/// Frame path emitting each id for `run` frames followed by one blank.
pub fn spaced_path(ids: &[usize], run: usize) -> Vec<usize> {
    let mut path = Vec::new();
    for &id in ids {
        path.extend(std::iter::repeat_n(id, run));
        path.push(0);
    }
    path
}

/// Vocabulary "<blank>" followed by the distinct tokens of `sentences`.
pub fn vocab_for(sentences: &[&str]) -> TokenVocab {
    let mut tokens = vec!["<blank>".to_string()];
    for s in sentences {
        for t in s.split_whitespace() {
            if !tokens.iter().any(|x| x == t) {
                tokens.push(t.to_string());
            }
        }
    }
    TokenVocab::new(tokens).unwrap()
}

pub fn ids(vocab: &TokenVocab, sentence: &str) -> Vec<usize> {
    sentence.split_whitespace().map(|t| vocab.id(t).unwrap()).collect()
}

pub fn write_one_hot(dir: &Path, id: &str, vocab: &TokenVocab, sentence: &str, run: usize, fr: f64) {
    let post = one_hot(&spaced_path(&ids(vocab, sentence), run), vocab.len(), fr);
    write_posteriors(&post, dir.join(format!("{id}.lstk"))).unwrap();
}
