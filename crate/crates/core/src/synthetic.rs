//! Seeded synthetic corpora for smoke tests and demos.
//!
//! The sentiment generator plants the class signal in one layer only, so a
//! working probe must both classify and move its aggregation weight there.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{write_layerstack, LayerStack};
use crate::manifest::{Manifest, Reference, SentimentLabel, Split, Utterance};
use crate::probe::SENTIMENT_CLASSES;
use crate::task::TaskKind;
use crate::vocab::Vocabularies;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableConfig {
    pub layers: usize,
    /// Index of the only layer whose frames depend on the label.
    pub planted_layer: usize,
    pub dim: usize,
    pub frames: usize,
    pub train_per_class: usize,
    pub dev_per_class: usize,
    pub test_per_class: usize,
    /// Norm of the class mean vectors on the planted layer.
    pub separation: f64,
    pub noise: f64,
    pub frame_rate: f32,
    pub seed: u64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            planted_layer: 2,
            dim: 8,
            frames: 20,
            train_per_class: 40,
            dev_per_class: 20,
            test_per_class: 20,
            separation: 2.0,
            noise: 1.0,
            frame_rate: 50.0,
            seed: 7,
        }
    }
}

pub struct SyntheticCorpus {
    pub manifest: Manifest,
    pub features: Vec<(String, LayerStack)>,
}

/// Three-class sentiment corpus. Class `k` has mean `separation * e_k` on
/// the planted layer; every other layer carries label-independent noise
/// with a per-utterance offset.
pub fn separable_sentiment(cfg: &SeparableConfig) -> Result<SyntheticCorpus> {
    if cfg.planted_layer >= cfg.layers || cfg.dim < SENTIMENT_CLASSES || cfg.frames == 0 {
        return Err(Error::InvalidConfig(format!("bad synthetic config {cfg:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let duration = cfg.frames as f64 / cfg.frame_rate as f64;

    let mut utterances = Vec::new();
    let mut features = Vec::new();
    for (split, per_class) in [
        (Split::Train, cfg.train_per_class),
        (Split::Dev, cfg.dev_per_class),
        (Split::Test, cfg.test_per_class),
    ] {
        for i in 0..per_class * SENTIMENT_CLASSES {
            let class = i % SENTIMENT_CLASSES;
            let id = format!("{}-{i:04}", split.as_str());
            let offsets: Vec<Vec<f64>> = (0..cfg.layers)
                .map(|_| (0..cfg.dim).map(|_| unit.sample(&mut rng)).collect())
                .collect();
            let mut data = Array3::<f32>::zeros((cfg.layers, cfg.frames, cfg.dim));
            for ((l, _, d), v) in data.indexed_iter_mut() {
                let base = if l == cfg.planted_layer {
                    if d == class {
                        cfg.separation
                    } else {
                        0.0
                    }
                } else {
                    offsets[l][d]
                };
                *v = (base + noise.sample(&mut rng)) as f32;
            }
            features.push((id.clone(), LayerStack::new(data, cfg.frame_rate)?));
            let label = SentimentLabel::from_index(class).expect("three classes");
            utterances.push(Utterance {
                id,
                duration,
                split,
                transcript: vec![label.as_str().to_string()],
                audio: None,
                reference: Reference::Sentiment(label),
                meta: BTreeMap::new(),
            });
        }
    }
    Ok(SyntheticCorpus {
        manifest: Manifest {
            task: TaskKind::Sa,
            utterances,
            vocab: Vocabularies::default(),
        },
        features,
    })
}

/// Write `manifest.jsonl` and `features/<id>.lstk` under `dir`.
pub fn write_corpus(corpus: &SyntheticCorpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let feat_dir = dir.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    corpus.manifest.save(dir.join("manifest.jsonl"))?;
    for (id, stack) in &corpus.features {
        write_layerstack(stack, feat_dir.join(format!("{id}.lstk")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let cfg = SeparableConfig {
            train_per_class: 2,
            dev_per_class: 1,
            test_per_class: 1,
            ..Default::default()
        };
        let a = separable_sentiment(&cfg).unwrap();
        let b = separable_sentiment(&cfg).unwrap();
        assert_eq!(a.manifest.utterances.len(), 12);
        assert_eq!(a.features.len(), 12);
        for ((ia, sa), (ib, sb)) in a.features.iter().zip(&b.features) {
            assert_eq!(ia, ib);
            assert_eq!(sa.data(), sb.data());
        }
        assert_eq!(a.manifest.split(Split::Train).count(), 6);
    }

    #[test]
    fn rejects_planted_layer_out_of_range() {
        let cfg = SeparableConfig {
            planted_layer: 4,
            ..Default::default()
        };
        assert!(separable_sentiment(&cfg).is_err());
    }
}
