//! Linear probes on frozen features: softmax-weighted layer aggregation,
//! mean pooling, and a linear head, trained jointly by full-batch gradient
//! descent.
//!
//! For one example with per-layer pooled means `m_l` and layer weights
//! `w = softmax(a)`:
//!
//! ```text
//! p = sum_l w_l m_l          z = W p + b
//! sentiment:   loss = logsumexp(z) - z_y                dz = softmax(z) - onehot(y)
//! dialog acts: loss = mean_c softplus(z_c) - y_c z_c    dz = (sigmoid(z) - y) / C
//! dW = dz p^T   db = dz   g_l = (W^T dz) . m_l   da_l = w_l (g_l - sum_k w_k g_k)
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{mean_pool, read_layerstack, softmax, weighted_sum, AggregationWeights, LayerStack};
use crate::manifest::{Manifest, Reference, Split};
use crate::metrics::{dac_f1, macro_f1};
use crate::task::TaskKind;

pub const SENTIMENT_CLASSES: usize = 3;
pub const DAC_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProbe {
    pub task: TaskKind,
    /// `C x D`, row-major.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub agg: AggregationWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeGradients {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbeLabel {
    Class(usize),
    Acts(BTreeSet<usize>),
}

/// A training example reduced to its per-layer time averages (`L x D`).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub layer_means: Array2<f64>,
    pub label: ProbeLabel,
}

impl Example {
    pub fn from_stack(stack: &LayerStack, label: ProbeLabel) -> Self {
        Self {
            layer_means: stack.layer_means(),
            label,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LinearProbe {
    /// Zero-initialized probe with uniform layer weights.
    pub fn zeros(task: TaskKind, classes: usize, layers: usize, dim: usize) -> Result<Self> {
        match task {
            TaskKind::Sa if classes != SENTIMENT_CLASSES => {
                return Err(Error::InvalidConfig(format!(
                    "sentiment probes have 3 classes, got {classes}"
                )))
            }
            TaskKind::Sa | TaskKind::Dac => {}
            other => return Err(Error::InvalidConfig(format!("no linear probe for task {other}"))),
        }
        if classes == 0 || layers == 0 || dim == 0 {
            return Err(Error::InvalidConfig("probe dimensions must be >= 1".into()));
        }
        Ok(Self {
            task,
            weight: Array2::zeros((classes, dim)),
            bias: Array1::zeros(classes),
            agg: AggregationWeights::uniform(layers),
        })
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn layers(&self) -> usize {
        self.agg.len()
    }

    fn check_layer_means(&self, m: ArrayView2<'_, f64>) -> Result<()> {
        if m.ncols() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: m.ncols(),
            });
        }
        if m.nrows() != self.layers() {
            return Err(Error::LayerCountMismatch {
                weights: self.layers(),
                layers: m.nrows(),
            });
        }
        Ok(())
    }

    fn activate(&self, z: Array1<f64>) -> Vec<f64> {
        match self.task {
            TaskKind::Sa => softmax(z.as_slice().expect("contiguous")),
            _ => z.iter().map(|&v| sigmoid(v)).collect(),
        }
    }

    /// Class scores: softmax probabilities for sentiment, independent
    /// sigmoid probabilities for dialog acts.
    pub fn forward(&self, stack: &LayerStack) -> Result<Vec<f64>> {
        if stack.dim() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                actual: stack.dim(),
            });
        }
        let pooled = mean_pool(weighted_sum(stack, &self.agg)?.view())?;
        Ok(self.activate(self.weight.dot(&pooled) + &self.bias))
    }

    /// Same as [`forward`](Self::forward) on precomputed layer means.
    pub fn forward_pooled(&self, layer_means: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_layer_means(layer_means)?;
        let w = Array1::from(self.agg.weights());
        let pooled = layer_means.t().dot(&w);
        Ok(self.activate(self.weight.dot(&pooled) + &self.bias))
    }

    fn example_loss_grad(&self, ex: &Example, w: &Array1<f64>) -> Result<(f64, ProbeGradients)> {
        let m = ex.layer_means.view();
        self.check_layer_means(m)?;
        let pooled = m.t().dot(w);
        let z = self.weight.dot(&pooled) + &self.bias;
        let c = self.classes();
        let (loss, dz) = match (&self.task, &ex.label) {
            (TaskKind::Sa, ProbeLabel::Class(y)) if *y < c => {
                let s = softmax(z.as_slice().expect("contiguous"));
                let max = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                let mut dz = Array1::from(s);
                dz[*y] -= 1.0;
                (lse - z[*y], dz)
            }
            (TaskKind::Dac, ProbeLabel::Acts(acts)) if acts.iter().all(|&a| a < c) => {
                let mut loss = 0.0;
                let mut dz = Array1::zeros(c);
                for k in 0..c {
                    let y = if acts.contains(&k) { 1.0 } else { 0.0 };
                    loss += softplus(z[k]) - y * z[k];
                    dz[k] = (sigmoid(z[k]) - y) / c as f64;
                }
                (loss / c as f64, dz)
            }
            (_, label) => {
                return Err(Error::Validation(format!(
                    "label {label:?} invalid for {} probe with {c} classes",
                    self.task
                )))
            }
        };

        let d_weight = dz
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&pooled.view().insert_axis(ndarray::Axis(0)));
        let d_pooled = self.weight.t().dot(&dz);
        let g = m.dot(&d_pooled);
        let mean_g = w.dot(&g);
        let d_logits = w.iter().zip(g.iter()).map(|(wl, gl)| wl * (gl - mean_g)).collect();
        Ok((
            loss,
            ProbeGradients {
                weight: d_weight,
                bias: dz,
                logits: d_logits,
            },
        ))
    }

    /// Mean loss over `batch` and its exact gradient.
    pub fn loss_and_grad(&self, batch: &[Example]) -> Result<(f64, ProbeGradients)> {
        if batch.is_empty() {
            return Err(Error::EmptyInput);
        }
        let w = Array1::from(self.agg.weights());
        let per_example: Vec<(f64, ProbeGradients)> = batch
            .par_iter()
            .map(|ex| self.example_loss_grad(ex, &w))
            .collect::<Result<_>>()?;

        // Ordered reduction keeps results bit-identical across runs.
        let mut loss = 0.0;
        let mut grad = ProbeGradients {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.classes()),
            logits: vec![0.0; self.layers()],
        };
        for (l, g) in per_example {
            loss += l;
            grad.weight += &g.weight;
            grad.bias += &g.bias;
            for (acc, v) in grad.logits.iter_mut().zip(g.logits) {
                *acc += v;
            }
        }
        let n = batch.len() as f64;
        grad.weight /= n;
        grad.bias /= n;
        grad.logits.iter_mut().for_each(|v| *v /= n);
        Ok((loss / n, grad))
    }

    /// Predicted sentiment class (argmax, lowest index on ties).
    pub fn predict_class(&self, layer_means: ArrayView2<'_, f64>) -> Result<usize> {
        let scores = self.forward_pooled(layer_means)?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn predict_acts(&self, layer_means: ArrayView2<'_, f64>) -> Result<BTreeSet<usize>> {
        Ok(threshold_acts(&self.forward_pooled(layer_means)?))
    }

    fn predict(&self, ex: &Example) -> Result<ProbeLabel> {
        Ok(match self.task {
            TaskKind::Sa => ProbeLabel::Class(self.predict_class(ex.layer_means.view())?),
            _ => ProbeLabel::Acts(self.predict_acts(ex.layer_means.view())?),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Classes whose probability is strictly greater than 0.5.
pub fn threshold_acts(scores: &[f64]) -> BTreeSet<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > DAC_THRESHOLD)
        .map(|(i, _)| i)
        .collect()
}

pub fn predict_dac(probe: &LinearProbe, stack: &LayerStack) -> Result<BTreeSet<usize>> {
    Ok(threshold_acts(&probe.forward(stack)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Recorded in the log. Training itself is deterministic: zero init,
    /// full batch, fixed example order.
    pub seed: u64,
    /// L2 penalty on the head weights.
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            seed: 0,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(format!("weight decay {}", self.weight_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned (0 = initialization).
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("log rows serialize") + "\n")
            .collect()
    }
}

/// Dev score used for model selection: macro-F1 for both tasks.
pub fn evaluate(probe: &LinearProbe, examples: &[Example]) -> Result<f64> {
    let preds: Vec<ProbeLabel> = examples.iter().map(|ex| probe.predict(ex)).collect::<Result<_>>()?;
    match probe.task {
        TaskKind::Sa => {
            let hyp: Vec<usize> = preds.iter().map(label_class).collect::<Result<_>>()?;
            let reference: Vec<usize> = examples.iter().map(|e| label_class(&e.label)).collect::<Result<_>>()?;
            Ok(macro_f1(&hyp, &reference, probe.classes())?.value)
        }
        _ => {
            let hyp: Vec<BTreeSet<usize>> = preds.iter().map(label_acts).collect::<Result<_>>()?;
            let reference: Vec<BTreeSet<usize>> =
                examples.iter().map(|e| label_acts(&e.label)).collect::<Result<_>>()?;
            Ok(dac_f1(&hyp, &reference, probe.classes())?.value)
        }
    }
}

fn label_class(l: &ProbeLabel) -> Result<usize> {
    match l {
        ProbeLabel::Class(c) => Ok(*c),
        other => Err(Error::Validation(format!("expected a class label, got {other:?}"))),
    }
}

fn label_acts(l: &ProbeLabel) -> Result<BTreeSet<usize>> {
    match l {
        ProbeLabel::Acts(a) => Ok(a.clone()),
        other => Err(Error::Validation(format!("expected an act set, got {other:?}"))),
    }
}

/// Full-batch gradient descent from `init`; returns the parameters with the
/// best dev score (earliest epoch on ties), or the final ones without dev data.
pub fn train_examples(
    init: LinearProbe,
    train: &[Example],
    dev: &[Example],
    config: &TrainConfig,
) -> Result<(LinearProbe, TrainingLog)> {
    config.validate()?;
    let mut log = TrainingLog {
        seed: config.seed,
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: 0,
    };
    if config.epochs == 0 {
        return Ok((init, log));
    }
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lr = config.learning_rate;
    let mut probe = init;
    let mut best: Option<(f64, LinearProbe)> = None;
    for epoch in 1..=config.epochs {
        let (loss, grad) = probe.loss_and_grad(train)?;
        let decay = 0.5 * config.weight_decay * probe.weight.iter().map(|v| v * v).sum::<f64>();
        probe
            .weight
            .zip_mut_with(&grad.weight, |w, g| *w -= lr * (g + config.weight_decay * *w));
        probe.bias.zip_mut_with(&grad.bias, |b, g| *b -= lr * g);
        for (a, g) in probe.agg.logits.iter_mut().zip(&grad.logits) {
            *a -= lr * g;
        }

        let dev_score = if dev.is_empty() {
            None
        } else {
            Some(evaluate(&probe, dev)?)
        };
        log.epochs.push(EpochLog {
            epoch,
            train_loss: loss + decay,
            dev_score,
        });
        if let Some(score) = dev_score {
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, probe.clone()));
                log.best_epoch = epoch;
            }
        }
    }
    match best {
        Some((_, p)) => Ok((p, log)),
        None => {
            log.best_epoch = config.epochs;
            Ok((probe, log))
        }
    }
}

/// Label of a manifest utterance in probe form.
pub fn probe_label(task: TaskKind, reference: &Reference) -> Result<ProbeLabel> {
    match (task, reference) {
        (TaskKind::Sa, Reference::Sentiment(s)) => Ok(ProbeLabel::Class(s.index())),
        (TaskKind::Dac, Reference::DialogActs(a)) => Ok(ProbeLabel::Acts(a.clone())),
        _ => Err(Error::Validation(format!("reference does not fit a {task} probe"))),
    }
}

/// Load `<dir>/<id>.lstk` for every utterance of `split`.
pub fn load_examples(manifest: &Manifest, features_dir: &Path, split: Split) -> Result<Vec<(String, Example)>> {
    manifest
        .split(split)
        .map(|utt| {
            let path = features_dir.join(format!("{}.lstk", utt.id));
            if !path.exists() {
                return Err(Error::MissingFeatures(utt.id.clone()));
            }
            let stack = read_layerstack(&path)?;
            let label = probe_label(manifest.task, &utt.reference)?;
            Ok((utt.id.clone(), Example::from_stack(&stack, label)))
        })
        .collect()
}

/// Train a probe for an SA or DAC manifest from a directory of LSTK files.
pub fn train(
    manifest: &Manifest,
    features_dir: impl AsRef<Path>,
    config: &TrainConfig,
) -> Result<(LinearProbe, TrainingLog)> {
    let dir = features_dir.as_ref();
    let strip = |v: Vec<(String, Example)>| v.into_iter().map(|(_, e)| e).collect::<Vec<_>>();
    let train_set = strip(load_examples(manifest, dir, Split::Train)?);
    let dev_set = strip(load_examples(manifest, dir, Split::Dev)?);
    let first = train_set
        .first()
        .ok_or_else(|| Error::MissingInput("no training utterances".into()))?;
    let classes = match manifest.task {
        TaskKind::Sa => SENTIMENT_CLASSES,
        _ => manifest.vocab.dialog_acts.len(),
    };
    let (layers, dim) = first.layer_means.dim();
    let init = LinearProbe::zeros(manifest.task, classes, layers, dim)?;
    train_examples(init, &train_set, &dev_set, config)
}
