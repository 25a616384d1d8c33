//! End-to-end evaluation runs: load a manifest and a system's outputs,
//! decode them, score every requested split, and record what was done.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{read_hypotheses, validate_frames, HypothesisRow, NerCodec, QaCodec, SpecialTokens};
use crate::ctc::{
    greedy_decode, read_posteriors, read_posteriors_jsonl, token_spans_to_time, Alignment, PosteriorMatrix,
};
use crate::error::{Error, Result};
use crate::features::DEFAULT_FRAME_RATE;
use crate::manifest::{load_manifest_with, Manifest, Reference, Split, TimeSpan, Utterance};
use crate::metrics::{
    corpus_rouge_l, corpus_wer, dac_f1, frame_f1, label_f1, macro_f1, ner_f1, tune_offset, EntityMention, OffsetGrid,
    PhraseNormalization, ScoreReport, UtteranceSpans,
};
use crate::probe::{self, LinearProbe, ProbeLabel, TrainConfig, TrainingLog, SENTIMENT_CLASSES};
use crate::task::{task_metric_spec, MetricKind, Protocol, TaskKind};
use crate::vocab::{TokenVocab, Vocabularies};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Paths to everything a run may read. Which ones are required depends on
/// the task; see [`RunSpec::validate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInputs {
    pub manifest: PathBuf,
    /// Directory of `<id>.lstk` layer stacks (SA, DAC).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// JSONL `{"id", "label"}` (SA) or `{"id", "acts"}` (DAC).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    /// Directory of `<id>.lstk` posterior files, or one JSONL file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posteriors: Option<PathBuf>,
    /// JSONL `{"id", "tokens"}` or `{"id", "frames"}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypotheses: Option<PathBuf>,
    /// CTC token vocabulary, one token per line, blank first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    /// JSONL `{"id", "spans": [{"start", "end"}]}` with predicted times (NEL, QA).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<PathBuf>,
    /// JSON `{"provenance", "scores": {"dev": x, "test": y}}` (SUMM).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bertscore: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum OffsetMode {
    /// Pick the offset maximizing dev frame-F1 and reuse it everywhere.
    Tune {
        grid: OffsetGrid,
    },
    Fixed {
        offset: f64,
    },
}

impl Default for OffsetMode {
    fn default() -> Self {
        OffsetMode::Tune {
            grid: OffsetGrid::default(),
        }
    }
}

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE as f64
}

fn default_splits() -> Vec<Split> {
    vec![Split::Dev, Split::Test]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub task: TaskKind,
    pub protocol: Protocol,
    pub model: String,
    pub inputs: RunInputs,
    #[serde(default = "default_splits")]
    pub splits: Vec<Split>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub offset: OffsetMode,
    /// Frame rate used to discretize spans for frame-F1, and to time frame
    /// hypotheses that carry no rate of their own.
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default)]
    pub normalization: PhraseNormalization,
    #[serde(default)]
    pub specials: SpecialTokens,
    #[serde(default)]
    pub vocabularies: Vocabularies,
}

impl RunSpec {
    pub fn new(task: TaskKind, protocol: Protocol, model: impl Into<String>, manifest: impl Into<PathBuf>) -> Self {
        Self {
            task,
            protocol,
            model: model.into(),
            inputs: RunInputs {
                manifest: manifest.into(),
                ..Default::default()
            },
            splits: default_splits(),
            train: TrainConfig::default(),
            offset: OffsetMode::default(),
            frame_rate: default_frame_rate(),
            normalization: PhraseNormalization::default(),
            specials: SpecialTokens::default(),
            vocabularies: Vocabularies::default(),
        }
    }

    /// Check that the supplied inputs can produce this task's outputs.
    pub fn validate(&self) -> Result<()> {
        let i = &self.inputs;
        let (ok, needs) = match self.task {
            TaskKind::Sa | TaskKind::Dac => (
                i.features.is_some() || i.predictions.is_some(),
                "features or predictions",
            ),
            TaskKind::Ner => (
                i.posteriors.is_some() || i.hypotheses.is_some(),
                "posteriors or hypotheses",
            ),
            TaskKind::Nel | TaskKind::Qa => (
                i.posteriors.is_some() || i.hypotheses.is_some() || i.spans.is_some(),
                "posteriors, frame hypotheses, or spans",
            ),
            TaskKind::Asr | TaskKind::Summ => (i.posteriors.is_some() || i.hypotheses.is_some(), "hypotheses"),
        };
        if !ok {
            return Err(Error::MissingInput(format!("{} run needs {needs}", self.task)));
        }
        if i.posteriors.is_some() && i.vocab.is_none() {
            return Err(Error::MissingInput("posteriors need a token vocabulary".into()));
        }
        if self.splits.is_empty() {
            return Err(Error::InvalidConfig("no splits to evaluate".into()));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::InvalidConfig(format!("frame rate {}", self.frame_rate)));
        }
        if let OffsetMode::Fixed { offset } = self.offset {
            if !offset.is_finite() {
                return Err(Error::InvalidConfig(format!("offset {offset}")));
            }
        }
        Ok(())
    }

    fn expect_task(&self, allowed: &[TaskKind]) -> Result<()> {
        if allowed.contains(&self.task) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "pipeline does not handle task {}",
                self.task
            )))
        }
    }

    fn load_manifest(&self) -> Result<Manifest> {
        load_manifest_with(&self.inputs.manifest, self.task, &self.vocabularies)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: Split,
    pub utterances: usize,
    pub metrics: Vec<ScoreReport>,
    /// Metrics of the task that could not be computed, e.g. an external
    /// score that was not supplied.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub absent: Vec<MetricKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetSource {
    Dev,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetRecord {
    /// Seconds added to every predicted span before scoring.
    pub offset: f64,
    pub source: OffsetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_frame_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub spec: RunSpec,
    pub results: Vec<SplitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<OffsetRecord>,
    /// Marker tokens dropped while decoding label sequences.
    #[serde(default)]
    pub malformed_regions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_log: Option<TrainingLog>,
    pub wall_clock_seconds: f64,
    pub engine_version: String,
    pub finished_at: DateTime<Utc>,
    #[serde(skip)]
    pub probe: Option<LinearProbe>,
}

impl RunResult {
    pub fn split(&self, split: Split) -> Option<&SplitResult> {
        self.results.iter().find(|r| r.split == split)
    }

    pub fn metric(&self, split: Split, metric: MetricKind) -> Option<&ScoreReport> {
        self.split(split)?.metrics.iter().find(|m| m.metric == metric)
    }

    /// Every split lists each metric of the task exactly once, either as a
    /// score or as absent, in registry order.
    pub fn check_schema(&self) -> Result<()> {
        let expected: Vec<MetricKind> = task_metric_spec(self.spec.task).iter().map(|d| d.metric).collect();
        for r in &self.results {
            let mut got: Vec<MetricKind> = r
                .metrics
                .iter()
                .map(|m| m.metric)
                .chain(r.absent.iter().copied())
                .collect();
            got.sort_by_key(|m| expected.iter().position(|e| e == m));
            if got != expected {
                return Err(Error::Validation(format!(
                    "{} split reports {got:?}, task {} expects {expected:?}",
                    r.split, self.spec.task
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct Partial {
    results: Vec<SplitResult>,
    offset: Option<OffsetRecord>,
    malformed: usize,
    training_log: Option<TrainingLog>,
    probe: Option<LinearProbe>,
}

impl Partial {
    fn new(results: Vec<SplitResult>) -> Self {
        Self {
            results,
            offset: None,
            malformed: 0,
            training_log: None,
            probe: None,
        }
    }

    fn finish(self, spec: &RunSpec, started: Instant) -> Result<RunResult> {
        let result = RunResult {
            spec: spec.clone(),
            results: self.results,
            offset: self.offset,
            malformed_regions: self.malformed,
            training_log: self.training_log,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            engine_version: ENGINE_VERSION.to_string(),
            finished_at: Utc::now(),
            probe: self.probe,
        };
        result.check_schema()?;
        Ok(result)
    }
}

/// Dispatch to the pipeline for `spec.task`.
pub fn run(spec: &RunSpec) -> Result<RunResult> {
    match spec.task {
        TaskKind::Sa | TaskKind::Dac => run_classification(spec),
        TaskKind::Ner | TaskKind::Nel => run_ner_nel(spec),
        TaskKind::Qa => run_qa(spec),
        TaskKind::Asr | TaskKind::Summ => run_text_task(spec),
    }
}

fn split_utterances(manifest: &Manifest, split: Split) -> Result<Vec<&Utterance>> {
    let utts: Vec<&Utterance> = manifest.split(split).collect();
    if utts.is_empty() {
        return Err(Error::MissingInput(format!("manifest has no {split} utterances")));
    }
    Ok(utts)
}

fn ids_of(utts: &[&Utterance]) -> Vec<String> {
    utts.iter().map(|u| u.id.clone()).collect()
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn index_by_id<T>(rows: Vec<(String, T)>) -> Result<HashMap<String, T>> {
    let mut map = HashMap::with_capacity(rows.len());
    for (id, v) in rows {
        if map.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        map.insert(id, v);
    }
    Ok(map)
}

// ---------------------------------------------------------------- SA / DAC

#[derive(Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum PredictionRow {
    Label { id: String, label: String },
    Acts { id: String, acts: Vec<String> },
}

fn read_predictions(path: &Path, manifest: &Manifest) -> Result<HashMap<String, ProbeLabel>> {
    let rows: Vec<PredictionRow> = parse_jsonl(path)?;
    let converted = rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let schema = |message: String| Error::Schema { line: i + 1, message };
            match (manifest.task, row) {
                (TaskKind::Sa, PredictionRow::Label { id, label }) => {
                    let l: crate::manifest::SentimentLabel = label.parse().map_err(schema)?;
                    Ok((id, ProbeLabel::Class(l.index())))
                }
                (TaskKind::Dac, PredictionRow::Acts { id, acts }) => {
                    let set = acts
                        .iter()
                        .map(|a| {
                            manifest
                                .vocab
                                .dialog_act_id(a)
                                .ok_or_else(|| schema(format!("unknown dialog act {a:?}")))
                        })
                        .collect::<Result<_>>()?;
                    Ok((id, ProbeLabel::Acts(set)))
                }
                (task, _) => Err(schema(format!("prediction row does not fit task {task}"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    index_by_id(converted)
}

fn score_classification(
    task: TaskKind,
    n_classes: usize,
    ids: &[String],
    hyp: &[ProbeLabel],
    reference: &[ProbeLabel],
) -> Result<ScoreReport> {
    let report = match task {
        TaskKind::Sa => {
            let cls = |v: &[ProbeLabel]| -> Vec<usize> {
                v.iter()
                    .map(|l| match l {
                        ProbeLabel::Class(c) => *c,
                        ProbeLabel::Acts(_) => usize::MAX,
                    })
                    .collect()
            };
            macro_f1(&cls(hyp), &cls(reference), n_classes)?
        }
        _ => {
            let acts = |v: &[ProbeLabel]| -> Vec<_> {
                v.iter()
                    .map(|l| match l {
                        ProbeLabel::Acts(a) => a.clone(),
                        ProbeLabel::Class(_) => Default::default(),
                    })
                    .collect()
            };
            dac_f1(&acts(hyp), &acts(reference), n_classes)?
        }
    };
    Ok(report.with_ids(ids))
}

/// SA and DAC. Scores supplied predictions when given; otherwise trains a
/// linear probe on the train split and predicts every requested split.
pub fn run_classification(spec: &RunSpec) -> Result<RunResult> {
    let started = Instant::now();
    spec.expect_task(&[TaskKind::Sa, TaskKind::Dac])?;
    spec.validate()?;
    let manifest = spec.load_manifest()?;
    let n_classes = match spec.task {
        TaskKind::Sa => SENTIMENT_CLASSES,
        _ => manifest.vocab.dialog_acts.len(),
    };

    let mut results = Vec::new();
    let mut partial_log = None;
    let mut trained = None;
    if let Some(pred_path) = &spec.inputs.predictions {
        let preds = read_predictions(pred_path, &manifest)?;
        for &split in &spec.splits {
            let utts = split_utterances(&manifest, split)?;
            let ids = ids_of(&utts);
            let hyp = ids
                .iter()
                .map(|id| {
                    preds
                        .get(id)
                        .cloned()
                        .ok_or_else(|| Error::MissingHypothesis(id.clone()))
                })
                .collect::<Result<Vec<_>>>()?;
            let reference = utts
                .iter()
                .map(|u| probe::probe_label(spec.task, &u.reference))
                .collect::<Result<Vec<_>>>()?;
            results.push(SplitResult {
                split,
                utterances: utts.len(),
                metrics: vec![score_classification(spec.task, n_classes, &ids, &hyp, &reference)?],
                absent: Vec::new(),
            });
        }
    } else {
        let dir = spec.inputs.features.as_ref().expect("validated");
        let (probe, log) = probe::train(&manifest, dir, &spec.train)?;
        for &split in &spec.splits {
            split_utterances(&manifest, split)?;
            let examples = probe::load_examples(&manifest, dir, split)?;
            let ids: Vec<String> = examples.iter().map(|(id, _)| id.clone()).collect();
            let hyp = examples
                .par_iter()
                .map(|(_, ex)| match spec.task {
                    TaskKind::Sa => probe.predict_class(ex.layer_means.view()).map(ProbeLabel::Class),
                    _ => probe.predict_acts(ex.layer_means.view()).map(ProbeLabel::Acts),
                })
                .collect::<Result<Vec<_>>>()?;
            let reference: Vec<ProbeLabel> = examples.iter().map(|(_, ex)| ex.label.clone()).collect();
            results.push(SplitResult {
                split,
                utterances: ids.len(),
                metrics: vec![score_classification(spec.task, n_classes, &ids, &hyp, &reference)?],
                absent: Vec::new(),
            });
        }
        partial_log = Some(log);
        trained = Some(probe);
    }
    let mut partial = Partial::new(results);
    partial.training_log = partial_log;
    partial.probe = trained;
    partial.finish(spec, started)
}

// ---------------------------------------------------------------- decoding

/// A decoded hypothesis: its tokens and, when an alignment is known, the
/// time extent of each token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTimeline {
    pub tokens: Vec<String>,
    pub times: Option<Vec<TimeSpan>>,
}

impl TokenTimeline {
    pub fn from_alignment(alignment: &Alignment, vocab: &TokenVocab, frame_rate: f64) -> Result<Self> {
        let timed = token_spans_to_time(alignment, frame_rate)?;
        let ids: Vec<usize> = timed.iter().map(|(t, _)| *t).collect();
        Ok(Self {
            tokens: vocab.decode_ids(&ids)?,
            times: Some(timed.into_iter().map(|(_, s)| s).collect()),
        })
    }

    pub fn from_posteriors(post: &PosteriorMatrix, vocab: &TokenVocab) -> Result<Self> {
        if post.vocab_size() != vocab.len() {
            return Err(Error::DimMismatch {
                expected: vocab.len(),
                actual: post.vocab_size(),
            });
        }
        let (_, alignment) = greedy_decode(post);
        Self::from_alignment(&alignment, vocab, post.frame_rate())
    }

    /// Time extent from the start of token `first` to the end of token `last`.
    pub fn extent(&self, first: usize, last: usize) -> Option<TimeSpan> {
        let times = self.times.as_ref()?;
        TimeSpan::new(times.get(first)?.start(), times.get(last)?.end()).ok()
    }
}

enum PosteriorSource {
    Dir(PathBuf),
    Loaded(HashMap<String, PosteriorMatrix>),
}

fn load_vocab(spec: &RunSpec) -> Result<Option<TokenVocab>> {
    spec.inputs.vocab.as_ref().map(TokenVocab::load).transpose()
}

/// Decode the hypothesis of every id in `ids`, in parallel.
fn load_timelines(spec: &RunSpec, ids: &[String]) -> Result<HashMap<String, TokenTimeline>> {
    let vocab = load_vocab(spec)?;
    let decoded: Vec<(String, TokenTimeline)> = if let Some(post_path) = &spec.inputs.posteriors {
        let vocab = vocab.as_ref().expect("validated");
        let source = if post_path.is_file() {
            PosteriorSource::Loaded(index_by_id(read_posteriors_jsonl(post_path)?)?)
        } else if post_path.is_dir() {
            PosteriorSource::Dir(post_path.clone())
        } else {
            return Err(Error::MissingInput(format!("posteriors {}", post_path.display())));
        };
        ids.par_iter()
            .map(|id| {
                let timeline = match &source {
                    PosteriorSource::Dir(dir) => {
                        let path = dir.join(format!("{id}.lstk"));
                        if !path.is_file() {
                            return Err(Error::MissingHypothesis(id.clone()));
                        }
                        TokenTimeline::from_posteriors(&read_posteriors(&path)?, vocab)?
                    }
                    PosteriorSource::Loaded(map) => {
                        let post = map.get(id).ok_or_else(|| Error::MissingHypothesis(id.clone()))?;
                        TokenTimeline::from_posteriors(post, vocab)?
                    }
                };
                Ok((id.clone(), timeline))
            })
            .collect::<Result<_>>()?
    } else {
        let path = spec.inputs.hypotheses.as_ref().expect("validated");
        let rows = read_hypotheses(path)?;
        let by_id: HashMap<&str, &HypothesisRow> = rows.iter().map(|r| (r.id(), r)).collect();
        ids.par_iter()
            .map(|id| {
                let row = by_id
                    .get(id.as_str())
                    .ok_or_else(|| Error::MissingHypothesis(id.clone()))?;
                let timeline = match row {
                    HypothesisRow::Tokens { tokens, .. } => TokenTimeline {
                        tokens: tokens.clone(),
                        times: None,
                    },
                    HypothesisRow::Frames { frames, .. } => {
                        let vocab = vocab
                            .as_ref()
                            .ok_or_else(|| Error::MissingInput("frame hypotheses need a token vocabulary".into()))?;
                        validate_frames(frames, vocab)?;
                        TokenTimeline::from_alignment(&Alignment::from_path(frames.clone()), vocab, spec.frame_rate)?
                    }
                };
                Ok((id.clone(), timeline))
            })
            .collect::<Result<_>>()?
    };
    Ok(decoded.into_iter().collect())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpanRow {
    id: String,
    spans: Vec<TimeSpan>,
}

fn read_span_predictions(path: &Path) -> Result<HashMap<String, Vec<TimeSpan>>> {
    let rows: Vec<SpanRow> = parse_jsonl(path)?;
    index_by_id(rows.into_iter().map(|r| (r.id, r.spans)).collect())
}

/// Ids needed for scoring: requested splits, plus dev when tuning.
fn needed_utterances<'m>(spec: &RunSpec, manifest: &'m Manifest, frame_scored: bool) -> Result<Vec<&'m Utterance>> {
    let mut splits = spec.splits.clone();
    splits.sort();
    splits.dedup();
    if frame_scored && matches!(spec.offset, OffsetMode::Tune { .. }) && !splits.contains(&Split::Dev) {
        splits.push(Split::Dev);
    }
    let mut out = Vec::new();
    for split in splits {
        out.extend(split_utterances(manifest, split)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------- frame-F1

fn frame_results(
    spec: &RunSpec,
    manifest: &Manifest,
    hyp_spans: &HashMap<String, Vec<TimeSpan>>,
    ref_spans: impl Fn(&Utterance) -> Vec<TimeSpan>,
) -> Result<(Vec<SplitResult>, OffsetRecord)> {
    let collect = |split: Split| -> Result<(Vec<String>, Vec<UtteranceSpans>)> {
        let utts = split_utterances(manifest, split)?;
        let spans = utts
            .iter()
            .map(|u| {
                Ok(UtteranceSpans {
                    hyp: hyp_spans
                        .get(&u.id)
                        .cloned()
                        .ok_or_else(|| Error::MissingHypothesis(u.id.clone()))?,
                    reference: ref_spans(u),
                })
            })
            .collect::<Result<_>>()?;
        Ok((ids_of(&utts), spans))
    };

    let record = match spec.offset {
        OffsetMode::Fixed { offset } => OffsetRecord {
            offset,
            source: OffsetSource::Fixed,
            dev_frame_f1: None,
        },
        OffsetMode::Tune { grid } => {
            let dev = match collect(Split::Dev) {
                Ok((_, dev)) => dev,
                Err(Error::MissingInput(_)) => return Err(Error::EmptyDevSet),
                Err(e) => return Err(e),
            };
            let tuned = tune_offset(&dev, &grid, spec.frame_rate)?;
            OffsetRecord {
                offset: tuned.offset,
                source: OffsetSource::Dev,
                dev_frame_f1: Some(tuned.report.value),
            }
        }
    };

    let results = spec
        .splits
        .iter()
        .map(|&split| {
            let (ids, utts) = collect(split)?;
            Ok(SplitResult {
                split,
                utterances: ids.len(),
                metrics: vec![frame_f1(&utts, record.offset, spec.frame_rate)?.with_ids(&ids)],
                absent: Vec::new(),
            })
        })
        .collect::<Result<_>>()?;
    Ok((results, record))
}

// ---------------------------------------------------------------- NER / NEL

/// NER scores decoded (tag, phrase) pairs. NEL times each decoded entity by
/// the frames of its phrase tokens, tunes a global offset on dev, and
/// scores frame-F1.
pub fn run_ner_nel(spec: &RunSpec) -> Result<RunResult> {
    let started = Instant::now();
    spec.expect_task(&[TaskKind::Ner, TaskKind::Nel])?;
    spec.validate()?;
    let manifest = spec.load_manifest()?;
    let is_nel = spec.task == TaskKind::Nel;
    let codec = NerCodec::new(&manifest.vocab.entity_tags, spec.specials.clone());

    if let (true, Some(path)) = (is_nel, spec.inputs.spans.as_ref()) {
        let hyp_spans = read_span_predictions(path)?;
        let (results, record) = frame_results(spec, &manifest, &hyp_spans, entity_reference_spans)?;
        let mut partial = Partial::new(results);
        partial.offset = Some(record);
        return partial.finish(spec, started);
    }

    let utts = needed_utterances(spec, &manifest, is_nel)?;
    let ids = ids_of(&utts);
    let timelines = load_timelines(spec, &ids)?;
    let decoded: HashMap<&str, (crate::codec::NerDecoded, &TokenTimeline)> = ids
        .par_iter()
        .map(|id| {
            let tl = &timelines[id];
            (id.as_str(), (codec.decode(&tl.tokens), tl))
        })
        .collect();
    let malformed = decoded.values().map(|(d, _)| d.malformed).sum();

    let mut partial = if is_nel {
        let mut hyp_spans = HashMap::new();
        for (id, (dec, tl)) in &decoded {
            if tl.times.is_none() {
                return Err(Error::MissingInput(
                    "entity localization needs timed hypotheses: posteriors, frame hypotheses, or spans".into(),
                ));
            }
            let spans = dec
                .entities
                .iter()
                .filter_map(|e| tl.extent(dec.source_index[e.start], dec.source_index[e.end - 1]))
                .collect();
            hyp_spans.insert(id.to_string(), spans);
        }
        let (results, record) = frame_results(spec, &manifest, &hyp_spans, entity_reference_spans)?;
        let mut p = Partial::new(results);
        p.offset = Some(record);
        p
    } else {
        let results = spec
            .splits
            .iter()
            .map(|&split| {
                let utts = split_utterances(&manifest, split)?;
                let ids = ids_of(&utts);
                let hyp: Vec<Vec<EntityMention>> = utts
                    .iter()
                    .map(|u| {
                        decoded[u.id.as_str()]
                            .0
                            .entities
                            .iter()
                            .map(EntityMention::from)
                            .collect()
                    })
                    .collect();
                let reference: Vec<Vec<EntityMention>> = utts
                    .iter()
                    .map(|u| u.entities().iter().map(EntityMention::from).collect())
                    .collect();
                Ok(SplitResult {
                    split,
                    utterances: utts.len(),
                    metrics: vec![
                        label_f1(&hyp, &reference)?.with_ids(&ids),
                        ner_f1(&hyp, &reference, &spec.normalization)?.with_ids(&ids),
                    ],
                    absent: Vec::new(),
                })
            })
            .collect::<Result<_>>()?;
        Partial::new(results)
    };
    partial.malformed = malformed;
    partial.finish(spec, started)
}

fn entity_reference_spans(u: &Utterance) -> Vec<TimeSpan> {
    u.entities().iter().filter_map(|e| e.span).collect()
}

// ---------------------------------------------------------------- QA

/// Decodes the answer region of each hypothesis, times it by the frames of
/// its tokens, tunes the offset on dev and scores frame-F1. Times are on
/// the model-input timeline (question audio followed by document audio).
pub fn run_qa(spec: &RunSpec) -> Result<RunResult> {
    let started = Instant::now();
    spec.expect_task(&[TaskKind::Qa])?;
    spec.validate()?;
    let manifest = spec.load_manifest()?;
    let reference = |u: &Utterance| match &u.reference {
        Reference::Answer(span) => vec![*span],
        _ => Vec::new(),
    };

    if let Some(spans) = &spec.inputs.spans {
        let hyp_spans = read_span_predictions(spans)?;
        let (results, record) = frame_results(spec, &manifest, &hyp_spans, reference)?;
        let mut partial = Partial::new(results);
        partial.offset = Some(record);
        return partial.finish(spec, started);
    }

    let codec = QaCodec::new(spec.specials.clone());
    let utts = needed_utterances(spec, &manifest, true)?;
    let ids = ids_of(&utts);
    let timelines = load_timelines(spec, &ids)?;
    let decoded: Vec<(String, Vec<TimeSpan>, usize)> = ids
        .par_iter()
        .map(|id| {
            let tl = &timelines[id];
            if tl.times.is_none() {
                return Err(Error::MissingInput(
                    "answer localization needs timed hypotheses: posteriors, frame hypotheses, or spans".into(),
                ));
            }
            let dec = codec.decode(&tl.tokens);
            let span = dec
                .answer
                .and_then(|(s, e)| tl.extent(dec.source_index[s], dec.source_index[e - 1]));
            Ok((id.clone(), span.into_iter().collect(), dec.malformed))
        })
        .collect::<Result<_>>()?;
    let malformed = decoded.iter().map(|(_, _, m)| m).sum();
    let hyp_spans: HashMap<String, Vec<TimeSpan>> = decoded.into_iter().map(|(id, s, _)| (id, s)).collect();
    let (results, record) = frame_results(spec, &manifest, &hyp_spans, reference)?;
    let mut partial = Partial::new(results);
    partial.offset = Some(record);
    partial.malformed = malformed;
    partial.finish(spec, started)
}

// ---------------------------------------------------------------- ASR / SUMM

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScores {
    pub provenance: String,
    pub scores: BTreeMap<Split, f64>,
}

/// ASR: corpus WER from pooled edit counts. SUMM: mean ROUGE-L per talk,
/// plus an externally computed BERTScore when one is supplied.
pub fn run_text_task(spec: &RunSpec) -> Result<RunResult> {
    let started = Instant::now();
    spec.expect_task(&[TaskKind::Asr, TaskKind::Summ])?;
    spec.validate()?;
    let manifest = spec.load_manifest()?;
    let utts = needed_utterances(spec, &manifest, false)?;
    let timelines = load_timelines(spec, &ids_of(&utts))?;

    let external = spec
        .inputs
        .bertscore
        .as_ref()
        .map(|path| -> Result<ExternalScores> {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let ext: ExternalScores = serde_json::from_str(&text)?;
            if let Some((split, v)) = ext
                .scores
                .iter()
                .find(|(_, v)| !MetricKind::ExternalBertScore.in_range(**v))
            {
                return Err(Error::Validation(format!("{split} BERTScore {v} out of range")));
            }
            Ok(ext)
        })
        .transpose()?;

    let results = spec
        .splits
        .iter()
        .map(|&split| {
            let utts = split_utterances(&manifest, split)?;
            let ids = ids_of(&utts);
            let pairs: Vec<(Vec<String>, Vec<String>)> = utts
                .iter()
                .map(|u| {
                    let reference = match &u.reference {
                        Reference::Summary(s) => s.clone(),
                        _ => u.transcript.clone(),
                    };
                    (timelines[&u.id].tokens.clone(), reference)
                })
                .collect();
            let mut metrics = Vec::new();
            let mut absent = Vec::new();
            if spec.task == TaskKind::Asr {
                metrics.push(corpus_wer(&pairs)?.with_ids(&ids));
            } else {
                metrics.push(corpus_rouge_l(&pairs)?.with_ids(&ids));
                match external
                    .as_ref()
                    .and_then(|e| e.scores.get(&split).map(|v| (v, &e.provenance)))
                {
                    Some((v, prov)) => {
                        metrics.push(ScoreReport::external(MetricKind::ExternalBertScore, *v, prov.clone()))
                    }
                    None => absent.push(MetricKind::ExternalBertScore),
                }
            }
            Ok(SplitResult {
                split,
                utterances: utts.len(),
                metrics,
                absent,
            })
        })
        .collect::<Result<_>>()?;
    Partial::new(results).finish(spec, started)
}
