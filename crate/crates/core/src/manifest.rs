//! Dataset manifests: one JSON object per line, one utterance per object.
//!
//! ```text
//! {"id": "u1", "duration": 3.2, "split": "dev", "transcript": ["hello"], "ref": {"sentiment": "neutral"}}
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::task::TaskKind;
use crate::vocab::Vocabularies;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown split {s:?}"))
    }
}

/// Half-open time interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeSpan {
    start: f64,
    end: f64,
}

impl TimeSpan {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::Validation(format!("non-finite span [{start}, {end})")));
        }
        if start < 0.0 {
            return Err(Error::Validation(format!("span starts before 0: {start}")));
        }
        if end <= start {
            return Err(Error::Validation(format!("span end {end} <= start {start}")));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl<'de> Deserialize<'de> for TimeSpan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            start: f64,
            end: f64,
        }
        let raw = Raw::deserialize(d)?;
        TimeSpan::new(raw.start, raw.end).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Positive,
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
        }
    }
}

impl FromStr for SentimentLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown sentiment {s:?}"))
    }
}

/// Set of dialog-act class ids.
pub type DialogActLabel = BTreeSet<usize>;

#[derive(Debug, Clone, PartialEq)]
pub struct EntityAnnotation {
    pub tag: String,
    pub phrase: Vec<String>,
    pub span: Option<TimeSpan>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Sentiment(SentimentLabel),
    DialogActs(DialogActLabel),
    Entities(Vec<EntityAnnotation>),
    Answer(TimeSpan),
    Summary(Vec<String>),
    /// ASR: the transcript itself is the reference.
    Transcript,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub duration: f64,
    pub split: Split,
    pub transcript: Vec<String>,
    pub audio: Option<String>,
    pub reference: Reference,
    pub meta: BTreeMap<String, Value>,
}

impl Utterance {
    pub fn entities(&self) -> &[EntityAnnotation] {
        match &self.reference {
            Reference::Entities(e) => e,
            _ => &[],
        }
    }
}

/// A validated, immutable set of utterances for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub task: TaskKind,
    pub utterances: Vec<Utterance>,
    pub vocab: Vocabularies,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    id: String,
    duration: f64,
    split: Split,
    transcript: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audio: Option<String>,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    reference: Option<Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentimentRef {
    sentiment: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActsRef {
    acts: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntitiesRef {
    entities: Vec<EntityRow>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityRow {
    tag: String,
    phrase: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerRef {
    answer: SpanRow,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpanRow {
    start: f64,
    end: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryRef {
    summary: Vec<String>,
}

/// Load a manifest with the default label vocabularies.
pub fn load_manifest(path: impl AsRef<Path>, task: TaskKind) -> Result<Manifest> {
    load_manifest_with(path, task, &Vocabularies::default())
}

pub fn load_manifest_with(path: impl AsRef<Path>, task: TaskKind, vocab: &Vocabularies) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::parse(&text, task, vocab)
}

impl Manifest {
    pub fn parse(text: &str, task: TaskKind, vocab: &Vocabularies) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut utterances = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let utt = validate_row(row, task, vocab, line_no)?;
            if !seen.insert(utt.id.clone()) {
                return Err(Error::DuplicateId(utt.id));
            }
            utterances.push(utt);
        }
        Ok(Self {
            task,
            utterances,
            vocab: vocab.clone(),
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for utt in &self.utterances {
            let row = Row {
                id: utt.id.clone(),
                duration: utt.duration,
                split: utt.split,
                transcript: utt.transcript.clone(),
                audio: utt.audio.clone(),
                reference: self.reference_json(&utt.reference),
                meta: utt.meta.clone(),
            };
            out.push_str(&serde_json::to_string(&row).expect("manifest rows serialize"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    fn reference_json(&self, reference: &Reference) -> Option<Value> {
        let value = match reference {
            Reference::Transcript => return None,
            Reference::Sentiment(s) => serde_json::to_value(SentimentRef {
                sentiment: s.as_str().to_string(),
            }),
            Reference::DialogActs(acts) => serde_json::to_value(ActsRef {
                acts: acts.iter().map(|&id| self.vocab.dialog_acts[id].clone()).collect(),
            }),
            Reference::Entities(entities) => serde_json::to_value(EntitiesRef {
                entities: entities
                    .iter()
                    .map(|e| EntityRow {
                        tag: e.tag.clone(),
                        phrase: e.phrase.clone(),
                        start: e.span.map(|s| s.start()),
                        end: e.span.map(|s| s.end()),
                    })
                    .collect(),
            }),
            Reference::Answer(span) => serde_json::to_value(AnswerRef {
                answer: SpanRow {
                    start: span.start(),
                    end: span.end(),
                },
            }),
            Reference::Summary(tokens) => serde_json::to_value(SummaryRef {
                summary: tokens.clone(),
            }),
        };
        Some(value.expect("reference payloads serialize"))
    }
}

fn schema(line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        line,
        message: message.into(),
    }
}

fn payload<T: serde::de::DeserializeOwned>(value: Option<Value>, task: TaskKind, line: usize) -> Result<T> {
    let value = value.ok_or_else(|| schema(line, format!("missing ref payload for {task}")))?;
    serde_json::from_value(value).map_err(|e| schema(line, format!("ref payload does not match task {task}: {e}")))
}

fn check_tokens(tokens: &[String], what: &str, line: usize) -> Result<()> {
    match tokens.iter().position(|t| t.is_empty()) {
        Some(i) => Err(schema(line, format!("{what} token {i} is empty"))),
        None => Ok(()),
    }
}

fn validate_row(row: Row, task: TaskKind, vocab: &Vocabularies, line: usize) -> Result<Utterance> {
    if row.id.is_empty() {
        return Err(schema(line, "empty id"));
    }
    if !(row.duration.is_finite() && row.duration > 0.0) {
        return Err(schema(line, format!("duration must be > 0, got {}", row.duration)));
    }
    check_tokens(&row.transcript, "transcript", line)?;

    let reference = match task {
        TaskKind::Sa => {
            let p: SentimentRef = payload(row.reference, task, line)?;
            Reference::Sentiment(p.sentiment.parse().map_err(|e: String| schema(line, e))?)
        }
        TaskKind::Dac => {
            let p: ActsRef = payload(row.reference, task, line)?;
            let mut acts = BTreeSet::new();
            for name in &p.acts {
                let id = vocab
                    .dialog_act_id(name)
                    .ok_or_else(|| schema(line, format!("unknown dialog act {name:?}")))?;
                acts.insert(id);
            }
            Reference::DialogActs(acts)
        }
        TaskKind::Ner | TaskKind::Nel => {
            let p: EntitiesRef = payload(row.reference, task, line)?;
            let mut entities = Vec::with_capacity(p.entities.len());
            for e in p.entities {
                if !vocab.has_tag(&e.tag) {
                    return Err(schema(line, format!("unknown entity tag {:?}", e.tag)));
                }
                if e.phrase.is_empty() {
                    return Err(schema(line, "entity phrase is empty"));
                }
                check_tokens(&e.phrase, "phrase", line)?;
                let span = match (e.start, e.end) {
                    (Some(s), Some(t)) => Some(TimeSpan::new(s, t).map_err(|err| schema(line, err.to_string()))?),
                    (None, None) => None,
                    _ => return Err(schema(line, "entity has only one of start/end")),
                };
                if task == TaskKind::Nel && span.is_none() {
                    return Err(schema(line, "NEL entities need start and end times"));
                }
                entities.push(EntityAnnotation {
                    tag: e.tag,
                    phrase: e.phrase,
                    span,
                });
            }
            Reference::Entities(entities)
        }
        TaskKind::Qa => {
            let p: AnswerRef = payload(row.reference, task, line)?;
            let span = TimeSpan::new(p.answer.start, p.answer.end).map_err(|err| schema(line, err.to_string()))?;
            Reference::Answer(span)
        }
        TaskKind::Summ => {
            let p: SummaryRef = payload(row.reference, task, line)?;
            if p.summary.is_empty() {
                return Err(schema(line, "summary is empty"));
            }
            check_tokens(&p.summary, "summary", line)?;
            Reference::Summary(p.summary)
        }
        TaskKind::Asr => match row.reference {
            None | Some(Value::Null) => Reference::Transcript,
            Some(_) => return Err(schema(line, "ASR rows take no ref payload")),
        },
    };

    Ok(Utterance {
        id: row.id,
        duration: row.duration,
        split: row.split,
        transcript: row.transcript,
        audio: row.audio,
        reference,
        meta: row.meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, task: TaskKind) -> Result<Manifest> {
        Manifest::parse(text, task, &Vocabularies::default())
    }

    const SA: &str = r#"{"id":"a","duration":1.5,"split":"train","transcript":["great"],"ref":{"sentiment":"positive"}}
{"id":"b","duration":2.0,"split":"dev","transcript":["ok"],"ref":{"sentiment":"neutral"}}
{"id":"c","duration":0.5,"split":"test","transcript":["bad"],"ref":{"sentiment":"negative"}}
"#;

    #[test]
    fn three_row_sa_manifest() {
        let m = parse(SA, TaskKind::Sa).unwrap();
        assert_eq!(m.utterances.len(), 3);
        let classes: BTreeSet<_> = m
            .utterances
            .iter()
            .map(|u| match u.reference {
                Reference::Sentiment(s) => s,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(classes.len(), 3);
    }

    #[test]
    fn nel_span_end_before_start_is_schema_error() {
        let row = r#"{"id":"u","duration":3,"split":"dev","transcript":["x"],"ref":{"entities":[{"tag":"ORG","phrase":["x"],"start":1.0,"end":1.0}]}}"#;
        assert!(matches!(parse(row, TaskKind::Nel), Err(Error::Schema { line: 1, .. })));
    }

    #[test]
    fn nel_requires_spans() {
        let row = r#"{"id":"u","duration":3,"split":"dev","transcript":["x"],"ref":{"entities":[{"tag":"ORG","phrase":["x"]}]}}"#;
        assert!(matches!(parse(row, TaskKind::Nel), Err(Error::Schema { .. })));
        assert!(parse(row, TaskKind::Ner).is_ok());
    }

    #[test]
    fn duplicate_id() {
        let text = r#"{"id":"u1","duration":1,"split":"dev","transcript":["a"]}
{"id":"u1","duration":1,"split":"test","transcript":["b"]}"#;
        match parse(text, TaskKind::Asr) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "u1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = format!("{}\n{{\"id\": 3}}\n", SA.lines().next().unwrap());
        assert!(matches!(parse(&text, TaskKind::Sa), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn payload_task_mismatch() {
        assert!(matches!(parse(SA, TaskKind::Dac), Err(Error::Schema { line: 1, .. })));
        assert!(matches!(parse(SA, TaskKind::Asr), Err(Error::Schema { .. })));
    }

    #[test]
    fn bad_duration_and_unknown_act() {
        let row = r#"{"id":"u","duration":0,"split":"dev","transcript":[]}"#;
        assert!(matches!(parse(row, TaskKind::Asr), Err(Error::Schema { .. })));
        let row = r#"{"id":"u","duration":1,"split":"dev","transcript":[],"ref":{"acts":["dance"]}}"#;
        assert!(matches!(parse(row, TaskKind::Dac), Err(Error::Schema { .. })));
    }

    #[test]
    fn round_trip_all_payload_kinds() {
        let cases = [
            (TaskKind::Sa, SA.to_string()),
            (
                TaskKind::Dac,
                r#"{"id":"d","duration":1.25,"split":"test","transcript":["hi"],"ref":{"acts":["thanks","apology"]}}"#.into(),
            ),
            (
                TaskKind::Nel,
                r#"{"id":"n","duration":4,"split":"dev","transcript":["we","welcome","parliament"],"audio":"n.wav","ref":{"entities":[{"tag":"ORG","phrase":["parliament"],"start":1.1,"end":1.9}]}}"#.into(),
            ),
            (
                TaskKind::Qa,
                r#"{"id":"q","duration":40,"split":"dev","transcript":["a"],"ref":{"answer":{"start":12.5,"end":13.25}}}"#.into(),
            ),
            (
                TaskKind::Summ,
                r#"{"id":"s","duration":600,"split":"test","transcript":["talk"],"ref":{"summary":["a","talk"]},"meta":{"truncated_to_secs":30}}"#.into(),
            ),
            (
                TaskKind::Asr,
                r#"{"id":"r","duration":2,"split":"train","transcript":["a","b"]}"#.into(),
            ),
        ];
        for (task, text) in cases {
            let m = parse(&text, task).unwrap();
            let again = parse(&m.to_jsonl(), task).unwrap();
            assert_eq!(m, again, "{task}");
            assert_eq!(m.to_jsonl(), again.to_jsonl());
        }
    }
}
