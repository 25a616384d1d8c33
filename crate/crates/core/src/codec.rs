//! Special-token label sequences for entity tagging and spoken QA.
//!
//! Entity sequences wrap each phrase as `TAG FILL phrase... SEP`:
//!
//! ```text
//! we welcome ORG FILL parliament SEP 's agreement
//! ```
//!
//! QA sequences join question and document with `SEP` and bracket the
//! answer with a pair of `ANS` tokens:
//!
//! ```text
//! who is ... broncos SEP ... at the time ANS peyton manning ANS having ...
//! ```
//!
//! Decoders never fail. Markers that do not form a well-formed region are
//! dropped and counted so that scoring can proceed on noisy hypotheses.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{TokenVocab, Vocabularies};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub fill: String,
    pub sep: String,
    pub ans: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self {
            fill: "FILL".into(),
            sep: "SEP".into(),
            ans: "ANS".into(),
        }
    }
}

impl SpecialTokens {
    fn contains(&self, tok: &str) -> bool {
        tok == self.fill || tok == self.sep || tok == self.ans
    }
}

/// An entity located in a plain transcript by token range `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedEntity {
    pub tag: String,
    pub phrase: Vec<String>,
    pub start: usize,
    pub end: usize,
}

impl DecodedEntity {
    /// Build from a range, copying the phrase out of `transcript`.
    pub fn from_range(tag: impl Into<String>, transcript: &[String], start: usize, end: usize) -> Result<Self> {
        if start >= end || end > transcript.len() {
            return Err(Error::RangeOutOfBounds {
                start,
                end,
                len: transcript.len(),
            });
        }
        Ok(Self {
            tag: tag.into(),
            phrase: transcript[start..end].to_vec(),
            start,
            end,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NerDecoded {
    pub transcript: Vec<String>,
    pub entities: Vec<DecodedEntity>,
    /// For every transcript token, its position in the decoded sequence.
    pub source_index: Vec<usize>,
    /// Markers dropped by recovery.
    pub malformed: usize,
}

#[derive(Debug, Clone)]
pub struct NerCodec {
    specials: SpecialTokens,
    tags: HashSet<String>,
}

impl Default for NerCodec {
    fn default() -> Self {
        Self::new(&Vocabularies::default().entity_tags, SpecialTokens::default())
    }
}

impl NerCodec {
    pub fn new(tags: &[String], specials: SpecialTokens) -> Self {
        Self {
            specials,
            tags: tags.iter().cloned().collect(),
        }
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    pub fn is_tag(&self, tok: &str) -> bool {
        self.tags.contains(tok)
    }

    pub fn is_reserved(&self, tok: &str) -> bool {
        self.specials.contains(tok) || self.is_tag(tok)
    }

    pub fn encode(&self, transcript: &[String], entities: &[DecodedEntity]) -> Result<Vec<String>> {
        if let Some(w) = transcript.iter().find(|w| self.is_reserved(w)) {
            return Err(Error::ReservedToken(w.clone()));
        }
        let mut order: Vec<&DecodedEntity> = entities.iter().collect();
        order.sort_by_key(|e| (e.start, e.end));
        let mut cursor = 0;
        for e in &order {
            if e.start >= e.end || e.end > transcript.len() {
                return Err(Error::RangeOutOfBounds {
                    start: e.start,
                    end: e.end,
                    len: transcript.len(),
                });
            }
            if e.start < cursor {
                return Err(Error::OverlappingEntities(e.start));
            }
            if !self.is_tag(&e.tag) {
                return Err(Error::UnknownTag(e.tag.clone()));
            }
            if e.phrase[..] != transcript[e.start..e.end] {
                return Err(Error::Validation(format!(
                    "entity phrase {:?} does not match transcript range {}..{}",
                    e.phrase, e.start, e.end
                )));
            }
            cursor = e.end;
        }

        let mut out = Vec::with_capacity(transcript.len() + 3 * order.len());
        let mut next = order.iter().peekable();
        for (i, word) in transcript.iter().enumerate() {
            if let Some(e) = next.peek() {
                if e.start == i {
                    out.push(e.tag.clone());
                    out.push(self.specials.fill.clone());
                }
            }
            out.push(word.clone());
            if let Some(e) = next.peek() {
                if e.end == i + 1 {
                    out.push(self.specials.sep.clone());
                    next.next();
                }
            }
        }
        Ok(out)
    }

    pub fn decode<S: AsRef<str>>(&self, seq: &[S]) -> NerDecoded {
        struct Open {
            tag: String,
            start: usize,
        }
        let mut out = NerDecoded::default();
        let mut open: Option<Open> = None;
        let mut i = 0;
        while i < seq.len() {
            let tok = seq[i].as_ref();
            if self.is_tag(tok) {
                if seq.get(i + 1).map(AsRef::as_ref) == Some(self.specials.fill.as_str()) {
                    if open.is_some() {
                        // Nested region: abandon the outer one, keep its words.
                        out.malformed += 1;
                    }
                    open = Some(Open {
                        tag: tok.to_string(),
                        start: out.transcript.len(),
                    });
                    i += 2;
                    continue;
                }
                out.malformed += 1;
            } else if tok == self.specials.sep {
                match open.take() {
                    Some(region) if region.start < out.transcript.len() => {
                        out.entities.push(DecodedEntity {
                            tag: region.tag,
                            phrase: out.transcript[region.start..].to_vec(),
                            start: region.start,
                            end: out.transcript.len(),
                        });
                    }
                    _ => out.malformed += 1,
                }
            } else if self.specials.contains(tok) {
                out.malformed += 1;
            } else {
                out.transcript.push(tok.to_string());
                out.source_index.push(i);
            }
            i += 1;
        }
        if open.is_some() {
            out.malformed += 1;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QaDecoded {
    pub question: Vec<String>,
    pub document: Vec<String>,
    /// Answer as a document token range `start..end`.
    pub answer: Option<(usize, usize)>,
    /// For every document token, its position in the decoded sequence.
    pub source_index: Vec<usize>,
    pub malformed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct QaCodec {
    specials: SpecialTokens,
}

impl QaCodec {
    pub fn new(specials: SpecialTokens) -> Self {
        Self { specials }
    }

    pub fn encode(&self, question: &[String], document: &[String], answer: (usize, usize)) -> Result<Vec<String>> {
        let (start, end) = answer;
        if start >= end || end > document.len() {
            return Err(Error::AnswerOutOfBounds {
                start,
                end,
                len: document.len(),
            });
        }
        if let Some(w) = question.iter().chain(document).find(|w| self.specials.contains(w)) {
            return Err(Error::ReservedToken(w.clone()));
        }
        let mut out = Vec::with_capacity(question.len() + document.len() + 3);
        out.extend_from_slice(question);
        out.push(self.specials.sep.clone());
        out.extend_from_slice(&document[..start]);
        out.push(self.specials.ans.clone());
        out.extend_from_slice(&document[start..end]);
        out.push(self.specials.ans.clone());
        out.extend_from_slice(&document[end..]);
        Ok(out)
    }

    /// Decode, keeping only the first balanced `ANS` pair after the separator.
    /// Without any separator the whole sequence is treated as document.
    pub fn decode<S: AsRef<str>>(&self, seq: &[S]) -> QaDecoded {
        let mut out = QaDecoded::default();
        let sep_at = seq.iter().position(|t| t.as_ref() == self.specials.sep);
        let doc_from = match sep_at {
            Some(p) => {
                for tok in &seq[..p] {
                    let tok = tok.as_ref();
                    if self.specials.contains(tok) {
                        out.malformed += 1;
                    } else {
                        out.question.push(tok.to_string());
                    }
                }
                p + 1
            }
            None => {
                out.malformed += 1;
                0
            }
        };

        enum State {
            Before,
            Inside(usize),
            Done,
        }
        let mut state = State::Before;
        for (i, tok) in seq.iter().enumerate().skip(doc_from) {
            let tok = tok.as_ref();
            if tok == self.specials.ans {
                state = match state {
                    State::Before => State::Inside(out.document.len()),
                    State::Inside(start) if start < out.document.len() => {
                        out.answer = Some((start, out.document.len()));
                        State::Done
                    }
                    State::Inside(_) => {
                        out.malformed += 1;
                        State::Before
                    }
                    State::Done => {
                        out.malformed += 1;
                        State::Done
                    }
                };
            } else if self.specials.contains(tok) {
                out.malformed += 1;
            } else {
                out.document.push(tok.to_string());
                out.source_index.push(i);
            }
        }
        if let State::Inside(_) = state {
            out.malformed += 1;
        }
        out
    }
}

/// One hypothesis line: either decoded tokens or a per-frame token-id path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HypothesisRow {
    Tokens { id: String, tokens: Vec<String> },
    Frames { id: String, frames: Vec<usize> },
}

impl HypothesisRow {
    pub fn id(&self) -> &str {
        match self {
            HypothesisRow::Tokens { id, .. } | HypothesisRow::Frames { id, .. } => id,
        }
    }
}

pub fn read_hypotheses(path: impl AsRef<Path>) -> Result<Vec<HypothesisRow>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: HypothesisRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(row.id().to_string()) {
            return Err(Error::DuplicateId(row.id().to_string()));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Check a frame path against a vocabulary (ids in range).
pub fn validate_frames(frames: &[usize], vocab: &TokenVocab) -> Result<()> {
    match frames.iter().find(|&&f| f >= vocab.len()) {
        Some(bad) => Err(Error::InvalidTarget(format!(
            "frame token id {bad} outside vocabulary of size {}",
            vocab.len()
        ))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn ner_example_sequence() {
        let codec = NerCodec::default();
        let transcript = toks("we welcome parliament 's agreement");
        let ent = DecodedEntity::from_range("ORG", &transcript, 2, 3).unwrap();
        let seq = codec.encode(&transcript, std::slice::from_ref(&ent)).unwrap();
        assert_eq!(seq.join(" "), "we welcome ORG FILL parliament SEP 's agreement");

        let dec = codec.decode(&seq);
        assert_eq!(dec.transcript, transcript);
        assert_eq!(dec.entities, [ent]);
        assert_eq!(dec.malformed, 0);
        assert_eq!(dec.source_index, [0, 1, 4, 6, 7]);
    }

    #[test]
    fn no_entities_is_identity() {
        let codec = NerCodec::default();
        let t = toks("nothing to see here");
        assert_eq!(codec.encode(&t, &[]).unwrap(), t);
    }

    #[test]
    fn adjacent_entities() {
        let codec = NerCodec::default();
        let t = toks("mr smith of brussels said");
        let ents = vec![
            DecodedEntity::from_range("PERSON", &t, 0, 2).unwrap(),
            DecodedEntity::from_range("PLACE", &t, 3, 4).unwrap(),
        ];
        let seq = codec.encode(&t, &ents).unwrap();
        assert_eq!(
            seq.join(" "),
            "PERSON FILL mr smith SEP of PLACE FILL brussels SEP said"
        );
        let dec = codec.decode(&seq);
        assert_eq!(dec.entities, ents);
        assert_eq!(dec.transcript, t);
    }

    #[test]
    fn encode_errors() {
        let codec = NerCodec::default();
        let t = toks("a b c");
        let overlap = [
            DecodedEntity::from_range("ORG", &t, 0, 2).unwrap(),
            DecodedEntity::from_range("ORG", &t, 1, 3).unwrap(),
        ];
        assert!(matches!(codec.encode(&t, &overlap), Err(Error::OverlappingEntities(1))));
        let oob = DecodedEntity {
            tag: "ORG".into(),
            phrase: vec![],
            start: 2,
            end: 5,
        };
        assert!(matches!(codec.encode(&t, &[oob]), Err(Error::RangeOutOfBounds { .. })));
        assert!(matches!(
            codec.encode(&toks("a SEP"), &[]),
            Err(Error::ReservedToken(_))
        ));
        let bad_tag = DecodedEntity::from_range("FOO", &t, 0, 1).unwrap();
        assert!(matches!(codec.encode(&t, &[bad_tag]), Err(Error::UnknownTag(_))));
    }

    #[test]
    fn tagless_fill_recovery() {
        let dec = NerCodec::default().decode(&toks("a FILL b"));
        assert!(dec.entities.is_empty());
        assert_eq!(dec.transcript, toks("a b"));
        assert_eq!(dec.malformed, 1);
    }

    #[test]
    fn recovery_cases() {
        let codec = NerCodec::default();
        // Unclosed region.
        let dec = codec.decode(&toks("ORG FILL a b"));
        assert!(dec.entities.is_empty());
        assert_eq!(dec.transcript, toks("a b"));
        assert_eq!(dec.malformed, 1);
        // Stray SEP and empty region.
        let dec = codec.decode(&toks("x SEP ORG FILL SEP y"));
        assert_eq!(dec.transcript, toks("x y"));
        assert_eq!(dec.malformed, 2);
        // Nested: inner region wins.
        let dec = codec.decode(&toks("ORG FILL a PERSON FILL b SEP"));
        assert_eq!(dec.entities.len(), 1);
        assert_eq!(dec.entities[0].tag, "PERSON");
        assert_eq!(dec.entities[0].phrase, toks("b"));
        assert_eq!(dec.malformed, 1);
        // Tag without FILL.
        let dec = codec.decode(&toks("ORG a"));
        assert_eq!(dec.transcript, toks("a"));
        assert_eq!(dec.malformed, 1);
    }

    #[test]
    fn qa_example_sequence() {
        let codec = QaCodec::default();
        let q = toks("who is the present quarterback of the broncos");
        let d =
            toks("nature and persistence of the tennessee volunteers quarterback at the time peyton manning having");
        let seq = codec.encode(&q, &d, (11, 13)).unwrap();
        let text = seq.join(" ");
        assert!(text.contains("broncos SEP nature"));
        assert!(text.contains("ANS peyton manning ANS having"));

        let dec = codec.decode(&seq);
        assert_eq!(dec.question, q);
        assert_eq!(dec.document, d);
        assert_eq!(dec.answer, Some((11, 13)));
        assert_eq!(dec.malformed, 0);
        assert_eq!(seq[dec.source_index[11]], "peyton");
    }

    #[test]
    fn qa_errors_and_recovery() {
        let codec = QaCodec::default();
        let d = toks("a b c");
        assert!(matches!(
            codec.encode(&[], &d, (1, 1)),
            Err(Error::AnswerOutOfBounds { .. })
        ));
        assert!(matches!(
            codec.encode(&[], &d, (2, 4)),
            Err(Error::AnswerOutOfBounds { .. })
        ));

        let dec = codec.decode(&toks("q SEP a ANS b c"));
        assert_eq!(dec.answer, None);
        assert_eq!(dec.malformed, 1);

        let dec = codec.decode(&toks("q SEP ANS a ANS b ANS c ANS"));
        assert_eq!(dec.answer, Some((0, 1)));
        assert_eq!(dec.document, toks("a b c"));
        assert_eq!(dec.malformed, 2);

        let dec = codec.decode(&toks("x ANS y ANS"));
        assert!(dec.question.is_empty());
        assert_eq!(dec.answer, Some((1, 2)));
        assert_eq!(dec.malformed, 1);
    }

    #[test]
    fn hypothesis_rows_parse_both_shapes() {
        let a: HypothesisRow = serde_json::from_str(r#"{"id":"u","tokens":["a","b"]}"#).unwrap();
        let b: HypothesisRow = serde_json::from_str(r#"{"id":"v","frames":[0,3,3,0]}"#).unwrap();
        assert!(matches!(a, HypothesisRow::Tokens { .. }));
        assert!(matches!(b, HypothesisRow::Frames { .. }));
        assert_eq!(b.id(), "v");
    }
}
