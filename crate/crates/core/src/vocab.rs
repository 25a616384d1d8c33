//! Configurable label vocabularies and the CTC token vocabulary.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default coarse entity tags. Real runs should supply the dataset's own list.
pub const DEFAULT_ENTITY_TAGS: [&str; 7] = ["PLACE", "QUANT", "ORG", "WHEN", "NORP", "PERSON", "LAW"];

/// Default fine-grained dialog-act names (18 classes).
pub const DEFAULT_DIALOG_ACTS: [&str; 18] = [
    "acknowledge",
    "answer_agree",
    "answer_dis",
    "answer_general",
    "apology",
    "backchannel",
    "disfluency",
    "other",
    "question_check",
    "question_general",
    "question_repeat",
    "self",
    "statement_close",
    "statement_general",
    "statement_instruct",
    "statement_open",
    "statement_problem",
    "thanks",
];

/// Label vocabularies used when validating manifests and decoding hypotheses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub entity_tags: Vec<String>,
    pub dialog_acts: Vec<String>,
}

impl Default for Vocabularies {
    fn default() -> Self {
        Self {
            entity_tags: DEFAULT_ENTITY_TAGS.iter().map(|s| s.to_string()).collect(),
            dialog_acts: DEFAULT_DIALOG_ACTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Vocabularies {
    pub fn dialog_act_id(&self, name: &str) -> Option<usize> {
        self.dialog_acts.iter().position(|a| a == name)
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.entity_tags.iter().any(|t| t == tag)
    }
}

/// Token vocabulary for CTC outputs. Index 0 is always the blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl TokenVocab {
    pub const BLANK: usize = 0;

    /// `tokens[0]` is taken as the blank symbol.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Validation("token vocabulary is empty".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty token".into(),
                });
            }
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate token {tok:?}"),
                });
            }
        }
        Ok(Self { tokens, index })
    }

    /// Plain text, one token per line; line 0 is the blank.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Map ids to token strings, rejecting blanks and out-of-range ids.
    pub fn decode_ids(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&id| match id {
                Self::BLANK => Err(Error::InvalidTarget("blank in token sequence".into())),
                _ => self
                    .token(id)
                    .map(str::to_string)
                    .ok_or_else(|| Error::InvalidTarget(format!("token id {id} out of range"))),
            })
            .collect()
    }
}
