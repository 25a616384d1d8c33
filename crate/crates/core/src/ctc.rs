//! CTC greedy decoding, frame alignment, and the forward-algorithm loss.
//!
//! The blank symbol is always vocabulary index 0. The collapse rule merges
//! adjacent repeats and then removes blanks, so `a a - a` decodes to `a a`.

use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lstk::{self, FiniteCheck, RawLstk};
use crate::manifest::TimeSpan;

pub const BLANK: usize = 0;

/// Maximum allowed deviation of a row's log-sum-exp from zero.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-4;

/// `T x V` per-frame token log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMatrix {
    log_probs: Array2<f64>,
    frame_rate: f64,
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl PosteriorMatrix {
    pub fn from_log_probs(log_probs: Array2<f64>, frame_rate: f64) -> Result<Self> {
        let (t, v) = log_probs.dim();
        if t == 0 || v == 0 {
            return Err(Error::InvalidPosteriors(format!("empty matrix {t}x{v}")));
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::InvalidPosteriors(format!("frame_rate {frame_rate}")));
        }
        for (i, row) in log_probs.outer_iter().enumerate() {
            if row.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(Error::InvalidPosteriors(format!("frame {i} has NaN or +inf")));
            }
            let lse = row.iter().fold(f64::NEG_INFINITY, |acc, &x| log_add_exp(acc, x));
            if lse.abs() > NORMALIZATION_TOLERANCE {
                return Err(Error::InvalidPosteriors(format!(
                    "frame {i} log-sum-exp is {lse}, expected 0"
                )));
            }
        }
        Ok(Self { log_probs, frame_rate })
    }

    /// Convenience constructor from plain probabilities (rows must sum to 1).
    pub fn from_probs(probs: Array2<f64>, frame_rate: f64) -> Result<Self> {
        Self::from_log_probs(probs.mapv(f64::ln), frame_rate)
    }

    pub fn frames(&self) -> usize {
        self.log_probs.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.log_probs.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn log_probs(&self) -> &Array2<f64> {
        &self.log_probs
    }
}

pub fn read_posteriors(path: impl AsRef<Path>) -> Result<PosteriorMatrix> {
    let raw = lstk::read_file(path.as_ref(), FiniteCheck::AllowNegInfinity)?;
    if raw.version != lstk::VERSION_POSTERIORS {
        return Err(Error::UnsupportedVersion(raw.version));
    }
    let data = raw.data.into_iter().map(f64::from).collect();
    let m = Array2::from_shape_vec((raw.frames, raw.dim), data).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    PosteriorMatrix::from_log_probs(m, raw.frame_rate as f64)
}

/// Stored as `f32`; rows remain normalized well within the tolerance.
pub fn write_posteriors(post: &PosteriorMatrix, path: impl AsRef<Path>) -> Result<()> {
    let raw = RawLstk {
        version: lstk::VERSION_POSTERIORS,
        layers: 1,
        frames: post.frames(),
        dim: post.vocab_size(),
        frame_rate: post.frame_rate as f32,
        data: post.log_probs.iter().map(|&v| v as f32).collect(),
    };
    lstk::write_file(path.as_ref(), &raw)
}

/// One row of the JSONL debug format. `null` entries stand for `-inf`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub id: String,
    pub frame_rate: f64,
    pub log_probs: Vec<Vec<Option<f64>>>,
}

impl PosteriorRow {
    pub fn from_matrix(id: impl Into<String>, post: &PosteriorMatrix) -> Self {
        let log_probs = post
            .log_probs
            .outer_iter()
            .map(|row| row.iter().map(|&v| v.is_finite().then_some(v)).collect())
            .collect();
        Self {
            id: id.into(),
            frame_rate: post.frame_rate,
            log_probs,
        }
    }

    pub fn to_matrix(&self) -> Result<PosteriorMatrix> {
        let t = self.log_probs.len();
        let v = self.log_probs.first().map_or(0, Vec::len);
        if self.log_probs.iter().any(|r| r.len() != v) {
            return Err(Error::DimensionMismatch(format!("ragged rows in {:?}", self.id)));
        }
        let flat = self
            .log_probs
            .iter()
            .flatten()
            .map(|x| x.unwrap_or(f64::NEG_INFINITY))
            .collect();
        let m = Array2::from_shape_vec((t, v), flat).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        PosteriorMatrix::from_log_probs(m, self.frame_rate)
    }
}

pub fn read_posteriors_jsonl(path: impl AsRef<Path>) -> Result<Vec<(String, PosteriorMatrix)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PosteriorRow = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let m = row.to_matrix()?;
        out.push((row.id, m));
    }
    Ok(out)
}

/// Extent of one emitted token: the argmax run that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub token: usize,
    pub first_frame: usize,
    pub last_frame: usize,
}

/// Per-frame token path plus the frame extent of every emitted token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub path: Vec<usize>,
    pub spans: Vec<TokenSpan>,
}

impl Alignment {
    /// Build from a frame path, applying the collapse rule.
    pub fn from_path(path: Vec<usize>) -> Self {
        let mut spans: Vec<TokenSpan> = Vec::new();
        let mut prev: Option<usize> = None;
        for (f, &tok) in path.iter().enumerate() {
            if prev == Some(tok) {
                if tok != BLANK {
                    if let Some(last) = spans.last_mut() {
                        last.last_frame = f;
                    }
                }
            } else if tok != BLANK {
                spans.push(TokenSpan {
                    token: tok,
                    first_frame: f,
                    last_frame: f,
                });
            }
            prev = Some(tok);
        }
        Self { path, spans }
    }

    pub fn tokens(&self) -> Vec<usize> {
        self.spans.iter().map(|s| s.token).collect()
    }
}

/// Per-frame argmax, then collapse. Ties pick the lowest token id.
pub fn greedy_decode(post: &PosteriorMatrix) -> (Vec<usize>, Alignment) {
    let path = post
        .log_probs
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect();
    let alignment = Alignment::from_path(path);
    (alignment.tokens(), alignment)
}

/// Fewest frames that can emit `target`: one per token plus a blank between repeats.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Negative log-likelihood of `target` summed over every frame path that
/// collapses to it (forward algorithm over the blank-interleaved target).
pub fn ctc_loss(post: &PosteriorMatrix, target: &[usize]) -> Result<f64> {
    let v = post.vocab_size();
    if let Some(&bad) = target.iter().find(|&&t| t == BLANK || t >= v) {
        return Err(Error::InvalidTarget(format!(
            "token {bad} is blank or outside vocabulary of size {v}"
        )));
    }
    let frames = post.frames();
    let required = min_frames(target);
    if required > frames {
        return Err(Error::TargetTooLong {
            target_len: target.len(),
            required,
            frames,
        });
    }

    // Extended label sequence: blank, y1, blank, y2, ..., blank.
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &t in target {
        ext.push(t);
        ext.push(BLANK);
    }
    let s_len = ext.len();
    let lp = &post.log_probs;
    let neg_inf = f64::NEG_INFINITY;

    let mut alpha = vec![neg_inf; s_len];
    alpha[0] = lp[[0, ext[0]]];
    if s_len > 1 {
        alpha[1] = lp[[0, ext[1]]];
    }
    let mut next = vec![neg_inf; s_len];
    for t in 1..frames {
        for s in 0..s_len {
            let mut acc = alpha[s];
            if s >= 1 {
                acc = log_add_exp(acc, alpha[s - 1]);
            }
            if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                acc = log_add_exp(acc, alpha[s - 2]);
            }
            next[s] = if acc == neg_inf { neg_inf } else { acc + lp[[t, ext[s]]] };
        }
        std::mem::swap(&mut alpha, &mut next);
    }
    let mut total = alpha[s_len - 1];
    if s_len > 1 {
        total = log_add_exp(total, alpha[s_len - 2]);
    }
    Ok(-total)
}

/// `[first / rate, (last + 1) / rate)` for every emitted token.
pub fn token_spans_to_time(alignment: &Alignment, frame_rate: f64) -> Result<Vec<(usize, TimeSpan)>> {
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::Validation(format!("frame_rate must be > 0, got {frame_rate}")));
    }
    alignment
        .spans
        .iter()
        .map(|s| Ok((s.token, frames_to_span(s.first_frame, s.last_frame, frame_rate)?)))
        .collect()
}

pub fn frames_to_span(first: usize, last: usize, frame_rate: f64) -> Result<TimeSpan> {
    TimeSpan::new(first as f64 / frame_rate, (last + 1) as f64 / frame_rate)
}
