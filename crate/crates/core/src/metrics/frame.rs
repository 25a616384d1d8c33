use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{F1Counts, ScoreReport, Support};
use crate::error::{Error, Result};
use crate::manifest::TimeSpan;
use crate::task::MetricKind;

/// Slack used when converting seconds to frame boundaries, so that values
/// like `0.08 * 50 = 4.000000000000001` land on frame 4.
const BOUNDARY_EPS: f64 = 1e-6;

/// Hypothesis and reference spans for one utterance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UtteranceSpans {
    pub hyp: Vec<TimeSpan>,
    pub reference: Vec<TimeSpan>,
}

/// Frames whose start time falls in `[start, end)`. Frames before time 0
/// do not exist and are dropped.
pub fn span_frames(start: f64, end: f64, frame_rate: f64) -> Range<i64> {
    let first = ((start * frame_rate - BOUNDARY_EPS).ceil() as i64).max(0);
    let last = (end * frame_rate - BOUNDARY_EPS).ceil() as i64;
    first..last.max(first)
}

fn merged(spans: &[TimeSpan], shift: f64, frame_rate: f64) -> Vec<Range<i64>> {
    let mut ranges: Vec<Range<i64>> = spans
        .iter()
        .map(|s| span_frames(s.start() + shift, s.end() + shift, frame_rate))
        .filter(|r| !r.is_empty())
        .collect();
    ranges.sort_by_key(|r| r.start);
    let mut out: Vec<Range<i64>> = Vec::with_capacity(ranges.len());
    for r in ranges {
        match out.last_mut() {
            Some(last) if r.start <= last.end => last.end = last.end.max(r.end),
            _ => out.push(r),
        }
    }
    out
}

fn total(ranges: &[Range<i64>]) -> u64 {
    ranges.iter().map(|r| (r.end - r.start) as u64).sum()
}

fn intersection(a: &[Range<i64>], b: &[Range<i64>]) -> u64 {
    let (mut i, mut j, mut acc) = (0, 0, 0u64);
    while i < a.len() && j < b.len() {
        let lo = a[i].start.max(b[j].start);
        let hi = a[i].end.min(b[j].end);
        if hi > lo {
            acc += (hi - lo) as u64;
        }
        if a[i].end < b[j].end {
            i += 1;
        } else {
            j += 1;
        }
    }
    acc
}

/// Frame overlap counts for one utterance with hypotheses shifted by `offset` seconds.
pub fn frame_counts(utt: &UtteranceSpans, offset: f64, frame_rate: f64) -> F1Counts {
    let hyp = merged(&utt.hyp, offset, frame_rate);
    let reference = merged(&utt.reference, 0.0, frame_rate);
    let overlap = intersection(&hyp, &reference);
    F1Counts::new(overlap, total(&hyp) - overlap, total(&reference) - overlap)
}

fn check_rate(frame_rate: f64) -> Result<()> {
    if frame_rate.is_finite() && frame_rate > 0.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("frame_rate must be > 0, got {frame_rate}")))
    }
}

/// Frame-level span F1 with counts micro-accumulated over the corpus.
/// Every hypothesis span is translated rigidly (both endpoints) by `offset`.
pub fn frame_f1(utts: &[UtteranceSpans], offset: f64, frame_rate: f64) -> Result<ScoreReport> {
    check_rate(frame_rate)?;
    let per_utt: Vec<F1Counts> = utts.iter().map(|u| frame_counts(u, offset, frame_rate)).collect();
    let sum: F1Counts = per_utt.iter().copied().sum();
    Ok(ScoreReport::new(MetricKind::FrameF1, sum.f1(), Support::counts(sum))
        .with_per_utterance(per_utt.iter().map(F1Counts::f1))
        .with_note(format!("offset={offset} s, frame_rate={frame_rate} fps")))
}

/// Candidate offsets: every integer multiple of `step` within `[min, max]`.
///
/// Points are generated as `k * step`, so the grid always contains 0 when
/// `min <= 0 <= max`, and `-x` is a grid point whenever `x` is and the
/// bounds are symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffsetGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl Default for OffsetGrid {
    fn default() -> Self {
        Self {
            min: -1.0,
            max: 1.0,
            step: 0.02,
        }
    }
}

impl OffsetGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        let grid = Self { min, max, step };
        grid.validate()?;
        Ok(grid)
    }

    fn validate(&self) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step.is_finite()) {
            return Err(Error::InvalidGrid("non-finite bound".into()));
        }
        if self.min > self.max {
            return Err(Error::InvalidGrid(format!("min {} > max {}", self.min, self.max)));
        }
        if self.step <= 0.0 {
            return Err(Error::InvalidGrid(format!("step {} <= 0", self.step)));
        }
        if self.steps().is_empty() {
            return Err(Error::InvalidGrid("no grid point inside bounds".into()));
        }
        Ok(())
    }

    fn steps(&self) -> Range<i64> {
        let lo = (self.min / self.step - 1e-9).ceil() as i64;
        let hi = (self.max / self.step + 1e-9).floor() as i64;
        lo..hi + 1
    }

    /// `(k, k * step)` pairs in ascending order.
    pub fn points(&self) -> Vec<(i64, f64)> {
        self.steps().map(|k| (k, k as f64 * self.step)).collect()
    }

    pub fn offsets(&self) -> Vec<f64> {
        self.points().into_iter().map(|(_, v)| v).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedOffset {
    pub offset: f64,
    pub report: ScoreReport,
}

/// Exhaustive grid search for the offset maximizing dev frame-F1.
/// Ties go to the smallest |offset|, then to the negative side.
pub fn tune_offset(dev: &[UtteranceSpans], grid: &OffsetGrid, frame_rate: f64) -> Result<TunedOffset> {
    if dev.is_empty() {
        return Err(Error::EmptyDevSet);
    }
    grid.validate()?;
    check_rate(frame_rate)?;
    let scored: Vec<(i64, f64, f64)> = grid
        .points()
        .into_par_iter()
        .map(|(k, offset)| {
            let sum: F1Counts = dev.iter().map(|u| frame_counts(u, offset, frame_rate)).sum();
            (k, offset, sum.f1())
        })
        .collect();

    let better =
        |a: &(i64, f64, f64), b: &(i64, f64, f64)| a.2 > b.2 || (a.2 == b.2 && (a.0.abs(), a.0) < (b.0.abs(), b.0));
    let mut best = scored[0];
    for cand in &scored[1..] {
        if better(cand, &best) {
            best = *cand;
        }
    }
    let report = frame_f1(dev, best.1, frame_rate)?;
    Ok(TunedOffset { offset: best.1, report })
}
