//! Seed board holding published results for six encoders under three
//! protocols (test and dev splits, trainable parameter counts). These are
//! reproduced numbers, not engine outputs; they exist to exercise ranking
//! and rendering.

use chrono::{DateTime, Utc};

use super::{Board, ModelType, Submission, Track};
use crate::manifest::Split;
use crate::task::{MetricKind, Protocol, TaskKind};

pub const SEED_LABEL: &str = "Reproduced published results for reference; not produced by this engine.";

const NA: f64 = f64::NAN;

const MODELS: [(&str, ModelType); 6] = [
    ("HuBERT (large)", ModelType::Ssl),
    ("Wav2Vec2 (large)", ModelType::Ssl),
    ("WavLM (large)", ModelType::Ssl),
    ("Whisper (medium)", ModelType::Asr),
    ("OWSM (3.1)", ModelType::Asr),
    ("Pre-trained SLU", ModelType::Slu),
];

// Columns: SA F1, ASR-VoxCeleb WER, NER label-F1, NER F1, ASR-VoxPopuli WER,
// NEL frame-F1, QA frame-F1, SUMM ROUGE-L, SUMM BERTScore, DAC F1.
// Blocks: lightweight, complex, fine-tuned.
const TEST: [[[f64; 10]; 6]; 3] = [
    [
        [41.0, 19.0, 76.5, 59.3, 14.2, 67.7, 12.0, NA, NA, 48.0],
        [40.6, 21.7, 73.6, 57.5, 16.0, 64.1, 6.0, NA, NA, 51.2],
        [43.3, 14.1, 80.6, 64.5, 10.4, 72.0, 17.4, NA, NA, 54.6],
        [49.6, 15.0, 79.6, 63.1, 12.5, 71.8, 0.1, NA, NA, 59.7],
        [47.2, 17.4, 78.4, 61.7, 12.8, 70.5, 14.0, NA, NA, 66.3],
        [36.4, 47.5, 60.8, 45.5, 39.1, 47.8, 2.0, NA, NA, 54.4],
    ],
    [
        [52.2, 15.5, 78.5, 63.1, 13.0, 69.8, 21.4, 16.0, 83.4, 66.1],
        [53.3, 17.2, 78.2, 63.7, 14.0, 71.2, 18.8, 16.2, 83.0, 65.8],
        [52.0, 11.4, 82.7, 69.7, 10.1, 72.6, 22.5, 16.4, 83.0, 67.4],
        [51.0, 14.9, 79.2, 64.1, 13.2, 70.1, 1.6, 16.0, 83.8, 67.8],
        [52.8, 16.5, 79.6, 66.0, 12.6, 68.6, 20.3, 16.5, 83.6, 69.4],
        [49.7, 36.4, 68.7, 54.8, 28.5, 54.4, 3.2, 15.4, 82.9, 66.3],
    ],
    [
        [46.5, 14.8, 78.8, 62.6, 12.0, 69.4, NA, NA, NA, 72.7],
        [45.0, 14.7, 78.2, 62.9, 11.7, 68.6, NA, NA, NA, 71.3],
        [47.9, 12.1, 82.5, 66.3, 9.7, 71.7, NA, NA, NA, 71.5],
        [51.8, 20.5, 76.9, 59.8, 18.2, 56.6, NA, NA, NA, 69.8],
        [47.8, 15.0, 78.5, 61.5, 14.3, 65.1, NA, NA, NA, 72.1],
        [46.1, 34.6, 60.8, 47.6, 37.1, 49.1, NA, NA, NA, 68.7],
    ],
];

const DEV: [[[f64; 10]; 6]; 3] = [
    [
        [37.2, 16.2, 81.8, 64.6, 13.8, 70.9, 14.3, NA, NA, 46.7],
        [40.0, 18.7, 79.9, 64.5, 15.4, 68.4, 6.7, NA, NA, 50.6],
        [38.9, 11.8, 87.4, 71.4, 10.2, 74.1, 18.9, NA, NA, 53.5],
        [44.7, 13.0, 85.8, 68.9, 12.0, 73.5, 0.4, NA, NA, 57.2],
        [42.2, 14.9, 84.6, 69.2, 12.6, 73.1, 15.0, NA, NA, 69.1],
        [36.6, 44.6, 66.6, 50.8, 37.7, 52.2, 2.2, NA, NA, 56.6],
    ],
    [
        [46.9, 12.8, 84.6, 69.4, 12.6, 72.7, 25.6, 16.1, 83.4, 62.8],
        [46.5, 14.3, 83.1, 68.9, 13.1, 74.0, 22.1, 16.3, 83.3, 67.0],
        [47.8, 9.6, 87.9, 74.1, 9.5, 74.7, 25.2, 16.7, 83.4, 70.7],
        [45.2, 12.8, 86.1, 69.9, 12.7, 73.9, 2.0, 16.3, 83.7, 69.4],
        [46.8, 14.0, 84.8, 72.2, 12.0, 70.7, 23.7, 16.6, 83.7, 73.5],
        [45.2, 33.5, 73.8, 61.0, 27.5, 57.8, 4.2, 15.8, 83.1, 66.8],
    ],
    [
        [42.4, 12.3, 84.3, 68.2, 11.6, 73.0, NA, NA, NA, 73.8],
        [41.8, 12.5, 84.6, 70.4, 11.3, 71.1, NA, NA, NA, 75.3],
        [45.0, 10.3, 88.3, 73.5, 9.3, 73.9, NA, NA, NA, 75.9],
        [48.2, 18.2, 82.3, 65.5, 16.7, 56.3, NA, NA, NA, 72.5],
        [44.2, 12.6, 83.7, 68.3, 13.7, 66.9, NA, NA, NA, 76.8],
        [41.6, 31.1, 67.5, 54.1, 35.3, 54.8, NA, NA, NA, 70.3],
    ],
];

// Trainable parameters in millions. Columns: SA, ASR-VoxCeleb, VoxPopuli
// (shared by NER, NEL and ASR-VoxPopuli), QA, SUMM, DAC.
const PARAMS: [[[f64; 6]; 6]; 3] = [
    [
        [1.1, 6.5, 6.5, 9.7, NA, 1.1],
        [1.1, 6.5, 6.5, 9.7, NA, 1.1],
        [1.1, 6.5, 6.5, 9.7, NA, 1.1],
        [1.1, 9.1, 9.1, 9.7, NA, 1.1],
        [1.1, 9.1, 9.1, 12.3, NA, 1.1],
        [0.3, 9.1, 9.1, 12.2, NA, 0.3],
    ],
    [
        [32.4, 32.4, 32.4, 32.4, 31.9, 114.3],
        [32.4, 32.4, 32.4, 32.4, 31.9, 114.3],
        [32.4, 32.4, 32.4, 32.4, 31.9, 114.3],
        [32.4, 32.4, 32.4, 32.4, 31.9, 114.3],
        [32.4, 32.4, 35.0, 35.0, 34.5, 124.5],
        [34.9, 34.9, 34.9, 34.9, 34.4, 124.5],
    ],
    [
        [313.4, 318.9, 318.9, NA, NA, 313.5],
        [314.2, 319.7, 319.7, NA, NA, 314.3],
        [312.3, 317.8, 317.8, NA, NA, 312.3],
        [306.7, 314.8, 314.8, NA, NA, 306.8],
        [561.9, 569.9, 569.9, NA, NA, 561.9],
        [83.5, 93.3, 92.3, NA, NA, 83.5],
    ],
];

/// (track, score columns, parameter column).
type TrackLayout = (Track, &'static [(usize, MetricKind)], usize);

/// Layout of the eight tracks.
fn layout() -> [TrackLayout; 8] {
    [
        (Track::new(TaskKind::Sa, "voxceleb"), &[(0, MetricKind::MacroF1)], 0),
        (Track::new(TaskKind::Asr, "voxceleb"), &[(1, MetricKind::Wer)], 1),
        (
            Track::new(TaskKind::Ner, "voxpopuli"),
            &[(2, MetricKind::LabelF1), (3, MetricKind::NerF1)],
            2,
        ),
        (Track::new(TaskKind::Asr, "voxpopuli"), &[(4, MetricKind::Wer)], 2),
        (Track::new(TaskKind::Nel, "voxpopuli"), &[(5, MetricKind::FrameF1)], 2),
        (Track::new(TaskKind::Qa, "sqa5"), &[(6, MetricKind::FrameF1)], 3),
        (
            Track::new(TaskKind::Summ, "ted"),
            &[(7, MetricKind::RougeL), (8, MetricKind::ExternalBertScore)],
            4,
        ),
        (Track::new(TaskKind::Dac, "hvb"), &[(9, MetricKind::MacroF1)], 5),
    ]
}

/// The reproduced board. Every submission shares one timestamp, so ties
/// fall through to parameter count and then model name.
pub fn seed_board() -> Board {
    let stamp: DateTime<Utc> = DateTime::from_timestamp(1_700_000_000, 0).expect("valid timestamp");
    let mut board = Board {
        label: Some(SEED_LABEL.to_string()),
        ..Board::default()
    };
    for (p, protocol) in Protocol::ALL.into_iter().enumerate() {
        for (m, (model, model_type)) in MODELS.into_iter().enumerate() {
            for (track, cols, param_col) in layout() {
                let mut sub = Submission::new(model, model_type, protocol, track);
                sub.submitted_at = stamp;
                sub.source = Some("reproduced".into());
                for &(col, metric) in cols {
                    for (split, table) in [(Split::Test, &TEST), (Split::Dev, &DEV)] {
                        let v = table[p][m][col];
                        if !v.is_nan() {
                            sub = sub.with_score(split, metric, v / 100.0);
                        }
                    }
                    if metric == MetricKind::ExternalBertScore && !sub.scores.is_empty() {
                        sub.external.insert(metric, "reported".into());
                    }
                }
                if sub.scores.is_empty() {
                    continue;
                }
                let params = PARAMS[p][m][param_col];
                sub.params_millions = (!params.is_nan()).then_some(params);
                board.submit(sub, false).expect("seed rows are valid");
            }
        }
    }
    board
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_counts() {
        let b = seed_board();
        // Lightweight lacks SUMM, fine-tuned lacks QA and SUMM.
        assert_eq!(b.submissions.len(), 6 * 7 + 6 * 8 + 6 * 6);
        assert!(b.submissions.iter().all(|s| s.validate().is_ok()));
    }
}
