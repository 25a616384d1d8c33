mod common;

use std::collections::BTreeSet;
use std::path::Path;

use common::*;
use slu_bench::manifest::{EntityAnnotation, Reference, SentimentLabel, Split, TimeSpan};
use slu_bench::probe::TrainConfig;
use slu_bench::runner::{run, OffsetMode, OffsetSource, RunSpec};
use slu_bench::synthetic::{separable_sentiment, write_corpus, SeparableConfig};
use slu_bench::task::{MetricKind, Protocol, TaskKind};
use slu_bench::{Error, ErrorKind};

const FR: f64 = 50.0;
const NER_SEQ: &str = "we welcome ORG FILL parliament SEP 's agreement";
const QA_SEQ: &str = "who is the present quarterback of the broncos SEP the team starter ANS peyton manning ANS having";

fn write_lines(path: &Path, lines: &[String]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn entity(tag: &str, phrase: &str, span: Option<(f64, f64)>) -> EntityAnnotation {
    EntityAnnotation {
        tag: tag.into(),
        phrase: toks(phrase),
        span: span.map(|(s, e)| TimeSpan::new(s, e).unwrap()),
    }
}

#[test]
fn sentiment_probe_run_reports_dev_and_test() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = separable_sentiment(&SeparableConfig::default()).unwrap();
    write_corpus(&corpus, dir.path()).unwrap();
    let mut spec = RunSpec::new(
        TaskKind::Sa,
        Protocol::Lightweight,
        "synthetic",
        dir.path().join("manifest.jsonl"),
    );
    spec.inputs.features = Some(dir.path().join("features"));
    let result = run(&spec).unwrap();
    result.check_schema().unwrap();
    for split in [Split::Dev, Split::Test] {
        let m = result.metric(split, MetricKind::MacroF1).unwrap();
        assert!(m.value >= 0.95, "{split}: {}", m.value);
        assert_eq!(m.per_utterance.len(), 60);
    }
    let log = result.training_log.as_ref().unwrap();
    assert_eq!(log.epochs.len(), TrainConfig::default().epochs);
    assert!(result.probe.is_some());

    let path = dir.path().join("run.json");
    result.save(&path).unwrap();
    let back = slu_bench::runner::RunResult::load(&path).unwrap();
    assert_eq!(back.results, result.results);
}

#[test]
fn prediction_only_run_skips_training() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(
        TaskKind::Sa,
        vec![
            utt(
                "a",
                Split::Test,
                "great",
                Reference::Sentiment(SentimentLabel::Positive),
            ),
            utt("b", Split::Test, "meh", Reference::Sentiment(SentimentLabel::Neutral)),
            utt(
                "c",
                Split::Test,
                "awful",
                Reference::Sentiment(SentimentLabel::Negative),
            ),
        ],
    );
    m.save(dir.path().join("m.jsonl")).unwrap();
    write_lines(
        &dir.path().join("pred.jsonl"),
        &[
            r#"{"id":"a","label":"neutral"}"#.into(),
            r#"{"id":"b","label":"neutral"}"#.into(),
            r#"{"id":"c","label":"neutral"}"#.into(),
        ],
    );
    let mut spec = RunSpec::new(TaskKind::Sa, Protocol::Lightweight, "m", dir.path().join("m.jsonl"));
    spec.inputs.predictions = Some(dir.path().join("pred.jsonl"));
    spec.splits = vec![Split::Test];
    let result = run(&spec).unwrap();
    assert!(result.training_log.is_none());
    let v = result.metric(Split::Test, MetricKind::MacroF1).unwrap().value;
    assert!((v - 0.5 / 3.0).abs() < 1e-12);
}

#[test]
fn dac_predictions_and_missing_row() {
    let dir = tempfile::tempdir().unwrap();
    let acts = |names: &[&str]| -> BTreeSet<usize> {
        let v = slu_bench::vocab::Vocabularies::default();
        names.iter().map(|n| v.dialog_act_id(n).unwrap()).collect()
    };
    let m = manifest(
        TaskKind::Dac,
        vec![
            utt("a", Split::Dev, "thanks", Reference::DialogActs(acts(&["thanks"]))),
            utt(
                "b",
                Split::Dev,
                "sorry ok",
                Reference::DialogActs(acts(&["apology", "acknowledge"])),
            ),
        ],
    );
    m.save(dir.path().join("m.jsonl")).unwrap();
    write_lines(
        &dir.path().join("pred.jsonl"),
        &[
            r#"{"id":"a","acts":["thanks"]}"#.into(),
            r#"{"id":"b","acts":["apology","acknowledge"]}"#.into(),
        ],
    );
    let mut spec = RunSpec::new(TaskKind::Dac, Protocol::Lightweight, "m", dir.path().join("m.jsonl"));
    spec.inputs.predictions = Some(dir.path().join("pred.jsonl"));
    spec.splits = vec![Split::Dev];
    let r = run(&spec).unwrap();
    let v = r.metric(Split::Dev, MetricKind::MacroF1).unwrap().value;
    // Three of eighteen classes occur, all predicted perfectly.
    assert!((v - 3.0 / 18.0).abs() < 1e-12);

    write_lines(
        &dir.path().join("pred.jsonl"),
        &[r#"{"id":"a","acts":["thanks"]}"#.into()],
    );
    assert!(matches!(run(&spec), Err(Error::MissingHypothesis(id)) if id == "b"));
}

#[test]
fn dac_spec_on_sentiment_rows_is_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(
        TaskKind::Sa,
        vec![utt(
            "a",
            Split::Dev,
            "great",
            Reference::Sentiment(SentimentLabel::Positive),
        )],
    );
    m.save(dir.path().join("m.jsonl")).unwrap();
    let mut spec = RunSpec::new(TaskKind::Dac, Protocol::Lightweight, "m", dir.path().join("m.jsonl"));
    spec.inputs.predictions = Some(dir.path().join("pred.jsonl"));
    assert_eq!(run(&spec).unwrap_err().kind(), ErrorKind::Schema);
}

#[test]
fn missing_inputs_are_reported() {
    let spec = RunSpec::new(TaskKind::Nel, Protocol::Lightweight, "m", "m.jsonl");
    assert_eq!(run(&spec).unwrap_err().kind(), ErrorKind::MissingInput);
    let mut spec = RunSpec::new(TaskKind::Ner, Protocol::Lightweight, "m", "m.jsonl");
    spec.inputs.posteriors = Some("post".into());
    assert_eq!(run(&spec).unwrap_err().kind(), ErrorKind::MissingInput);
}

fn ner_fixture(dir: &Path, task: TaskKind, hyp_seq: &str, ref_shift: f64) {
    let vocab = vocab_for(&[NER_SEQ, hyp_seq]);
    vocab.save(dir.join("vocab.txt")).unwrap();
    let post = dir.join("post");
    std::fs::create_dir_all(&post).unwrap();
    // Each token takes two frames and a blank: "parliament" is token 4,
    // frames 12-13, so [0.24, 0.28).
    let span = Some((0.24 - ref_shift, 0.28 - ref_shift));
    let mut utts = Vec::new();
    for (id, split) in [("d1", Split::Dev), ("t1", Split::Test)] {
        write_one_hot(&post, id, &vocab, hyp_seq, 2, FR);
        utts.push(utt(
            id,
            split,
            "we welcome parliament 's agreement",
            Reference::Entities(vec![entity("ORG", "parliament", span)]),
        ));
    }
    manifest(task, utts).save(dir.join("m.jsonl")).unwrap();
}

fn posterior_spec(task: TaskKind, dir: &Path) -> RunSpec {
    let mut spec = RunSpec::new(task, Protocol::Lightweight, "m", dir.join("m.jsonl"));
    spec.inputs.posteriors = Some(dir.join("post"));
    spec.inputs.vocab = Some(dir.join("vocab.txt"));
    spec
}

#[test]
fn ner_one_hot_posteriors_score_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    ner_fixture(dir.path(), TaskKind::Ner, NER_SEQ, 0.0);
    let r = run(&posterior_spec(TaskKind::Ner, dir.path())).unwrap();
    for split in [Split::Dev, Split::Test] {
        assert_eq!(r.metric(split, MetricKind::NerF1).unwrap().value, 1.0);
        assert_eq!(r.metric(split, MetricKind::LabelF1).unwrap().value, 1.0);
    }
    assert_eq!(r.malformed_regions, 0);
}

#[test]
fn ner_tagless_hypothesis_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    ner_fixture(dir.path(), TaskKind::Ner, "we welcome parliament 's agreement", 0.0);
    let r = run(&posterior_spec(TaskKind::Ner, dir.path())).unwrap();
    assert_eq!(r.metric(Split::Test, MetricKind::NerF1).unwrap().value, 0.0);
    assert_eq!(r.metric(Split::Test, MetricKind::LabelF1).unwrap().value, 0.0);
}

#[test]
fn nel_span_is_phrase_extent_and_shift_is_tuned_away() {
    let dir = tempfile::tempdir().unwrap();
    ner_fixture(dir.path(), TaskKind::Nel, NER_SEQ, 0.0);
    let mut spec = posterior_spec(TaskKind::Nel, dir.path());
    spec.offset = OffsetMode::Fixed { offset: 0.0 };
    let r = run(&spec).unwrap();
    assert_eq!(r.metric(Split::Test, MetricKind::FrameF1).unwrap().value, 1.0);

    // Hypotheses 0.06 s late relative to the references.
    let dir = tempfile::tempdir().unwrap();
    ner_fixture(dir.path(), TaskKind::Nel, NER_SEQ, 0.06);
    let r = run(&posterior_spec(TaskKind::Nel, dir.path())).unwrap();
    let rec = r.offset.as_ref().unwrap();
    assert_eq!(rec.source, OffsetSource::Dev);
    assert!((rec.offset + 0.06).abs() < 1e-9, "offset {}", rec.offset);
    assert_eq!(r.metric(Split::Test, MetricKind::FrameF1).unwrap().value, 1.0);
}

#[test]
fn nel_from_span_file() {
    let dir = tempfile::tempdir().unwrap();
    ner_fixture(dir.path(), TaskKind::Nel, NER_SEQ, 0.0);
    write_lines(
        &dir.path().join("spans.jsonl"),
        &[
            r#"{"id":"d1","spans":[{"start":0.24,"end":0.28}]}"#.into(),
            r#"{"id":"t1","spans":[{"start":0.24,"end":0.28}]}"#.into(),
        ],
    );
    let mut spec = RunSpec::new(TaskKind::Nel, Protocol::Complex, "m", dir.path().join("m.jsonl"));
    spec.inputs.spans = Some(dir.path().join("spans.jsonl"));
    let r = run(&spec).unwrap();
    assert_eq!(r.offset.as_ref().unwrap().offset, 0.0);
    assert_eq!(r.metric(Split::Test, MetricKind::FrameF1).unwrap().value, 1.0);
}

fn qa_fixture(dir: &Path, hyp_seq: &str) {
    let vocab = vocab_for(&[QA_SEQ, hyp_seq]);
    vocab.save(dir.join("vocab.txt")).unwrap();
    let post = dir.join("post");
    std::fs::create_dir_all(&post).unwrap();
    // Three frames plus a blank per token: "peyton" (token 13) starts at
    // frame 52 and "manning" (token 14) ends at frame 58, so [1.04, 1.18).
    let answer = TimeSpan::new(1.04, 1.18).unwrap();
    let mut utts = Vec::new();
    for (id, split) in [("d1", Split::Dev), ("t1", Split::Test)] {
        write_one_hot(&post, id, &vocab, hyp_seq, 3, FR);
        utts.push(utt(
            id,
            split,
            "the team starter peyton manning having",
            Reference::Answer(answer),
        ));
    }
    manifest(TaskKind::Qa, utts).save(dir.join("m.jsonl")).unwrap();
}

#[test]
fn qa_answer_span_from_alignment() {
    let dir = tempfile::tempdir().unwrap();
    qa_fixture(dir.path(), QA_SEQ);
    let mut spec = posterior_spec(TaskKind::Qa, dir.path());
    spec.offset = OffsetMode::Fixed { offset: 0.0 };
    let r = run(&spec).unwrap();
    let m = r.metric(Split::Test, MetricKind::FrameF1).unwrap();
    assert_eq!(m.value, 1.0);
    assert_eq!(r.malformed_regions, 0);
}

#[test]
fn qa_without_answer_pair_scores_zero_recall() {
    let dir = tempfile::tempdir().unwrap();
    qa_fixture(
        dir.path(),
        "who is the present quarterback of the broncos SEP the team starter peyton manning having",
    );
    let mut spec = posterior_spec(TaskKind::Qa, dir.path());
    spec.offset = OffsetMode::Fixed { offset: 0.0 };
    let r = run(&spec).unwrap();
    let m = r.metric(Split::Test, MetricKind::FrameF1).unwrap();
    assert_eq!(m.value, 0.0);
    match &m.support {
        slu_bench::metrics::Support::Counts { counts, .. } => {
            assert_eq!((counts.tp, counts.fp), (0, 0));
            assert!(counts.fn_ > 0);
        }
        other => panic!("unexpected support {other:?}"),
    }
}

fn text_fixture(dir: &Path, task: TaskKind, refs: &[(&str, Split, &str)], hyps: &[(&str, &str)]) {
    let utts = refs
        .iter()
        .map(|(id, split, text)| match task {
            TaskKind::Summ => utt(id, *split, "a long talk", Reference::Summary(toks(text))),
            _ => utt(id, *split, text, Reference::Transcript),
        })
        .collect();
    manifest(task, utts).save(dir.join("m.jsonl")).unwrap();
    let lines: Vec<String> = hyps
        .iter()
        .map(|(id, t)| serde_json::json!({"id": id, "tokens": toks(t)}).to_string())
        .collect();
    write_lines(&dir.join("hyp.jsonl"), &lines);
}

#[test]
fn corpus_wer_pools_edit_counts() {
    let dir = tempfile::tempdir().unwrap();
    text_fixture(
        dir.path(),
        TaskKind::Asr,
        &[("u1", Split::Test, "a b c"), ("u2", Split::Test, "a b")],
        &[("u1", "a x c"), ("u2", "")],
    );
    let mut spec = RunSpec::new(TaskKind::Asr, Protocol::Lightweight, "m", dir.path().join("m.jsonl"));
    spec.inputs.hypotheses = Some(dir.path().join("hyp.jsonl"));
    spec.splits = vec![Split::Test];
    let r = run(&spec).unwrap();
    let m = r.metric(Split::Test, MetricKind::Wer).unwrap();
    assert!((m.value - 3.0 / 5.0).abs() < 1e-12);
    let mean: f64 = m.per_utterance.iter().map(|u| u.value).sum::<f64>() / 2.0;
    assert!((mean - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn identical_text_scores_perfectly_and_missing_hyp_fails() {
    let dir = tempfile::tempdir().unwrap();
    text_fixture(
        dir.path(),
        TaskKind::Summ,
        &[
            ("s1", Split::Dev, "the talk was about bees"),
            ("s2", Split::Test, "short summary"),
        ],
        &[("s1", "the talk was about bees"), ("s2", "short summary")],
    );
    let mut spec = RunSpec::new(TaskKind::Summ, Protocol::Complex, "m", dir.path().join("m.jsonl"));
    spec.inputs.hypotheses = Some(dir.path().join("hyp.jsonl"));
    let r = run(&spec).unwrap();
    assert_eq!(r.metric(Split::Test, MetricKind::RougeL).unwrap().value, 1.0);
    assert_eq!(
        r.split(Split::Test).unwrap().absent,
        vec![MetricKind::ExternalBertScore]
    );

    std::fs::write(
        dir.path().join("bs.json"),
        r#"{"provenance":"external scorer","scores":{"test":0.875}}"#,
    )
    .unwrap();
    spec.inputs.bertscore = Some(dir.path().join("bs.json"));
    let r = run(&spec).unwrap();
    assert_eq!(
        r.metric(Split::Test, MetricKind::ExternalBertScore).unwrap().value,
        0.875
    );
    assert_eq!(r.split(Split::Dev).unwrap().absent, vec![MetricKind::ExternalBertScore]);

    write_lines(&dir.path().join("hyp.jsonl"), &[r#"{"id":"s1","tokens":["x"]}"#.into()]);
    assert!(matches!(run(&spec), Err(Error::MissingHypothesis(id)) if id == "s2"));
}
