//! `bench`: run evaluations, score predictions, and manage leaderboards.
//!
//! Exit codes: 0 success, 2 schema errors, 3 missing inputs, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use slu_bench::leaderboard::{render_report, seed_board, Board, ModelType, ReportFormat, Submission, Track};
use slu_bench::manifest::Split;
use slu_bench::metrics::OffsetGrid;
use slu_bench::runner::{run, OffsetMode, RunResult, RunSpec};
use slu_bench::synthetic::{separable_sentiment, write_corpus, SeparableConfig};
use slu_bench::task::{MetricKind, Protocol, TaskKind};
use slu_bench::ErrorKind;

#[derive(Parser)]
#[command(name = "bench", version, about = "Spoken language understanding evaluation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a system; trains a linear probe when given features.
    Run(RunArgs),
    /// Score precomputed outputs only (no training).
    Score(RunArgs),
    /// Leaderboard operations.
    #[command(subcommand)]
    Board(BoardCommand),
    /// Write a synthetic sentiment corpus with LSTK features.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: TaskKind,
    #[arg(long, default_value = "lightweight")]
    protocol: Protocol,
    #[arg(long, default_value = "unnamed")]
    model: String,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    posteriors: Option<PathBuf>,
    #[arg(long)]
    hypotheses: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    spans: Option<PathBuf>,
    #[arg(long)]
    bertscore: Option<PathBuf>,
    /// Comma-separated, e.g. `dev,test`.
    #[arg(long, value_delimiter = ',', default_values_t = [Split::Dev, Split::Test])]
    splits: Vec<Split>,
    #[arg(long)]
    frame_rate: Option<f64>,
    /// Use this offset (seconds) instead of tuning on dev.
    #[arg(long, allow_hyphen_values = true)]
    offset: Option<f64>,
    /// Offset search grid as `min,max,step` in seconds.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_hyphen_values = true)]
    offset_grid: Option<Vec<f64>>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the run result JSON; printed to stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Save the trained probe as JSON.
    #[arg(long)]
    probe_out: Option<PathBuf>,
    /// Save the per-epoch training log as JSONL.
    #[arg(long)]
    log_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BoardCommand {
    /// Add a submission from a run result or explicit scores.
    Submit {
        #[arg(long)]
        board: PathBuf,
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long = "type", default_value = "SSL")]
        model_type: ModelType,
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Track as `task` or `task:dataset`; defaults to the run's task.
        #[arg(long)]
        track: Option<Track>,
        /// Trainable parameters in millions.
        #[arg(long)]
        params: Option<f64>,
        /// `split:metric=value` with value as displayed (x100), repeatable.
        #[arg(long = "score")]
        scores: Vec<String>,
        /// Replace an existing entry with the same model, protocol and track.
        #[arg(long)]
        force: bool,
    },
    /// Print the board as a table.
    Render {
        #[arg(long)]
        board: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print ranked entries for one track and protocol.
    Rank {
        #[arg(long)]
        board: PathBuf,
        /// `task` or `task:dataset`.
        #[arg(long)]
        task: Track,
        #[arg(long, default_value = "lightweight")]
        protocol: Protocol,
        #[arg(long)]
        metric: Option<MetricKind>,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long)]
        json: bool,
    },
    /// Write the reproduced reference board.
    Seed {
        #[arg(long)]
        board: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

/// Where `bench run` writes its artifacts.
struct Outputs {
    result: Option<PathBuf>,
    probe: Option<PathBuf>,
    log: Option<PathBuf>,
}

fn build_spec(a: RunArgs) -> Result<(RunSpec, Outputs)> {
    let mut spec = RunSpec::new(a.task, a.protocol, a.model, a.manifest);
    spec.inputs.features = a.features;
    spec.inputs.predictions = a.predictions;
    spec.inputs.posteriors = a.posteriors;
    spec.inputs.hypotheses = a.hypotheses;
    spec.inputs.vocab = a.vocab;
    spec.inputs.spans = a.spans;
    spec.inputs.bertscore = a.bertscore;
    spec.splits = a.splits;
    if let Some(fr) = a.frame_rate {
        spec.frame_rate = fr;
    }
    spec.offset = match (a.offset, a.offset_grid) {
        (Some(_), Some(_)) => bail!("--offset and --offset-grid are exclusive"),
        (Some(offset), None) => OffsetMode::Fixed { offset },
        (None, Some(g)) => OffsetMode::Tune {
            grid: OffsetGrid::new(g[0], g[1], g[2])?,
        },
        (None, None) => OffsetMode::default(),
    };
    if let Some(v) = a.epochs {
        spec.train.epochs = v;
    }
    if let Some(v) = a.lr {
        spec.train.learning_rate = v;
    }
    if let Some(v) = a.weight_decay {
        spec.train.weight_decay = v;
    }
    if let Some(v) = a.seed {
        spec.train.seed = v;
    }
    let outputs = Outputs {
        result: a.out,
        probe: a.probe_out,
        log: a.log_out,
    };
    Ok((spec, outputs))
}

fn cmd_run(args: RunArgs, score_only: bool) -> Result<()> {
    let (spec, outputs) = build_spec(args)?;
    if score_only && spec.inputs.features.is_some() {
        bail!("`bench score` does not train; use `bench run` with --features");
    }
    let result = run(&spec)?;
    match &outputs.result {
        Some(path) => result.save(path)?,
        None => println!("{}", serde_json::to_string_pretty(&result)?),
    }
    if let (Some(path), Some(probe)) = (outputs.probe, &result.probe) {
        probe.save(path)?;
    }
    if let (Some(path), Some(log)) = (outputs.log, &result.training_log) {
        std::fs::write(&path, log.to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    }
    for r in &result.results {
        let cells: Vec<String> = r
            .metrics
            .iter()
            .map(|m| format!("{}={}", m.metric.name(), m.display_value()))
            .chain(r.absent.iter().map(|m| format!("{}=absent", m.name())))
            .collect();
        eprintln!("{} ({} utts): {}", r.split, r.utterances, cells.join(" "));
    }
    if let Some(o) = &result.offset {
        eprintln!("offset {:+.3} s ({:?})", o.offset, o.source);
    }
    Ok(())
}

/// `split:metric=value`, value as displayed (x100).
fn parse_score(s: &str) -> Result<(Split, MetricKind, f64)> {
    let (lhs, value) = s.split_once('=').context("expected split:metric=value")?;
    let (split, metric) = lhs.split_once(':').context("expected split:metric=value")?;
    let split: Split = split.parse().map_err(anyhow::Error::msg)?;
    let metric: MetricKind = metric.parse().map_err(anyhow::Error::msg)?;
    let value: f64 = value
        .trim()
        .parse()
        .with_context(|| format!("bad score value in {s:?}"))?;
    Ok((split, metric, value / 100.0))
}

fn cmd_board(cmd: BoardCommand) -> Result<()> {
    match cmd {
        BoardCommand::Submit {
            board,
            from,
            model,
            model_type,
            protocol,
            track,
            params,
            scores,
            force,
        } => {
            let mut sub = match &from {
                Some(path) => {
                    let run = RunResult::load(path)?;
                    let mut sub = Submission::from_run(&run, model_type, track);
                    sub.source = Some(path.display().to_string());
                    sub
                }
                None => {
                    let track = track.context("--track is required without --from")?;
                    let protocol = protocol.context("--protocol is required without --from")?;
                    let model = model.clone().context("--model is required without --from")?;
                    Submission::new(model, model_type, protocol, track)
                }
            };
            if let Some(m) = model {
                sub.model = m;
            }
            if let Some(p) = protocol {
                sub.protocol = p;
            }
            sub.params_millions = params;
            for s in &scores {
                let (split, metric, value) = parse_score(s)?;
                sub = sub.with_score(split, metric, value);
            }
            let summary = format!("{} / {} / {}", sub.model, sub.protocol, sub.track);
            Board::update(&board, |b| b.submit(sub, force))?;
            eprintln!("submitted {summary}");
        }
        BoardCommand::Render {
            board,
            format,
            split,
            out,
        } => {
            let b = Board::load(&board)?;
            let text = render_report(&b, format, split);
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
        BoardCommand::Rank {
            board,
            task,
            protocol,
            metric,
            split,
            json,
        } => {
            let b = Board::load(&board)?;
            let metric = metric.unwrap_or_else(|| b.primary_metric(task.task));
            let split = split.unwrap_or(b.rank_split);
            let rows = b.rank_by(&task, protocol, metric, split)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                println!(
                    "# {task} / {protocol} / {split} {} {}",
                    metric.name(),
                    metric.direction().arrow()
                );
                for r in rows {
                    let value = r.value.map_or("-".to_string(), |v| format!("{:.1}", v * 100.0));
                    let params = r
                        .submission
                        .params_millions
                        .map_or("-".to_string(), |p| format!("{p}M"));
                    println!("{:>2}. {:<24} {:>6}  {}", r.position, r.submission.model, value, params);
                }
            }
        }
        BoardCommand::Seed { board, force } => {
            if board.exists() && !force {
                bail!("{} exists; pass --force to overwrite", board.display());
            }
            let _lock = slu_bench::leaderboard::BoardLock::acquire(&board)?;
            seed_board().save(&board)?;
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(a, false),
        Command::Score(a) => cmd_run(a, true),
        Command::Board(b) => cmd_board(b),
        Command::Fixture { out, seed } => {
            let corpus = separable_sentiment(&SeparableConfig {
                seed,
                ..Default::default()
            })?;
            write_corpus(&corpus, &out)?;
            eprintln!(
                "wrote {} utterances to {}",
                corpus.manifest.utterances.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn exit_code(e: &anyhow::Error) -> ExitCode {
    match e.downcast_ref::<slu_bench::Error>().map(slu_bench::Error::kind) {
        Some(ErrorKind::Schema) => ExitCode::from(2),
        Some(ErrorKind::MissingInput) => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
