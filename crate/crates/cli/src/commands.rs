use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::{anyhow, Context};
use incnlu_core::adapter::{self, BaselineAdapter, ChildProcessAdapter, ModelAdapter};
use incnlu_core::baseline::{train_baseline, BaselineModel};
use incnlu_core::corpus::{slot_lexicon, AnnotatedUtterance};
use incnlu_core::evaluation::{
    build_traces, evaluate_confidence, evaluate_partial, gold_intents, round2, HypothesisTable,
};
use incnlu_core::formats::{
    parse_asr_partials, parse_hypotheses, parse_incremental, write_incremental,
};
use incnlu_core::incremental::{
    align_asr_partials, full_only, generate_prefixes, IncrementalSeries, SelectMode,
};
use incnlu_core::metrics::{intents_match, MatchCounts};
use incnlu_core::noise::{self, build_vocabulary, NoiseConfig, NoiseModel, OpWeights, Vocabulary};
use incnlu_core::seq2seq::{iob_to_target, parse_target};
use incnlu_core::stats::corpus_stats;
use serde::Serialize;

use crate::args::{Command, ExternalFormat, Mode, ReportFormat, ReportOutput};
use crate::files::{
    check_output, emit, partial_path, read, read_corpus, read_lexicon, write_atomic,
};
use crate::Failure;

type CmdResult = Result<(), Failure>;

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Convert {
            corpus,
            targets,
            sources,
            lexicon_out,
        } => {
            for p in [Some(&targets), sources.as_ref(), lexicon_out.as_ref()]
                .into_iter()
                .flatten()
            {
                check_output(p)?;
            }
            let records = read_corpus(&corpus.input, corpus.keep_case)?;
            let mut tgt = String::new();
            for r in &records {
                tgt.push_str(iob_to_target(r).as_str());
                tgt.push('\n');
            }
            write_atomic(&targets, &tgt)?;
            if let Some(path) = sources {
                let src: String = records
                    .iter()
                    .map(|r| r.tokens().join(" ") + "\n")
                    .collect();
                write_atomic(&path, &src)?;
            }
            if let Some(path) = lexicon_out {
                write_atomic(&path, &slot_lexicon(&records).to_lines())?;
            }
            Ok(())
        }
        Command::GenIncremental {
            corpus,
            output,
            full_only: only_full,
        } => {
            check_output(&output)?;
            let records = read_corpus(&corpus.input, corpus.keep_case)?;
            let series: Vec<IncrementalSeries> = records
                .iter()
                .map(|r| {
                    if only_full {
                        full_only(r)
                    } else {
                        generate_prefixes(r)
                    }
                })
                .collect();
            write_atomic(&output, &write_incremental(&series))?;
            Ok(())
        }
        Command::AddNoise {
            input,
            output,
            vocab,
            tau,
            seed,
            sub_weight,
            ins_weight,
            del_weight,
        } => {
            let weights = OpWeights {
                substitute: sub_weight,
                insert: ins_weight,
                delete: del_weight,
            };
            let cfg =
                NoiseConfig::new(tau, weights, seed).map_err(|e| Failure::Usage(e.to_string()))?;
            check_output(&output)?;
            let vocab = Vocabulary::from_lines(&read(&vocab)?)
                .with_context(|| format!("reading vocabulary {}", vocab.display()))?;
            let series = read_incremental(&input)?;
            let model = NoiseModel::new(&vocab, cfg).context("configuring noise")?;
            let (noised, ops) = noise::noise_series(&model, &series).context("adding noise")?;
            write_atomic(&output, &write_incremental(&noised))?;
            eprintln!(
                "noise: {} substitutions, {} insertions, {} deletions",
                ops.substitutions, ops.insertions, ops.deletions
            );
            Ok(())
        }
        Command::BuildVocab {
            corpus,
            external,
            external_format,
            size,
            output,
        } => {
            check_output(&output)?;
            let records = read_corpus(&corpus.input, corpus.keep_case)?;
            let counts = match external {
                None => Default::default(),
                Some(path) => {
                    let text = read(&path)?;
                    match external_format {
                        ExternalFormat::Text => noise::count_tokens(&text),
                        ExternalFormat::Counts => noise::parse_counts(&text)
                            .with_context(|| format!("parsing counts {}", path.display()))?,
                    }
                }
            };
            let train = records
                .iter()
                .flat_map(|r| r.tokens().iter().map(String::as_str));
            let vocab = build_vocabulary(train, &counts, size);
            write_atomic(&output, &vocab.to_lines())?;
            Ok(())
        }
        Command::AlignAsr { asr, human, output } => {
            check_output(&output)?;
            let human = read_incremental(&human)?;
            let partials = parse_asr_partials(&read(&asr)?)
                .with_context(|| format!("parsing {}", asr.display()))?;
            let mut aligned = Vec::with_capacity(partials.len());
            let mut skipped = 0;
            for (id, tokens) in partials {
                let series = human
                    .iter()
                    .find(|s| s.utterance_id == id)
                    .ok_or_else(|| anyhow!("no human series for utterance {id:?}"))?;
                let a = align_asr_partials(&tokens, series).map_err(anyhow::Error::from)?;
                skipped += a.skipped_empty;
                aligned.push(a.series);
            }
            write_atomic(&output, &write_incremental(&aligned))?;
            if skipped > 0 {
                eprintln!("warning: skipped {skipped} empty recognizer partials");
            }
            Ok(())
        }
        Command::TrainBaseline {
            corpus,
            alpha,
            output,
        } => {
            check_output(&output)?;
            let records = read_corpus(&corpus.input, corpus.keep_case)?;
            let model = train_baseline(&records, alpha).map_err(|e| match e {
                incnlu_core::baseline::BaselineError::BadAlpha(_) => Failure::Usage(e.to_string()),
                other => Failure::Data(other.into()),
            })?;
            write_atomic(&output, &model.to_dump())?;
            Ok(())
        }
        Command::RunBaseline {
            model,
            input,
            output,
        } => {
            check_output(&output)?;
            let model = read_model(&model)?;
            let series = read_incremental(&input)?;
            let mut buf = Vec::new();
            adapter::run_model(&mut BaselineAdapter::new(&model), &series, &mut buf)
                .map_err(|e| Failure::Data(e.into()))?;
            write_atomic(
                &output,
                &String::from_utf8(buf).expect("hypotheses are UTF-8"),
            )?;
            Ok(())
        }
        Command::RunModel {
            input,
            output,
            command,
        } => {
            check_output(&output)?;
            let series = read_incremental(&input)?;
            run_external(&series, &output, &command)
        }
        Command::ServeBaseline { model } => {
            let model = read_model(&model)?;
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            adapter::serve(&mut BaselineAdapter::new(&model), stdin, stdout)
                .map_err(|e| Failure::Protocol(e.into()))?;
            Ok(())
        }
        Command::Score {
            refs,
            hyps,
            lexicon,
            report,
        } => {
            check_report(&report)?;
            let lex = read_lexicon(lexicon.lexicon.as_deref(), lexicon.corpus.as_deref())?;
            let refs_text = read(&refs)?;
            let hyps_text = read(&hyps)?;
            let r: Vec<&str> = refs_text.lines().collect();
            let h: Vec<&str> = hyps_text.lines().collect();
            if r.len() != h.len() {
                return Err(anyhow!(
                    "{} reference lines vs {} hypothesis lines",
                    r.len(),
                    h.len()
                )
                .into());
            }
            let mut counts = MatchCounts::default();
            let mut hits = 0;
            for (a, b) in r.iter().zip(&h) {
                let reference = parse_target(a, &lex);
                let hypothesis = parse_target(b, &lex);
                counts += MatchCounts::of_pair(&reference, &hypothesis);
                hits += usize::from(intents_match(&reference.intents(), &hypothesis.intents()));
            }
            let scores = counts.scores();
            let accuracy = if r.is_empty() {
                0.0
            } else {
                hits as f64 / r.len() as f64
            };
            let cells = ScoreCells {
                pairs: r.len(),
                tp: counts.true_positives,
                ref_len: counts.ref_len,
                hyp_len: counts.hyp_len,
                precision: round2(100.0 * scores.precision),
                recall: round2(100.0 * scores.recall),
                f1: round2(100.0 * scores.f1),
                intents_accuracy: round2(100.0 * accuracy),
            };
            let table =
                format!(
                "{:>6}  {:>9}  {:>9}  {:>9}  {:>9}\n{:>6}  {:>9.2}  {:>9.2}  {:>9.2}  {:>9.2}\n",
                "pairs", "precision", "recall", "co-mc f1", "intents",
                cells.pairs, cells.precision, cells.recall, cells.f1, cells.intents_accuracy
            );
            write_report(&report, &cells, table)
        }
        Command::EvalPartial {
            gold,
            hyps,
            lexicon,
            percents,
            mode,
            report,
        } => {
            if let Some(p) = percents.iter().find(|p| **p == 0 || **p > 100) {
                return Err(Failure::Usage(format!("percent {p} outside (0, 100]")));
            }
            check_report(&report)?;
            let lex = read_lexicon(lexicon.lexicon.as_deref(), lexicon.corpus.as_deref())?;
            let gold = read_incremental(&gold)?;
            let table = read_hypotheses(&hyps)?;
            let mode = match mode {
                Mode::Exact => SelectMode::Exact,
                Mode::AtLeast => SelectMode::AtLeast,
            };
            let result = evaluate_partial(&gold, &table, &percents, mode, &lex).map_err(|e| {
                let e = anyhow::Error::from(e);
                match mode {
                    SelectMode::Exact => {
                        e.context("noised or recognizer series need --mode at-least")
                    }
                    SelectMode::AtLeast => e,
                }
            })?;
            write_report(&report, &result.cells(), result.render_table())
        }
        Command::EvalConfidence {
            gold,
            hyps,
            thresholds,
            report,
        } => {
            if let Some(t) = thresholds.iter().find(|t| !t.is_finite() || **t < 0.0) {
                return Err(Failure::Usage(format!(
                    "threshold {t} must be finite and non-negative"
                )));
            }
            check_report(&report)?;
            let gold = read_incremental(&gold)?;
            let table = read_hypotheses(&hyps)?;
            let traces = build_traces(&gold, &table).map_err(anyhow::Error::from)?;
            let result = evaluate_confidence(&traces, &gold_intents(&gold), &thresholds)
                .map_err(anyhow::Error::from)?;
            write_report(&report, &result.cells(), result.render_table())
        }
        Command::Stats {
            input,
            keep_case,
            report,
        } => {
            check_report(&report)?;
            let mut all = Vec::with_capacity(input.len());
            for path in &input {
                let mut stats = corpus_stats(&read_corpus(path, keep_case)?);
                stats.mean_tokens = round2(stats.mean_tokens);
                stats.mean_params = round2(stats.mean_params);
                for share in &mut stats.intents {
                    share.percent = round2(share.percent);
                }
                all.push(FileStats {
                    file: path.display().to_string(),
                    stats,
                });
            }
            let table = stats_table(&all);
            write_report(&report, &all, table)
        }
        Command::BenchLatency {
            corpus,
            model,
            duration,
            budget_ms,
            report,
            command,
        } => {
            if !(duration.is_finite() && duration > 0.0) {
                return Err(Failure::Usage(format!(
                    "duration {duration} must be positive"
                )));
            }
            check_report(&report)?;
            let records = read_corpus(&corpus.input, corpus.keep_case)?;
            let utterances = stress_utterances(&records);
            if utterances.is_empty() {
                return Err(anyhow!("corpus {} is empty", corpus.input.display()).into());
            }
            let baseline;
            let mut adapter: Box<dyn ModelAdapter> = match (model, command.split_first()) {
                (Some(path), None) => {
                    baseline = read_model(&path)?;
                    Box::new(BaselineAdapter::new(&baseline))
                }
                (None, Some((program, args))) => Box::new(
                    ChildProcessAdapter::spawn(program, args)
                        .map_err(|e| Failure::Protocol(e.into()))?,
                ),
                _ => {
                    return Err(Failure::Usage(
                        "give exactly one of --model or a command after --".into(),
                    ))
                }
            };
            let outcome = adapter::bench_latency(
                adapter.as_mut(),
                &utterances,
                Duration::from_secs_f64(duration),
            );
            let latency = match outcome {
                Ok(r) => r,
                Err(e) => {
                    let _ = emit(
                        report.output.as_deref(),
                        &to_json(&BenchCells::new(e.partial.clone(), budget_ms)),
                    );
                    return Err(Failure::Protocol(e.into()));
                }
            };
            adapter.finish().map_err(|e| Failure::Protocol(e.into()))?;
            let cells = BenchCells::new(latency, budget_ms);
            let table = bench_table(&cells);
            write_report(&report, &cells, table)?;
            if !cells.within_budget {
                return Err(anyhow!(
                    "per-prefix maximum {:.3} ms exceeds the {budget_ms} ms budget",
                    cells.latency.max_prefix_ms()
                )
                .into());
            }
            Ok(())
        }
    }
}

fn read_incremental(path: &Path) -> anyhow::Result<Vec<IncrementalSeries>> {
    parse_incremental(&read(path)?)
        .with_context(|| format!("parsing incremental dataset {}", path.display()))
}

fn read_hypotheses(path: &Path) -> anyhow::Result<HypothesisTable> {
    let lines = parse_hypotheses(&read(path)?)
        .with_context(|| format!("parsing hypotheses {}", path.display()))?;
    Ok(HypothesisTable::from_lines(lines))
}

fn read_model(path: &Path) -> anyhow::Result<BaselineModel> {
    BaselineModel::from_dump(&read(path)?)
        .with_context(|| format!("loading model {}", path.display()))
}

fn check_report(report: &ReportOutput) -> anyhow::Result<()> {
    match &report.output {
        Some(p) => check_output(p),
        None => Ok(()),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn write_report<T: Serialize>(report: &ReportOutput, value: &T, table: String) -> CmdResult {
    let text = match report.format {
        ReportFormat::Json => to_json(value),
        ReportFormat::Table => table,
    };
    emit(report.output.as_deref(), &text)?;
    Ok(())
}

/// Streams hypotheses into `<output>.partial` and renames it on success. A
/// failed run leaves the partial file behind.
fn run_external(series: &[IncrementalSeries], output: &Path, command: &[String]) -> CmdResult {
    let (program, args) = command
        .split_first()
        .ok_or_else(|| Failure::Usage("missing model command".into()))?;
    let partial = partial_path(output);
    let file = File::create(&partial).with_context(|| format!("creating {}", partial.display()))?;
    let mut sink = BufWriter::new(file);
    let mut child = ChildProcessAdapter::spawn(program, args).map_err(|e| {
        Failure::Protocol(anyhow::Error::from(e).context(format!("starting {program}")))
    })?;
    let outcome = adapter::run_model(&mut child, series, &mut sink).and_then(|_| child.finish());
    sink.flush()
        .with_context(|| format!("writing {}", partial.display()))?;
    drop(sink);
    if let Err(e) = outcome {
        return Err(Failure::Protocol(
            anyhow::Error::from(e).context(format!("partial output kept in {}", partial.display())),
        ));
    }
    std::fs::rename(&partial, output)
        .with_context(|| format!("moving output into place at {}", output.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct ScoreCells {
    pairs: usize,
    tp: usize,
    ref_len: usize,
    hyp_len: usize,
    precision: f64,
    recall: f64,
    f1: f64,
    intents_accuracy: f64,
}

#[derive(Serialize)]
struct FileStats {
    file: String,
    stats: incnlu_core::stats::CorpusStats,
}

fn stats_table(all: &[FileStats]) -> String {
    let mut labels: Vec<&str> = Vec::new();
    for f in all {
        for s in &f.stats.intents {
            if !labels.contains(&s.label.as_str()) {
                labels.push(&s.label);
            }
        }
    }
    let mut out = String::new();
    for f in all {
        out.push_str(&format!(
            "{}: {} utterances, {:.2} tokens on average, {:.2} parameters on average, {} slots\n",
            f.file,
            f.stats.utterances,
            f.stats.mean_tokens,
            f.stats.mean_params,
            f.stats.distinct_slots
        ));
    }
    for f in all {
        out.push_str(&format!("{:>8}  ", short_name(&f.file)));
    }
    out.push_str("intent(s)\n");
    for label in labels {
        for f in all {
            let pct = f
                .stats
                .intents
                .iter()
                .find(|s| s.label == label)
                .map_or(0.0, |s| s.percent);
            out.push_str(&format!("{pct:>8.2}  "));
        }
        out.push_str(label);
        out.push('\n');
    }
    out
}

fn short_name(path: &str) -> String {
    let name = Path::new(path)
        .file_stem()
        .map_or_else(|| path.to_owned(), |s| s.to_string_lossy().into_owned());
    name.chars().take(8).collect()
}

/// The longest utterance and the utterance with the longest target.
fn stress_utterances(records: &[AnnotatedUtterance]) -> Vec<(String, Vec<String>)> {
    let longest = records
        .iter()
        .enumerate()
        .max_by_key(|(i, r)| (r.len(), std::cmp::Reverse(*i)));
    let widest = records
        .iter()
        .enumerate()
        .max_by_key(|(i, r)| (iob_to_target(r).token_count(), std::cmp::Reverse(*i)));
    let mut seen = HashSet::new();
    [longest, widest]
        .into_iter()
        .flatten()
        .filter(|(i, _)| seen.insert(*i))
        .map(|(_, r)| (r.id().to_owned(), r.tokens().to_vec()))
        .collect()
}

#[derive(Serialize)]
struct BenchCells {
    #[serde(flatten)]
    latency: adapter::LatencyReport,
    budget_ms: f64,
    within_budget: bool,
}

impl BenchCells {
    fn new(latency: adapter::LatencyReport, budget_ms: f64) -> Self {
        let within_budget = latency.max_prefix_ms() <= budget_ms;
        BenchCells {
            latency,
            budget_ms,
            within_budget,
        }
    }
}

fn bench_table(cells: &BenchCells) -> String {
    let mut out = format!(
        "{:<16}  {:>6}  {:>7}  {:>10}  {:>10}  {:>10}  {:>11}\n",
        "utterance", "tokens", "passes", "max ms", "mean ms", "p99 ms", "pass max ms"
    );
    for u in &cells.latency.utterances {
        out.push_str(&format!(
            "{:<16}  {:>6}  {:>7}  {:>10.3}  {:>10.3}  {:>10.3}  {:>11.3}\n",
            u.utterance_id,
            u.tokens,
            u.passes,
            u.prefix_max_ms,
            u.prefix_mean_ms,
            u.prefix_p99_ms,
            u.pass_max_ms
        ));
    }
    out.push_str(&format!(
        "measured {:.1} s on {} thread; budget {} ms: {}\n",
        cells.latency.measured_seconds,
        cells.latency.threads,
        cells.budget_ms,
        if cells.within_budget {
            "ok"
        } else {
            "EXCEEDED"
        }
    ));
    out
}
