//! The two evaluation schemes over incremental hypotheses.
//!
//! *Partial processing* scores the hypothesis for the first `p` percent of
//! each utterance's tokens. *Confidence processing* walks each utterance's
//! partials in order, stops at the first hypothesis whose intent confidence
//! reaches a threshold, and falls back to the full utterance otherwise.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::SlotLexicon;
use crate::formats::HypothesisLine;
use crate::incremental::{select_prefix_index, IncrementalError, IncrementalSeries, SelectMode};
use crate::metrics::{intents_match, CorpusScores, MatchCounts};
use crate::seq2seq::{parse_target, target_intents};

pub const DEFAULT_PERCENTS: [u32; 4] = [100, 75, 50, 25];
pub const DEFAULT_THRESHOLDS: [f64; 4] = [0.95, 0.90, 0.85, 0.80];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    pub target_text: String,
    pub intent_confidence: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no hypothesis for {} selected prefixes, first: {}", .0.len(), describe_keys(.0))]
    MissingHypotheses(Vec<(String, usize)>),
    #[error("trace {0:?} has no entry for the full utterance")]
    MissingFull(String),
    #[error("trace {0:?} is empty")]
    EmptyTrace(String),
    #[error("no gold intents for utterance {0:?}")]
    MissingGold(String),
    #[error("threshold {0} must be finite and non-negative")]
    BadThreshold(f64),
    #[error("nothing to evaluate")]
    EmptyCorpus,
    #[error(transparent)]
    Selection(#[from] IncrementalError),
}

fn describe_keys(keys: &[(String, usize)]) -> String {
    keys.iter()
        .take(5)
        .map(|(id, len)| format!("({id}, {len})"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Hypotheses keyed by utterance and prefix length. Repeated keys (recognizer
/// revisions of equal length) are kept in file order and matched to the
/// records of that length in series order.
#[derive(Debug, Clone, Default)]
pub struct HypothesisTable {
    map: HashMap<(String, usize), Vec<Hypothesis>>,
}

impl HypothesisTable {
    pub fn from_lines(lines: impl IntoIterator<Item = HypothesisLine>) -> Self {
        let mut map: HashMap<(String, usize), Vec<Hypothesis>> = HashMap::new();
        for l in lines {
            map.entry((l.utterance_id, l.prefix_len))
                .or_default()
                .push(Hypothesis {
                    target_text: l.target,
                    intent_confidence: l.intent_confidence,
                });
        }
        HypothesisTable { map }
    }

    pub fn insert(&mut self, utterance_id: &str, prefix_len: usize, h: Hypothesis) {
        self.map
            .entry((utterance_id.to_owned(), prefix_len))
            .or_default()
            .push(h);
    }

    /// The `occurrence`-th hypothesis for a key, or the last one if fewer exist.
    pub fn get(
        &self,
        utterance_id: &str,
        prefix_len: usize,
        occurrence: usize,
    ) -> Option<&Hypothesis> {
        let list = self.map.get(&(utterance_id.to_owned(), prefix_len))?;
        list.get(occurrence).or_else(|| list.last())
    }

    fn for_record(&self, series: &IncrementalSeries, index: usize) -> Option<&Hypothesis> {
        let len = series.records[index].len();
        let occurrence = series.records[..index]
            .iter()
            .filter(|r| r.len() == len)
            .count();
        self.get(&series.utterance_id, len, occurrence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialRow {
    pub percent: u32,
    pub utterances: usize,
    pub scores: CorpusScores,
    pub intents_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialReport {
    pub rows: Vec<PartialRow>,
}

pub fn evaluate_partial(
    gold: &[IncrementalSeries],
    hyps: &HypothesisTable,
    percents: &[u32],
    mode: SelectMode,
    lex: &SlotLexicon,
) -> Result<PartialReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut rows = Vec::with_capacity(percents.len());
    let mut missing = Vec::new();
    for &percent in percents {
        let mut counts = MatchCounts::default();
        let mut intent_hits = 0usize;
        for series in gold {
            let index = select_prefix_index(series, percent, mode)?;
            let record = &series.records[index];
            let Some(hyp) = hyps.for_record(series, index) else {
                missing.push((series.utterance_id.clone(), record.len()));
                continue;
            };
            let reference = parse_target(record.target.as_str(), lex);
            let hypothesis = parse_target(&hyp.target_text, lex);
            counts += MatchCounts::of_pair(&reference, &hypothesis);
            if intents_match(&reference.intents(), &hypothesis.intents()) {
                intent_hits += 1;
            }
        }
        rows.push(PartialRow {
            percent,
            utterances: gold.len(),
            scores: counts.scores(),
            intents_accuracy: intent_hits as f64 / gold.len() as f64,
        });
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(EvalError::MissingHypotheses(missing));
    }
    Ok(PartialReport { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub prefix_len: usize,
    pub hypothesis: Hypothesis,
    pub is_full: bool,
}

/// Hypotheses of one utterance in emission order, ending with the full one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceTrace {
    utterance_id: String,
    entries: Vec<TraceEntry>,
}

impl ConfidenceTrace {
    pub fn new(
        utterance_id: impl Into<String>,
        entries: Vec<TraceEntry>,
    ) -> Result<Self, EvalError> {
        let utterance_id = utterance_id.into();
        match entries.last() {
            None => Err(EvalError::EmptyTrace(utterance_id)),
            Some(last) if !last.is_full => Err(EvalError::MissingFull(utterance_id)),
            Some(_) => Ok(ConfidenceTrace {
                utterance_id,
                entries,
            }),
        }
    }

    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn full_len(&self) -> usize {
        self.entries.last().map_or(0, |e| e.prefix_len)
    }

    /// First entry whose confidence reaches `threshold`, else the full one.
    pub fn decide(&self, threshold: f64) -> &TraceEntry {
        self.entries
            .iter()
            .find(|e| e.hypothesis.intent_confidence >= threshold)
            .unwrap_or_else(|| self.entries.last().expect("trace is nonempty"))
    }
}

/// Joins gold series with their hypotheses into traces. Every record of every
/// series needs a hypothesis.
pub fn build_traces(
    gold: &[IncrementalSeries],
    hyps: &HypothesisTable,
) -> Result<Vec<ConfidenceTrace>, EvalError> {
    let mut traces = Vec::with_capacity(gold.len());
    let mut missing = Vec::new();
    for series in gold {
        let mut entries = Vec::with_capacity(series.records.len());
        for (index, record) in series.records.iter().enumerate() {
            match hyps.for_record(series, index) {
                Some(h) => entries.push(TraceEntry {
                    prefix_len: record.len(),
                    hypothesis: h.clone(),
                    is_full: record.is_full,
                }),
                None => missing.push((series.utterance_id.clone(), record.len())),
            }
        }
        if missing.is_empty() {
            traces.push(ConfidenceTrace::new(series.utterance_id.clone(), entries)?);
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(EvalError::MissingHypotheses(missing));
    }
    Ok(traces)
}

/// Gold intents of each series, read from its full record's target.
pub fn gold_intents(gold: &[IncrementalSeries]) -> HashMap<String, Vec<String>> {
    gold.iter()
        .filter_map(|s| {
            s.full()
                .map(|r| (s.utterance_id.clone(), target_intents(r.target.as_str())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceRow {
    pub threshold: f64,
    pub utterances: usize,
    pub intents_accuracy: f64,
    /// Mean share of tokens consumed before deciding, in percent.
    pub mean_token_usage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceReport {
    pub rows: Vec<ConfidenceRow>,
}

pub fn evaluate_confidence(
    traces: &[ConfidenceTrace],
    gold_intents: &HashMap<String, Vec<String>>,
    thresholds: &[f64],
) -> Result<ConfidenceReport, EvalError> {
    if traces.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    if let Some(&bad) = thresholds.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(EvalError::BadThreshold(bad));
    }
    let mut rows = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let mut hits = 0usize;
        let mut usage = 0.0;
        for trace in traces {
            let gold = gold_intents
                .get(trace.utterance_id())
                .ok_or_else(|| EvalError::MissingGold(trace.utterance_id().to_owned()))?;
            let picked = trace.decide(threshold);
            if intents_match(gold, &target_intents(&picked.hypothesis.target_text)) {
                hits += 1;
            }
            usage += token_usage(picked.prefix_len, trace.full_len());
        }
        rows.push(ConfidenceRow {
            threshold,
            utterances: traces.len(),
            intents_accuracy: hits as f64 / traces.len() as f64,
            mean_token_usage: usage / traces.len() as f64,
        });
    }
    Ok(ConfidenceReport { rows })
}

/// Percentage of `full_len` tokens that `used` represents, capped at 100.
pub fn token_usage(used: usize, full_len: usize) -> f64 {
    if full_len == 0 {
        return 100.0;
    }
    (100.0 * used as f64 / full_len as f64).min(100.0)
}

/// Rounds to two decimals, the precision reports are printed with.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Report cells as percentages with two decimals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialCells {
    pub percent: u32,
    pub utterances: usize,
    pub tp: usize,
    pub ref_len: usize,
    pub hyp_len: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub intents_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceCells {
    pub threshold: f64,
    pub utterances: usize,
    pub intents_accuracy: f64,
    pub mean_token_usage: f64,
}

impl PartialReport {
    pub fn cells(&self) -> Vec<PartialCells> {
        self.rows
            .iter()
            .map(|r| PartialCells {
                percent: r.percent,
                utterances: r.utterances,
                tp: r.scores.counts.true_positives,
                ref_len: r.scores.counts.ref_len,
                hyp_len: r.scores.counts.hyp_len,
                precision: round2(100.0 * r.scores.precision),
                recall: round2(100.0 * r.scores.recall),
                f1: round2(100.0 * r.scores.f1),
                intents_accuracy: round2(100.0 * r.intents_accuracy),
            })
            .collect()
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:>7}  {:>6}  {:>9}  {:>9}  {:>9}  {:>9}\n",
            "tokens", "utts", "precision", "recall", "co-mc f1", "intents"
        );
        for c in self.cells() {
            let _ = writeln!(
                out,
                "{:>6}%  {:>6}  {:>9.2}  {:>9.2}  {:>9.2}  {:>9.2}",
                c.percent, c.utterances, c.precision, c.recall, c.f1, c.intents_accuracy
            );
        }
        out
    }
}

impl ConfidenceReport {
    pub fn cells(&self) -> Vec<ConfidenceCells> {
        self.rows
            .iter()
            .map(|r| ConfidenceCells {
                threshold: round2(100.0 * r.threshold),
                utterances: r.utterances,
                intents_accuracy: round2(100.0 * r.intents_accuracy),
                mean_token_usage: round2(r.mean_token_usage),
            })
            .collect()
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:>9}  {:>6}  {:>9}  {:>11}\n",
            "threshold", "utts", "intents", "tokens used"
        );
        for c in self.cells() {
            let _ = writeln!(
                out,
                "{:>8.2}%  {:>6}  {:>9.2}  {:>10.2}%",
                c.threshold, c.utterances, c.intents_accuracy, c.mean_token_usage
            );
        }
        out
    }
}
