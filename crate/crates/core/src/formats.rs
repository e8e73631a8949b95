//! Line-delimited JSON files shared between commands: incremental datasets,
//! recognizer partials and model hypotheses.

use std::collections::HashMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::incremental::{IncrementalSeries, PartialRecord};
use crate::seq2seq::TargetSequence;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

/// Parses every nonblank line of `text` as one JSON object.
pub fn parse_lines<T: DeserializeOwned>(text: &str) -> Result<Vec<(usize, T)>, FormatError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|v| (i + 1, v))
                .map_err(|source| FormatError::Json {
                    line: i + 1,
                    source,
                })
        })
        .collect()
}

pub fn write_lines<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// One record of an incremental dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementalLine {
    pub utterance_id: String,
    pub index: usize,
    pub tokens: Vec<String>,
    pub target: TargetSequence,
    pub is_full: bool,
}

pub fn series_to_lines(series: &[IncrementalSeries]) -> Vec<IncrementalLine> {
    series
        .iter()
        .flat_map(|s| {
            s.records
                .iter()
                .enumerate()
                .map(|(index, r)| IncrementalLine {
                    utterance_id: s.utterance_id.clone(),
                    index,
                    tokens: r.tokens.clone(),
                    target: r.target.clone(),
                    is_full: r.is_full,
                })
        })
        .collect()
}

pub fn write_incremental(series: &[IncrementalSeries]) -> String {
    write_lines(series_to_lines(series))
}

/// Groups lines by utterance in order of first appearance, ordering records
/// within an utterance by `index`. Each utterance must end in exactly one
/// full record.
pub fn lines_to_series(
    lines: Vec<(usize, IncrementalLine)>,
) -> Result<Vec<IncrementalSeries>, FormatError> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(usize, IncrementalLine)>> = HashMap::new();
    for (lineno, line) in lines {
        if line.tokens.is_empty() {
            return Err(FormatError::Invalid {
                line: lineno,
                message: "record has no tokens".into(),
            });
        }
        let group = groups.entry(line.utterance_id.clone()).or_insert_with(|| {
            order.push(line.utterance_id.clone());
            Vec::new()
        });
        group.push((lineno, line));
    }
    let mut series = Vec::with_capacity(order.len());
    for id in order {
        let mut group = groups.remove(&id).expect("grouped id");
        group.sort_by_key(|(_, l)| l.index);
        for pair in group.windows(2) {
            if pair[0].1.index == pair[1].1.index {
                return Err(FormatError::Invalid {
                    line: pair[1].0,
                    message: format!("duplicate index {} for utterance {id:?}", pair[1].1.index),
                });
            }
        }
        let last = group.len() - 1;
        for (pos, (lineno, l)) in group.iter().enumerate() {
            if l.is_full != (pos == last) {
                return Err(FormatError::Invalid {
                    line: *lineno,
                    message: format!(
                        "utterance {id:?} must have exactly its last record marked full"
                    ),
                });
            }
        }
        series.push(IncrementalSeries {
            utterance_id: id,
            records: group
                .into_iter()
                .map(|(_, l)| PartialRecord {
                    tokens: l.tokens,
                    target: l.target,
                    is_full: l.is_full,
                })
                .collect(),
        });
    }
    Ok(series)
}

pub fn parse_incremental(text: &str) -> Result<Vec<IncrementalSeries>, FormatError> {
    lines_to_series(parse_lines(text)?)
}

/// One recognizer partial, in emission order within its utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsrPartialLine {
    pub utterance_id: String,
    pub tokens: Vec<String>,
}

/// Partials of one utterance in emission order.
pub type PartialGroup = (String, Vec<Vec<String>>);

/// Groups partials by utterance, keeping emission order.
pub fn parse_asr_partials(text: &str) -> Result<Vec<PartialGroup>, FormatError> {
    let mut order: Vec<PartialGroup> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (_, line) in parse_lines::<AsrPartialLine>(text)? {
        let slot = *index.entry(line.utterance_id.clone()).or_insert_with(|| {
            order.push((line.utterance_id.clone(), Vec::new()));
            order.len() - 1
        });
        order[slot].1.push(line.tokens);
    }
    Ok(order)
}

/// One model output for one partial input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisLine {
    pub utterance_id: String,
    pub prefix_len: usize,
    pub target: String,
    pub intent_confidence: f64,
}

pub fn parse_hypotheses(text: &str) -> Result<Vec<HypothesisLine>, FormatError> {
    let lines = parse_lines::<HypothesisLine>(text)?;
    lines
        .into_iter()
        .map(|(lineno, h)| {
            if !(0.0..=1.0).contains(&h.intent_confidence) {
                Err(FormatError::Invalid {
                    line: lineno,
                    message: format!("intent_confidence {} outside [0, 1]", h.intent_confidence),
                })
            } else {
                Ok(h)
            }
        })
        .collect()
}
