//! Prefix datasets and alignment of recognizer partials to prefix targets.
//!
//! An utterance of `n` tokens expands to `n` records; record `i` holds the
//! first `i` tokens and the target that those tokens support. A slot chunk
//! cut by the prefix boundary keeps only the tokens seen so far.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnnotatedUtterance;
use crate::seq2seq::{target_from_parts, TargetSequence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialRecord {
    pub tokens: Vec<String>,
    pub target: TargetSequence,
    pub is_full: bool,
}

impl PartialRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Ordered partial records of one utterance. The last record is the full one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncrementalSeries {
    pub utterance_id: String,
    pub records: Vec<PartialRecord>,
}

impl IncrementalSeries {
    pub fn full(&self) -> Option<&PartialRecord> {
        self.records.last()
    }

    /// Token length of the full record, or 0 for an empty series.
    pub fn full_len(&self) -> usize {
        self.full().map_or(0, PartialRecord::len)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IncrementalError {
    #[error("percent {0} outside (0, 100]")]
    BadPercent(u32),
    #[error("series {0:?} is empty")]
    EmptySeries(String),
    #[error("series {id:?} has no record of length {len}")]
    MissingLength { id: String, len: usize },
    #[error("series {0:?} received no nonempty recognizer partial")]
    NoPartials(String),
}

pub fn generate_prefixes(u: &AnnotatedUtterance) -> IncrementalSeries {
    let n = u.len();
    let records = (1..=n)
        .map(|i| PartialRecord {
            tokens: u.tokens()[..i].to_vec(),
            target: target_from_parts(&u.tokens()[..i], &u.tags()[..i], u.intents()),
            is_full: i == n,
        })
        .collect();
    IncrementalSeries {
        utterance_id: u.id().to_owned(),
        records,
    }
}

/// A one-record series holding just the full utterance.
pub fn full_only(u: &AnnotatedUtterance) -> IncrementalSeries {
    IncrementalSeries {
        utterance_id: u.id().to_owned(),
        records: vec![PartialRecord {
            tokens: u.tokens().to_vec(),
            target: crate::seq2seq::iob_to_target(u),
            is_full: true,
        }],
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedPartials {
    pub series: IncrementalSeries,
    /// Recognizer partials dropped because they held no tokens.
    pub skipped_empty: usize,
}

/// Gives each recognizer partial the target of the human prefix of the same
/// token length; partials longer than every human prefix get the full target.
pub fn align_asr_partials(
    asr_partials: &[Vec<String>],
    human: &IncrementalSeries,
) -> Result<AlignedPartials, IncrementalError> {
    let full = human
        .full()
        .ok_or_else(|| IncrementalError::EmptySeries(human.utterance_id.clone()))?;
    let mut records = Vec::with_capacity(asr_partials.len());
    let mut skipped_empty = 0;
    for partial in asr_partials {
        if partial.is_empty() {
            skipped_empty += 1;
            continue;
        }
        let len = partial.len();
        let source = human
            .records
            .iter()
            .find(|r| r.len() == len)
            .or_else(|| human.records.iter().find(|r| r.len() >= len))
            .unwrap_or(full);
        records.push(PartialRecord {
            tokens: partial.clone(),
            target: source.target.clone(),
            is_full: false,
        });
    }
    match records.last_mut() {
        Some(last) => last.is_full = true,
        None => return Err(IncrementalError::NoPartials(human.utterance_id.clone())),
    }
    Ok(AlignedPartials {
        series: IncrementalSeries {
            utterance_id: human.utterance_id.clone(),
            records,
        },
        skipped_empty,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    /// The record of exactly the cut length; for prefix series.
    Exact,
    /// The first record at least as long as the cut; for recognizer series.
    AtLeast,
}

/// Token count kept for a percentage cut of an `n`-token utterance: the
/// floor of `percent * n / 100`, never below 1.
pub fn cut_length(n: usize, percent: u32) -> usize {
    (n * percent as usize / 100).max(1)
}

/// Index into `series.records` of the record used for a percentage cut.
pub fn select_prefix_index(
    series: &IncrementalSeries,
    percent: u32,
    mode: SelectMode,
) -> Result<usize, IncrementalError> {
    if percent == 0 || percent > 100 {
        return Err(IncrementalError::BadPercent(percent));
    }
    let n = series.full_len();
    if n == 0 {
        return Err(IncrementalError::EmptySeries(series.utterance_id.clone()));
    }
    let want = cut_length(n, percent);
    match mode {
        SelectMode::Exact => series
            .records
            .iter()
            .position(|r| r.len() == want)
            .ok_or_else(|| IncrementalError::MissingLength {
                id: series.utterance_id.clone(),
                len: want,
            }),
        SelectMode::AtLeast => Ok(series
            .records
            .iter()
            .position(|r| r.len() >= want)
            .unwrap_or(series.records.len() - 1)),
    }
}

pub fn select_prefix(
    series: &IncrementalSeries,
    percent: u32,
    mode: SelectMode,
) -> Result<&PartialRecord, IncrementalError> {
    select_prefix_index(series, percent, mode).map(|i| &series.records[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_iob_tsv, ImportOptions};
    use crate::seq2seq::iob_to_target;

    fn utt(line: &str) -> AnnotatedUtterance {
        parse_iob_tsv(line, ImportOptions::default())
            .unwrap()
            .remove(0)
    }

    fn targets(s: &IncrementalSeries) -> Vec<&str> {
        s.records.iter().map(|r| r.target.as_str()).collect()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn series_with_lengths(lengths: &[usize]) -> IncrementalSeries {
        IncrementalSeries {
            utterance_id: "s".into(),
            records: lengths
                .iter()
                .enumerate()
                .map(|(i, &l)| PartialRecord {
                    tokens: vec!["w".to_owned(); l],
                    target: TargetSequence::new(format!("t{l}")),
                    is_full: i + 1 == lengths.len(),
                })
                .collect(),
        }
    }

    #[test]
    fn three_token_prefixes() {
        let s = generate_prefixes(&utt("flights to pittsburgh\tO O B-toloc\tatis_flight"));
        assert_eq!(
            targets(&s),
            vec!["atis_flight", "atis_flight", "atis_flight toloc pittsburgh"]
        );
        assert!(s.records[2].is_full);
        assert!(!s.records[1].is_full);
    }

    #[test]
    fn chunk_cut_mid_way() {
        let u = utt(
            "i want a flight from new york to san francisco\t\
             O O O O O B-fromloc.city_name I-fromloc.city_name O B-toloc.city_name I-toloc.city_name\tatis_flight",
        );
        let s = generate_prefixes(&u);
        assert_eq!(
            s.records[8].target.as_str(),
            "atis_flight fromloc.city_name new york toloc.city_name san"
        );
        assert_eq!(s.records[9].target, iob_to_target(&u));
    }

    #[test]
    fn single_token_series() {
        let u = utt("hello\tO\tatis_abbreviation");
        let s = generate_prefixes(&u);
        assert_eq!(s.records.len(), 1);
        assert_eq!(s, full_only(&u));
    }

    #[test]
    fn asr_alignment() {
        let human = series_with_lengths(&(1..=10).collect::<Vec<_>>());
        let partials = vec![
            toks("a"),
            vec![],
            toks("a b c"),
            toks("a b c d e f g h i j k l"),
        ];
        let aligned = align_asr_partials(&partials, &human).unwrap();
        assert_eq!(aligned.skipped_empty, 1);
        assert_eq!(targets(&aligned.series), vec!["t1", "t3", "t10"]);
        assert_eq!(
            aligned
                .series
                .records
                .iter()
                .map(|r| r.is_full)
                .collect::<Vec<_>>(),
            vec![false, false, true]
        );
    }

    #[test]
    fn asr_duplicate_lengths_kept() {
        let human = series_with_lengths(&[1, 2, 3]);
        let partials = vec![toks("a b"), toks("a c")];
        let aligned = align_asr_partials(&partials, &human).unwrap();
        assert_eq!(targets(&aligned.series), vec!["t2", "t2"]);
    }

    #[test]
    fn asr_all_empty_is_error() {
        let human = series_with_lengths(&[1]);
        assert!(matches!(
            align_asr_partials(&[vec![]], &human),
            Err(IncrementalError::NoPartials(_))
        ));
    }

    #[test]
    fn selection_rules() {
        let ten = series_with_lengths(&(1..=10).collect::<Vec<_>>());
        assert_eq!(select_prefix(&ten, 75, SelectMode::Exact).unwrap().len(), 7);
        assert_eq!(
            select_prefix(&ten, 100, SelectMode::Exact).unwrap().len(),
            10
        );
        let three = series_with_lengths(&[1, 2, 3]);
        assert_eq!(
            select_prefix(&three, 25, SelectMode::Exact).unwrap().len(),
            1
        );

        let asr = series_with_lengths(&[2, 5, 9]);
        assert_eq!(
            select_prefix(&asr, 50, SelectMode::AtLeast).unwrap().len(),
            5
        );
        assert_eq!(
            select_prefix(&asr, 100, SelectMode::AtLeast).unwrap().len(),
            9
        );
        assert!(matches!(
            select_prefix(&asr, 50, SelectMode::Exact),
            Err(IncrementalError::MissingLength { len: 4, .. })
        ));
        assert!(select_prefix(&asr, 0, SelectMode::AtLeast).is_err());
        assert!(select_prefix(&asr, 101, SelectMode::AtLeast).is_err());
    }

    #[test]
    fn at_least_falls_back_to_last() {
        // Revisions can leave the final transcript shorter than an earlier partial.
        let asr = series_with_lengths(&[6, 3]);
        assert_eq!(
            select_prefix_index(&asr, 100, SelectMode::AtLeast).unwrap(),
            0
        );
        let short = series_with_lengths(&[1, 2]);
        assert_eq!(
            select_prefix_index(&short, 100, SelectMode::AtLeast).unwrap(),
            1
        );
    }
}
