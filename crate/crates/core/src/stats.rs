//! Corpus statistics: size, lengths and the intent label distribution.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus::{slot_lexicon, AnnotatedUtterance};
use crate::seq2seq::chunks;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntentShare {
    pub label: String,
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub utterances: usize,
    pub mean_tokens: f64,
    pub max_tokens: usize,
    pub mean_params: f64,
    pub distinct_slots: usize,
    /// Utterance counts keyed by number of intents.
    pub intent_arity: BTreeMap<usize, usize>,
    /// Sorted by descending count, then label.
    pub intents: Vec<IntentShare>,
}

pub fn corpus_stats(records: &[AnnotatedUtterance]) -> CorpusStats {
    let n = records.len();
    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    let mut arity: BTreeMap<usize, usize> = BTreeMap::new();
    let mut tokens = 0usize;
    let mut params = 0usize;
    for r in records {
        *labels.entry(r.intent_label()).or_insert(0) += 1;
        *arity.entry(r.intents().len()).or_insert(0) += 1;
        tokens += r.len();
        params += chunks(r.tokens(), r.tags()).len();
    }
    let mean = |total: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    let mut intents: Vec<IntentShare> = labels
        .into_iter()
        .map(|(label, count)| IntentShare {
            label,
            count,
            percent: 100.0 * mean(count),
        })
        .collect();
    intents.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
    CorpusStats {
        utterances: n,
        mean_tokens: mean(tokens),
        max_tokens: records
            .iter()
            .map(AnnotatedUtterance::len)
            .max()
            .unwrap_or(0),
        mean_params: mean(params),
        distinct_slots: slot_lexicon(records).len(),
        intent_arity: arity,
        intents,
    }
}
