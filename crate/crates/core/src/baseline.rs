//! A small count-based incremental predictor.
//!
//! Intents come from a multinomial naive Bayes classifier over token unigrams
//! with additive smoothing, treating each `#`-joined intent label as one
//! class. Slots come from a context-free lookup of each token's most frequent
//! training tag. It exists so the pipeline runs end to end without a neural
//! model; it is not meant to be accurate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{split_intents, AnnotatedUtterance, SlotLexicon, Tag};
use crate::evaluation::Hypothesis;
use crate::seq2seq::target_from_parts;

const MODEL_HEADER: &str = "incnlu-baseline\tv1";
pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("smoothing alpha must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("model line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ClassCounts {
    utterances: u64,
    tokens: u64,
    token_counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    alpha: f64,
    classes: BTreeMap<String, ClassCounts>,
    tag_counts: BTreeMap<String, BTreeMap<String, u64>>,
    vocabulary: BTreeSet<String>,
    total_utterances: u64,
}

pub fn train_baseline(
    records: &[AnnotatedUtterance],
    alpha: f64,
) -> Result<BaselineModel, BaselineError> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(BaselineError::BadAlpha(alpha));
    }
    if records.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut model = BaselineModel {
        alpha,
        classes: BTreeMap::new(),
        tag_counts: BTreeMap::new(),
        vocabulary: BTreeSet::new(),
        total_utterances: 0,
    };
    for r in records {
        let class = model.classes.entry(r.intent_label()).or_default();
        class.utterances += 1;
        for (token, tag) in r.tokens().iter().zip(r.tags()) {
            class.tokens += 1;
            *class.token_counts.entry(token.clone()).or_insert(0) += 1;
            *model
                .tag_counts
                .entry(token.clone())
                .or_default()
                .entry(tag.clone())
                .or_insert(0) += 1;
            model.vocabulary.insert(token.clone());
        }
        model.total_utterances += 1;
    }
    Ok(model)
}

impl BaselineModel {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn class_labels(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn slot_lexicon(&self) -> SlotLexicon {
        SlotLexicon::new(
            self.tag_counts
                .values()
                .flat_map(|tags| tags.keys())
                .filter_map(|t| Tag::parse(t).and_then(|t| t.slot()))
                .map(str::to_owned),
        )
    }

    /// Posterior over intent labels, in label order. Tokens never seen in
    /// training are skipped, so an all-unknown prefix yields the prior.
    pub fn posterior<S: AsRef<str>>(&self, prefix: &[S]) -> Vec<(&str, f64)> {
        let vocab_size = self.vocabulary.len() as f64;
        let log_scores: Vec<f64> = self
            .classes
            .values()
            .map(|c| {
                let denominator = (c.tokens as f64 + self.alpha * vocab_size).ln();
                let prior = (c.utterances as f64 / self.total_utterances as f64).ln();
                prefix
                    .iter()
                    .map(AsRef::as_ref)
                    .filter(|t| self.vocabulary.contains(*t))
                    .map(|t| {
                        let count = c.token_counts.get(t).copied().unwrap_or(0) as f64;
                        (count + self.alpha).ln() - denominator
                    })
                    .sum::<f64>()
                    + prior
            })
            .collect();
        let max = log_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = log_scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        self.classes
            .keys()
            .map(String::as_str)
            .zip(weights.iter().map(|w| w / total))
            .collect()
    }

    /// Most frequent training tag of a token; ties go to the smaller tag.
    pub fn tag_for(&self, token: &str) -> &str {
        self.tag_counts
            .get(token)
            .and_then(|tags| {
                tags.iter()
                    .fold(None::<(&String, u64)>, |best, (tag, &n)| match best {
                        Some((_, m)) if m >= n => best,
                        _ => Some((tag, n)),
                    })
                    .map(|(t, _)| t.as_str())
            })
            .unwrap_or("O")
    }

    pub fn predict<S: AsRef<str>>(&self, prefix: &[S]) -> Hypothesis {
        let posterior = self.posterior(prefix);
        let (label, confidence) = posterior
            .iter()
            .fold(None::<(&str, f64)>, |best, &(l, p)| match best {
                Some((_, q)) if q >= p => best,
                _ => Some((l, p)),
            })
            .expect("model has at least one class");
        let tags = repair_iob(prefix.iter().map(|t| self.tag_for(t.as_ref())));
        let intents = split_intents(label);
        Hypothesis {
            target_text: target_from_parts(prefix, &tags, &intents).into_string(),
            intent_confidence: confidence.clamp(0.0, 1.0),
        }
    }

    /// Serializes counts as tab-separated lines under a version header.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MODEL_HEADER}");
        let _ = writeln!(out, "alpha\t{}", self.alpha);
        for (label, c) in &self.classes {
            let _ = writeln!(out, "class\t{label}\t{}", c.utterances);
        }
        for (label, c) in &self.classes {
            for (token, n) in &c.token_counts {
                let _ = writeln!(out, "token\t{label}\t{token}\t{n}");
            }
        }
        for (token, tags) in &self.tag_counts {
            for (tag, n) in tags {
                let _ = writeln!(out, "tag\t{token}\t{tag}\t{n}");
            }
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<BaselineModel, BaselineError> {
        let fail = |line: usize, message: &str| BaselineError::Format {
            line,
            message: message.to_owned(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, l)) if l == MODEL_HEADER => {}
            _ => return Err(fail(1, "missing or unsupported version header")),
        }
        let mut alpha = None;
        let mut classes: BTreeMap<String, ClassCounts> = BTreeMap::new();
        let mut tag_counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        let count = |line: usize, s: &str| s.parse::<u64>().map_err(|_| fail(line, "bad count"));
        for (i, line) in lines {
            let lineno = i + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            match fields.as_slice() {
                ["alpha", a] => {
                    alpha = Some(a.parse::<f64>().map_err(|_| fail(lineno, "bad alpha"))?)
                }
                ["class", label, n] => {
                    classes.entry((*label).to_owned()).or_default().utterances = count(lineno, n)?
                }
                ["token", label, token, n] => {
                    let n = count(lineno, n)?;
                    let class = classes
                        .get_mut(*label)
                        .ok_or_else(|| fail(lineno, "token count for undeclared class"))?;
                    class.tokens += n;
                    class.token_counts.insert((*token).to_owned(), n);
                }
                ["tag", token, tag, n] => {
                    tag_counts
                        .entry((*token).to_owned())
                        .or_default()
                        .insert((*tag).to_owned(), count(lineno, n)?);
                }
                _ => return Err(fail(lineno, "unrecognized record")),
            }
        }
        let alpha = alpha.ok_or_else(|| fail(1, "missing alpha"))?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(BaselineError::BadAlpha(alpha));
        }
        if classes.is_empty() {
            return Err(BaselineError::EmptyCorpus);
        }
        let total_utterances = classes.values().map(|c| c.utterances).sum();
        let vocabulary = classes
            .values()
            .flat_map(|c| c.token_counts.keys().cloned())
            .collect();
        Ok(BaselineModel {
            alpha,
            classes,
            tag_counts,
            vocabulary,
            total_utterances,
        })
    }
}

/// Rewrites an `I-x` that does not continue an `x` chunk as `B-x`.
pub fn repair_iob<'a>(tags: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut previous_slot: Option<String> = None;
    for raw in tags {
        let tag = Tag::parse(raw).unwrap_or(Tag::Outside);
        let fixed = match tag {
            Tag::Inside(slot) if previous_slot.as_deref() != Some(slot) => format!("B-{slot}"),
            Tag::Outside => "O".to_owned(),
            _ => raw.to_owned(),
        };
        previous_slot = tag.slot().map(str::to_owned);
        out.push(fixed);
    }
    out
}
