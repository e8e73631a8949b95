//! Recognizer-like noise: word substitutions, insertions and deletions.
//!
//! Each token position is visited left to right and selected for an
//! operation with probability `tau`. Substitutions and deletions prefer short
//! words: their selection rate at position `p` is scaled by
//! `(1 / len(w_p)) / mean_q(1 / len(w_q))`, which keeps the utterance-level
//! expected rate at `tau`. Replacement and inserted words are drawn from the
//! vocabulary in proportion to their similarity to the word they replace or
//! follow.
//!
//! Random draws per utterance happen in a fixed order: the selection draw for
//! a position, then the operation type, then the word. The same tokens,
//! vocabulary order and configuration always give the same output.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::{Arc, Mutex};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::incremental::{IncrementalSeries, PartialRecord};

/// Floor on sampling weights so that every vocabulary word stays reachable.
pub const MIN_SIMILARITY_WEIGHT: f64 = 0.01;
pub const DEFAULT_TAU: f64 = 0.08;
pub const DEFAULT_VOCAB_SIZE: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("tau {0} outside [0, 1]")]
    BadTau(f64),
    #[error("operation weights must be finite and positive, got {0:?}")]
    BadWeights(OpWeights),
    #[error("cannot add noise to an empty token list")]
    NoTokens,
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("vocabulary line {line}: duplicate word {word:?}")]
    DuplicateWord { line: usize, word: String },
    #[error("counts line {line}: expected `token<TAB>count`")]
    BadCountLine { line: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpWeights {
    pub substitute: f64,
    pub insert: f64,
    pub delete: f64,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            substitute: 5.0,
            insert: 1.0,
            delete: 1.0,
        }
    }
}

impl OpWeights {
    fn as_array(&self) -> [f64; 3] {
        [self.substitute, self.insert, self.delete]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub tau: f64,
    pub op_weights: OpWeights,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn new(tau: f64, op_weights: OpWeights, seed: u64) -> Result<Self, NoiseError> {
        let cfg = NoiseConfig {
            tau,
            op_weights,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(NoiseError::BadTau(self.tau));
        }
        if self
            .op_weights
            .as_array()
            .iter()
            .any(|w| !w.is_finite() || *w <= 0.0)
        {
            return Err(NoiseError::BadWeights(self.op_weights));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> NoiseConfig {
        NoiseConfig { seed, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Seen in the training corpus.
    Train,
    /// Filled in from an external token stream.
    External,
    /// Loaded from a word list that does not record provenance.
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    origins: Vec<Origin>,
}

impl Vocabulary {
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn origins(&self) -> &[Origin] {
        &self.origins
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.iter().any(|w| w == word)
    }

    /// One word per line; order is kept since it fixes the sampling stream.
    pub fn from_lines(text: &str) -> Result<Vocabulary, NoiseError> {
        let mut seen = HashSet::new();
        let mut words = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let word = line.trim();
            if word.is_empty() {
                continue;
            }
            if !seen.insert(word) {
                return Err(NoiseError::DuplicateWord {
                    line: i + 1,
                    word: word.to_owned(),
                });
            }
            words.push(word.to_owned());
        }
        let origins = vec![Origin::Unspecified; words.len()];
        Ok(Vocabulary { words, origins })
    }

    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        out
    }
}

/// Counts whitespace-separated tokens of a text stream.
pub fn count_tokens(text: &str) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    for token in text.split_whitespace() {
        *counts.entry(token.to_owned()).or_insert(0) += 1;
    }
    counts
}

/// Parses `token<TAB>count` lines, summing repeated tokens.
pub fn parse_counts(text: &str) -> Result<HashMap<String, u64>, NoiseError> {
    let mut counts = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (token, count) = line
            .rsplit_once('\t')
            .ok_or(NoiseError::BadCountLine { line: i + 1 })?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| NoiseError::BadCountLine { line: i + 1 })?;
        let token = token.trim();
        if token.is_empty() {
            return Err(NoiseError::BadCountLine { line: i + 1 });
        }
        *counts.entry(token.to_owned()).or_insert(0) += count;
    }
    Ok(counts)
}

/// All distinct training tokens (sorted), then the most frequent external
/// tokens not seen in training until `target_size` words are reached.
/// External ties are broken lexicographically. Training tokens are never
/// dropped, so the result can exceed `target_size`.
pub fn build_vocabulary<'a, I>(
    train_tokens: I,
    external: &HashMap<String, u64>,
    target_size: usize,
) -> Vocabulary
where
    I: IntoIterator<Item = &'a str>,
{
    let train: BTreeSet<&str> = train_tokens.into_iter().collect();
    let mut words: Vec<String> = train.iter().map(|t| (*t).to_owned()).collect();
    let mut origins = vec![Origin::Train; words.len()];

    let mut fill: Vec<(&String, u64)> = external
        .iter()
        .filter(|(t, _)| !train.contains(t.as_str()))
        .map(|(t, c)| (t, *c))
        .collect();
    fill.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let room = target_size.saturating_sub(words.len());
    for (token, _) in fill.into_iter().take(room) {
        words.push(token.clone());
        origins.push(Origin::External);
    }
    Vocabulary { words, origins }
}

/// Character-level similarity `1 - edit_distance / max_len`, in `[0, 1]`.
/// Stands in for acoustic confusability.
pub fn acoustic_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseOp {
    Substitute,
    Insert,
    Delete,
}

const OPS: [NoiseOp; 3] = [NoiseOp::Substitute, NoiseOp::Insert, NoiseOp::Delete];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
}

impl OpCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }
}

impl std::ops::AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: OpCounts) {
        self.substitutions += rhs.substitutions;
        self.insertions += rhs.insertions;
        self.deletions += rhs.deletions;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoisedTokens {
    pub tokens: Vec<String>,
    pub ops: OpCounts,
}

struct AnchorTables {
    /// Any vocabulary word; used for insertions.
    any: WeightedIndex<f64>,
    /// Excludes the anchor itself; `None` when the anchor is the only word.
    other: Option<WeightedIndex<f64>>,
}

/// Noise generator bound to one vocabulary. Similarity tables are computed
/// once per anchor word and shared across calls and threads.
pub struct NoiseModel<'v> {
    vocab: &'v Vocabulary,
    cfg: NoiseConfig,
    op_index: WeightedIndex<f64>,
    tables: Mutex<HashMap<String, Arc<AnchorTables>>>,
}

impl<'v> NoiseModel<'v> {
    pub fn new(vocab: &'v Vocabulary, cfg: NoiseConfig) -> Result<Self, NoiseError> {
        cfg.validate()?;
        if vocab.is_empty() {
            return Err(NoiseError::EmptyVocabulary);
        }
        let op_index = WeightedIndex::new(cfg.op_weights.as_array())
            .map_err(|_| NoiseError::BadWeights(cfg.op_weights))?;
        Ok(NoiseModel {
            vocab,
            cfg,
            op_index,
            tables: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    fn tables_for(&self, anchor: &str) -> Arc<AnchorTables> {
        if let Some(t) = self.tables.lock().expect("noise table lock").get(anchor) {
            return Arc::clone(t);
        }
        let weights: Vec<f64> = self
            .vocab
            .words()
            .iter()
            .map(|w| acoustic_similarity(w, anchor).max(MIN_SIMILARITY_WEIGHT))
            .collect();
        let any = WeightedIndex::new(&weights).expect("weights are positive");
        let other_weights: Vec<f64> = self
            .vocab
            .words()
            .iter()
            .zip(&weights)
            .map(|(w, &x)| if w == anchor { 0.0 } else { x })
            .collect();
        let other = WeightedIndex::new(&other_weights).ok();
        let tables = Arc::new(AnchorTables { any, other });
        self.tables
            .lock()
            .expect("noise table lock")
            .entry(anchor.to_owned())
            .or_insert(tables)
            .clone()
    }

    fn draw_word<R: Rng>(&self, anchor: &str, exclude_anchor: bool, rng: &mut R) -> String {
        let tables = self.tables_for(anchor);
        let index = match (&tables.other, exclude_anchor) {
            (Some(other), true) => other,
            _ => &tables.any,
        };
        self.vocab.words()[index.sample(rng)].clone()
    }

    /// Noises `tokens` with a generator seeded from the configured seed.
    pub fn apply<S: AsRef<str>>(&self, tokens: &[S]) -> Result<NoisedTokens, NoiseError> {
        self.apply_seeded(tokens, self.cfg.seed)
    }

    pub fn apply_seeded<S: AsRef<str>>(
        &self,
        tokens: &[S],
        seed: u64,
    ) -> Result<NoisedTokens, NoiseError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.apply_with_rng(tokens, &mut rng)
    }

    pub fn apply_with_rng<S: AsRef<str>, R: Rng>(
        &self,
        tokens: &[S],
        rng: &mut R,
    ) -> Result<NoisedTokens, NoiseError> {
        if tokens.is_empty() {
            return Err(NoiseError::NoTokens);
        }
        let tau = self.cfg.tau;
        let inverse_lengths: Vec<f64> = tokens
            .iter()
            .map(|t| 1.0 / t.as_ref().chars().count().max(1) as f64)
            .collect();
        let mean_inverse = inverse_lengths.iter().sum::<f64>() / tokens.len() as f64;

        let mut out = Vec::with_capacity(tokens.len() + 2);
        let mut ops = OpCounts::default();
        for (p, token) in tokens.iter().enumerate() {
            let token = token.as_ref();
            let length_factor = inverse_lengths[p] / mean_inverse;
            let selected = rng.random::<f64>();
            if selected >= (tau * length_factor.max(1.0)).min(1.0) {
                out.push(token.to_owned());
                continue;
            }
            let op = OPS[self.op_index.sample(rng)];
            let factor = match op {
                NoiseOp::Insert => 1.0,
                NoiseOp::Substitute | NoiseOp::Delete => length_factor,
            };
            if selected >= (tau * factor).min(1.0) {
                out.push(token.to_owned());
                continue;
            }
            match op {
                NoiseOp::Substitute => {
                    out.push(self.draw_word(token, true, rng));
                    ops.substitutions += 1;
                }
                NoiseOp::Insert => {
                    let anchor = if p == 0 {
                        token
                    } else {
                        tokens[p - 1].as_ref()
                    };
                    out.push(self.draw_word(anchor, false, rng));
                    out.push(token.to_owned());
                    ops.insertions += 1;
                }
                NoiseOp::Delete => ops.deletions += 1,
            }
        }
        if out.is_empty() {
            let keep = rng.random_range(0..tokens.len());
            out.push(tokens[keep].as_ref().to_owned());
            ops.deletions -= 1;
        }
        Ok(NoisedTokens { tokens: out, ops })
    }
}

/// One-shot form of [`NoiseModel::apply`].
pub fn inject_noise<S: AsRef<str>>(
    tokens: &[S],
    vocab: &Vocabulary,
    cfg: &NoiseConfig,
) -> Result<NoisedTokens, NoiseError> {
    NoiseModel::new(vocab, *cfg)?.apply(tokens)
}

/// Noises the tokens of every record of every series, in parallel. Each
/// record gets its own seed derived from the corpus seed, its utterance id
/// and its index, so output does not depend on scheduling. Targets are kept.
pub fn noise_series(
    model: &NoiseModel<'_>,
    series: &[IncrementalSeries],
) -> Result<(Vec<IncrementalSeries>, OpCounts), NoiseError> {
    let seed = model.config().seed;
    let noised: Vec<(IncrementalSeries, OpCounts)> = series
        .par_iter()
        .map(|s| {
            let mut ops = OpCounts::default();
            let records = s
                .records
                .iter()
                .enumerate()
                .map(|(index, r)| {
                    let key = format!("{}\u{1f}{index}", s.utterance_id);
                    let out = model.apply_seeded(&r.tokens, derive_seed(seed, &key))?;
                    ops += out.ops;
                    Ok(PartialRecord {
                        tokens: out.tokens,
                        target: r.target.clone(),
                        is_full: r.is_full,
                    })
                })
                .collect::<Result<Vec<_>, NoiseError>>()?;
            Ok((
                IncrementalSeries {
                    utterance_id: s.utterance_id.clone(),
                    records,
                },
                ops,
            ))
        })
        .collect::<Result<_, NoiseError>>()?;
    let mut total = OpCounts::default();
    let mut out = Vec::with_capacity(noised.len());
    for (s, ops) in noised {
        total += ops;
        out.push(s);
    }
    Ok((out, total))
}

/// Mixes a corpus seed with a record key into a per-record seed (FNV-1a over
/// the key, finished with a splitmix64 round).
pub fn derive_seed(seed: u64, key: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
