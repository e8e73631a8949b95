//! Order-aware class matching and micro-averaged scores.
//!
//! True positives between a reference and a hypothesis class sequence are the
//! number of in-order matches: a table filled with
//!
//! ```text
//! T[i][j] = max(T[i-1][j-1] + [h_i == r_j], T[i-1][j], T[i][j-1])
//! ```
//!
//! with zero first row and column. This is the longest common subsequence
//! length. Seeding the borders with `i` and `j`, as an edit distance would,
//! makes the count exceed `max(|r|, |h|)` under a max recurrence, so zero
//! borders are the only reading that yields a count of matches.

use std::collections::HashMap;
use std::hash::Hash;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::Serialize;
use thiserror::Error;

use crate::seq2seq::ClassSequence;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("intents accuracy of an empty corpus is undefined")]
    EmptyCorpus,
}

/// In-order match count between two sequences; symmetric in its arguments.
pub fn ordered_matches<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut previous = vec![0usize; reference.len() + 1];
    let mut current = vec![0usize; reference.len() + 1];
    for h in hypothesis {
        for (j, r) in reference.iter().enumerate() {
            current[j + 1] = if h == r {
                previous[j] + 1
            } else {
                previous[j + 1].max(current[j])
            };
        }
        std::mem::swap(&mut previous, &mut current);
    }
    previous[reference.len()]
}

pub fn true_positives(reference: &ClassSequence, hypothesis: &ClassSequence) -> usize {
    ordered_matches(reference.classes(), hypothesis.classes())
}

/// Order-ignoring match count: size of the multiset intersection.
pub fn unordered_matches<T: Eq + Hash>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for r in reference {
        *counts.entry(r).or_insert(0) += 1;
    }
    let mut matched = 0;
    for h in hypothesis {
        if let Some(c) = counts.get_mut(h) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    matched
}

/// Summed counts over a set of pairs. Summation is associative and
/// commutative, so corpus scores do not depend on pair order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MatchCounts {
    pub true_positives: usize,
    pub ref_len: usize,
    pub hyp_len: usize,
}

impl MatchCounts {
    pub fn of_pair(reference: &ClassSequence, hypothesis: &ClassSequence) -> MatchCounts {
        MatchCounts {
            true_positives: true_positives(reference, hypothesis),
            ref_len: reference.len(),
            hyp_len: hypothesis.len(),
        }
    }

    pub fn scores(&self) -> CorpusScores {
        let ratio = |num: usize, den: usize, other: usize| -> f64 {
            match (den, other) {
                (0, 0) => 1.0,
                (0, _) => 0.0,
                _ => num as f64 / den as f64,
            }
        };
        let precision = ratio(self.true_positives, self.hyp_len, self.ref_len);
        let recall = ratio(self.true_positives, self.ref_len, self.hyp_len);
        CorpusScores {
            counts: *self,
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
        }
    }
}

impl Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, rhs: MatchCounts) -> MatchCounts {
        MatchCounts {
            true_positives: self.true_positives + rhs.true_positives,
            ref_len: self.ref_len + rhs.ref_len,
            hyp_len: self.hyp_len + rhs.hyp_len,
        }
    }
}

impl AddAssign for MatchCounts {
    fn add_assign(&mut self, rhs: MatchCounts) {
        *self = *self + rhs;
    }
}

impl Sum for MatchCounts {
    fn sum<I: Iterator<Item = MatchCounts>>(iter: I) -> MatchCounts {
        iter.fold(MatchCounts::default(), Add::add)
    }
}

fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusScores {
    #[serde(flatten)]
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorePair {
    pub reference: ClassSequence,
    pub hypothesis: ClassSequence,
}

/// Micro-averaged precision, recall and F1 over in-order class matches.
pub fn co_mc_scores(pairs: &[ScorePair]) -> CorpusScores {
    pairs
        .iter()
        .map(|p| MatchCounts::of_pair(&p.reference, &p.hypothesis))
        .sum::<MatchCounts>()
        .scores()
}

/// F1 of a single pair counting matches without regard to order.
pub fn unordered_f1(reference: &ClassSequence, hypothesis: &ClassSequence) -> f64 {
    MatchCounts {
        true_positives: unordered_matches(reference.classes(), hypothesis.classes()),
        ref_len: reference.len(),
        hyp_len: hypothesis.len(),
    }
    .scores()
    .f1
}

/// True when both intent lists hold the same intents, ignoring order.
pub fn intents_match<S: AsRef<str>, T: AsRef<str>>(reference: &[S], hypothesis: &[T]) -> bool {
    let mut r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let mut h: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    r.sort_unstable();
    h.sort_unstable();
    r == h
}

/// Fraction of pairs whose intent multisets are equal.
pub fn intents_accuracy<S: AsRef<str>, T: AsRef<str>>(
    pairs: &[(Vec<S>, Vec<T>)],
) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let hits = pairs.iter().filter(|(r, h)| intents_match(r, h)).count();
    Ok(hits as f64 / pairs.len() as f64)
}
