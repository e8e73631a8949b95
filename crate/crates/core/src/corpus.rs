//! Annotated utterances, IOB2 tags and the two on-disk corpus formats.
//!
//! A corpus line in TSV form carries three or four tab-separated fields:
//!
//! ```text
//! which flights go from new york to pittsburgh<TAB>O O O O B-fromloc I-fromloc O B-toloc<TAB>atis_flight[<TAB>id]
//! ```
//!
//! The line-delimited JSON form holds one object per line with the fields
//! `id`, `tokens`, `tags` and `intents`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator between multiple intents of one utterance.
pub const INTENT_SEPARATOR: char = '#';

/// A single IOB2 tag borrowed from its textual form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> Tag<'a> {
    pub fn parse(raw: &'a str) -> Option<Tag<'a>> {
        if raw == "O" {
            return Some(Tag::Outside);
        }
        let (kind, slot) = raw.split_at_checked(2)?;
        if slot.is_empty() || slot.chars().any(char::is_whitespace) {
            return None;
        }
        match kind {
            "B-" => Some(Tag::Begin(slot)),
            "I-" => Some(Tag::Inside(slot)),
            _ => None,
        }
    }

    pub fn slot(&self) -> Option<&'a str> {
        match *self {
            Tag::Outside => None,
            Tag::Begin(s) | Tag::Inside(s) => Some(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnnotationError {
    #[error("{tokens} tokens vs {tags} tags")]
    LengthMismatch { tokens: usize, tags: usize },
    #[error("utterance has no tokens")]
    NoTokens,
    #[error("empty or whitespace-bearing token at position {0}")]
    BadToken(usize),
    #[error("malformed tag {tag:?} at position {position}")]
    BadTag { position: usize, tag: String },
    #[error("tag {tag:?} at position {position} does not continue a chunk of the same slot")]
    BadTransition { position: usize, tag: String },
    #[error("utterance has no intents")]
    NoIntents,
    #[error("invalid intent {0:?}")]
    BadIntent(String),
}

/// Checks that `tags` is a well-formed IOB2 sequence.
pub fn validate_tags<S: AsRef<str>>(tags: &[S]) -> Result<(), AnnotationError> {
    let mut previous = Tag::Outside;
    for (position, raw) in tags.iter().enumerate() {
        let raw = raw.as_ref();
        let tag = Tag::parse(raw).ok_or_else(|| AnnotationError::BadTag {
            position,
            tag: raw.to_owned(),
        })?;
        if let Tag::Inside(slot) = tag {
            if previous.slot() != Some(slot) {
                return Err(AnnotationError::BadTransition {
                    position,
                    tag: raw.to_owned(),
                });
            }
        }
        previous = tag;
    }
    Ok(())
}

fn validate_intent(intent: &str) -> Result<(), AnnotationError> {
    if intent.is_empty()
        || intent.contains(INTENT_SEPARATOR)
        || intent.chars().any(char::is_whitespace)
    {
        return Err(AnnotationError::BadIntent(intent.to_owned()));
    }
    Ok(())
}

/// Tokens with slot tags and intents. Immutable once constructed; every
/// instance satisfies the IOB2 and intent invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnnotatedUtterance {
    id: String,
    tokens: Vec<String>,
    tags: Vec<String>,
    intents: Vec<String>,
}

impl AnnotatedUtterance {
    pub fn new(
        id: impl Into<String>,
        tokens: Vec<String>,
        tags: Vec<String>,
        intents: Vec<String>,
    ) -> Result<Self, AnnotationError> {
        if tokens.is_empty() {
            return Err(AnnotationError::NoTokens);
        }
        if tokens.len() != tags.len() {
            return Err(AnnotationError::LengthMismatch {
                tokens: tokens.len(),
                tags: tags.len(),
            });
        }
        if let Some(position) = tokens
            .iter()
            .position(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(AnnotationError::BadToken(position));
        }
        validate_tags(&tags)?;
        if intents.is_empty() {
            return Err(AnnotationError::NoIntents);
        }
        for intent in &intents {
            validate_intent(intent)?;
        }
        Ok(AnnotatedUtterance {
            id: id.into(),
            tokens,
            tags,
            intents,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn intents(&self) -> &[String] {
        &self.intents
    }

    /// Intents joined by `#` in their stored order.
    pub fn intent_label(&self) -> String {
        join_intents(&self.intents)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn join_intents<S: AsRef<str>>(intents: &[S]) -> String {
    let mut out = String::new();
    for (i, intent) in intents.iter().enumerate() {
        if i > 0 {
            out.push(INTENT_SEPARATOR);
        }
        out.push_str(intent.as_ref());
    }
    out
}

/// Splits a `#`-joined label, dropping empty pieces.
pub fn split_intents(label: &str) -> Vec<String> {
    label
        .split(INTENT_SEPARATOR)
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImportOptions {
    pub lowercase: bool,
}

impl Default for ImportOptions {
    fn default() -> Self {
        ImportOptions { lowercase: true }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {source}")]
    Annotation {
        line: usize,
        #[source]
        source: AnnotationError,
    },
    #[error("line {line}: expected 3 or 4 tab-separated fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: empty token field")]
    EmptyTokens { line: usize },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl CorpusError {
    /// 1-based line number the error refers to.
    pub fn line(&self) -> usize {
        match self {
            CorpusError::Annotation { line, .. }
            | CorpusError::FieldCount { line, .. }
            | CorpusError::EmptyTokens { line }
            | CorpusError::Json { line, .. } => *line,
        }
    }
}

fn apply_case(tokens: Vec<String>, opts: ImportOptions) -> Vec<String> {
    if opts.lowercase {
        tokens.into_iter().map(|t| t.to_lowercase()).collect()
    } else {
        tokens
    }
}

fn nonblank_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Parses the three/four column TSV corpus format. Ids default to the
/// 0-based line index when no fourth field is present.
pub fn parse_iob_tsv(
    text: &str,
    opts: ImportOptions,
) -> Result<Vec<AnnotatedUtterance>, CorpusError> {
    let mut records = Vec::new();
    for (index, line) in nonblank_lines(text) {
        let lineno = index + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(CorpusError::FieldCount {
                line: lineno,
                found: fields.len(),
            });
        }
        let tokens: Vec<String> = fields[0].split_whitespace().map(str::to_owned).collect();
        if tokens.is_empty() {
            return Err(CorpusError::EmptyTokens { line: lineno });
        }
        let tags = fields[1].split_whitespace().map(str::to_owned).collect();
        let intents = fields[2]
            .trim()
            .split(INTENT_SEPARATOR)
            .map(str::to_owned)
            .collect();
        let id = match fields.get(3) {
            Some(id) => id.trim().to_owned(),
            None => index.to_string(),
        };
        let record = AnnotatedUtterance::new(id, apply_case(tokens, opts), tags, intents).map_err(
            |source| CorpusError::Annotation {
                line: lineno,
                source,
            },
        )?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Deserialize)]
struct JsonRecord {
    id: Option<String>,
    tokens: Vec<String>,
    tags: Vec<String>,
    intents: Vec<String>,
}

/// Parses line-delimited JSON records.
pub fn parse_jsonl(
    text: &str,
    opts: ImportOptions,
) -> Result<Vec<AnnotatedUtterance>, CorpusError> {
    let mut records = Vec::new();
    for (index, line) in nonblank_lines(text) {
        let lineno = index + 1;
        let raw: JsonRecord = serde_json::from_str(line).map_err(|source| CorpusError::Json {
            line: lineno,
            source,
        })?;
        if raw.tokens.is_empty() {
            return Err(CorpusError::EmptyTokens { line: lineno });
        }
        let id = raw.id.unwrap_or_else(|| index.to_string());
        let record =
            AnnotatedUtterance::new(id, apply_case(raw.tokens, opts), raw.tags, raw.intents)
                .map_err(|source| CorpusError::Annotation {
                    line: lineno,
                    source,
                })?;
        records.push(record);
    }
    Ok(records)
}

/// Detects the format from the first nonblank line: JSON objects start with `{`.
pub fn parse_corpus(
    text: &str,
    opts: ImportOptions,
) -> Result<Vec<AnnotatedUtterance>, CorpusError> {
    match nonblank_lines(text).next() {
        Some((_, line)) if line.trim_start().starts_with('{') => parse_jsonl(text, opts),
        _ => parse_iob_tsv(text, opts),
    }
}

/// Writes records in the four-column TSV form, one line per record.
pub fn write_iob_tsv(records: &[AnnotatedUtterance]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.tokens.join(" "));
        out.push('\t');
        out.push_str(&r.tags.join(" "));
        out.push('\t');
        out.push_str(&r.intent_label());
        out.push('\t');
        out.push_str(&r.id);
        out.push('\n');
    }
    out
}

pub fn write_jsonl(records: &[AnnotatedUtterance]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("utterance serializes"));
        out.push('\n');
    }
    out
}

/// The set of slot names appearing in a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotLexicon {
    slots: BTreeSet<String>,
}

impl SlotLexicon {
    pub fn new<I, S>(slots: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SlotLexicon {
            slots: slots.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, slot: &str) -> bool {
        self.slots.contains(slot)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(String::as_str)
    }

    pub fn insert(&mut self, slot: impl Into<String>) {
        self.slots.insert(slot.into());
    }

    pub fn union(&self, other: &SlotLexicon) -> SlotLexicon {
        SlotLexicon {
            slots: self.slots.union(&other.slots).cloned().collect(),
        }
    }

    /// One slot name per line, sorted.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for s in &self.slots {
            out.push_str(s);
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> SlotLexicon {
        SlotLexicon::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }
}

impl fmt::Display for SlotLexicon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, s) in self.slots.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{s}")?;
        }
        write!(f, "}}")
    }
}

pub fn slot_lexicon(records: &[AnnotatedUtterance]) -> SlotLexicon {
    SlotLexicon::new(
        records
            .iter()
            .flat_map(|r| r.tags.iter())
            .filter_map(|t| Tag::parse(t).and_then(|t| t.slot()))
            .map(str::to_owned),
    )
}
