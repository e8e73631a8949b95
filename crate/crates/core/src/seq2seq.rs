//! Conversion between IOB2 annotations and flat target strings.
//!
//! A target string is the `#`-joined intents followed by every slot chunk as
//! its slot name and then its tokens:
//!
//! ```text
//! atis_flight fromloc new york toloc pittsburgh
//! ```
//!
//! Parsing goes the other way into a [`ClassSequence`] of scoring units. Any
//! token that is a known slot name opens a new parameter, so slot values that
//! coincide with slot names (ATIS has a slot called `or`) are split off as
//! value-less parameters. The flat format cannot tell the two apart.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{join_intents, split_intents, AnnotatedUtterance, SlotLexicon, Tag};

/// Slot name given to value tokens that appear before any slot name.
pub const DANGLING_SLOT: &str = "<dangling>";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetSequence(String);

impl TargetSequence {
    pub fn new(text: impl Into<String>) -> Self {
        TargetSequence(text.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn token_count(&self) -> usize {
        self.0.split_whitespace().count()
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for TargetSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A maximal run of tokens belonging to one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk<'a> {
    pub slot: &'a str,
    pub tokens: Vec<&'a str>,
}

/// Groups tagged tokens into chunks, dropping `O` tokens. An `I-x` that does
/// not continue an `x` chunk starts a new one; unparseable tags count as `O`.
pub fn chunks<'a, T: AsRef<str>, G: AsRef<str>>(tokens: &'a [T], tags: &'a [G]) -> Vec<Chunk<'a>> {
    let mut out: Vec<Chunk<'a>> = Vec::new();
    let mut open = false;
    for (token, tag) in tokens.iter().zip(tags) {
        match Tag::parse(tag.as_ref()).unwrap_or(Tag::Outside) {
            Tag::Outside => open = false,
            Tag::Begin(slot) => {
                out.push(Chunk {
                    slot,
                    tokens: vec![token.as_ref()],
                });
                open = true;
            }
            Tag::Inside(slot) => match out.last_mut() {
                Some(chunk) if open && chunk.slot == slot => chunk.tokens.push(token.as_ref()),
                _ => {
                    out.push(Chunk {
                        slot,
                        tokens: vec![token.as_ref()],
                    });
                    open = true;
                }
            },
        }
    }
    out
}

/// Builds a target from parallel token/tag slices and an intent list.
pub fn target_from_parts<T, G, I>(tokens: &[T], tags: &[G], intents: &[I]) -> TargetSequence
where
    T: AsRef<str>,
    G: AsRef<str>,
    I: AsRef<str>,
{
    let mut text = join_intents(intents);
    for chunk in chunks(tokens, tags) {
        text.push(' ');
        text.push_str(chunk.slot);
        for token in chunk.tokens {
            text.push(' ');
            text.push_str(token);
        }
    }
    TargetSequence(text)
}

pub fn iob_to_target(u: &AnnotatedUtterance) -> TargetSequence {
    target_from_parts(u.tokens(), u.tags(), u.intents())
}

/// One scoring unit: an intent or a slot parameter with its value tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    Intent(String),
    Param { slot: String, values: Vec<String> },
}

impl Class {
    pub fn param<S: Into<String>>(slot: &str, values: impl IntoIterator<Item = S>) -> Class {
        Class::Param {
            slot: slot.to_owned(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn intent(name: &str) -> Class {
        Class::Intent(name.to_owned())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassSequence {
    classes: Vec<Class>,
}

impl ClassSequence {
    pub fn new(classes: Vec<Class>) -> Self {
        ClassSequence { classes }
    }

    pub fn classes(&self) -> &[Class] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn intents(&self) -> Vec<&str> {
        self.classes
            .iter()
            .filter_map(|c| match c {
                Class::Intent(name) => Some(name.as_str()),
                Class::Param { .. } => None,
            })
            .collect()
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.classes.iter().filter_map(|c| match c {
            Class::Param { slot, values } => Some((slot.as_str(), values.as_slice())),
            Class::Intent(_) => None,
        })
    }
}

/// Intents encoded in the first token of a target string.
pub fn target_intents(text: &str) -> Vec<String> {
    text.split_whitespace()
        .next()
        .map(split_intents)
        .unwrap_or_default()
}

/// Parses a target string into classes. Total: every input yields a
/// sequence, the empty string an empty one.
pub fn parse_target(text: &str, lex: &SlotLexicon) -> ClassSequence {
    let mut tokens = text.split_whitespace();
    let mut classes: Vec<Class> = match tokens.next() {
        Some(first) => split_intents(first)
            .into_iter()
            .map(Class::Intent)
            .collect(),
        None => return ClassSequence::default(),
    };
    let mut current: Option<(String, Vec<String>)> = None;
    for token in tokens {
        if lex.contains(token) {
            if let Some((slot, values)) = current.take() {
                classes.push(Class::Param { slot, values });
            }
            current = Some((token.to_owned(), Vec::new()));
        } else {
            current
                .get_or_insert_with(|| (DANGLING_SLOT.to_owned(), Vec::new()))
                .1
                .push(token.to_owned());
        }
    }
    if let Some((slot, values)) = current {
        classes.push(Class::Param { slot, values });
    }
    ClassSequence { classes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_iob_tsv, ImportOptions};

    fn utt(line: &str) -> AnnotatedUtterance {
        parse_iob_tsv(line, ImportOptions::default())
            .unwrap()
            .remove(0)
    }

    const OR_EXAMPLE: &str = "atis_flight fromloc.city_name milwaukee toloc.city_name orlando depart_date.day_name wednesday depart_time.period_of_day evening or or depart_date.day_name thursday depart_time.period_of_day morning";

    #[test]
    fn chunked_query_conversion() {
        let u = utt("which flights go from new york to pittsburgh\tO O O O B-fromloc I-fromloc O B-toloc\tatis_flight");
        assert_eq!(
            iob_to_target(&u).as_str(),
            "atis_flight fromloc new york toloc pittsburgh"
        );
    }

    #[test]
    fn no_chunks_yields_intents_only() {
        assert_eq!(
            iob_to_target(&utt("what is ap\tO O O\tatis_abbreviation")).as_str(),
            "atis_abbreviation"
        );
        assert_eq!(
            iob_to_target(&utt("a b\tO O\tatis_airline#atis_flight_no")).as_str(),
            "atis_airline#atis_flight_no"
        );
    }

    #[test]
    fn adjacent_chunks_of_same_slot_stay_separate() {
        let u = utt("a b c\tB-x B-x I-x\tf");
        assert_eq!(iob_to_target(&u).as_str(), "f x a x b c");
    }

    #[test]
    fn lenient_chunking_of_stray_inside() {
        let tokens = ["a", "b", "c"];
        let tags = ["I-x", "O", "I-x"];
        let cs = chunks(&tokens, &tags);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].tokens, vec!["a"]);
    }

    #[test]
    fn parse_inverse_of_conversion() {
        let lex = SlotLexicon::new(["fromloc", "toloc"]);
        let parsed = parse_target("atis_flight fromloc new york toloc pittsburgh", &lex);
        assert_eq!(
            parsed.classes(),
            &[
                Class::intent("atis_flight"),
                Class::param("fromloc", ["new", "york"]),
                Class::param("toloc", ["pittsburgh"]),
            ]
        );
    }

    #[test]
    fn or_collision_gives_nine_classes() {
        let lex = SlotLexicon::new([
            "fromloc.city_name",
            "toloc.city_name",
            "depart_date.day_name",
            "depart_time.period_of_day",
            "or",
        ]);
        let parsed = parse_target(OR_EXAMPLE, &lex);
        assert_eq!(parsed.len(), 9);
        assert_eq!(parsed.classes()[5], Class::param::<String>("or", []));
        assert_eq!(parsed.classes()[6], Class::param::<String>("or", []));
    }

    #[test]
    fn multi_intent_and_degenerate_inputs() {
        let lex = SlotLexicon::new(["x"]);
        assert_eq!(
            parse_target("atis_airline#atis_flight_no", &lex).classes(),
            &[
                Class::intent("atis_airline"),
                Class::intent("atis_flight_no")
            ]
        );
        assert!(parse_target("", &lex).is_empty());
        assert!(parse_target("   ", &lex).is_empty());
        assert_eq!(
            parse_target("f a b x", &lex).classes(),
            &[
                Class::intent("f"),
                Class::param(DANGLING_SLOT, ["a", "b"]),
                Class::param::<String>("x", []),
            ]
        );
        assert_eq!(target_intents("a#b x y"), vec!["a", "b"]);
    }
}
