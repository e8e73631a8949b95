//! Dataset construction and scoring for incremental intent classification
//! and slot filling.
//!
//! The crate converts IOB2-annotated corpora into flat target strings,
//! expands utterances into prefix datasets, adds recognizer-like noise, and
//! scores incremental hypotheses with an order-aware micro-averaged F1 and
//! intents accuracy under percentage-cut and confidence-stopping schemes.

pub mod adapter;
pub mod baseline;
pub mod corpus;
pub mod evaluation;
pub mod formats;
pub mod incremental;
pub mod metrics;
pub mod noise;
pub mod seq2seq;
pub mod stats;

pub use corpus::{parse_corpus, slot_lexicon, AnnotatedUtterance, ImportOptions, SlotLexicon};
pub use incremental::{generate_prefixes, IncrementalSeries, PartialRecord, SelectMode};
pub use seq2seq::{iob_to_target, parse_target, Class, ClassSequence, TargetSequence};
