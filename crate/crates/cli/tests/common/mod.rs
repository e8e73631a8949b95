#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use incnlu_core::corpus::AnnotatedUtterance;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BIN: &str = env!("CARGO_BIN_EXE_incnlu");

const CITIES: &[&[&str]] = &[
    &["boston"],
    &["denver"],
    &["new", "york"],
    &["san", "francisco"],
    &["pittsburgh"],
    &["salt", "lake", "city"],
    &["dallas"],
    &["atlanta"],
];
const DAYS: &[&str] = &["monday", "tuesday", "wednesday", "thursday", "friday"];
const PERIODS: &[&str] = &["morning", "afternoon", "evening"];
const AIRLINES: &[&[&str]] = &[&["delta"], &["united"], &["american", "airlines"]];
const FILLER: &[&str] = &[
    "please", "i", "would", "like", "the", "a", "me", "show", "list", "all",
];

/// Intent label, its cue words, and whether it usually names a route.
const INTENTS: &[(&str, &[&str], bool)] = &[
    ("atis_flight", &["flights", "flight", "fly"], true),
    ("atis_airfare", &["fare", "fares", "cost"], true),
    (
        "atis_ground_service",
        &["ground", "transportation", "taxi"],
        false,
    ),
    ("atis_airline", &["airline", "airlines", "carrier"], true),
    (
        "atis_abbreviation",
        &["abbreviation", "mean", "code"],
        false,
    ),
];

fn push(tokens: &mut Vec<String>, tags: &mut Vec<String>, words: &[&str], slot: Option<&str>) {
    for (i, w) in words.iter().enumerate() {
        tokens.push((*w).to_owned());
        tags.push(match slot {
            None => "O".to_owned(),
            Some(s) if i == 0 => format!("B-{s}"),
            Some(s) => format!("I-{s}"),
        });
    }
}

fn utterance(rng: &mut ChaCha8Rng, id: String) -> AnnotatedUtterance {
    let (intent, cues, route) = *INTENTS.choose(rng).unwrap();
    let mut intents = vec![intent.to_owned()];
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    for _ in 0..rng.random_range(0..3) {
        push(&mut tokens, &mut tags, &[FILLER.choose(rng).unwrap()], None);
    }
    push(&mut tokens, &mut tags, &[cues.choose(rng).unwrap()], None);
    if intent == "atis_flight" && rng.random_bool(0.1) {
        intents.push("atis_airfare".to_owned());
        push(&mut tokens, &mut tags, &["and", "fares"], None);
    }
    if route || rng.random_bool(0.3) {
        push(&mut tokens, &mut tags, &["from"], None);
        push(
            &mut tokens,
            &mut tags,
            CITIES.choose(rng).unwrap(),
            Some("fromloc.city_name"),
        );
        push(&mut tokens, &mut tags, &["to"], None);
        push(
            &mut tokens,
            &mut tags,
            CITIES.choose(rng).unwrap(),
            Some("toloc.city_name"),
        );
    } else {
        push(&mut tokens, &mut tags, &["in"], None);
        push(
            &mut tokens,
            &mut tags,
            CITIES.choose(rng).unwrap(),
            Some("city_name"),
        );
    }
    if rng.random_bool(0.5) {
        push(&mut tokens, &mut tags, &["on"], None);
        push(
            &mut tokens,
            &mut tags,
            &[DAYS.choose(rng).unwrap()],
            Some("depart_date.day_name"),
        );
    }
    if rng.random_bool(0.4) {
        push(&mut tokens, &mut tags, &["in", "the"], None);
        push(
            &mut tokens,
            &mut tags,
            &[PERIODS.choose(rng).unwrap()],
            Some("depart_time.period_of_day"),
        );
    }
    if rng.random_bool(0.3) {
        push(&mut tokens, &mut tags, &["on"], None);
        push(
            &mut tokens,
            &mut tags,
            AIRLINES.choose(rng).unwrap(),
            Some("airline_name"),
        );
    }
    AnnotatedUtterance::new(id, tokens, tags, intents).expect("generated annotation is well formed")
}

/// Deterministic ATIS-like corpus.
pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<AnnotatedUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| utterance(&mut rng, format!("s{seed}-{i}")))
        .collect()
}

/// Corpus with at least `min_tokens` tokens in total.
pub fn corpus_with_tokens(min_tokens: usize, seed: u64) -> Vec<AnnotatedUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut total = 0;
    while total < min_tokens {
        let u = utterance(&mut rng, format!("t{}", out.len()));
        total += u.len();
        out.push(u);
    }
    out
}

/// A long multi-leg flight request of exactly `n` tokens.
pub fn long_utterance(n: usize) -> AnnotatedUtterance {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    push(&mut tokens, &mut tags, &["show", "me", "flights"], None);
    let mut leg = 0;
    while tokens.len() < n {
        let a = CITIES[leg % CITIES.len()];
        let b = CITIES[(leg + 3) % CITIES.len()];
        push(&mut tokens, &mut tags, &["from"], None);
        push(&mut tokens, &mut tags, a, Some("fromloc.city_name"));
        push(&mut tokens, &mut tags, &["to"], None);
        push(&mut tokens, &mut tags, b, Some("toloc.city_name"));
        push(&mut tokens, &mut tags, &["on"], None);
        push(
            &mut tokens,
            &mut tags,
            &[DAYS[leg % DAYS.len()]],
            Some("depart_date.day_name"),
        );
        push(&mut tokens, &mut tags, &["and"], None);
        leg += 1;
    }
    tokens.truncate(n);
    tags.truncate(n);
    AnnotatedUtterance::new("long", tokens, tags, vec!["atis_flight".to_owned()]).unwrap()
}

pub fn incnlu(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn incnlu_ok(dir: &Path, args: &[&str]) -> Output {
    let out = incnlu(dir, args);
    assert!(
        out.status.success(),
        "incnlu {args:?} failed with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}
