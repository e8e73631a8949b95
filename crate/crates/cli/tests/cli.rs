mod common;

use std::fs;
use std::path::Path;

use common::{incnlu, incnlu_ok, synthetic_corpus, BIN};
use incnlu_core::corpus::write_iob_tsv;

const CORPUS: &str = "which flights go from new york to pittsburgh\tO O O O B-fromloc I-fromloc O B-toloc\tatis_flight\tq1\n\
show fares from boston\tO O O B-fromloc\tatis_airfare\tq2\n\
flights and fares to denver\tO O O O B-toloc\tatis_flight#atis_airfare\tq3\n";

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.tsv"), CORPUS).unwrap();
    incnlu_ok(
        dir.path(),
        &["gen-incremental", "-i", "c.tsv", "-o", "inc.jsonl"],
    );
    incnlu_ok(
        dir.path(),
        &["train-baseline", "-i", "c.tsv", "-o", "model.txt"],
    );
    dir
}

fn code(dir: &Path, args: &[&str]) -> Option<i32> {
    incnlu(dir, args).status.code()
}

fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn help_and_usage_errors() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(d, &["--help"]), Some(0));
    assert_eq!(code(d, &["frobnicate"]), Some(1));
    assert_eq!(
        code(d, &["score", "--refs", "a", "--hyps", "b"]),
        Some(1),
        "lexicon source is required"
    );
    assert_eq!(
        code(
            d,
            &[
                "eval-partial",
                "--gold",
                "inc.jsonl",
                "--hyps",
                "inc.jsonl",
                "--corpus",
                "c.tsv",
                "--percents",
                "0"
            ]
        ),
        Some(1)
    );
    assert_eq!(
        code(
            d,
            &[
                "add-noise",
                "-i",
                "inc.jsonl",
                "-o",
                "n.jsonl",
                "--vocab",
                "v.txt",
                "--seed",
                "1",
                "--tau",
                "-1"
            ]
        ),
        Some(1)
    );
}

#[test]
fn data_errors() {
    let dir = setup();
    let d = dir.path();
    assert_eq!(code(d, &["stats", "-i", "missing.tsv"]), Some(2));
    fs::write(d.join("bad.tsv"), "a b\tO\tatis_flight\n").unwrap();
    let out = incnlu(d, &["convert", "-i", "bad.tsv", "--targets", "t.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    assert_eq!(
        code(
            d,
            &[
                "gen-incremental",
                "-i",
                "c.tsv",
                "-o",
                "no/such/dir/out.jsonl"
            ]
        ),
        Some(2)
    );
    assert!(!d.join("t.txt").exists(), "failed commands leave no output");
}

#[test]
fn convert_writes_targets_and_lexicon() {
    let dir = setup();
    let d = dir.path();
    incnlu_ok(
        d,
        &[
            "convert",
            "-i",
            "c.tsv",
            "--targets",
            "t.txt",
            "--sources",
            "s.txt",
            "--lexicon-out",
            "lex.txt",
        ],
    );
    assert_eq!(
        fs::read_to_string(d.join("t.txt")).unwrap(),
        "atis_flight fromloc new york toloc pittsburgh\natis_airfare fromloc boston\natis_flight#atis_airfare toloc denver\n"
    );
    assert_eq!(
        fs::read_to_string(d.join("lex.txt")).unwrap(),
        "fromloc\ntoloc\n"
    );
    assert_eq!(lines(&d.join("s.txt")), 3);
}

#[test]
fn served_baseline_matches_in_process_baseline() {
    let dir = setup();
    let d = dir.path();
    incnlu_ok(
        d,
        &[
            "run-baseline",
            "--model",
            "model.txt",
            "-i",
            "inc.jsonl",
            "-o",
            "direct.jsonl",
        ],
    );
    incnlu_ok(
        d,
        &[
            "run-model",
            "-i",
            "inc.jsonl",
            "-o",
            "served.jsonl",
            "--",
            BIN,
            "serve-baseline",
            "--model",
            "model.txt",
        ],
    );
    assert_eq!(
        fs::read(d.join("direct.jsonl")).unwrap(),
        fs::read(d.join("served.jsonl")).unwrap()
    );
    assert_eq!(lines(&d.join("direct.jsonl")), 8 + 4 + 5);
}

#[test]
fn echo_model_speaks_the_protocol() {
    let dir = setup();
    let d = dir.path();
    let script =
        r#"while read line; do echo '{"target":"atis_flight","intent_confidence":0.5}'; done"#;
    incnlu_ok(
        d,
        &[
            "run-model",
            "-i",
            "inc.jsonl",
            "-o",
            "echo.jsonl",
            "--",
            "sh",
            "-c",
            script,
        ],
    );
    let text = fs::read_to_string(d.join("echo.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 17);
    assert!(text
        .lines()
        .next()
        .unwrap()
        .contains(r#""utterance_id":"q1","prefix_len":1"#));
    let report = incnlu_ok(
        d,
        &[
            "eval-confidence",
            "--gold",
            "inc.jsonl",
            "--hyps",
            "echo.jsonl",
            "--thresholds",
            "0.5,0.9",
        ],
    );
    let rows: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(rows[1]["mean_token_usage"], 100.0);
}

#[test]
fn out_of_order_responses_are_protocol_errors() {
    let dir = setup();
    let d = dir.path();
    let script = r#"while read line; do echo '{"utterance_id":"other","target":"atis_flight","intent_confidence":0.5}'; done"#;
    let out = incnlu(
        d,
        &[
            "run-model",
            "-i",
            "inc.jsonl",
            "-o",
            "h.jsonl",
            "--",
            "sh",
            "-c",
            script,
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(!d.join("h.jsonl").exists());
    assert!(d.join("h.jsonl.partial").exists());
}

#[test]
fn crashing_and_garbled_models_are_protocol_errors() {
    let dir = setup();
    let d = dir.path();
    let crash = r#"read line; echo '{"target":"atis_flight","intent_confidence":0.5}'; exit 4"#;
    let out = incnlu(
        d,
        &[
            "run-model",
            "-i",
            "inc.jsonl",
            "-o",
            "h.jsonl",
            "--",
            "sh",
            "-c",
            crash,
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(
        lines(&d.join("h.jsonl.partial")),
        1,
        "hypotheses before the crash are kept"
    );

    let garbled = r#"read line; echo '{"target":"atis_flight","intent_confidence":7}'"#;
    assert_eq!(
        code(
            d,
            &[
                "run-model",
                "-i",
                "inc.jsonl",
                "-o",
                "g.jsonl",
                "--",
                "sh",
                "-c",
                garbled
            ]
        ),
        Some(3)
    );
    assert_eq!(
        code(
            d,
            &[
                "run-model",
                "-i",
                "inc.jsonl",
                "-o",
                "x.jsonl",
                "--",
                "/no/such/model"
            ]
        ),
        Some(3)
    );
}

#[test]
fn score_identity_is_perfect() {
    let dir = setup();
    let d = dir.path();
    incnlu_ok(d, &["convert", "-i", "c.tsv", "--targets", "t.txt"]);
    let out = incnlu_ok(
        d,
        &[
            "score", "--refs", "t.txt", "--hyps", "t.txt", "--corpus", "c.tsv",
        ],
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["f1"], 100.0);
    assert_eq!(v["intents_accuracy"], 100.0);
    assert_eq!(v["tp"], 8);
}

#[test]
fn stats_reports_intent_shares() {
    let dir = setup();
    let d = dir.path();
    let out = incnlu_ok(d, &["stats", "-i", "c.tsv"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["stats"]["utterances"], 3);
    assert_eq!(v[0]["stats"]["intents"][0]["percent"], 33.33);
    let table = incnlu_ok(d, &["stats", "-i", "c.tsv", "--format", "table"]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("33.33  atis_flight#atis_airfare"));
}

#[test]
fn noise_is_reproducible_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.tsv"), write_iob_tsv(&synthetic_corpus(50, 3))).unwrap();
    incnlu_ok(d, &["gen-incremental", "-i", "c.tsv", "-o", "inc.jsonl"]);
    incnlu_ok(d, &["build-vocab", "-i", "c.tsv", "-o", "v.txt"]);
    for out in ["a.jsonl", "b.jsonl"] {
        incnlu_ok(
            d,
            &[
                "add-noise",
                "-i",
                "inc.jsonl",
                "-o",
                out,
                "--vocab",
                "v.txt",
                "--seed",
                "9",
            ],
        );
    }
    incnlu_ok(
        d,
        &[
            "add-noise",
            "-i",
            "inc.jsonl",
            "-o",
            "c.jsonl",
            "--vocab",
            "v.txt",
            "--seed",
            "10",
        ],
    );
    incnlu_ok(
        d,
        &[
            "add-noise",
            "-i",
            "inc.jsonl",
            "-o",
            "z.jsonl",
            "--vocab",
            "v.txt",
            "--seed",
            "9",
            "--tau",
            "0",
        ],
    );
    let read = |n: &str| fs::read(d.join(n)).unwrap();
    assert_eq!(read("a.jsonl"), read("b.jsonl"));
    assert_ne!(read("a.jsonl"), read("c.jsonl"));
    assert_eq!(read("z.jsonl"), read("inc.jsonl"));
}

#[test]
fn asr_partials_take_human_targets() {
    let dir = setup();
    let d = dir.path();
    fs::write(
        d.join("asr.jsonl"),
        "{\"utterance_id\":\"q2\",\"tokens\":[\"show\"]}\n\
         {\"utterance_id\":\"q2\",\"tokens\":[]}\n\
         {\"utterance_id\":\"q2\",\"tokens\":[\"show\",\"fairs\",\"from\",\"boston\",\"please\"]}\n",
    )
    .unwrap();
    let out = incnlu_ok(
        d,
        &[
            "align-asr",
            "--asr",
            "asr.jsonl",
            "--human",
            "inc.jsonl",
            "-o",
            "aligned.jsonl",
        ],
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped 1"));
    let text = fs::read_to_string(d.join("aligned.jsonl")).unwrap();
    let rows: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["target"], "atis_airfare");
    assert_eq!(rows[1]["target"], "atis_airfare fromloc boston");
    assert_eq!(rows[1]["is_full"], true);
}

#[test]
fn bench_latency_reports_both_stress_utterances() {
    let dir = setup();
    let d = dir.path();
    let out = incnlu_ok(
        d,
        &[
            "bench-latency",
            "-i",
            "c.tsv",
            "--model",
            "model.txt",
            "--duration",
            "0.1",
        ],
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["utterances"][0]["utterance_id"], "q1");
    assert_eq!(v["within_budget"], true);
    assert_eq!(
        code(
            d,
            &[
                "bench-latency",
                "-i",
                "c.tsv",
                "--model",
                "model.txt",
                "--duration",
                "0.1",
                "--budget-ms",
                "0"
            ]
        ),
        Some(2)
    );
}
