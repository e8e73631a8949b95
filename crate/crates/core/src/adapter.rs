//! Model adapters, the child-process line protocol and the latency harness.
//!
//! A child model reads one request per line on stdin,
//!
//! ```text
//! {"utterance_id":"u1","prefix_len":2,"tokens":["flights","to"]}
//! ```
//!
//! and answers each with one line on stdout, in request order:
//!
//! ```text
//! {"target":"atis_flight","intent_confidence":0.97}
//! ```
//!
//! A response may echo `utterance_id` and `prefix_len`; when it does they
//! must match the request.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::BaselineModel;
use crate::evaluation::Hypothesis;
use crate::formats::HypothesisLine;
use crate::incremental::IncrementalSeries;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("i/o error talking to model: {0}")]
    Io(#[from] io::Error),
    #[error("response {index}: malformed line {line:?}: {reason}")]
    Malformed {
        index: usize,
        line: String,
        reason: String,
    },
    #[error(
        "response {index}: expected ({expected_id}, {expected_len}), got ({got_id}, {got_len})"
    )]
    OutOfOrder {
        index: usize,
        expected_id: String,
        expected_len: usize,
        got_id: String,
        got_len: usize,
    },
    #[error("model process ended before answering request {index} ({status})")]
    Crashed { index: usize, status: String },
    #[error("model process exited with {0}")]
    Exit(String),
}

impl AdapterError {
    /// True for errors caused by the child violating the protocol or dying.
    pub fn is_protocol(&self) -> bool {
        !matches!(self, AdapterError::Io(_))
    }
}

/// Anything that turns a token prefix into a hypothesis.
pub trait ModelAdapter {
    fn predict(
        &mut self,
        utterance_id: &str,
        tokens: &[String],
    ) -> Result<Hypothesis, AdapterError>;

    /// Releases the model; child processes are waited for here.
    fn finish(&mut self) -> Result<(), AdapterError> {
        Ok(())
    }
}

pub struct BaselineAdapter<'m> {
    model: &'m BaselineModel,
}

impl<'m> BaselineAdapter<'m> {
    pub fn new(model: &'m BaselineModel) -> Self {
        BaselineAdapter { model }
    }
}

impl ModelAdapter for BaselineAdapter<'_> {
    fn predict(
        &mut self,
        _utterance_id: &str,
        tokens: &[String],
    ) -> Result<Hypothesis, AdapterError> {
        Ok(self.model.predict(tokens))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRequest {
    pub utterance_id: String,
    pub prefix_len: usize,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResponse {
    pub target: String,
    pub intent_confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_len: Option<usize>,
}

/// Parses and checks one response line against its request.
pub fn parse_response(
    index: usize,
    line: &str,
    request: &ProtocolRequest,
) -> Result<Hypothesis, AdapterError> {
    let malformed = |reason: String| AdapterError::Malformed {
        index,
        line: line.to_owned(),
        reason,
    };
    let response: ProtocolResponse =
        serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if !(0.0..=1.0).contains(&response.intent_confidence) {
        return Err(malformed(format!(
            "intent_confidence {} outside [0, 1]",
            response.intent_confidence
        )));
    }
    let got_id = response
        .utterance_id
        .as_deref()
        .unwrap_or(&request.utterance_id);
    let got_len = response.prefix_len.unwrap_or(request.prefix_len);
    if got_id != request.utterance_id || got_len != request.prefix_len {
        return Err(AdapterError::OutOfOrder {
            index,
            expected_id: request.utterance_id.clone(),
            expected_len: request.prefix_len,
            got_id: got_id.to_owned(),
            got_len,
        });
    }
    Ok(Hypothesis {
        target_text: response.target,
        intent_confidence: response.intent_confidence,
    })
}

fn describe(status: Option<ExitStatus>) -> String {
    match status {
        Some(s) => s.to_string(),
        None => "unknown status".to_owned(),
    }
}

/// A model running as a child process that speaks the line protocol.
pub struct ChildProcessAdapter {
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    sent: usize,
    line: String,
}

impl ChildProcessAdapter {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self, AdapterError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ChildProcessAdapter {
            child,
            stdin,
            stdout,
            sent: 0,
            line: String::new(),
        })
    }

    fn crashed(&mut self, index: usize) -> AdapterError {
        self.stdin.take();
        let status = self.child.wait().ok();
        AdapterError::Crashed {
            index,
            status: describe(status),
        }
    }
}

impl ModelAdapter for ChildProcessAdapter {
    fn predict(
        &mut self,
        utterance_id: &str,
        tokens: &[String],
    ) -> Result<Hypothesis, AdapterError> {
        let index = self.sent;
        self.sent += 1;
        let request = ProtocolRequest {
            utterance_id: utterance_id.to_owned(),
            prefix_len: tokens.len(),
            tokens: tokens.to_vec(),
        };
        let mut payload = serde_json::to_string(&request).expect("request serializes");
        payload.push('\n');
        let Some(stdin) = self.stdin.as_mut() else {
            return Err(self.crashed(index));
        };
        if stdin
            .write_all(payload.as_bytes())
            .and_then(|_| stdin.flush())
            .is_err()
        {
            return Err(self.crashed(index));
        }
        self.line.clear();
        if self.stdout.read_line(&mut self.line)? == 0 {
            return Err(self.crashed(index));
        }
        let line = self.line.trim_end_matches(['\n', '\r']).to_owned();
        parse_response(index, &line, &request)
    }

    fn finish(&mut self) -> Result<(), AdapterError> {
        self.stdin.take();
        let status = self.child.wait()?;
        if status.success() {
            Ok(())
        } else {
            Err(AdapterError::Exit(status.to_string()))
        }
    }
}

impl Drop for ChildProcessAdapter {
    fn drop(&mut self) {
        self.stdin.take();
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}

/// Answers protocol requests from `input` with `model` until end of input.
pub fn serve<R: BufRead, W: Write>(
    model: &mut dyn ModelAdapter,
    input: R,
    mut output: W,
) -> Result<usize, AdapterError> {
    let mut answered = 0;
    for (index, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: ProtocolRequest =
            serde_json::from_str(&line).map_err(|e| AdapterError::Malformed {
                index,
                line: line.clone(),
                reason: e.to_string(),
            })?;
        let h = model.predict(&request.utterance_id, &request.tokens)?;
        let response = ProtocolResponse {
            target: h.target_text,
            intent_confidence: h.intent_confidence,
            utterance_id: None,
            prefix_len: None,
        };
        serde_json::to_writer(&mut output, &response).map_err(io::Error::from)?;
        output.write_all(b"\n")?;
        output.flush()?;
        answered += 1;
    }
    Ok(answered)
}

/// Feeds every record of every series to `model` in order and writes one
/// hypothesis line per record to `sink`, flushing after each. Returns the
/// number of hypotheses written.
pub fn run_model<W: Write>(
    model: &mut dyn ModelAdapter,
    series: &[IncrementalSeries],
    mut sink: W,
) -> Result<usize, AdapterError> {
    let mut written = 0;
    for s in series {
        for record in &s.records {
            let h = model.predict(&s.utterance_id, &record.tokens)?;
            let line = HypothesisLine {
                utterance_id: s.utterance_id.clone(),
                prefix_len: record.len(),
                target: h.target_text,
                intent_confidence: h.intent_confidence,
            };
            serde_json::to_writer(&mut sink, &line).map_err(io::Error::from)?;
            sink.write_all(b"\n")?;
            sink.flush()?;
            written += 1;
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtteranceLatency {
    pub utterance_id: String,
    pub tokens: usize,
    /// Complete passes over the utterance's prefix series.
    pub passes: usize,
    pub prefix_max_ms: f64,
    pub prefix_mean_ms: f64,
    pub prefix_p99_ms: f64,
    /// Slowest complete pass, the figure the measurement protocol reports.
    pub pass_max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatencyReport {
    pub utterances: Vec<UtteranceLatency>,
    pub measured_seconds: f64,
    pub threads: usize,
}

impl LatencyReport {
    pub fn max_prefix_ms(&self) -> f64 {
        self.utterances
            .iter()
            .map(|u| u.prefix_max_ms)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Error)]
#[error("latency run aborted: {source}")]
pub struct BenchError {
    pub partial: LatencyReport,
    #[source]
    pub source: AdapterError,
}

#[derive(Default)]
struct Samples {
    prefix_ms: Vec<f64>,
    pass_ms: Vec<f64>,
}

fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn summarize(
    utterances: &[(String, Vec<String>)],
    samples: &[Samples],
    started: Instant,
) -> LatencyReport {
    let rows = utterances
        .iter()
        .zip(samples)
        .map(|((id, tokens), s)| {
            let mut sorted = s.prefix_ms.clone();
            sorted.sort_by(f64::total_cmp);
            let mean = if sorted.is_empty() {
                0.0
            } else {
                sorted.iter().sum::<f64>() / sorted.len() as f64
            };
            UtteranceLatency {
                utterance_id: id.clone(),
                tokens: tokens.len(),
                passes: s.pass_ms.len(),
                prefix_max_ms: sorted.last().copied().unwrap_or(0.0),
                prefix_mean_ms: mean,
                prefix_p99_ms: nearest_rank(&sorted, 0.99),
                pass_max_ms: s.pass_ms.iter().copied().fold(0.0, f64::max),
            }
        })
        .collect();
    LatencyReport {
        utterances: rows,
        measured_seconds: started.elapsed().as_secs_f64(),
        threads: 1,
    }
}

/// Processes every utterance's full prefix series repeatedly, on the calling
/// thread, until `duration` has elapsed (at least one pass).
pub fn bench_latency(
    model: &mut dyn ModelAdapter,
    utterances: &[(String, Vec<String>)],
    duration: Duration,
) -> Result<LatencyReport, BenchError> {
    let started = Instant::now();
    let mut samples: Vec<Samples> = utterances.iter().map(|_| Samples::default()).collect();
    loop {
        for ((id, tokens), s) in utterances.iter().zip(samples.iter_mut()) {
            let pass_start = Instant::now();
            for i in 1..=tokens.len() {
                let t = Instant::now();
                if let Err(source) = model.predict(id, &tokens[..i]) {
                    return Err(BenchError {
                        partial: summarize(utterances, &samples, started),
                        source,
                    });
                }
                s.prefix_ms.push(t.elapsed().as_secs_f64() * 1e3);
            }
            s.pass_ms.push(pass_start.elapsed().as_secs_f64() * 1e3);
        }
        if started.elapsed() >= duration {
            break;
        }
    }
    Ok(summarize(utterances, &samples, started))
}
