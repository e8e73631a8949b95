use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "incnlu",
    version,
    about = "Build and score incremental NLU datasets"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CorpusInput {
    /// Annotated corpus, TSV or line-delimited JSON.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Keep token case instead of lowercasing on import.
    #[arg(long)]
    pub keep_case: bool,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct LexiconSource {
    /// Slot names, one per line.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Annotated corpus to collect slot names from.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReportOutput {
    /// Report destination; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Table,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Record of exactly the cut length (clean or human prefixes).
    Exact,
    /// First record at least as long as the cut (recognizer partials).
    AtLeast,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalFormat {
    /// Raw text, whitespace tokenized and counted.
    Text,
    /// `token<TAB>count` lines.
    Counts,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert an annotated corpus to parallel source/target files.
    Convert {
        #[command(flatten)]
        corpus: CorpusInput,
        /// Target sequences, one per line.
        #[arg(long)]
        targets: PathBuf,
        /// Space-joined source tokens, one utterance per line.
        #[arg(long)]
        sources: Option<PathBuf>,
        /// Slot names found in the corpus, one per line.
        #[arg(long)]
        lexicon_out: Option<PathBuf>,
    },
    /// Expand every utterance into its prefix series.
    GenIncremental {
        #[command(flatten)]
        corpus: CorpusInput,
        #[arg(long, short)]
        output: PathBuf,
        /// Emit only the full utterance of each series.
        #[arg(long)]
        full_only: bool,
    },
    /// Add substitutions, insertions and deletions to an incremental dataset.
    AddNoise {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Vocabulary, one word per line.
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 0.08)]
        tau: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 5.0)]
        sub_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        ins_weight: f64,
        #[arg(long, default_value_t = 1.0)]
        del_weight: f64,
    },
    /// Build the substitution/insertion vocabulary.
    BuildVocab {
        #[command(flatten)]
        corpus: CorpusInput,
        /// External token stream used to fill the vocabulary.
        #[arg(long)]
        external: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ExternalFormat::Text)]
        external_format: ExternalFormat,
        #[arg(long, default_value_t = 10_000)]
        size: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Give recognizer partials the targets of equally long human prefixes.
    AlignAsr {
        /// Recognizer partials: {utterance_id, tokens} per line, emission order.
        #[arg(long)]
        asr: PathBuf,
        /// Incremental dataset built from the human transcripts.
        #[arg(long)]
        human: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Train the count-based baseline model.
    TrainBaseline {
        #[command(flatten)]
        corpus: CorpusInput,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Write baseline hypotheses for every record of an incremental dataset.
    RunBaseline {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Write hypotheses from an external model speaking the line protocol.
    RunModel {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// Model command and its arguments.
        #[arg(last = true, required = true)]
        command: Vec<String>,
    },
    /// Answer line-protocol requests on stdin with the baseline model.
    ServeBaseline {
        #[arg(long)]
        model: PathBuf,
    },
    /// Score aligned reference and hypothesis target files.
    Score {
        #[arg(long)]
        refs: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        #[command(flatten)]
        lexicon: LexiconSource,
        #[command(flatten)]
        report: ReportOutput,
    },
    /// Score hypotheses on the first p% of each utterance's tokens.
    EvalPartial {
        /// Gold incremental dataset.
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        #[command(flatten)]
        lexicon: LexiconSource,
        #[arg(long, value_delimiter = ',', default_value = "100,75,50,25")]
        percents: Vec<u32>,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        mode: Mode,
        #[command(flatten)]
        report: ReportOutput,
    },
    /// Intents accuracy when stopping at the first confident partial.
    EvalConfidence {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        hyps: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.95,0.90,0.85,0.80")]
        thresholds: Vec<f64>,
        #[command(flatten)]
        report: ReportOutput,
    },
    /// Corpus sizes and intent distribution.
    Stats {
        /// One or more annotated corpora.
        #[arg(long, short, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        keep_case: bool,
        #[command(flatten)]
        report: ReportOutput,
    },
    /// Time a model on the longest utterance and the one with the longest target.
    BenchLatency {
        #[command(flatten)]
        corpus: CorpusInput,
        /// Baseline model; omit to benchmark the command after `--`.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Measurement duration in seconds.
        #[arg(long, default_value_t = 900.0)]
        duration: f64,
        /// Per-prefix budget in milliseconds; exceeding it is a failure.
        #[arg(long, default_value_t = 50.0)]
        budget_ms: f64,
        #[command(flatten)]
        report: ReportOutput,
        #[arg(last = true)]
        command: Vec<String>,
    },
}
