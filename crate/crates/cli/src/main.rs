mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "forge",
    version,
    about = "Lebanese Arabic to English instruction data and evaluation"
)]
pub(crate) struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub(crate) struct GlobalArgs {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output file or directory.
    #[arg(long, short = 'o', global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "v1")]
    template_version: String,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub(crate) enum Command {
    /// Read a TSV or JSONL corpus and write canonical JSONL.
    Ingest(IngestArgs),
    /// Convert Arabizi text to Arabic script (stdin to stdout by default).
    Transliterate(TransliterateArgs),
    /// Render a corpus as MT, contrastive or grammar instructions.
    BuildInstructions(BuildInstructionsArgs),
    /// Sample rejected translations from a base model.
    GenRejected(GenRejectedArgs),
    /// Synthesize grammar-annotated examples from a grammar chapter.
    SynthGrammar(SynthGrammarArgs),
    /// Count tokens over Lebanese text files.
    BuildFreqMatrix(BuildFreqMatrixArgs),
    /// Choose demonstrations for query sentences.
    SelectDemos(SelectDemosArgs),
    /// Write the prompts an evaluation would send.
    BuildPrompts(BuildPromptsArgs),
    /// Write a training plan directory for one configuration.
    PlanCurriculum(PlanCurriculumArgs),
    /// Write a preference dataset of prompt, chosen and rejected.
    ExportCpo(ExportCpoArgs),
    /// Translate and score a test set.
    Evaluate(EvaluateArgs),
    /// Few-shot selection sweep over strategies and k.
    Ablate(AblateArgs),
    /// Aggregate evaluation runs into a results table.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct IngestArgs {
    /// tsv or jsonl; guessed from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
    #[arg(long, default_value = "OTHER")]
    origin: String,
    /// Drop repeated (source, target) pairs.
    #[arg(long)]
    dedup: bool,
    /// Check the canonical size of an evaluation set (flores_subset, lebeval).
    #[arg(long)]
    expect: Option<String>,
    /// Also write seeded slices, e.g. 1/2,1/2.
    #[arg(long)]
    split: Option<String>,
    input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct TransliterateArgs {
    /// Rule table JSON; the shipped v1 table by default.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct BuildInstructionsArgs {
    /// mt, contrastive or grammar.
    #[arg(long)]
    kind: String,
    #[arg(long)]
    corpus: PathBuf,
    /// Rejected translations JSONL, for contrastive records.
    #[arg(long)]
    rejected: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub(crate) struct ModelArgs {
    #[arg(long, default_value = "default")]
    model: String,
    #[arg(long, default_value_t = 256)]
    max_new_tokens: u32,
    /// Requests allowed in flight at once.
    #[arg(long, default_value_t = 4)]
    in_flight: usize,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct GenRejectedArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    /// Extra draws when a sample equals the gold translation.
    #[arg(long, default_value_t = 3)]
    resamples: u32,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct SynthGrammarArgs {
    #[arg(long)]
    chapter: PathBuf,
    #[arg(long)]
    chapter_index: u32,
    /// Examples to keep for the chapter.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct BuildFreqMatrixArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub(crate) struct SelectionArgs {
    /// Demonstration pool (corpus JSONL or TSV).
    #[arg(long)]
    pool: Option<PathBuf>,
    /// random, embedding or frequency.
    #[arg(long, default_value = "random")]
    strategy: String,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Rare-token threshold for frequency selection.
    #[arg(long)]
    threshold: Option<u64>,
    #[arg(long)]
    freq_matrix: Option<PathBuf>,
    /// Precomputed embeddings JSONL keyed by pair id, for pool and queries.
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long, default_value = "default")]
    embed_model: String,
    /// Rejected translations for pool pairs, for contrastive prompts.
    #[arg(long)]
    rejected: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct SelectDemosArgs {
    /// Query sentences (corpus JSONL or TSV).
    #[arg(long)]
    queries: PathBuf,
    #[command(flatten)]
    selection: SelectionArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub(crate) struct TestSetArgs {
    #[arg(long)]
    test_set: PathBuf,
    /// flores_subset, lebeval or custom.
    #[arg(long, default_value = "custom")]
    test_kind: String,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct BuildPromptsArgs {
    #[command(flatten)]
    test: TestSetArgs,
    /// zero_shot, few_shot or contrastive_few_shot.
    #[arg(long, default_value = "zero_shot")]
    mode: String,
    #[command(flatten)]
    selection: SelectionArgs,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct PlanCurriculumArgs {
    /// Instruct-MT, Instruct-Cont, Instruct-Grammar, CONT+MT or Grammar+CONT+MT.
    #[arg(long)]
    config: String,
    /// NN or LW.
    #[arg(long)]
    data: String,
    /// Translation corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Grammar corpus with rule hints.
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long)]
    rejected: Option<PathBuf>,
    #[arg(long)]
    lora_rank: Option<u32>,
    #[arg(long)]
    batch_size: Option<u32>,
    #[arg(long)]
    grad_accum: Option<u32>,
    #[arg(long)]
    epochs: Option<u32>,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct ExportCpoArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    rejected: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub(crate) struct ScoringArgs {
    /// Score with local chrF instead of the scoring endpoint.
    #[arg(long)]
    local_metric: bool,
    /// percent or unit: the scale the scoring endpoint reports.
    #[arg(long, default_value = "percent")]
    score_scale: String,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct EvaluateArgs {
    #[arg(long)]
    system: String,
    #[command(flatten)]
    test: TestSetArgs,
    #[arg(long, default_value = "zero_shot")]
    mode: String,
    #[command(flatten)]
    selection: SelectionArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct AblateArgs {
    #[arg(long)]
    system: String,
    #[command(flatten)]
    test: TestSetArgs,
    #[arg(long, value_delimiter = ',', default_value = "random,embedding,frequency")]
    strategies: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    ks: Vec<usize>,
    #[command(flatten)]
    selection: SelectionArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Debug, Args, Serialize)]
pub(crate) struct ReportArgs {
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// text or csv.
    #[arg(long, default_value = "text")]
    format: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (category, code) = failure::classify(&e);
            let message = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{category}]: {message}");
            ExitCode::from(code)
        }
    }
}
