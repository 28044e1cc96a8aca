//! Clients for the three remote capabilities the pipeline leans on
//! (chat completion, sentence embedding, translation-quality scoring) and
//! the generation workflows built on top of them.
//!
//! Each capability is a trait so the pipeline can run against HTTP
//! endpoints, precomputed sidecar files, the local chrF metric, or an
//! in-process fake in tests.

mod http;
mod pool;
mod synth;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SentencePair;
use crate::instruct::{check_preference, Template};
use crate::metric::compute_chrf;
use crate::prompt::build_zero_shot;

pub use http::{
    Endpoints, HttpChatClient, HttpEmbeddingClient, HttpScoringClient, RetryPolicy, RetryStats, ScoreScale,
    ENV_API_BASE, ENV_API_KEY, ENV_EMBED_BASE, ENV_SCORER_BASE,
};
pub use pool::{map_bounded, InFlightLimiter, InFlightPermit, DEFAULT_IN_FLIGHT};
pub use synth::{
    chunk_chapter, parse_synthesis_response, synthesis_prompt, synthesize_grammar_examples, SynthesisOutcome,
    SynthesisTriple,
};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("server error {status}: {body}")]
    Server { status: u16, body: String },
    #[error("request rejected with status {status}: {body}")]
    BadRequest { status: u16, body: String },
    #[error("cannot decode response: {0}")]
    Decode(String),
    #[error("completion is empty")]
    EmptyCompletion,
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("embedding has non-finite entries")]
    NonFiniteEmbedding,
    #[error("no vector for `{0}`")]
    MissingVector(String),
    #[error("score {score} out of range [0, 100]")]
    ScoreOutOfRange { score: f64 },
    #[error("expected {expected} results, got {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("all samples for pair {0} equal the gold translation")]
    AllSamplesDegenerate(String),
    #[error("no parsable examples in any response ({discarded} malformed)")]
    NoParsableExamples { discarded: usize },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("missing configuration: {0}")]
    ConfigMissing(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl GenError {
    pub(crate) fn is_retryable(&self) -> bool {
        matches!(
            self,
            GenError::EndpointUnreachable(_) | GenError::RateLimited { .. } | GenError::Server { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_id: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Temperature used when sampling rejected translations.
pub const REJECTED_TEMPERATURE: f64 = 0.7;
/// Extra draws allowed when a sample equals the gold translation.
pub const REJECTED_RESAMPLES: u32 = 3;

impl GenerationConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        GenerationConfig {
            model_id: model_id.into(),
            temperature: 0.0,
            max_new_tokens: 256,
            stop_sequences: Vec::new(),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GenError::InvalidConfig(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_new_tokens == 0 {
            return Err(GenError::InvalidConfig("max_new_tokens must be at least 1".into()));
        }
        if self.model_id.is_empty() {
            return Err(GenError::InvalidConfig("empty model id".into()));
        }
        Ok(())
    }

    pub fn with_stop(mut self, stop: &str) -> Self {
        if !self.stop_sequences.iter().any(|s| s == stop) {
            self.stop_sequences.push(stop.to_string());
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, GenError> {
        if values.is_empty() {
            return Err(GenError::DimMismatch { expected: 1, found: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GenError::NonFiniteEmbedding);
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub pair_id: String,
    pub hypothesis: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreItem {
    pub pair_id: String,
    pub source: String,
    pub hypothesis: String,
    pub reference: Option<String>,
}

/// Input for an embedding request. HTTP providers embed `text`; sidecar
/// files are keyed by `id`.
#[derive(Debug, Clone, Copy)]
pub struct EmbedInput<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

pub trait ChatBackend: Send + Sync {
    /// Raw text of the first completion.
    fn complete(&self, prompt: &str, cfg: &GenerationConfig) -> Result<String, GenError>;
}

pub trait EmbeddingBackend: Send + Sync {
    fn embed(&self, items: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, GenError>;
}

pub trait ScoringBackend: Send + Sync {
    /// Scores on the [0, 100] scale, one per item, in order.
    fn score(&self, items: &[ScoreItem]) -> Result<Vec<f64>, GenError>;
}

fn strip_stops<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let cut = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..cut]
}

/// Generates one completion, cut at the earliest stop sequence and trimmed.
pub fn generate_translation(chat: &dyn ChatBackend, prompt: &str, cfg: &GenerationConfig) -> Result<String, GenError> {
    if prompt.trim().is_empty() {
        return Err(GenError::InvalidConfig("empty prompt".into()));
    }
    cfg.validate()?;
    let raw = chat.complete(prompt, cfg)?;
    let text = strip_stops(&raw, &cfg.stop_sequences).trim();
    if text.is_empty() {
        return Err(GenError::EmptyCompletion);
    }
    Ok(text.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedLine {
    pub id: String,
    pub rejected: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RejectedBatch {
    /// (pair id, rejected translation) in input order.
    pub rejected: Vec<(String, String)>,
    /// Pairs for which every draw was degenerate.
    pub dropped: Vec<String>,
}

impl RejectedBatch {
    pub fn to_map(&self) -> HashMap<String, String> {
        self.rejected.iter().cloned().collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), GenError> {
        let mut out = String::new();
        for (id, rejected) in &self.rejected {
            let line = RejectedLine {
                id: id.clone(),
                rejected: rejected.clone(),
            };
            out.push_str(&serde_json::to_string(&line).map_err(|e| GenError::Decode(e.to_string()))?);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// Reads a `{"id", "rejected"}` JSONL file.
pub fn parse_rejected_jsonl(text: &str) -> Result<HashMap<String, String>, GenError> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RejectedLine =
            serde_json::from_str(line).map_err(|e| GenError::Decode(format!("line {}: {e}", i + 1)))?;
        map.insert(rec.id, rec.rejected);
    }
    Ok(map)
}

pub fn load_rejected(path: &Path) -> Result<HashMap<String, String>, GenError> {
    parse_rejected_jsonl(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone)]
pub struct RejectedOptions {
    pub resamples: u32,
    pub in_flight: usize,
}

impl Default for RejectedOptions {
    fn default() -> Self {
        RejectedOptions {
            resamples: REJECTED_RESAMPLES,
            in_flight: DEFAULT_IN_FLIGHT,
        }
    }
}

fn sample_rejected(
    chat: &dyn ChatBackend,
    pair: &SentencePair,
    cfg: &GenerationConfig,
    template: &Template,
    resamples: u32,
) -> Result<Option<String>, GenError> {
    let prompt = build_zero_shot(&pair.source_leb, template);
    for attempt in 0..=resamples {
        let mut draw_cfg = cfg.clone();
        draw_cfg.seed = cfg.seed.map(|s| s.wrapping_add(u64::from(attempt)));
        let candidate = match generate_translation(chat, &prompt, &draw_cfg) {
            Ok(c) => c,
            Err(GenError::EmptyCompletion) => continue,
            Err(e) => return Err(e),
        };
        if check_preference(&pair.id, &pair.target_en, &candidate, template).is_ok() {
            return Ok(Some(candidate));
        }
    }
    Ok(None)
}

/// Samples one suboptimal translation per pair from the base model.
pub fn generate_rejected(
    chat: &dyn ChatBackend,
    pairs: &[SentencePair],
    cfg: &GenerationConfig,
    template: &Template,
    opts: &RejectedOptions,
) -> Result<RejectedBatch, GenError> {
    if cfg.temperature <= 0.0 {
        return Err(GenError::InvalidConfig(
            "rejected sampling needs a temperature above 0".into(),
        ));
    }
    cfg.validate()?;
    let results = map_bounded(pairs, opts.in_flight, |_, pair| {
        sample_rejected(chat, pair, cfg, template, opts.resamples)
    });
    let mut batch = RejectedBatch::default();
    for (pair, result) in pairs.iter().zip(results) {
        match result? {
            Some(r) => batch.rejected.push((pair.id.clone(), r)),
            None => {
                warn!("{}", GenError::AllSamplesDegenerate(pair.id.clone()));
                batch.dropped.push(pair.id.clone());
            }
        }
    }
    Ok(batch)
}

/// Embeds `items`, checking every vector has the same dimension.
pub fn embed_batch(
    embedder: &dyn EmbeddingBackend,
    items: &[EmbedInput<'_>],
) -> Result<Vec<EmbeddingVector>, GenError> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = embedder.embed(items)?;
    if vectors.len() != items.len() {
        return Err(GenError::CountMismatch {
            expected: items.len(),
            found: vectors.len(),
        });
    }
    let dim = vectors[0].dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(GenError::DimMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    Ok(vectors)
}

pub fn score_translations(scorer: &dyn ScoringBackend, items: &[ScoreItem]) -> Result<Vec<ScoredSentence>, GenError> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let scores = scorer.score(items)?;
    if scores.len() != items.len() {
        return Err(GenError::CountMismatch {
            expected: items.len(),
            found: scores.len(),
        });
    }
    items
        .iter()
        .zip(scores)
        .map(|(item, score)| {
            if !score.is_finite() || !(0.0..=100.0).contains(&score) {
                return Err(GenError::ScoreOutOfRange { score });
            }
            Ok(ScoredSentence {
                pair_id: item.pair_id.clone(),
                hypothesis: item.hypothesis.clone(),
                score,
            })
        })
        .collect()
}

/// Reference-based chrF scorer that needs no network.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalChrfScorer;

impl ScoringBackend for LocalChrfScorer {
    fn score(&self, items: &[ScoreItem]) -> Result<Vec<f64>, GenError> {
        items
            .iter()
            .map(|item| {
                let reference = item
                    .reference
                    .as_deref()
                    .ok_or_else(|| GenError::ConfigMissing(format!("chrF needs a reference for {}", item.pair_id)))?;
                Ok(compute_chrf(&item.hypothesis, reference))
            })
            .collect()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct SidecarLine {
    id: String,
    vector: Vec<f32>,
}

/// Precomputed vectors keyed by pair id, read from `{"id", "vector"}` JSONL.
#[derive(Debug, Clone, Default)]
pub struct SidecarEmbeddings {
    vectors: HashMap<String, EmbeddingVector>,
    dim: Option<usize>,
}

impl SidecarEmbeddings {
    pub fn parse(text: &str) -> Result<Self, GenError> {
        let mut out = SidecarEmbeddings::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: SidecarLine =
                serde_json::from_str(line).map_err(|e| GenError::Decode(format!("sidecar line {}: {e}", i + 1)))?;
            out.insert(rec.id, EmbeddingVector::new(rec.vector)?)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, GenError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn insert(&mut self, id: String, v: EmbeddingVector) -> Result<(), GenError> {
        match self.dim {
            Some(d) if d != v.dim() => {
                return Err(GenError::DimMismatch {
                    expected: d,
                    found: v.dim(),
                })
            }
            None => self.dim = Some(v.dim()),
            _ => {}
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&EmbeddingVector> {
        self.vectors.get(id)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn write_jsonl(entries: &[(String, EmbeddingVector)], path: &Path) -> Result<(), GenError> {
        let mut out = String::new();
        for (id, v) in entries {
            let line = SidecarLine {
                id: id.clone(),
                vector: v.values.clone(),
            };
            out.push_str(&serde_json::to_string(&line).map_err(|e| GenError::Decode(e.to_string()))?);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }
}

impl EmbeddingBackend for SidecarEmbeddings {
    fn embed(&self, items: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, GenError> {
        items
            .iter()
            .map(|item| {
                self.vectors
                    .get(item.id)
                    .cloned()
                    .ok_or_else(|| GenError::MissingVector(item.id.to_string()))
            })
            .collect()
    }
}
