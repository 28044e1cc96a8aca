//! Demonstration selection for few-shot prompts: seeded random sampling,
//! embedding cosine similarity, and rare-word matching against a corpus
//! frequency matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_corpus, CorpusError, CorpusFormat, Origin, SentencePair};
use crate::genclient::EmbeddingVector;

/// A token is rare below this many corpus occurrences.
pub const DEFAULT_RARE_THRESHOLD: u64 = 5;
pub const TOKENIZER_VERSION: &str = "unicode-words-v1";

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("example pool is empty")]
    EmptyPool,
    #[error("example pool has no embedding vectors")]
    MissingVectors,
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("pool has {pairs} pairs but {vectors} vectors")]
    VectorCount { pairs: usize, vectors: usize },
    #[error("invalid selection strategy: {0}")]
    InvalidStrategy(String),
    #[error("invalid frequency matrix: {0}")]
    InvalidMatrix(String),
    #[error("no corpus files given")]
    NoInputs,
    #[error("{path}: not valid UTF-8 at byte {offset}")]
    Encoding { path: String, offset: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot decode frequency matrix: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    Embedding,
    Frequency,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Embedding => "embedding",
            StrategyKind::Frequency => "frequency",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(StrategyKind::Random),
            "embedding" => Ok(StrategyKind::Embedding),
            "frequency" => Ok(StrategyKind::Frequency),
            other => Err(format!("unknown selection strategy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionStrategy {
    pub kind: StrategyKind,
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u64>,
    pub seed: u64,
}

impl SelectionStrategy {
    pub fn new(kind: StrategyKind, k: usize, seed: u64) -> Self {
        let threshold = (kind == StrategyKind::Frequency).then_some(DEFAULT_RARE_THRESHOLD);
        SelectionStrategy {
            kind,
            k,
            threshold,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        match (self.kind, self.threshold) {
            (StrategyKind::Frequency, None) => Err(SelectError::InvalidStrategy(
                "frequency selection needs a threshold".into(),
            )),
            (_, Some(0)) => Err(SelectError::InvalidStrategy("threshold must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExamplePool {
    pub pairs: Vec<SentencePair>,
    pub vectors: Option<Vec<EmbeddingVector>>,
}

impl ExamplePool {
    pub fn new(pairs: Vec<SentencePair>) -> Self {
        ExamplePool { pairs, vectors: None }
    }

    pub fn with_vectors(pairs: Vec<SentencePair>, vectors: Vec<EmbeddingVector>) -> Result<Self, SelectError> {
        if vectors.len() != pairs.len() {
            return Err(SelectError::VectorCount {
                pairs: pairs.len(),
                vectors: vectors.len(),
            });
        }
        if let Some(first) = vectors.first() {
            if let Some(bad) = vectors.iter().find(|v| v.dim() != first.dim()) {
                return Err(SelectError::DimMismatch {
                    expected: first.dim(),
                    found: bad.dim(),
                });
            }
        }
        Ok(ExamplePool {
            pairs,
            vectors: Some(vectors),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Sub-pool of the pairs accepted by `keep`, vectors carried along.
    pub fn filtered(&self, keep: impl Fn(&SentencePair) -> bool) -> ExamplePool {
        let idx: Vec<usize> = (0..self.pairs.len()).filter(|&i| keep(&self.pairs[i])).collect();
        ExamplePool {
            pairs: idx.iter().map(|&i| self.pairs[i].clone()).collect(),
            vectors: self
                .vectors
                .as_ref()
                .map(|vs| idx.iter().map(|&i| vs[i].clone()).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub pairs: Vec<SentencePair>,
    /// Set when k was at least the pool size and the whole pool came back.
    pub clamped: bool,
}

impl Selection {
    pub fn ids(&self) -> Vec<&str> {
        self.pairs.iter().map(|p| p.id.as_str()).collect()
    }
}

fn random_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, n, k.min(n)).into_vec()
}

pub fn select_random(pool: &ExamplePool, k: usize, seed: u64) -> Result<Selection, SelectError> {
    if pool.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let clamped = k >= pool.len();
    if clamped && k > pool.len() {
        warn!("asked for {k} demonstrations from a pool of {}", pool.len());
    }
    Ok(Selection {
        pairs: random_indices(pool.len(), k, seed)
            .into_iter()
            .map(|i| pool.pairs[i].clone())
            .collect(),
        clamped,
    })
}

/// Cosine similarity in f64. A zero vector is similar to nothing.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// The k pool pairs most similar to `query`, most similar first.
pub fn select_by_embedding(pool: &ExamplePool, query: &EmbeddingVector, k: usize) -> Result<Selection, SelectError> {
    if pool.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    let vectors = pool.vectors.as_ref().ok_or(SelectError::MissingVectors)?;
    if vectors[0].dim() != query.dim() {
        return Err(SelectError::DimMismatch {
            expected: vectors[0].dim(),
            found: query.dim(),
        });
    }
    let mut ranked: Vec<(f64, usize)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (cosine(&v.values, &query.values), i))
        .collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(Selection {
        pairs: ranked.into_iter().take(k).map(|(_, i)| pool.pairs[i].clone()).collect(),
        clamped: k >= pool.len(),
    })
}

fn is_token_char(c: char) -> bool {
    // Arabic diacritics, dagger alif and tatweel stay inside words.
    c.is_alphanumeric() || matches!(c, '\u{064B}'..='\u{065F}' | '\u{0670}' | '\u{0640}')
}

/// Splits on whitespace and punctuation and lowercases. No stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    crate::normalize::normalize_text(text)
        .split(|c: char| !is_token_char(c))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyMatrix {
    pub tokenizer_version: String,
    pub total_tokens: u64,
    pub counts: BTreeMap<String, u64>,
}

impl FrequencyMatrix {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts = BTreeMap::new();
        let mut total = 0;
        for text in texts {
            for tok in tokenize(text) {
                *counts.entry(tok).or_insert(0) += 1;
                total += 1;
            }
        }
        FrequencyMatrix {
            tokenizer_version: TOKENIZER_VERSION.to_string(),
            total_tokens: total,
            counts,
        }
    }

    /// Occurrences of `token`; unseen tokens count 0.
    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), SelectError> {
        if self.tokenizer_version != TOKENIZER_VERSION {
            return Err(SelectError::InvalidMatrix(format!(
                "tokenizer `{}` differs from `{TOKENIZER_VERSION}`",
                self.tokenizer_version
            )));
        }
        if self.total_tokens == 0 {
            return Err(SelectError::InvalidMatrix("no tokens".into()));
        }
        if let Some((tok, _)) = self.counts.iter().find(|(_, &c)| c == 0) {
            return Err(SelectError::InvalidMatrix(format!("zero count for `{tok}`")));
        }
        let sum: u64 = self.counts.values().sum();
        if sum != self.total_tokens {
            return Err(SelectError::InvalidMatrix(format!(
                "counts sum to {sum}, total_tokens says {}",
                self.total_tokens
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SelectError> {
        let fm: FrequencyMatrix = serde_json::from_str(text).map_err(|e| SelectError::Decode(e.to_string()))?;
        fm.validate()?;
        Ok(fm)
    }

    pub fn load(path: &Path) -> Result<Self, SelectError> {
        let text = fs::read_to_string(path).map_err(|source| SelectError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), SelectError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| SelectError::Decode(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|source| SelectError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Counts tokens over plain-text files. `.jsonl` and `.tsv` files are read
/// as corpora and only their Lebanese side is counted.
pub fn build_frequency_matrix(paths: &[&Path]) -> Result<FrequencyMatrix, SelectError> {
    if paths.is_empty() {
        return Err(SelectError::NoInputs);
    }
    let mut texts = Vec::new();
    for path in paths {
        let bytes = fs::read(path).map_err(|source| SelectError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes).map_err(|e| SelectError::Encoding {
            path: path.display().to_string(),
            offset: e.utf8_error().valid_up_to(),
        })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("tsv") => {
                let format = CorpusFormat::from_path(path);
                let corpus = parse_corpus(&path.display().to_string(), &text, format, Origin::Other)?;
                texts.extend(corpus.pairs.into_iter().map(|p| p.source_leb));
            }
            _ => texts.push(text),
        }
    }
    let fm = FrequencyMatrix::from_texts(texts.iter().map(String::as_str));
    if fm.total_tokens == 0 {
        return Err(SelectError::InvalidMatrix("input files contain no tokens".into()));
    }
    Ok(fm)
}

/// Pool pairs sharing the most distinct rare tokens with `input` (ties by
/// pair id), topped up with seeded random picks from the rest.
pub fn select_by_frequency(
    pool: &ExamplePool,
    input: &str,
    fm: &FrequencyMatrix,
    threshold: u64,
    k: usize,
    seed: u64,
) -> Result<Selection, SelectError> {
    if pool.is_empty() {
        return Err(SelectError::EmptyPool);
    }
    if threshold == 0 {
        return Err(SelectError::InvalidStrategy("threshold must be at least 1".into()));
    }
    let rare: BTreeSet<String> = tokenize(input)
        .into_iter()
        .filter(|t| fm.count(t) < threshold)
        .collect();

    let mut ranked: Vec<(usize, usize)> = Vec::new();
    if !rare.is_empty() {
        for (i, pair) in pool.pairs.iter().enumerate() {
            let toks: BTreeSet<String> = tokenize(&pair.source_leb).into_iter().collect();
            let hits = rare.iter().filter(|t| toks.contains(*t)).count();
            if hits > 0 {
                ranked.push((hits, i));
            }
        }
    }
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| pool.pairs[a.1].id.cmp(&pool.pairs[b.1].id)));
    let chosen: Vec<usize> = ranked.into_iter().take(k).map(|(_, i)| i).collect();

    let mut pairs: Vec<SentencePair> = chosen.iter().map(|&i| pool.pairs[i].clone()).collect();
    if pairs.len() < k {
        let rest: Vec<usize> = (0..pool.len()).filter(|i| !chosen.contains(i)).collect();
        let fill = random_indices(rest.len(), k - pairs.len(), seed);
        pairs.extend(fill.into_iter().map(|j| pool.pairs[rest[j]].clone()));
    }
    Ok(Selection {
        pairs,
        clamped: k >= pool.len(),
    })
}

/// Runs the selector named by `strategy`. Embedding selection needs
/// `query_vector`; frequency selection needs `matrix`.
pub fn select_demos(
    strategy: &SelectionStrategy,
    pool: &ExamplePool,
    query_text: &str,
    query_vector: Option<&EmbeddingVector>,
    matrix: Option<&FrequencyMatrix>,
    seed: u64,
) -> Result<Selection, SelectError> {
    strategy.validate()?;
    match strategy.kind {
        StrategyKind::Random => select_random(pool, strategy.k, seed),
        StrategyKind::Embedding => {
            let q = query_vector.ok_or(SelectError::MissingVectors)?;
            select_by_embedding(pool, q, strategy.k)
        }
        StrategyKind::Frequency => {
            let fm = matrix.ok_or_else(|| SelectError::InvalidMatrix("no frequency matrix loaded".into()))?;
            let threshold = strategy.threshold.unwrap_or(DEFAULT_RARE_THRESHOLD);
            select_by_frequency(pool, query_text, fm, threshold, strategy.k, seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(n: usize) -> ExamplePool {
        ExamplePool::new(
            (0..n)
                .map(|i| {
                    SentencePair::new(
                        format!("LW-{i:06}"),
                        &format!("جملة {i}"),
                        &format!("sentence {i}"),
                        Origin::Lw,
                        None,
                    )
                    .unwrap()
                })
                .collect(),
        )
    }

    fn vecs(v: &[&[f32]]) -> Vec<EmbeddingVector> {
        v.iter().map(|x| EmbeddingVector::new(x.to_vec()).unwrap()).collect()
    }

    #[test]
    fn random_is_seeded() {
        let p = pool(10);
        let a = select_random(&p, 3, 7).unwrap();
        let b = select_random(&p, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pairs.len(), 3);
        assert!(!a.clamped);
    }

    #[test]
    fn random_clamps() {
        let s = select_random(&pool(2), 3, 1).unwrap();
        assert_eq!(s.pairs.len(), 2);
        assert!(s.clamped);
        assert!(matches!(select_random(&pool(0), 3, 1), Err(SelectError::EmptyPool)));
    }

    #[test]
    fn random_distinct() {
        let s = select_random(&pool(1000), 3, 99).unwrap();
        let ids: BTreeSet<_> = s.ids().into_iter().collect();
        assert_eq!(ids.len(), 3);
    }

    #[test]
    fn embedding_identical_first_and_ties() {
        let p = ExamplePool::with_vectors(
            pool(4).pairs,
            vecs(&[&[0.0, 1.0], &[1.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]]),
        )
        .unwrap();
        let q = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        let s = select_by_embedding(&p, &q, 3).unwrap();
        assert_eq!(s.ids(), ["LW-000001", "LW-000002", "LW-000003"]);
    }

    #[test]
    fn embedding_errors() {
        let q = EmbeddingVector::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            select_by_embedding(&pool(3), &q, 1),
            Err(SelectError::MissingVectors)
        ));
        let p = ExamplePool::with_vectors(pool(1).pairs, vecs(&[&[1.0, 0.0, 0.0]])).unwrap();
        assert!(matches!(
            select_by_embedding(&p, &q, 1),
            Err(SelectError::DimMismatch { .. })
        ));
        assert!(ExamplePool::with_vectors(pool(2).pairs, vecs(&[&[1.0]])).is_err());
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize("Kifak, ya 3amme?"), ["kifak", "ya", "3amme"]);
        assert_eq!(tokenize("شو، عم تعمل؟"), ["شو", "عم", "تعمل"]);
        assert_eq!(tokenize("مَرْحَبا"), ["مَرْحَبا"]);
    }

    #[test]
    fn hand_counted_matrix() {
        let fm = FrequencyMatrix::from_texts(["a a b"]);
        assert_eq!(fm.counts, BTreeMap::from([("a".into(), 2), ("b".into(), 1)]));
        assert_eq!(fm.total_tokens, 3);
        fm.validate().unwrap();
    }

    #[test]
    fn matrix_json_validated() {
        assert!(FrequencyMatrix::from_json(
            r#"{"tokenizer_version":"unicode-words-v1","total_tokens":4,"counts":{"a":2,"b":1}}"#
        )
        .is_err());
        assert!(
            FrequencyMatrix::from_json(r#"{"tokenizer_version":"other","total_tokens":1,"counts":{"a":1}}"#).is_err()
        );
    }

    #[test]
    fn empty_path_list() {
        assert!(matches!(build_frequency_matrix(&[]), Err(SelectError::NoInputs)));
    }

    #[test]
    fn frequency_falls_back_to_random() {
        let p = pool(10);
        let fm = FrequencyMatrix::from_texts(["جملة جملة جملة جملة جملة جملة 1 1 1 1 1 1"]);
        let f = select_by_frequency(&p, "جملة 1", &fm, 5, 3, 11).unwrap();
        assert_eq!(f, select_random(&p, 3, 11).unwrap());
    }

    #[test]
    fn strategy_validation() {
        let mut s = SelectionStrategy::new(StrategyKind::Frequency, 3, 0);
        assert_eq!(s.threshold, Some(DEFAULT_RARE_THRESHOLD));
        s.threshold = None;
        assert!(s.validate().is_err());
        assert!(SelectionStrategy::new(StrategyKind::Random, 3, 0).validate().is_ok());
    }
}
