//! Parallel corpus ingestion, deduplication and splitting.
//!
//! Every corpus family (the non-native MADAR/OpenSubtitles data, the podcast
//! derived LW pairs, the synthesized grammar set and the evaluation sets) is
//! read into the same [`Corpus`] shape. Text is normalized at load time so
//! every downstream consumer sees NFC text with collapsed whitespace.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::CheckedAdd;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::normalize::normalize_text;

/// Highest chapter number in the grammar book the grammar set was synthesized from.
pub const MAX_GRAMMAR_CHAPTER: u32 = 32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("input contains no records")]
    EmptyFile,
    #[error("input is not valid UTF-8 (first bad byte at offset {offset})")]
    Encoding { offset: usize },
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("invalid split fractions: {0}")]
    InvalidFractions(String),
    #[error("{which} test set expects {expected} pairs, found {found}")]
    SizeMismatch {
        which: TestSetKind,
        expected: usize,
        found: usize,
    },
    #[error("invalid grammar example: {0}")]
    InvalidGrammarExample(String),
    #[error("unknown {what} `{value}`")]
    UnknownName { what: &'static str, value: String },
}

impl CorpusError {
    fn malformed(line: usize, reason: impl Into<String>) -> Self {
        CorpusError::MalformedRecord {
            line,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Origin {
    Madar,
    Os,
    Lw,
    Lgid,
    Lebeval,
    Other,
}

impl Origin {
    pub const ALL: [Origin; 6] = [
        Origin::Madar,
        Origin::Os,
        Origin::Lw,
        Origin::Lgid,
        Origin::Lebeval,
        Origin::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Madar => "MADAR",
            Origin::Os => "OS",
            Origin::Lw => "LW",
            Origin::Lgid => "LGID",
            Origin::Lebeval => "LEBEVAL",
            Origin::Other => "OTHER",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Origin::ALL
            .into_iter()
            .find(|o| o.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| CorpusError::UnknownName {
                what: "origin",
                value: s.to_string(),
            })
    }
}

/// One aligned Lebanese/English sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub source_leb: String,
    pub target_en: String,
    pub origin: Origin,
    pub hint: Option<String>,
}

impl SentencePair {
    /// Builds a pair with normalized text, checking the per-pair invariants.
    pub fn new(
        id: impl Into<String>,
        source_leb: &str,
        target_en: &str,
        origin: Origin,
        hint: Option<&str>,
    ) -> Result<Self, String> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err("empty id".into());
        }
        let source_leb = normalize_text(source_leb);
        let target_en = normalize_text(target_en);
        if source_leb.is_empty() {
            return Err("empty source sentence".into());
        }
        if target_en.is_empty() {
            return Err("empty target sentence".into());
        }
        let hint = hint.map(normalize_text).filter(|h| !h.is_empty());
        if origin == Origin::Lgid && hint.is_none() {
            return Err("LGID pairs require a grammar hint".into());
        }
        Ok(SentencePair {
            id,
            source_leb,
            target_en,
            origin,
            hint,
        })
    }

    fn dedup_key(&self) -> (String, String) {
        (normalize_text(&self.source_leb), normalize_text(&self.target_en))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub pairs: Vec<SentencePair>,
    pub metadata: BTreeMap<String, String>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, pairs: Vec<SentencePair>) -> Self {
        Corpus {
            name: name.into(),
            pairs,
            metadata: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Writes the corpus in the canonical JSONL schema.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for pair in &self.pairs {
            serde_json::to_writer(&mut out, pair)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<(), CorpusError> {
        let file = fs::File::create(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_jsonl(io::BufWriter::new(file))
            .map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })
    }
}

/// A synthesized example annotated with the grammar rule it illustrates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarExample {
    pub pair: SentencePair,
    pub rule_title: String,
    pub rule_text: String,
    pub chapter_index: u32,
}

impl GrammarExample {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.rule_text.trim().is_empty() {
            return Err(CorpusError::InvalidGrammarExample("empty rule text".into()));
        }
        if self.chapter_index == 0 || self.chapter_index > MAX_GRAMMAR_CHAPTER {
            return Err(CorpusError::InvalidGrammarExample(format!(
                "chapter index {} outside 1..={MAX_GRAMMAR_CHAPTER}",
                self.chapter_index
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusFormat {
    #[serde(rename = "tsv_pair")]
    TsvPair,
    #[serde(rename = "jsonl")]
    Jsonl,
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" | "tsv_pair" => Ok(CorpusFormat::TsvPair),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(CorpusError::UnknownName {
                what: "corpus format",
                value: other.to_string(),
            }),
        }
    }
}

impl CorpusFormat {
    /// `.tsv` files are read as two-column TSV, everything else as JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => CorpusFormat::TsvPair,
            _ => CorpusFormat::Jsonl,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlRecord {
    id: Option<String>,
    source_leb: String,
    target_en: String,
    origin: Option<Origin>,
    hint: Option<String>,
}

fn assigned_id(origin: Origin, line: usize) -> String {
    format!("{}-{:06}", origin.as_str(), line)
}

/// Parses corpus text already in memory. Lines are numbered from 1 and blank
/// lines are skipped without consuming an id.
pub fn parse_corpus(name: &str, text: &str, format: CorpusFormat, origin: Origin) -> Result<Corpus, CorpusError> {
    let mut pairs = Vec::new();
    let mut seen_ids = HashSet::new();
    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        let mut line = raw.strip_suffix('\r').unwrap_or(raw);
        if idx == 0 {
            line = line.strip_prefix('\u{feff}').unwrap_or(line);
        }
        if line.trim().is_empty() {
            continue;
        }
        let pair = match format {
            CorpusFormat::TsvPair => parse_tsv_line(line, line_no, origin)?,
            CorpusFormat::Jsonl => parse_jsonl_line(line, line_no, origin)?,
        };
        if !seen_ids.insert(pair.id.clone()) {
            return Err(CorpusError::malformed(line_no, format!("duplicate id `{}`", pair.id)));
        }
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(CorpusError::EmptyFile);
    }
    let mut corpus = Corpus::new(name, pairs);
    corpus.metadata.insert("format".into(), format_name(format).into());
    corpus.metadata.insert("origin".into(), origin.as_str().into());
    Ok(corpus)
}

fn format_name(format: CorpusFormat) -> &'static str {
    match format {
        CorpusFormat::TsvPair => "tsv_pair",
        CorpusFormat::Jsonl => "jsonl",
    }
}

fn parse_tsv_line(line: &str, line_no: usize, origin: Origin) -> Result<SentencePair, CorpusError> {
    let mut cols = line.split('\t');
    let (Some(source), Some(target), None) = (cols.next(), cols.next(), cols.next()) else {
        let n = line.split('\t').count();
        return Err(CorpusError::malformed(
            line_no,
            format!("expected 2 tab-separated columns, found {n}"),
        ));
    };
    SentencePair::new(assigned_id(origin, line_no), source, target, origin, None)
        .map_err(|reason| CorpusError::malformed(line_no, reason))
}

fn parse_jsonl_line(line: &str, line_no: usize, origin: Origin) -> Result<SentencePair, CorpusError> {
    let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| CorpusError::malformed(line_no, e.to_string()))?;
    let origin = rec.origin.unwrap_or(origin);
    let id = rec.id.unwrap_or_else(|| assigned_id(origin, line_no));
    SentencePair::new(id, &rec.source_leb, &rec.target_en, origin, rec.hint.as_deref())
        .map_err(|reason| CorpusError::malformed(line_no, reason))
}

fn read_utf8(path: &Path) -> Result<(String, String), CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let digest = hex_digest(&bytes);
    let text = String::from_utf8(bytes).map_err(|e| CorpusError::Encoding {
        offset: e.utf8_error().valid_up_to(),
    })?;
    Ok((text, digest))
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("corpus")
        .to_string()
}

pub fn load_corpus(path: &Path, format: CorpusFormat, origin: Origin) -> Result<Corpus, CorpusError> {
    let (text, digest) = read_utf8(path)?;
    let mut corpus = parse_corpus(&file_stem(path), &text, format, origin)?;
    corpus.metadata.insert("sha256".into(), digest);
    corpus.metadata.insert("source_path".into(), path.display().to_string());
    Ok(corpus)
}

/// Keeps the first occurrence of every normalized (source, target) pair.
pub fn dedup(corpus: &Corpus) -> Corpus {
    let mut seen = HashSet::new();
    let pairs: Vec<SentencePair> = corpus
        .pairs
        .iter()
        .filter(|p| seen.insert(p.dedup_key()))
        .cloned()
        .collect();
    let mut out = Corpus {
        name: corpus.name.clone(),
        pairs,
        metadata: corpus.metadata.clone(),
    };
    let removed = corpus.len() - out.len();
    if removed > 0 {
        out.metadata.insert("dedup_removed".into(), removed.to_string());
    }
    out
}

/// Parses `"1/2,1/2"` style fraction lists.
pub fn parse_fractions(s: &str) -> Result<Vec<Ratio<u64>>, CorpusError> {
    s.split(',')
        .map(|part| {
            let part = part.trim();
            part.parse::<Ratio<u64>>()
                .map_err(|_| CorpusError::InvalidFractions(format!("cannot parse `{part}`")))
        })
        .collect()
}

/// Slice sizes for `n` items: floors of `n * f`, with the leftover handed
/// out one at a time starting from the first slice.
pub fn split_sizes(n: usize, fractions: &[Ratio<u64>]) -> Result<Vec<usize>, CorpusError> {
    if fractions.is_empty() {
        return Err(CorpusError::InvalidFractions("no fractions given".into()));
    }
    if let Some(f) = fractions.iter().find(|f| *f.numer() == 0) {
        return Err(CorpusError::InvalidFractions(format!("fraction {f} is not positive")));
    }
    let total = fractions
        .iter()
        .try_fold(Ratio::from_integer(0u64), |acc, f| acc.checked_add(f))
        .ok_or_else(|| CorpusError::InvalidFractions("fraction sum overflows".into()))?;
    if total != Ratio::from_integer(1) {
        return Err(CorpusError::InvalidFractions(format!(
            "fractions sum to {total}, not 1"
        )));
    }
    let mut sizes: Vec<usize> = fractions
        .iter()
        .map(|f| (n as u128 * *f.numer() as u128 / *f.denom() as u128) as usize)
        .collect();
    let assigned: usize = sizes.iter().sum();
    let slices = sizes.len();
    for i in 0..(n - assigned) {
        sizes[i % slices] += 1;
    }
    Ok(sizes)
}

/// Seeded shuffle followed by contiguous slicing.
pub fn split_corpus(corpus: &Corpus, fractions: &[Ratio<u64>], seed: u64) -> Result<Vec<Corpus>, CorpusError> {
    let sizes = split_sizes(corpus.len(), fractions)?;
    let mut shuffled = corpus.pairs.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let mut rest = shuffled.as_slice();
    let mut out = Vec::with_capacity(sizes.len());
    for (i, size) in sizes.into_iter().enumerate() {
        let (head, tail) = rest.split_at(size);
        rest = tail;
        let mut part = Corpus::new(format!("{}.part{}", corpus.name, i + 1), head.to_vec());
        part.metadata = corpus.metadata.clone();
        part.metadata.insert("split_seed".into(), seed.to_string());
        part.metadata.insert("split_index".into(), (i + 1).to_string());
        out.push(part);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSetKind {
    FloresSubset,
    Lebeval,
    Custom,
}

impl TestSetKind {
    pub fn expected_size(self) -> Option<usize> {
        match self {
            TestSetKind::FloresSubset => Some(500),
            TestSetKind::Lebeval => Some(70),
            TestSetKind::Custom => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TestSetKind::FloresSubset => "flores_subset",
            TestSetKind::Lebeval => "lebeval",
            TestSetKind::Custom => "custom",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            TestSetKind::FloresSubset => "FLoRes",
            TestSetKind::Lebeval => "LebEval",
            TestSetKind::Custom => "custom",
        }
    }

    fn default_origin(self) -> Origin {
        match self {
            TestSetKind::Lebeval => Origin::Lebeval,
            _ => Origin::Other,
        }
    }
}

impl fmt::Display for TestSetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestSetKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flores_subset" | "flores" => Ok(TestSetKind::FloresSubset),
            "lebeval" => Ok(TestSetKind::Lebeval),
            "custom" => Ok(TestSetKind::Custom),
            other => Err(CorpusError::UnknownName {
                what: "test set",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSet {
    pub kind: TestSetKind,
    /// Display name used in result tables.
    pub name: String,
    pub pairs: Vec<SentencePair>,
    pub metadata: BTreeMap<String, String>,
}

impl TestSet {
    /// Wraps already-parsed pairs, validating the canonical size.
    pub fn from_pairs(kind: TestSetKind, pairs: Vec<SentencePair>) -> Result<Self, CorpusError> {
        if let Some(expected) = kind.expected_size() {
            if pairs.len() != expected {
                return Err(CorpusError::SizeMismatch {
                    which: kind,
                    expected,
                    found: pairs.len(),
                });
            }
        }
        Ok(TestSet {
            kind,
            name: kind.display_name().to_string(),
            pairs,
            metadata: BTreeMap::new(),
        })
    }
}

/// Loads an evaluation set. Only the size is validated for canonical sets;
/// the file hash goes into metadata so runs can tell which subset was used.
pub fn load_test_set(path: &Path, which: TestSetKind) -> Result<TestSet, CorpusError> {
    let (text, digest) = read_utf8(path)?;
    let corpus = parse_corpus(
        &file_stem(path),
        &text,
        CorpusFormat::from_path(path),
        which.default_origin(),
    )?;
    let mut set = TestSet::from_pairs(which, corpus.pairs)?;
    if which == TestSetKind::Custom {
        set.name = corpus.name;
    }
    set.metadata.insert("sha256".into(), digest);
    set.metadata.insert("source_path".into(), path.display().to_string());
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, s: &str, t: &str) -> SentencePair {
        SentencePair::new(id, s, t, Origin::Other, None).unwrap()
    }

    fn ratio(n: u64, d: u64) -> Ratio<u64> {
        Ratio::new(n, d)
    }

    #[test]
    fn tsv_ids_follow_origin_and_line() {
        let c = parse_corpus(
            "x",
            "مرحبا\tHello\nكيفك\tHow are you\n",
            CorpusFormat::TsvPair,
            Origin::Other,
        )
        .unwrap();
        let ids: Vec<_> = c.pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["OTHER-000001", "OTHER-000002"]);
        assert_eq!(c.pairs[1].target_en, "How are you");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_corpus("x", "", CorpusFormat::TsvPair, Origin::Other),
            Err(CorpusError::EmptyFile)
        ));
        assert!(matches!(
            parse_corpus("x", "\n  \n", CorpusFormat::Jsonl, Origin::Other),
            Err(CorpusError::EmptyFile)
        ));
    }

    #[test]
    fn extra_tab_is_malformed() {
        let err = parse_corpus("x", "a\tb\nc\td\te\n", CorpusFormat::TsvPair, Origin::Madar).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_column_is_malformed() {
        let err = parse_corpus("x", "only source\n", CorpusFormat::TsvPair, Origin::Madar).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn whitespace_only_side_is_malformed() {
        let err = parse_corpus("x", "مرحبا\t   \n", CorpusFormat::TsvPair, Origin::Lw).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 1, .. }));
    }

    #[test]
    fn lgid_requires_hint() {
        assert!(parse_corpus("x", "a\tb\n", CorpusFormat::TsvPair, Origin::Lgid).is_err());
        let ok = parse_corpus(
            "x",
            r#"{"source_leb":"رح روح","target_en":"I will go","hint":"rah marks the future"}"#,
            CorpusFormat::Jsonl,
            Origin::Lgid,
        )
        .unwrap();
        assert_eq!(ok.pairs[0].hint.as_deref(), Some("rah marks the future"));
        assert_eq!(ok.pairs[0].id, "LGID-000001");
    }

    #[test]
    fn invalid_utf8_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        fs::write(&path, b"ab\t\xffcd\n").unwrap();
        let err = load_corpus(&path, CorpusFormat::TsvPair, Origin::Other).unwrap_err();
        assert!(matches!(err, CorpusError::Encoding { offset: 3 }));
    }

    #[test]
    fn duplicate_jsonl_ids_rejected() {
        let text = "{\"id\":\"a\",\"source_leb\":\"x\",\"target_en\":\"y\"}\n{\"id\":\"a\",\"source_leb\":\"z\",\"target_en\":\"w\"}";
        let err = parse_corpus("x", text, CorpusFormat::Jsonl, Origin::Other).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRecord { line: 2, .. }));
    }

    #[test]
    fn jsonl_round_trip() {
        let c = Corpus::new(
            "rt",
            vec![
                SentencePair::new("LW-000001", "شو  في", "What's up", Origin::Lw, None).unwrap(),
                SentencePair::new(
                    "LGID-000002",
                    "رح ناكل",
                    "We will eat",
                    Origin::Lgid,
                    Some("rah + verb is future"),
                )
                .unwrap(),
            ],
        );
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).unwrap();
        let back = parse_corpus(
            "rt",
            std::str::from_utf8(&buf).unwrap(),
            CorpusFormat::Jsonl,
            Origin::Other,
        )
        .unwrap();
        assert_eq!(back.pairs, c.pairs);
    }

    #[test]
    fn dedup_first_wins() {
        let c = Corpus::new(
            "d",
            vec![
                pair("1", "a", "A"),
                pair("2", "b", "B"),
                pair("3", "c", "C"),
                pair("4", " a ", "A"),
                pair("5", "e", "E"),
            ],
        );
        let d = dedup(&c);
        let ids: Vec<_> = d.pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["1", "2", "3", "5"]);
        assert_eq!(dedup(&d).pairs, d.pairs);
    }

    #[test]
    fn dedup_keeps_distinct_translations() {
        let c = Corpus::new("d", vec![pair("1", "a", "A"), pair("2", "a", "B")]);
        assert_eq!(dedup(&c).len(), 2);
        let same = Corpus::new("d", vec![pair("1", "a", "A"), pair("2", "a", "A")]);
        assert_eq!(dedup(&same).len(), 1);
    }

    #[test]
    fn split_sizes_favor_first_slice() {
        let half = [ratio(1, 2), ratio(1, 2)];
        assert_eq!(split_sizes(3000, &half).unwrap(), [1500, 1500]);
        assert_eq!(split_sizes(2837, &half).unwrap(), [1419, 1418]);
        assert_eq!(split_sizes(3, &half).unwrap(), [2, 1]);
        assert_eq!(
            split_sizes(10, &[ratio(1, 3), ratio(1, 3), ratio(1, 3)]).unwrap(),
            [4, 3, 3]
        );
    }

    #[test]
    fn bad_fractions_rejected() {
        assert!(split_sizes(4, &[]).is_err());
        assert!(split_sizes(4, &[ratio(1, 2)]).is_err());
        assert!(split_sizes(4, &[ratio(0, 1), ratio(1, 1)]).is_err());
        assert!(split_sizes(4, &[ratio(2, 3), ratio(2, 3)]).is_err());
        assert!(parse_fractions("1/2,x").is_err());
        assert_eq!(parse_fractions("1/2, 1/2").unwrap(), [ratio(1, 2), ratio(1, 2)]);
    }

    #[test]
    fn split_is_deterministic() {
        let pairs = (0..50).map(|i| pair(&i.to_string(), &format!("s{i}"), "t")).collect();
        let c = Corpus::new("c", pairs);
        let f = [ratio(1, 2), ratio(1, 2)];
        let a = split_corpus(&c, &f, 7).unwrap();
        let b = split_corpus(&c, &f, 7).unwrap();
        assert_eq!(a, b);
        let other = split_corpus(&c, &f, 8).unwrap();
        assert_ne!(a[0].pairs, other[0].pairs);
    }

    #[test]
    fn test_set_size_validation() {
        let pairs: Vec<_> = (0..69).map(|i| pair(&i.to_string(), "s", "t")).collect();
        let err = TestSet::from_pairs(TestSetKind::Lebeval, pairs.clone()).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::SizeMismatch {
                expected: 70,
                found: 69,
                ..
            }
        ));
        assert_eq!(TestSet::from_pairs(TestSetKind::Custom, pairs).unwrap().pairs.len(), 69);
    }

    #[test]
    fn grammar_example_chapter_bounds() {
        let g = GrammarExample {
            pair: pair("g", "رح روح", "I will go"),
            rule_title: "Future".into(),
            rule_text: "rah before a verb marks the future".into(),
            chapter_index: 33,
        };
        assert!(g.validate().is_err());
        assert!(GrammarExample {
            chapter_index: 32,
            ..g.clone()
        }
        .validate()
        .is_ok());
        assert!(GrammarExample {
            rule_text: " ".into(),
            chapter_index: 1,
            ..g
        }
        .validate()
        .is_err());
    }
}
