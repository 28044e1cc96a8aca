//! Translation, contrastive and grammar-hint instruction records.
//!
//! A rendered record looks like
//!
//! ```text
//! <preamble>
//!
//! ### Instruction:
//! <instruction>
//!
//! ### Input:
//! <source sentence>
//!
//! ### Hint:            (contrastive and grammar records only)
//! <hint>
//!
//! ### Response:
//! <response>
//! ```
//!
//! [`parse`] inverts [`render`] exactly. Field text may not contain any of
//! the four header strings, which is what keeps the grammar unambiguous.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GrammarExample, Origin, SentencePair};
use crate::normalize::normalize_text;

pub const INSTRUCTION_HEADER: &str = "### Instruction:";
pub const INPUT_HEADER: &str = "### Input:";
pub const HINT_HEADER: &str = "### Hint:";
pub const RESPONSE_HEADER: &str = "### Response:";
pub const HEADERS: [&str; 4] = [INSTRUCTION_HEADER, INPUT_HEADER, HINT_HEADER, RESPONSE_HEADER];

const SHIPPED_TEMPLATE_V1: &str = include_str!("../data/template-v1.json");

#[derive(Debug, Error)]
pub enum InstructError {
    #[error("pair {id}: rejected translation equals the chosen one")]
    DegeneratePair { id: String },
    #[error("pair {id}: translation contains the delimiter `{delimiter}`")]
    DelimiterInContent { id: String, delimiter: String },
    #[error("pair {id}: no grammar hint")]
    MissingHint { id: String },
    #[error("record violates its kind invariants: {0}")]
    InvariantViolation(String),
    #[error("parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("unknown template version `{0}`")]
    UnknownTemplate(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
}

fn parse_err(position: usize, message: impl Into<String>) -> InstructError {
    InstructError::Parse {
        position,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub version: String,
    pub preamble: String,
    pub instruction: String,
    pub delimiter: String,
    /// Other joins accepted when parsing; never emitted.
    #[serde(default)]
    pub alt_delimiters: Vec<String>,
    pub preference_hint: String,
}

impl Template {
    pub fn v1() -> Template {
        serde_json::from_str(SHIPPED_TEMPLATE_V1).expect("shipped template parses")
    }

    pub fn by_version(version: &str) -> Result<Template, InstructError> {
        match version {
            "v1" => Ok(Self::v1()),
            other => Err(InstructError::UnknownTemplate(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), InstructError> {
        for text in [&self.preamble, &self.instruction, &self.preference_hint] {
            if text.is_empty() || contains_header(text) {
                return Err(InstructError::InvalidTemplate(format!(
                    "`{text}` is empty or contains a section header"
                )));
            }
        }
        for d in std::iter::once(&self.delimiter).chain(&self.alt_delimiters) {
            if d.is_empty() || HEADERS.iter().any(|h| h.contains(d.as_str())) {
                return Err(InstructError::InvalidTemplate(format!(
                    "delimiter `{d}` is empty or occurs inside a header"
                )));
            }
        }
        Ok(())
    }

    fn all_delimiters(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.delimiter.as_str()).chain(self.alt_delimiters.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InstructionKind {
    #[serde(rename = "MT")]
    Mt,
    Contrastive,
    Grammar,
}

impl InstructionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            InstructionKind::Mt => "MT",
            InstructionKind::Contrastive => "Contrastive",
            InstructionKind::Grammar => "Grammar",
        }
    }
}

impl fmt::Display for InstructionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InstructionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mt" => Ok(InstructionKind::Mt),
            "contrastive" | "cont" => Ok(InstructionKind::Contrastive),
            "grammar" | "gram" => Ok(InstructionKind::Grammar),
            other => Err(format!("unknown instruction kind `{other}`")),
        }
    }
}

/// One training example. `origin` and `pair_id` are carried for dataset
/// bookkeeping and are not part of the rendered text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub kind: InstructionKind,
    pub preamble: String,
    pub instruction: String,
    pub input: String,
    pub hint: Option<String>,
    pub response: String,
    #[serde(default)]
    pub origin: Option<Origin>,
    #[serde(default)]
    pub pair_id: Option<String>,
}

impl InstructionRecord {
    /// For contrastive records, the (chosen, rejected) halves of the response.
    pub fn contrastive_sides<'a>(&'a self, t: &Template) -> Option<(&'a str, &'a str)> {
        match self.kind {
            InstructionKind::Contrastive => self.response.split_once(t.delimiter.as_str()),
            _ => None,
        }
    }

    pub fn validate(&self, t: &Template) -> Result<(), InstructError> {
        let violation = |m: &str| Err(InstructError::InvariantViolation(m.to_string()));
        if self.preamble != t.preamble {
            return violation("preamble differs from the template");
        }
        if self.instruction.is_empty() {
            return violation("empty instruction");
        }
        if self.input.is_empty() {
            return violation("empty input");
        }
        if self.response.is_empty() {
            return violation("empty response");
        }
        let fields = [
            Some(self.instruction.as_str()),
            Some(self.input.as_str()),
            self.hint.as_deref(),
            Some(self.response.as_str()),
        ];
        if fields.into_iter().flatten().any(contains_header) {
            return violation("a field contains a section header");
        }
        match (self.kind, self.hint.as_deref()) {
            (InstructionKind::Mt, Some(_)) => violation("MT records carry no hint"),
            (InstructionKind::Mt, None) => Ok(()),
            (_, None) => violation("record kind requires a hint"),
            (InstructionKind::Contrastive, Some(h)) => {
                if h != t.preference_hint {
                    return violation("contrastive hint is not the preference sentence");
                }
                if self.response.matches(t.delimiter.as_str()).count() != 1 {
                    return violation("contrastive response must contain the delimiter exactly once");
                }
                if t.alt_delimiters.iter().any(|d| self.response.contains(d.as_str())) {
                    return violation("contrastive response contains an alternative delimiter");
                }
                Ok(())
            }
            (InstructionKind::Grammar, Some(h)) => {
                if h.trim().is_empty() {
                    violation("empty grammar hint")
                } else if h == t.preference_hint {
                    violation("grammar hint collides with the contrastive preference sentence")
                } else {
                    Ok(())
                }
            }
        }
    }
}

fn contains_header(text: &str) -> bool {
    HEADERS.iter().any(|h| text.contains(h))
}

pub fn build_mt_instruction(pair: &SentencePair, t: &Template) -> InstructionRecord {
    InstructionRecord {
        kind: InstructionKind::Mt,
        preamble: t.preamble.clone(),
        instruction: t.instruction.clone(),
        input: pair.source_leb.clone(),
        hint: None,
        response: pair.target_en.clone(),
        origin: Some(pair.origin),
        pair_id: Some(pair.id.clone()),
    }
}

/// Checks a chosen/rejected pair before joining: non-degenerate and free of
/// every delimiter form.
pub fn check_preference(id: &str, chosen: &str, rejected: &str, t: &Template) -> Result<(), InstructError> {
    let rejected_norm = normalize_text(rejected);
    if rejected_norm.is_empty() || rejected_norm == normalize_text(chosen) {
        return Err(InstructError::DegeneratePair { id: id.to_string() });
    }
    for text in [chosen, rejected] {
        if let Some(d) = t.all_delimiters().find(|d| text.contains(d)) {
            return Err(InstructError::DelimiterInContent {
                id: id.to_string(),
                delimiter: d.to_string(),
            });
        }
    }
    Ok(())
}

pub fn join_preference(chosen: &str, rejected: &str, t: &Template) -> String {
    format!("{chosen}{}{rejected}", t.delimiter)
}

pub fn build_contrastive_instruction(
    pair: &SentencePair,
    rejected: &str,
    t: &Template,
) -> Result<InstructionRecord, InstructError> {
    check_preference(&pair.id, &pair.target_en, rejected, t)?;
    Ok(InstructionRecord {
        kind: InstructionKind::Contrastive,
        preamble: t.preamble.clone(),
        instruction: t.instruction.clone(),
        input: pair.source_leb.clone(),
        hint: Some(t.preference_hint.clone()),
        response: join_preference(&pair.target_en, rejected.trim(), t),
        origin: Some(pair.origin),
        pair_id: Some(pair.id.clone()),
    })
}

pub fn build_grammar_instruction(g: &GrammarExample, t: &Template) -> InstructionRecord {
    InstructionRecord {
        kind: InstructionKind::Grammar,
        preamble: t.preamble.clone(),
        instruction: t.instruction.clone(),
        input: g.pair.source_leb.clone(),
        hint: Some(g.rule_text.clone()),
        response: g.pair.target_en.clone(),
        origin: Some(g.pair.origin),
        pair_id: Some(g.pair.id.clone()),
    }
}

/// Grammar record from a pair whose `hint` already carries the rule text
/// (the shape of LGID corpus files).
pub fn build_grammar_instruction_from_pair(
    pair: &SentencePair,
    t: &Template,
) -> Result<InstructionRecord, InstructError> {
    let hint = pair
        .hint
        .clone()
        .ok_or_else(|| InstructError::MissingHint { id: pair.id.clone() })?;
    Ok(InstructionRecord {
        kind: InstructionKind::Grammar,
        preamble: t.preamble.clone(),
        instruction: t.instruction.clone(),
        input: pair.source_leb.clone(),
        hint: Some(hint),
        response: pair.target_en.clone(),
        origin: Some(pair.origin),
        pair_id: Some(pair.id.clone()),
    })
}

fn push_section(out: &mut String, header: &str, body: &str) {
    out.push_str("\n\n");
    out.push_str(header);
    out.push('\n');
    out.push_str(body);
}

pub fn render(r: &InstructionRecord, t: &Template) -> Result<String, InstructError> {
    r.validate(t)?;
    let mut out = String::with_capacity(t.preamble.len() + r.instruction.len() + r.input.len() + r.response.len() + 96);
    out.push_str(&t.preamble);
    push_section(&mut out, INSTRUCTION_HEADER, &r.instruction);
    push_section(&mut out, INPUT_HEADER, &r.input);
    if let Some(hint) = &r.hint {
        push_section(&mut out, HINT_HEADER, hint);
    }
    push_section(&mut out, RESPONSE_HEADER, &r.response);
    Ok(out)
}

fn find_unique(text: &str, header: &str) -> Result<Option<usize>, InstructError> {
    let mut hits = text.match_indices(header).map(|(i, _)| i);
    let first = hits.next();
    if let Some(second) = hits.next() {
        return Err(parse_err(second, format!("duplicated `{header}`")));
    }
    Ok(first)
}

/// Inverse of [`render`]. Origin and pair id are not recoverable from text.
pub fn parse(text: &str, t: &Template) -> Result<InstructionRecord, InstructError> {
    let Some(after_preamble) = text.strip_prefix(t.preamble.as_str()) else {
        return Err(parse_err(0, "text does not start with the template preamble"));
    };
    let base = t.preamble.len();
    if !after_preamble.starts_with("\n\n") {
        return Err(parse_err(base, "expected a blank line after the preamble"));
    }

    let mut sections = Vec::with_capacity(4);
    for header in HEADERS {
        if let Some(pos) = find_unique(text, header)? {
            sections.push((pos, header));
        }
    }
    for required in [INSTRUCTION_HEADER, INPUT_HEADER, RESPONSE_HEADER] {
        if !sections.iter().any(|(_, h)| *h == required) {
            return Err(parse_err(text.len(), format!("missing `{required}`")));
        }
    }
    // HEADERS is in canonical order, so positions must be increasing.
    if let Some(w) = sections.windows(2).find(|w| w[0].0 > w[1].0) {
        return Err(parse_err(w[1].0, format!("`{}` out of order", w[1].1)));
    }
    if sections[0].0 != base + 2 {
        return Err(parse_err(base + 2, format!("expected `{INSTRUCTION_HEADER}`")));
    }

    let mut bodies = Vec::with_capacity(sections.len());
    for (i, &(pos, header)) in sections.iter().enumerate() {
        let body_start = pos + header.len();
        if text.as_bytes().get(body_start) != Some(&b'\n') {
            return Err(parse_err(body_start, format!("expected newline after `{header}`")));
        }
        let body_end = match sections.get(i + 1) {
            Some(&(next, _)) => {
                if next < body_start + 3 || &text.as_bytes()[next - 2..next] != b"\n\n" {
                    return Err(parse_err(next, "expected a blank line before the header"));
                }
                next - 2
            }
            None => text.len(),
        };
        bodies.push((header, &text[body_start + 1..body_end]));
    }

    let body = |h: &str| bodies.iter().find(|(hh, _)| *hh == h).map(|(_, b)| b.to_string());
    let hint = body(HINT_HEADER);
    let mut response = body(RESPONSE_HEADER).unwrap_or_default();
    let kind = match hint.as_deref() {
        None => InstructionKind::Mt,
        Some(h) if h == t.preference_hint => {
            if !response.contains(t.delimiter.as_str()) {
                if let Some(alt) = t
                    .alt_delimiters
                    .iter()
                    .find(|d| response.matches(d.as_str()).count() == 1)
                {
                    response = response.replacen(alt.as_str(), &t.delimiter, 1);
                }
            }
            InstructionKind::Contrastive
        }
        Some(_) => InstructionKind::Grammar,
    };

    let rec = InstructionRecord {
        kind,
        preamble: t.preamble.clone(),
        instruction: body(INSTRUCTION_HEADER).unwrap_or_default(),
        input: body(INPUT_HEADER).unwrap_or_default(),
        hint,
        response,
        origin: None,
        pair_id: None,
    };
    rec.validate(t).map_err(|e| {
        let response_pos = sections.last().map(|s| s.0).unwrap_or(0);
        parse_err(response_pos, e.to_string())
    })?;
    Ok(rec)
}

/// One line of an instruction JSONL dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionLine {
    pub id: Option<String>,
    pub kind: InstructionKind,
    pub input: String,
    pub hint: Option<String>,
    pub response: String,
    pub rendered: String,
    pub origin: Option<Origin>,
}

impl InstructionLine {
    pub fn from_record(r: &InstructionRecord, t: &Template) -> Result<Self, InstructError> {
        Ok(InstructionLine {
            id: r.pair_id.clone(),
            kind: r.kind,
            input: r.input.clone(),
            hint: r.hint.clone(),
            response: r.response.clone(),
            rendered: render(r, t)?,
            origin: r.origin,
        })
    }
}
