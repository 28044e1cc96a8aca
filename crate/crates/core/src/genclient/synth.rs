//! Grammar-hint data synthesis: chunk a grammar chapter, ask a remote model
//! for illustrative examples per chunk, and parse the replies.
//!
//! Replies must follow a line protocol, one example per block:
//!
//! ```text
//! LEB: <Lebanese sentence>
//! EN: <English translation>
//! RULE: <rule title> | <rule statement>
//! ```
//!
//! Anything outside a block is ignored; a block that breaks off before its
//! RULE line is discarded and counted.

use crate::corpus::{GrammarExample, Origin, SentencePair, MAX_GRAMMAR_CHAPTER};

use super::pool::map_bounded;
use super::{generate_translation, ChatBackend, GenError, GenerationConfig};

pub const CHUNK_MIN_WORDS: usize = 300;
pub const CHUNK_MAX_WORDS: usize = 800;

fn word_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Splits a chapter at blank lines and merges neighbouring paragraphs until
/// each chunk holds at least `CHUNK_MIN_WORDS` words without passing
/// `CHUNK_MAX_WORDS`. A single paragraph above the maximum stays whole.
pub fn chunk_chapter(chapter_text: &str) -> Vec<String> {
    let normalized = chapter_text.replace("\r\n", "\n");
    let paragraphs: Vec<&str> = normalized
        .split("\n\n")
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect();

    let mut chunks: Vec<(String, usize)> = Vec::new();
    let mut current = String::new();
    let mut current_words = 0;
    for p in paragraphs {
        let words = word_count(p);
        if current_words > 0 && current_words + words > CHUNK_MAX_WORDS {
            chunks.push((std::mem::take(&mut current), current_words));
            current_words = 0;
        }
        if !current.is_empty() {
            current.push_str("\n\n");
        }
        current.push_str(p);
        current_words += words;
        if current_words >= CHUNK_MIN_WORDS {
            chunks.push((std::mem::take(&mut current), current_words));
            current_words = 0;
        }
    }
    if current_words > 0 {
        match chunks.last_mut() {
            Some((last, last_words)) if *last_words + current_words <= CHUNK_MAX_WORDS => {
                last.push_str("\n\n");
                last.push_str(&current);
                *last_words += current_words;
            }
            _ => chunks.push((current, current_words)),
        }
    }
    chunks.into_iter().map(|(c, _)| c).collect()
}

pub fn synthesis_prompt(chunk: &str, examples: usize) -> String {
    format!(
        "You are helping build a Lebanese Arabic grammar dataset. Read the grammar notes below and \
write {examples} new example sentences in Lebanese Arabic, written in Arabic script, that illustrate \
the rules. Give each example an English translation and the rule it demonstrates.\n\n\
Write each example as exactly three lines:\n\
LEB: <Lebanese Arabic sentence>\n\
EN: <English translation>\n\
RULE: <rule title> | <one-sentence statement of the rule>\n\n\
Separate examples with a blank line and write nothing else.\n\n\
Grammar notes:\n{chunk}\n"
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthesisTriple {
    pub source: String,
    pub target: String,
    pub rule_title: Option<String>,
    pub rule_text: String,
}

fn field<'a>(line: &'a str, tag: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(tag)?;
    let rest = rest.strip_prefix(':')?;
    Some(rest.trim())
}

/// Returns the complete triples and the number of broken-off ones.
pub fn parse_synthesis_response(text: &str) -> (Vec<SynthesisTriple>, usize) {
    let mut triples = Vec::new();
    let mut discarded = 0;
    let mut source: Option<String> = None;
    let mut target: Option<String> = None;

    for line in text.lines().map(str::trim) {
        if line.is_empty() {
            continue;
        }
        if let Some(leb) = field(line, "LEB") {
            if source.is_some() {
                discarded += 1;
            }
            source = Some(leb.to_string());
            target = None;
        } else if let Some(en) = field(line, "EN") {
            if source.is_none() || target.is_some() {
                discarded += 1;
                source = None;
                target = None;
            } else {
                target = Some(en.to_string());
            }
        } else if let Some(rule) = field(line, "RULE") {
            match (source.take(), target.take()) {
                (Some(s), Some(t)) if !s.is_empty() && !t.is_empty() && !rule.is_empty() => {
                    let (title, text) = match rule.split_once('|') {
                        Some((title, text)) => (Some(title.trim().to_string()), text.trim().to_string()),
                        None => (None, rule.to_string()),
                    };
                    if text.is_empty() {
                        discarded += 1;
                    } else {
                        triples.push(SynthesisTriple {
                            source: s,
                            target: t,
                            rule_title: title.filter(|t| !t.is_empty()),
                            rule_text: text,
                        });
                    }
                }
                _ => discarded += 1,
            }
        } else if source.is_some() {
            // prose inside a block breaks it
            discarded += 1;
            source = None;
            target = None;
        }
    }
    if source.is_some() {
        discarded += 1;
    }
    (triples, discarded)
}

#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub examples: Vec<GrammarExample>,
    pub chunks: usize,
    pub discarded: usize,
}

fn chunk_heading(chunk: &str) -> String {
    let first = chunk.lines().next().unwrap_or_default().trim();
    first.trim_start_matches('#').trim().chars().take(80).collect()
}

/// Generates grammar-annotated examples for one chapter.
pub fn synthesize_grammar_examples(
    chat: &dyn ChatBackend,
    chapter_text: &str,
    chapter_index: u32,
    cfg: &GenerationConfig,
    requested: usize,
    in_flight: usize,
) -> Result<SynthesisOutcome, GenError> {
    if chapter_text.trim().is_empty() {
        return Err(GenError::InvalidConfig("chapter text is empty".into()));
    }
    if chapter_index == 0 || chapter_index > MAX_GRAMMAR_CHAPTER {
        return Err(GenError::InvalidConfig(format!(
            "chapter index {chapter_index} outside 1..={MAX_GRAMMAR_CHAPTER}"
        )));
    }
    let chunks = chunk_chapter(chapter_text);
    let per_chunk = requested.div_ceil(chunks.len().max(1)).max(1);
    let replies = map_bounded(&chunks, in_flight, |_, chunk| {
        generate_translation(chat, &synthesis_prompt(chunk, per_chunk), cfg)
    });

    let mut examples = Vec::new();
    let mut discarded = 0;
    for (chunk, reply) in chunks.iter().zip(replies) {
        let (triples, bad) = parse_synthesis_response(&reply?);
        discarded += bad;
        for t in triples {
            let id = format!("LGID-c{chapter_index:02}-{:05}", examples.len() + 1);
            let pair = match SentencePair::new(id, &t.source, &t.target, Origin::Lgid, Some(&t.rule_text)) {
                Ok(p) => p,
                Err(_) => {
                    discarded += 1;
                    continue;
                }
            };
            let rule_text = pair.hint.clone().unwrap_or_default();
            examples.push(GrammarExample {
                pair,
                rule_title: t.rule_title.unwrap_or_else(|| chunk_heading(chunk)),
                rule_text,
                chapter_index,
            });
        }
    }
    if examples.is_empty() {
        return Err(GenError::NoParsableExamples { discarded });
    }
    if requested > 0 && examples.len() > requested {
        examples.truncate(requested);
    }
    Ok(SynthesisOutcome {
        examples,
        chunks: chunks.len(),
        discarded,
    })
}
