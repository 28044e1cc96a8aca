//! Rule-based Arabizi to Arabic-script conversion.
//!
//! Conversion is a single left-to-right pass. At each Latin or digit
//! character the ordered multi-character rules are tried first (the table
//! is kept longest-first, so the first hit is the longest), then the single
//! character and digit maps. Single-character rules may differ by position
//! within the word, which is how medial short vowels get elided.
//!
//! Tokens made only of digits are numerals, not Arabizi, and are copied
//! through untouched (and reported as unmapped).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const SHIPPED_V1: &str = include_str!("../data/arabizi-v1.json");

#[derive(Debug, Error)]
pub enum RuleTableError {
    #[error("cannot read rule table: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse rule table: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid rule table: {0}")]
    Invalid(String),
}

/// Right-hand side of a single-character rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SingleRule {
    Always(String),
    Positional {
        initial: String,
        medial: String,
        #[serde(rename = "final")]
        final_: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    Initial,
    Medial,
    Final,
}

impl SingleRule {
    fn at(&self, pos: Position) -> &str {
        match self {
            SingleRule::Always(s) => s,
            SingleRule::Positional {
                initial,
                medial,
                final_,
            } => match pos {
                Position::Initial => initial,
                Position::Medial => medial,
                Position::Final => final_,
            },
        }
    }

    fn outputs(&self) -> Vec<&str> {
        match self {
            SingleRule::Always(s) => vec![s],
            SingleRule::Positional {
                initial,
                medial,
                final_,
            } => vec![initial, medial, final_],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    pub version: String,
    pub multi: Vec<(String, String)>,
    pub single: BTreeMap<String, SingleRule>,
    pub digits: BTreeMap<String, String>,
}

/// A validated table with the lookups precomputed.
#[derive(Debug, Clone)]
pub struct CompiledRules {
    table: RuleTable,
    multi: Vec<(Vec<char>, String)>,
    single: BTreeMap<char, SingleRule>,
    digits: BTreeMap<char, String>,
}

pub fn is_arabic_script(c: char) -> bool {
    matches!(c,
        '\u{0600}'..='\u{06FF}'
        | '\u{0750}'..='\u{077F}'
        | '\u{08A0}'..='\u{08FF}'
        | '\u{FB50}'..='\u{FDFF}'
        | '\u{FE70}'..='\u{FEFF}')
}

/// Latin letters the converter treats as Arabizi input.
pub fn is_latin_letter(c: char) -> bool {
    c.is_ascii_alphabetic() || (('\u{00C0}'..='\u{024F}').contains(&c) && c.is_alphabetic())
}

fn is_word_char(c: char) -> bool {
    is_latin_letter(c) || c.is_ascii_digit()
}

fn lower(c: char) -> char {
    let mut it = c.to_lowercase();
    match (it.next(), it.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn single_char_key(key: &str, what: &str) -> Result<char, RuleTableError> {
    let mut chars = key.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(RuleTableError::Invalid(format!(
            "{what} key `{key}` must be exactly one character"
        ))),
    }
}

fn check_rhs(lhs: &str, rhs: &str) -> Result<(), RuleTableError> {
    if let Some(bad) = rhs.chars().find(|&c| !is_arabic_script(c)) {
        return Err(RuleTableError::Invalid(format!(
            "rule `{lhs}` maps to non-Arabic character {bad:?}"
        )));
    }
    Ok(())
}

impl RuleTable {
    /// The table shipped with the crate.
    pub fn v1() -> RuleTable {
        serde_json::from_str(SHIPPED_V1).expect("shipped rule table parses")
    }

    pub fn from_json(text: &str) -> Result<RuleTable, RuleTableError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<RuleTable, RuleTableError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn compile(self) -> Result<CompiledRules, RuleTableError> {
        let mut seen = HashSet::new();
        let mut multi = Vec::with_capacity(self.multi.len());
        let mut prev_len = usize::MAX;
        for (lhs, rhs) in &self.multi {
            let chars: Vec<char> = lhs.chars().map(lower).collect();
            if chars.len() < 2 {
                return Err(RuleTableError::Invalid(format!(
                    "multi rule `{lhs}` must span at least two characters"
                )));
            }
            if chars.len() > prev_len {
                return Err(RuleTableError::Invalid(format!(
                    "multi rule `{lhs}` is longer than the rule before it; order longest first"
                )));
            }
            if !chars.iter().copied().all(is_word_char) {
                return Err(RuleTableError::Invalid(format!(
                    "multi rule `{lhs}` may only contain Latin letters and digits"
                )));
            }
            if !seen.insert(chars.clone()) {
                return Err(RuleTableError::Invalid(format!("duplicate multi rule `{lhs}`")));
            }
            check_rhs(lhs, rhs)?;
            prev_len = chars.len();
            multi.push((chars, rhs.clone()));
        }

        let mut single = BTreeMap::new();
        for (key, rule) in &self.single {
            let c = single_char_key(key, "single")?;
            if c.is_ascii_digit() {
                return Err(RuleTableError::Invalid(format!(
                    "digit `{c}` belongs in the digits map"
                )));
            }
            for out in rule.outputs() {
                check_rhs(key, out)?;
            }
            single.insert(c, rule.clone());
        }

        let mut digits = BTreeMap::new();
        for (key, rhs) in &self.digits {
            let c = single_char_key(key, "digit")?;
            if !c.is_ascii_digit() {
                return Err(RuleTableError::Invalid(format!("digit key `{key}` is not a digit")));
            }
            check_rhs(key, rhs)?;
            digits.insert(c, rhs.clone());
        }

        Ok(CompiledRules {
            table: self,
            multi,
            single,
            digits,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransliterationResult {
    pub output: String,
    /// Character index in the input and the character left untouched.
    pub unmapped: Vec<(usize, char)>,
    /// Number of Latin letters and digits that a rule consumed.
    pub converted: usize,
}

impl CompiledRules {
    pub fn v1() -> CompiledRules {
        RuleTable::v1().compile().expect("shipped rule table is valid")
    }

    pub fn version(&self) -> &str {
        &self.table.version
    }

    pub fn table(&self) -> &RuleTable {
        &self.table
    }

    pub fn transliterate(&self, text: &str) -> TransliterationResult {
        let chars: Vec<char> = text.chars().collect();
        let spans = word_spans(&chars);
        let mut output = String::with_capacity(text.len() * 2);
        let mut unmapped = Vec::new();
        let mut converted = 0;

        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let Some(span) = spans[i] else {
                match self.single.get(&c) {
                    Some(rule) => output.push_str(rule.at(Position::Initial)),
                    None => output.push(c),
                }
                i += 1;
                continue;
            };

            if span.numeral {
                output.push(c);
                unmapped.push((i, c));
                i += 1;
                continue;
            }

            if let Some((lhs, rhs)) = self
                .multi
                .iter()
                .find(|(lhs, _)| i + lhs.len() <= span.end && lhs.iter().zip(&chars[i..]).all(|(&l, &t)| l == lower(t)))
            {
                output.push_str(rhs);
                converted += lhs.len();
                i += lhs.len();
                continue;
            }

            let pos = if i == span.start {
                Position::Initial
            } else if i + 1 == span.end {
                Position::Final
            } else {
                Position::Medial
            };
            let mapped = if c.is_ascii_digit() {
                self.digits.get(&c).map(String::as_str)
            } else {
                self.single
                    .get(&c)
                    .or_else(|| self.single.get(&lower(c)))
                    .map(|r| r.at(pos))
            };
            match mapped {
                Some(rhs) => {
                    output.push_str(rhs);
                    converted += 1;
                }
                None => {
                    output.push(c);
                    unmapped.push((i, c));
                }
            }
            i += 1;
        }

        TransliterationResult {
            output,
            unmapped,
            converted,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Span {
    start: usize,
    end: usize,
    numeral: bool,
}

fn word_spans(chars: &[char]) -> Vec<Option<Span>> {
    let mut spans = vec![None; chars.len()];
    let mut i = 0;
    while i < chars.len() {
        if !is_word_char(chars[i]) {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && is_word_char(chars[i]) {
            i += 1;
        }
        let numeral = chars[start..i].iter().all(char::is_ascii_digit);
        let span = Span { start, end: i, numeral };
        spans[start..i].fill(Some(span));
    }
    spans
}

/// Converts `text` with an already compiled table.
pub fn transliterate(text: &str, rules: &CompiledRules) -> TransliterationResult {
    rules.transliterate(text)
}
