//! Zero-shot, few-shot and contrastive few-shot translation prompts.
//!
//! Every prompt is the template preamble and instruction followed by k
//! completed demonstration blocks and one open block for the query:
//!
//! ```text
//! ### Input:
//! <source>
//!
//! ### Response:
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::SentencePair;
use crate::instruct::{
    check_preference, join_preference, InstructError, Template, HINT_HEADER, INPUT_HEADER, INSTRUCTION_HEADER,
    RESPONSE_HEADER,
};
use crate::select::SelectionStrategy;

pub const DEFAULT_K: usize = 3;
/// Keeps the model from inventing further demonstrations after its answer.
pub const DEFAULT_STOP: &str = "### Input:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    ZeroShot,
    FewShot,
    ContrastiveFewShot,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::ZeroShot => "zero_shot",
            PromptMode::FewShot => "few_shot",
            PromptMode::ContrastiveFewShot => "contrastive_few_shot",
        }
    }

    /// Column label used in result tables: `0-shot`, `3-shot`, `C3-shot`.
    pub fn label(self, k: usize) -> String {
        match self {
            PromptMode::ZeroShot => "0-shot".to_string(),
            PromptMode::FewShot => format!("{k}-shot"),
            PromptMode::ContrastiveFewShot => format!("C{k}-shot"),
        }
    }

    pub const ALL: [PromptMode; 3] = [
        PromptMode::ZeroShot,
        PromptMode::FewShot,
        PromptMode::ContrastiveFewShot,
    ];
}

impl fmt::Display for PromptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "zero_shot" | "zero" | "0_shot" => Ok(PromptMode::ZeroShot),
            "few_shot" | "few" => Ok(PromptMode::FewShot),
            "contrastive_few_shot" | "contrastive" | "c_few_shot" => Ok(PromptMode::ContrastiveFewShot),
            other => Err(format!("unknown prompt mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub k: usize,
    pub strategy: SelectionStrategy,
    pub template: Template,
}

impl PromptSpec {
    pub fn new(mode: PromptMode, strategy: SelectionStrategy, template: Template) -> Self {
        let k = if mode == PromptMode::ZeroShot { 0 } else { strategy.k };
        PromptSpec {
            mode,
            k,
            strategy,
            template,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match (self.mode, self.k) {
            (PromptMode::ZeroShot, 0) => Ok(()),
            (PromptMode::ZeroShot, k) => Err(format!("zero-shot prompts take no demonstrations (k = {k})")),
            (_, 0) => Err(format!("{} needs k of at least 1", self.mode)),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        self.mode.label(self.k)
    }
}

fn head(t: &Template) -> String {
    format!("{}\n\n{INSTRUCTION_HEADER}\n{}\n\n", t.preamble, t.instruction)
}

fn open_block(out: &mut String, source: &str) {
    out.push_str(INPUT_HEADER);
    out.push('\n');
    out.push_str(source);
    out.push_str("\n\n");
    out.push_str(RESPONSE_HEADER);
    out.push('\n');
}

fn demo_block(out: &mut String, source: &str, hint: Option<&str>, response: &str) {
    out.push_str(INPUT_HEADER);
    out.push('\n');
    out.push_str(source);
    out.push_str("\n\n");
    if let Some(h) = hint {
        out.push_str(HINT_HEADER);
        out.push('\n');
        out.push_str(h);
        out.push_str("\n\n");
    }
    out.push_str(RESPONSE_HEADER);
    out.push('\n');
    out.push_str(response);
    out.push_str("\n\n");
}

pub fn build_zero_shot(source: &str, t: &Template) -> String {
    build_few_shot(source, &[], t)
}

pub fn build_few_shot(source: &str, demos: &[SentencePair], t: &Template) -> String {
    let mut out = head(t);
    for d in demos {
        demo_block(&mut out, &d.source_leb, None, &d.target_en);
    }
    open_block(&mut out, source);
    out
}

/// Demonstrations show the gold and the rejected translation joined by the
/// template delimiter, each under its own preference hint.
pub fn build_contrastive_few_shot(
    source: &str,
    demos: &[(SentencePair, String)],
    t: &Template,
) -> Result<String, InstructError> {
    let mut out = head(t);
    for (pair, rejected) in demos {
        check_preference(&pair.id, &pair.target_en, rejected, t)?;
        let response = join_preference(&pair.target_en, rejected.trim(), t);
        demo_block(&mut out, &pair.source_leb, Some(&t.preference_hint), &response);
    }
    open_block(&mut out, source);
    Ok(out)
}

/// One line of a prompt batch file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLine {
    pub id: String,
    pub prompt: String,
    pub mode: PromptMode,
    pub k: usize,
}
