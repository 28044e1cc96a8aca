//! Test-set evaluation runs, result-table aggregation and the few-shot
//! ablation grid.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SentencePair, TestSet};
use crate::genclient::{
    embed_batch, generate_translation, map_bounded, score_translations, ChatBackend, EmbedInput, EmbeddingBackend,
    EmbeddingVector, Endpoints, GenError, GenerationConfig, ScoreItem, ScoredSentence, ScoringBackend,
};
use crate::instruct::{check_preference, InstructError, Template};
use crate::prompt::{
    build_contrastive_few_shot, build_few_shot, build_zero_shot, PromptMode, PromptSpec, DEFAULT_STOP,
};
use crate::select::{select_demos, ExamplePool, FrequencyMatrix, SelectError, SelectionStrategy, StrategyKind};

pub use crate::metric::compute_chrf;

/// Share of sentences allowed to fail before a run is rejected.
pub const FAILURE_BUDGET: f64 = 0.05;
pub const ABLATION_KS: [usize; 3] = [3, 5, 7];
pub const AGGREGATION: &str = "sentence_mean";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{failed} of {total} sentences failed, above the {budget}% budget")]
    TooManyFailures { failed: usize, total: usize, budget: f64 },
    #[error("test set `{0}` is empty")]
    EmptyTestSet(String),
    #[error("inconsistent result grid: {0}")]
    InconsistentGrid(String),
    #[error("invalid evaluation setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Instruct(#[from] InstructError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Everything needed to re-run an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub generation: GenerationConfig,
    pub strategy: SelectionStrategy,
    pub template_version: String,
    pub scorer: String,
    pub aggregation: String,
    pub endpoints: Endpoints,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedSentence {
    pub pair_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub system_name: String,
    pub test_set: String,
    pub mode: PromptMode,
    pub k: usize,
    pub scores: Vec<ScoredSentence>,
    #[serde(default)]
    pub failures: Vec<FailedSentence>,
    pub config: EvalSnapshot,
}

impl EvalRun {
    /// Arithmetic mean of the sentence scores; `None` for a run with none.
    pub fn mean_score(&self) -> Option<f64> {
        mean(self.scores.iter().map(|s| s.score))
    }

    pub fn label(&self) -> String {
        self.mode.label(self.k)
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let json = serde_json::to_string_pretty(self).map_err(|e| io_err(path, e))?;
        fs::write(path, json + "\n").map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| io_err(path, e))
    }
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Backends and side data shared by every sentence of a run.
pub struct EvalContext<'a> {
    pub chat: &'a dyn ChatBackend,
    pub scorer: &'a dyn ScoringBackend,
    pub scorer_name: String,
    pub embedder: Option<&'a dyn EmbeddingBackend>,
    pub pool: Option<&'a ExamplePool>,
    /// Rejected translations for pool pairs, keyed by pair id.
    pub rejected: Option<&'a HashMap<String, String>>,
    pub matrix: Option<&'a FrequencyMatrix>,
    pub endpoints: Endpoints,
    pub in_flight: usize,
}

enum Demos {
    None,
    Plain(Vec<SentencePair>),
    Contrastive(Vec<(SentencePair, String)>),
}

fn contrastive_pool(pool: &ExamplePool, rejected: &HashMap<String, String>, t: &Template) -> ExamplePool {
    pool.filtered(|p| {
        rejected
            .get(&p.id)
            .is_some_and(|r| check_preference(&p.id, &p.target_en, r, t).is_ok())
    })
}

fn choose_demos(ctx: &EvalContext<'_>, spec: &PromptSpec, test_set: &TestSet) -> Result<Vec<Demos>, EvalError> {
    if spec.mode == PromptMode::ZeroShot {
        return Ok(test_set.pairs.iter().map(|_| Demos::None).collect());
    }
    let base = ctx
        .pool
        .ok_or_else(|| EvalError::InvalidSetup("few-shot prompting needs a demonstration pool".into()))?;
    let filtered;
    let pool = match spec.mode {
        PromptMode::ContrastiveFewShot => {
            let rejected = ctx.rejected.ok_or_else(|| {
                EvalError::InvalidSetup("contrastive prompting needs rejected translations for the pool".into())
            })?;
            filtered = contrastive_pool(base, rejected, &spec.template);
            &filtered
        }
        _ => base,
    };
    let strategy = SelectionStrategy {
        k: spec.k,
        ..spec.strategy.clone()
    };
    let queries: Option<Vec<EmbeddingVector>> = match strategy.kind {
        StrategyKind::Embedding => {
            let embedder = ctx
                .embedder
                .ok_or_else(|| EvalError::InvalidSetup("embedding selection needs an embedding backend".into()))?;
            let inputs: Vec<EmbedInput<'_>> = test_set
                .pairs
                .iter()
                .map(|p| EmbedInput {
                    id: &p.id,
                    text: &p.source_leb,
                })
                .collect();
            Some(embed_batch(embedder, &inputs)?)
        }
        _ => None,
    };

    let mut out = Vec::with_capacity(test_set.pairs.len());
    for (i, pair) in test_set.pairs.iter().enumerate() {
        let q = queries.as_ref().map(|v| &v[i]);
        let seed = strategy.seed.wrapping_add(i as u64);
        let sel = select_demos(&strategy, pool, &pair.source_leb, q, ctx.matrix, seed)?;
        out.push(match spec.mode {
            PromptMode::ContrastiveFewShot => {
                let rejected = ctx.rejected.expect("checked above");
                Demos::Contrastive(
                    sel.pairs
                        .into_iter()
                        .map(|p| {
                            let r = rejected[&p.id].clone();
                            (p, r)
                        })
                        .collect(),
                )
            }
            _ => Demos::Plain(sel.pairs),
        });
    }
    Ok(out)
}

fn build_prompt(source: &str, demos: &Demos, t: &Template) -> Result<String, InstructError> {
    match demos {
        Demos::None => Ok(build_zero_shot(source, t)),
        Demos::Plain(d) => Ok(build_few_shot(source, d, t)),
        Demos::Contrastive(d) => build_contrastive_few_shot(source, d, t),
    }
}

/// Builds every prompt a run would send, in test-set order.
pub fn build_prompts(ctx: &EvalContext<'_>, test_set: &TestSet, spec: &PromptSpec) -> Result<Vec<String>, EvalError> {
    spec.validate().map_err(EvalError::InvalidSetup)?;
    let demos = choose_demos(ctx, spec, test_set)?;
    test_set
        .pairs
        .iter()
        .zip(&demos)
        .map(|(p, d)| Ok(build_prompt(&p.source_leb, d, &spec.template)?))
        .collect()
}

/// Translates and scores every pair of `test_set`. Sentences whose
/// generation fails are listed in the run and left out of the mean; more
/// than the failure budget fails the whole run.
pub fn run_eval(
    ctx: &EvalContext<'_>,
    system: &str,
    test_set: &TestSet,
    spec: &PromptSpec,
    cfg: &GenerationConfig,
) -> Result<EvalRun, EvalError> {
    if test_set.pairs.is_empty() {
        return Err(EvalError::EmptyTestSet(test_set.name.clone()));
    }
    let prompts = build_prompts(ctx, test_set, spec)?;
    let gen_cfg = cfg.clone().with_stop(DEFAULT_STOP);
    let outputs = map_bounded(&prompts, ctx.in_flight, |_, prompt| {
        generate_translation(ctx.chat, prompt, &gen_cfg)
    });

    let mut items = Vec::new();
    let mut failures = Vec::new();
    for (pair, out) in test_set.pairs.iter().zip(outputs) {
        match out {
            Ok(hyp) => items.push(ScoreItem {
                pair_id: pair.id.clone(),
                source: pair.source_leb.clone(),
                hypothesis: hyp,
                reference: Some(pair.target_en.clone()),
            }),
            Err(e) => failures.push(FailedSentence {
                pair_id: pair.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let total = test_set.pairs.len();
    if failures.len() as f64 > FAILURE_BUDGET * total as f64 {
        return Err(EvalError::TooManyFailures {
            failed: failures.len(),
            total,
            budget: FAILURE_BUDGET * 100.0,
        });
    }
    let scores = score_translations(ctx.scorer, &items)?;
    Ok(EvalRun {
        system_name: system.to_string(),
        test_set: test_set.name.clone(),
        mode: spec.mode,
        k: spec.k,
        scores,
        failures,
        config: EvalSnapshot {
            generation: gen_cfg,
            strategy: spec.strategy.clone(),
            template_version: spec.template.version.clone(),
            scorer: ctx.scorer_name.clone(),
            aggregation: AGGREGATION.to_string(),
            endpoints: ctx.endpoints.clone(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Column {
    pub test_set: String,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<String>,
    pub columns: Vec<Column>,
    /// Full-precision means; `None` where no run exists.
    pub cells: Vec<Vec<Option<f64>>>,
    pub bold: Vec<Vec<bool>>,
}

fn round1(v: f64) -> f64 {
    format!("{v:.1}").parse().expect("formatted float parses")
}

/// Rows and columns follow first appearance in `runs`. The best rounded
/// score in each column is bolded, all of them when tied.
pub fn aggregate_table(runs: &[EvalRun]) -> Result<ResultsTable, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::InconsistentGrid("no runs".into()));
    }
    let mut rows: Vec<String> = Vec::new();
    let mut columns: Vec<Column> = Vec::new();
    let mut placed: HashMap<(usize, usize), f64> = HashMap::new();
    for run in runs {
        let mean = run.mean_score().ok_or_else(|| {
            EvalError::InconsistentGrid(format!("{} on {} has no scores", run.system_name, run.test_set))
        })?;
        let col = Column {
            test_set: run.test_set.clone(),
            mode: run.label(),
        };
        let r = rows.iter().position(|x| *x == run.system_name).unwrap_or_else(|| {
            rows.push(run.system_name.clone());
            rows.len() - 1
        });
        let c = columns.iter().position(|x| *x == col).unwrap_or_else(|| {
            columns.push(col.clone());
            columns.len() - 1
        });
        if placed.insert((r, c), mean).is_some() {
            return Err(EvalError::InconsistentGrid(format!(
                "two runs for {} / {} {}",
                run.system_name, col.test_set, col.mode
            )));
        }
    }
    let cells: Vec<Vec<Option<f64>>> = (0..rows.len())
        .map(|r| (0..columns.len()).map(|c| placed.get(&(r, c)).copied()).collect())
        .collect();
    let mut bold = vec![vec![false; columns.len()]; rows.len()];
    for c in 0..columns.len() {
        let best = cells
            .iter()
            .filter_map(|row| row[c].map(round1))
            .fold(f64::NEG_INFINITY, f64::max);
        for r in 0..rows.len() {
            bold[r][c] = cells[r][c].is_some_and(|v| round1(v) == best);
        }
    }
    Ok(ResultsTable {
        rows,
        columns,
        cells,
        bold,
    })
}

impl ResultsTable {
    pub fn cell(&self, system: &str, test_set: &str, mode: &str) -> Option<f64> {
        let r = self.rows.iter().position(|x| x == system)?;
        let c = self
            .columns
            .iter()
            .position(|col| col.test_set == test_set && col.mode == mode)?;
        self.cells[r][c]
    }

    pub fn is_bold(&self, system: &str, test_set: &str, mode: &str) -> bool {
        let r = self.rows.iter().position(|x| x == system);
        let c = self
            .columns
            .iter()
            .position(|col| col.test_set == test_set && col.mode == mode);
        matches!((r, c), (Some(r), Some(c)) if self.bold[r][c])
    }

    /// Aligned text with bold cells written as `**74.4**` and missing
    /// cells as `-`.
    pub fn render_text(&self) -> String {
        let mut header = vec!["System".to_string()];
        header.extend(self.columns.iter().map(|c| format!("{} {}", c.test_set, c.mode)));
        let mut lines = vec![header];
        for (r, name) in self.rows.iter().enumerate() {
            let mut line = vec![name.clone()];
            for c in 0..self.columns.len() {
                line.push(match self.cells[r][c] {
                    None => "-".to_string(),
                    Some(v) if self.bold[r][c] => format!("**{v:.1}**"),
                    Some(v) => format!("{v:.1}"),
                });
            }
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in &lines {
            let cells: Vec<String> = line
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let pad = widths[i] - s.chars().count();
                    if i == 0 {
                        format!("{s}{}", " ".repeat(pad))
                    } else {
                        format!("{}{s}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }

    /// One row per system; bold cells carry a trailing `*`.
    pub fn render_csv(&self) -> String {
        let mut out = String::from("system");
        for c in &self.columns {
            let _ = write!(out, ",{} {}", c.test_set, c.mode);
        }
        out.push('\n');
        for (r, name) in self.rows.iter().enumerate() {
            out.push_str(name);
            for c in 0..self.columns.len() {
                out.push(',');
                if let Some(v) = self.cells[r][c] {
                    let _ = write!(out, "{v:.1}{}", if self.bold[r][c] { "*" } else { "" });
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub strategy: StrategyKind,
    pub k: usize,
    pub mean_score: f64,
    pub n_sentences: usize,
}

/// Few-shot runs over every (strategy, k) cell, strategies in the order
/// given and k ascending within each.
#[allow(clippy::too_many_arguments)]
pub fn ablation_sweep(
    ctx: &EvalContext<'_>,
    system: &str,
    strategies: &[SelectionStrategy],
    ks: &[usize],
    test_set: &TestSet,
    cfg: &GenerationConfig,
    template: &Template,
) -> Result<Vec<AblationRow>, EvalError> {
    if strategies.is_empty() || ks.is_empty() {
        return Err(EvalError::InvalidSetup(
            "ablation needs at least one strategy and one k".into(),
        ));
    }
    if let Some(k) = ks.iter().find(|k| !ABLATION_KS.contains(k)) {
        return Err(EvalError::InvalidSetup(format!("k = {k} is outside {{3, 5, 7}}")));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut rows = Vec::new();
    for strategy in strategies {
        for &k in &ks {
            let s = SelectionStrategy { k, ..strategy.clone() };
            let spec = PromptSpec::new(PromptMode::FewShot, s, template.clone());
            let run = run_eval(ctx, system, test_set, &spec, cfg)?;
            rows.push(AblationRow {
                strategy: strategy.kind,
                k,
                mean_score: run.mean_score().unwrap_or(0.0),
                n_sentences: run.scores.len(),
            });
        }
    }
    Ok(rows)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("strategy,k,mean_score,n_sentences\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{:.6},{}", r.strategy, r.k, r.mean_score, r.n_sentences);
    }
    out
}
