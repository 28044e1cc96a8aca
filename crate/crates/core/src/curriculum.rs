//! Training plans for the single-task and curriculum configurations, written
//! as trainer-ready stage files plus a JSON manifest, and the preference
//! dataset export for CPO-style trainers.
//!
//! A plan directory holds `plan.json` and one `stage-<n>.jsonl` per stage.
//! Dataset paths inside the manifest are relative so the directory can move.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{split_corpus, Corpus, CorpusError, SentencePair};
use crate::instruct::{
    build_contrastive_instruction, build_grammar_instruction_from_pair, build_mt_instruction, check_preference,
    InstructError, InstructionKind, InstructionLine, InstructionRecord, Template,
};
use crate::prompt::build_zero_shot;

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("corpus has {found} pairs; this configuration needs at least {needed}")]
    TooSmall { needed: usize, found: usize },
    #[error("pair {0} has no rejected translation")]
    MissingRejected(String),
    #[error("hyperparameter `{0}` must be positive")]
    InvalidHyperparams(&'static str),
    #[error("stage {stage}: manifest says {expected} records, file has {found}")]
    CountMismatch {
        stage: usize,
        expected: usize,
        found: usize,
    },
    #[error("unknown {what} `{value}`")]
    UnknownName { what: &'static str, value: String },
    #[error(transparent)]
    Instruct(#[from] InstructError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CurriculumError + '_ {
    move |source| CurriculumError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainerHyperparams {
    pub low_rank_adapter_rank: u32,
    pub batch_size: u32,
    pub gradient_accumulation_steps: u32,
    pub epochs: u32,
    pub quantized_base: bool,
}

impl Default for TrainerHyperparams {
    fn default() -> Self {
        TrainerHyperparams {
            low_rank_adapter_rank: 64,
            batch_size: 16,
            gradient_accumulation_steps: 16,
            epochs: 3,
            quantized_base: true,
        }
    }
}

impl TrainerHyperparams {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let fields = [
            ("low_rank_adapter_rank", self.low_rank_adapter_rank),
            ("batch_size", self.batch_size),
            ("gradient_accumulation_steps", self.gradient_accumulation_steps),
            ("epochs", self.epochs),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(CurriculumError::InvalidHyperparams(name)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConfigName {
    #[serde(rename = "Instruct-MT")]
    InstructMt,
    #[serde(rename = "Instruct-Cont")]
    InstructCont,
    #[serde(rename = "Instruct-Grammar")]
    InstructGrammar,
    #[serde(rename = "CONT+MT")]
    ContMt,
    #[serde(rename = "Grammar+CONT+MT")]
    GrammarContMt,
}

impl ConfigName {
    pub const ALL: [ConfigName; 5] = [
        ConfigName::InstructMt,
        ConfigName::InstructCont,
        ConfigName::InstructGrammar,
        ConfigName::ContMt,
        ConfigName::GrammarContMt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfigName::InstructMt => "Instruct-MT",
            ConfigName::InstructCont => "Instruct-Cont",
            ConfigName::InstructGrammar => "Instruct-Grammar",
            ConfigName::ContMt => "CONT+MT",
            ConfigName::GrammarContMt => "Grammar+CONT+MT",
        }
    }

    /// Instruction kind of each stage, in training order.
    pub fn stage_kinds(self) -> &'static [InstructionKind] {
        use InstructionKind::*;
        match self {
            ConfigName::InstructMt => &[Mt],
            ConfigName::InstructCont => &[Contrastive],
            ConfigName::InstructGrammar => &[Grammar],
            ConfigName::ContMt => &[Contrastive, Mt],
            ConfigName::GrammarContMt => &[Grammar, Contrastive, Mt],
        }
    }
}

impl fmt::Display for ConfigName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfigName {
    type Err = CurriculumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConfigName::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| CurriculumError::UnknownName {
                what: "configuration",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataFamily {
    #[serde(rename = "NN")]
    Nn,
    #[serde(rename = "LW")]
    Lw,
}

impl DataFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            DataFamily::Nn => "NN",
            DataFamily::Lw => "LW",
        }
    }
}

impl fmt::Display for DataFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DataFamily {
    type Err = CurriculumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NN" => Ok(DataFamily::Nn),
            "LW" => Ok(DataFamily::Lw),
            _ => Err(CurriculumError::UnknownName {
                what: "data family",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage_index: usize,
    pub instruction_kind: InstructionKind,
    pub dataset_path: String,
    pub record_count: usize,
    pub hyperparams: TrainerHyperparams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurriculumPlan {
    pub name: ConfigName,
    pub data_family: DataFamily,
    pub seed: u64,
    pub template_version: String,
    pub stages: Vec<StageManifest>,
}

impl CurriculumPlan {
    /// System label in result tables, e.g. `Instruct-Cont-LW`.
    pub fn system_name(&self) -> String {
        format!("{}-{}", self.name, self.data_family)
    }
}

/// A plan together with the records of every stage, ready to be written.
#[derive(Debug, Clone, PartialEq)]
pub struct Curriculum {
    pub plan: CurriculumPlan,
    pub stage_records: Vec<Vec<InstructionRecord>>,
}

impl Curriculum {
    fn assemble(
        name: ConfigName,
        family: DataFamily,
        seed: u64,
        hp: &TrainerHyperparams,
        t: &Template,
        stages: Vec<(InstructionKind, Vec<InstructionRecord>)>,
    ) -> Curriculum {
        let mut manifests = Vec::with_capacity(stages.len());
        let mut records = Vec::with_capacity(stages.len());
        for (i, (kind, recs)) in stages.into_iter().enumerate() {
            manifests.push(StageManifest {
                stage_index: i + 1,
                instruction_kind: kind,
                dataset_path: format!("stage-{}.jsonl", i + 1),
                record_count: recs.len(),
                hyperparams: hp.clone(),
            });
            records.push(recs);
        }
        Curriculum {
            plan: CurriculumPlan {
                name,
                data_family: family,
                seed,
                template_version: t.version.clone(),
                stages: manifests,
            },
            stage_records: records,
        }
    }

    /// Pair ids of each stage, in stage order.
    pub fn stage_ids(&self) -> Vec<Vec<String>> {
        self.stage_records
            .iter()
            .map(|recs| recs.iter().filter_map(|r| r.pair_id.clone()).collect())
            .collect()
    }
}

fn render_stage(
    kind: InstructionKind,
    pairs: &[SentencePair],
    rejected: Option<&HashMap<String, String>>,
    t: &Template,
) -> Result<Vec<InstructionRecord>, CurriculumError> {
    pairs
        .iter()
        .map(|p| match kind {
            InstructionKind::Mt => Ok(build_mt_instruction(p, t)),
            InstructionKind::Grammar => Ok(build_grammar_instruction_from_pair(p, t)?),
            InstructionKind::Contrastive => {
                let r = rejected
                    .and_then(|m| m.get(&p.id))
                    .ok_or_else(|| CurriculumError::MissingRejected(p.id.clone()))?;
                Ok(build_contrastive_instruction(p, r, t)?)
            }
        })
        .collect()
}

fn single_config(kind: InstructionKind) -> ConfigName {
    match kind {
        InstructionKind::Mt => ConfigName::InstructMt,
        InstructionKind::Contrastive => ConfigName::InstructCont,
        InstructionKind::Grammar => ConfigName::InstructGrammar,
    }
}

fn halves(corpus: &Corpus, seed: u64) -> Result<(Corpus, Corpus), CurriculumError> {
    if corpus.len() < 2 {
        return Err(CurriculumError::TooSmall {
            needed: 2,
            found: corpus.len(),
        });
    }
    let half = Ratio::new(1, 2);
    let mut parts = split_corpus(corpus, &[half, half], seed)?.into_iter();
    let first = parts.next().expect("two slices");
    let second = parts.next().expect("two slices");
    Ok((first, second))
}

/// One stage over the whole corpus. Contrastive plans need a rejected
/// translation for every pair.
pub fn plan_single_task(
    kind: InstructionKind,
    corpus: &Corpus,
    rejected: Option<&HashMap<String, String>>,
    family: DataFamily,
    hp: &TrainerHyperparams,
    t: &Template,
) -> Result<Curriculum, CurriculumError> {
    hp.validate()?;
    if corpus.is_empty() {
        return Err(CurriculumError::EmptyCorpus("training"));
    }
    let records = render_stage(kind, &corpus.pairs, rejected, t)?;
    Ok(Curriculum::assemble(
        single_config(kind),
        family,
        0,
        hp,
        t,
        vec![(kind, records)],
    ))
}

/// Contrastive stage on the first half of a seeded split, MT on the second.
pub fn plan_cont_mt(
    corpus: &Corpus,
    rejected: &HashMap<String, String>,
    family: DataFamily,
    hp: &TrainerHyperparams,
    seed: u64,
    t: &Template,
) -> Result<Curriculum, CurriculumError> {
    hp.validate()?;
    if corpus.is_empty() {
        return Err(CurriculumError::EmptyCorpus("training"));
    }
    let (cont, mt) = halves(corpus, seed)?;
    let stages = vec![
        (
            InstructionKind::Contrastive,
            render_stage(InstructionKind::Contrastive, &cont.pairs, Some(rejected), t)?,
        ),
        (
            InstructionKind::Mt,
            render_stage(InstructionKind::Mt, &mt.pairs, None, t)?,
        ),
    ];
    Ok(Curriculum::assemble(ConfigName::ContMt, family, seed, hp, t, stages))
}

/// Grammar stage over the whole grammar corpus, then the contrastive/MT
/// split of the translation corpus.
pub fn plan_grammar_cont_mt(
    grammar: &Corpus,
    mt_corpus: &Corpus,
    rejected: &HashMap<String, String>,
    family: DataFamily,
    hp: &TrainerHyperparams,
    seed: u64,
    t: &Template,
) -> Result<Curriculum, CurriculumError> {
    hp.validate()?;
    if grammar.is_empty() {
        return Err(CurriculumError::EmptyCorpus("grammar"));
    }
    if mt_corpus.is_empty() {
        return Err(CurriculumError::EmptyCorpus("translation"));
    }
    let (cont, mt) = halves(mt_corpus, seed)?;
    let stages = vec![
        (
            InstructionKind::Grammar,
            render_stage(InstructionKind::Grammar, &grammar.pairs, None, t)?,
        ),
        (
            InstructionKind::Contrastive,
            render_stage(InstructionKind::Contrastive, &cont.pairs, Some(rejected), t)?,
        ),
        (
            InstructionKind::Mt,
            render_stage(InstructionKind::Mt, &mt.pairs, None, t)?,
        ),
    ];
    Ok(Curriculum::assemble(
        ConfigName::GrammarContMt,
        family,
        seed,
        hp,
        t,
        stages,
    ))
}

pub fn write_instruction_jsonl(
    records: &[InstructionRecord],
    t: &Template,
    path: &Path,
) -> Result<(), CurriculumError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = InstructionLine::from_record(r, t)?;
        serde_json::to_writer(&mut out, &line).map_err(|e| CurriculumError::Io {
            path: path.display().to_string(),
            source: e.into(),
        })?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

pub fn count_lines(path: &Path) -> Result<usize, CurriculumError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).count())
}

/// Writes stage files and `plan.json` under `dir`, re-reading each stage
/// file to confirm its record count.
pub fn write_plan(c: &Curriculum, t: &Template, dir: &Path) -> Result<(), CurriculumError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (manifest, records) in c.plan.stages.iter().zip(&c.stage_records) {
        let path = dir.join(&manifest.dataset_path);
        write_instruction_jsonl(records, t, &path)?;
        let found = count_lines(&path)?;
        if found != manifest.record_count {
            return Err(CurriculumError::CountMismatch {
                stage: manifest.stage_index,
                expected: manifest.record_count,
                found,
            });
        }
    }
    let plan_path = dir.join("plan.json");
    let json = serde_json::to_string_pretty(&c.plan).expect("plan serializes");
    fs::write(&plan_path, json + "\n").map_err(io_err(&plan_path))
}

pub fn load_plan(dir: &Path) -> Result<CurriculumPlan, CurriculumError> {
    let path = dir.join("plan.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| CurriculumError::Io {
        path: path.display().to_string(),
        source: e.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
}

pub fn preference_records(
    pairs: &[(SentencePair, String)],
    t: &Template,
) -> Result<Vec<PreferenceRecord>, CurriculumError> {
    pairs
        .iter()
        .map(|(pair, rejected)| {
            check_preference(&pair.id, &pair.target_en, rejected, t)?;
            Ok(PreferenceRecord {
                prompt: build_zero_shot(&pair.source_leb, t),
                chosen: pair.target_en.clone(),
                rejected: rejected.trim().to_string(),
            })
        })
        .collect()
}

/// Writes `{prompt, chosen, rejected}` JSONL and returns the record count.
pub fn export_cpo_dataset(
    pairs: &[(SentencePair, String)],
    t: &Template,
    path: &Path,
) -> Result<usize, CurriculumError> {
    let records = preference_records(pairs, t)?;
    let mut out = String::new();
    for r in &records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))?;
    Ok(records.len())
}
