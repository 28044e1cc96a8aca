use std::collections::HashMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use log::{info, warn};
use serde::Serialize;
use serde_json::json;

use forge_core::corpus::{
    dedup, load_corpus, load_test_set, parse_fractions, split_corpus, Corpus, CorpusFormat, Origin, SentencePair,
    TestSet, TestSetKind,
};
use forge_core::curriculum::{
    export_cpo_dataset, plan_cont_mt, plan_grammar_cont_mt, plan_single_task, write_instruction_jsonl, write_plan,
    ConfigName, CurriculumError, DataFamily, TrainerHyperparams,
};
use forge_core::evaluate::{
    ablation_csv, ablation_sweep, aggregate_table, build_prompts, run_eval, EvalContext, EvalRun,
};
use forge_core::genclient::{
    embed_batch, generate_rejected, load_rejected, synthesize_grammar_examples, ChatBackend, EmbedInput,
    EmbeddingBackend, Endpoints, GenError, GenerationConfig, InFlightLimiter, LocalChrfScorer, RejectedOptions,
    RetryPolicy, ScoreScale, ScoringBackend, SidecarEmbeddings,
};
use forge_core::instruct::{
    build_contrastive_instruction, build_grammar_instruction_from_pair, build_mt_instruction, InstructionKind,
    InstructionRecord, Template,
};
use forge_core::prompt::{PromptLine, PromptMode, PromptSpec};
use forge_core::select::{
    build_frequency_matrix, select_demos, ExamplePool, FrequencyMatrix, SelectionStrategy, StrategyKind,
};
use forge_core::transliterate::{transliterate, CompiledRules, RuleTable};

use crate::failure::usage;
use crate::{
    AblateArgs, BuildFreqMatrixArgs, BuildInstructionsArgs, BuildPromptsArgs, Cli, Command, EvaluateArgs,
    ExportCpoArgs, GenRejectedArgs, GlobalArgs, IngestArgs, ModelArgs, PlanCurriculumArgs, ReportArgs, ScoringArgs,
    SelectDemosArgs, SelectionArgs, SynthGrammarArgs, TestSetArgs, TransliterateArgs,
};

pub fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Ingest(a) => ingest(g, a),
        Command::Transliterate(a) => transliterate_cmd(g, a),
        Command::BuildInstructions(a) => build_instructions(g, a),
        Command::GenRejected(a) => gen_rejected(g, a),
        Command::SynthGrammar(a) => synth_grammar(g, a),
        Command::BuildFreqMatrix(a) => build_freq_matrix(g, a),
        Command::SelectDemos(a) => select_demos_cmd(g, a),
        Command::BuildPrompts(a) => build_prompts_cmd(g, a),
        Command::PlanCurriculum(a) => plan_curriculum(g, a),
        Command::ExportCpo(a) => export_cpo(g, a),
        Command::Evaluate(a) => evaluate(g, a),
        Command::Ablate(a) => ablate(g, a),
        Command::Report(a) => report(g, a),
    }?;
    if let Some(out) = &g.out {
        write_snapshot(out, g, &cli.command)?;
    }
    Ok(())
}

fn out_path(g: &GlobalArgs) -> Result<&Path> {
    g.out.as_deref().ok_or_else(|| usage("this command needs --out"))
}

fn template(g: &GlobalArgs) -> Result<Template> {
    Ok(Template::by_version(&g.template_version)?)
}

/// `run.json` gets `run.json.config.json`; a directory gets `config.json`.
fn snapshot_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("config.json")
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".config.json");
        out.with_file_name(name)
    }
}

fn write_snapshot(out: &Path, g: &GlobalArgs, command: &Command) -> Result<()> {
    let snapshot = json!({
        "forge_version": env!("CARGO_PKG_VERSION"),
        "seed": g.seed,
        "template_version": g.template_version,
        "command": command,
        "endpoints": Endpoints::from_env(),
    });
    let path = snapshot_path(out);
    fs::write(&path, serde_json::to_string_pretty(&snapshot)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>, path: &Path) -> Result<usize> {
    let mut out = String::new();
    let mut n = 0;
    for item in items {
        out.push_str(&serde_json::to_string(&item)?);
        out.push('\n');
        n += 1;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(n)
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    Ok(load_corpus(path, CorpusFormat::from_path(path), Origin::Other)?)
}

fn read_test_set(a: &TestSetArgs) -> Result<TestSet> {
    let kind: TestSetKind = a.test_kind.parse()?;
    Ok(load_test_set(&a.test_set, kind)?)
}

fn parse_kind(s: &str) -> Result<InstructionKind> {
    s.parse::<InstructionKind>().map_err(|e| usage(e.to_string()))
}

fn ingest(g: &GlobalArgs, a: &IngestArgs) -> Result<()> {
    let out = out_path(g)?;
    let format = match &a.format {
        Some(f) => f.parse::<CorpusFormat>()?,
        None => CorpusFormat::from_path(&a.input),
    };
    let origin: Origin = a.origin.parse()?;
    let mut corpus = load_corpus(&a.input, format, origin)?;
    if a.dedup {
        corpus = dedup(&corpus);
    }
    if let Some(kind) = &a.expect {
        let kind: TestSetKind = kind.parse()?;
        TestSet::from_pairs(kind, corpus.pairs.clone())?;
    }
    corpus.save_jsonl(out)?;
    if let Some(split) = &a.split {
        let fractions = parse_fractions(split)?;
        for (i, part) in split_corpus(&corpus, &fractions, g.seed)?.iter().enumerate() {
            let path = out.with_extension(format!("part{}.jsonl", i + 1));
            part.save_jsonl(&path)?;
        }
    }
    info!("{}: {} pairs", out.display(), corpus.len());
    Ok(())
}

fn transliterate_cmd(g: &GlobalArgs, a: &TransliterateArgs) -> Result<()> {
    let rules = match &a.rules {
        Some(p) => RuleTable::load(p)?.compile()?,
        None => CompiledRules::v1(),
    };
    let text = match &a.input {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let result = transliterate(&text, &rules);
    for (offset, c) in &result.unmapped {
        warn!("no rule for {c:?} at char {offset}");
    }
    match &g.out {
        Some(p) => fs::write(p, &result.output)?,
        None => io::stdout().write_all(result.output.as_bytes())?,
    }
    Ok(())
}

fn rejected_map(path: Option<&Path>) -> Result<Option<HashMap<String, String>>> {
    path.map(|p| load_rejected(p).with_context(|| format!("reading {}", p.display())))
        .transpose()
}

fn build_instructions(g: &GlobalArgs, a: &BuildInstructionsArgs) -> Result<()> {
    let t = template(g)?;
    let kind = parse_kind(&a.kind)?;
    let corpus = read_corpus(&a.corpus)?;
    let rejected = rejected_map(a.rejected.as_deref())?;
    let records: Vec<InstructionRecord> = corpus
        .pairs
        .iter()
        .map(|p| -> Result<InstructionRecord> {
            Ok(match kind {
                InstructionKind::Mt => build_mt_instruction(p, &t),
                InstructionKind::Grammar => build_grammar_instruction_from_pair(p, &t)?,
                InstructionKind::Contrastive => {
                    let r = rejected
                        .as_ref()
                        .and_then(|m| m.get(&p.id))
                        .ok_or_else(|| CurriculumError::MissingRejected(p.id.clone()))?;
                    build_contrastive_instruction(p, r, &t)?
                }
            })
        })
        .collect::<Result<_>>()?;
    write_instruction_jsonl(&records, &t, out_path(g)?)?;
    info!("{} {kind} records", records.len());
    Ok(())
}

fn limiter(m: &ModelArgs) -> Arc<InFlightLimiter> {
    Arc::new(InFlightLimiter::new(m.in_flight))
}

fn gen_config(g: &GlobalArgs, m: &ModelArgs, temperature: f64) -> GenerationConfig {
    GenerationConfig {
        temperature,
        max_new_tokens: m.max_new_tokens,
        seed: Some(g.seed),
        ..GenerationConfig::new(m.model.clone())
    }
}

fn gen_rejected(g: &GlobalArgs, a: &GenRejectedArgs) -> Result<()> {
    let out = out_path(g)?;
    let t = template(g)?;
    let corpus = read_corpus(&a.corpus)?;
    let chat = Endpoints::from_env().chat_client(&limiter(&a.model), &RetryPolicy::default())?;
    let opts = RejectedOptions {
        resamples: a.resamples,
        in_flight: a.model.in_flight,
    };
    let batch = generate_rejected(&chat, &corpus.pairs, &gen_config(g, &a.model, a.temperature), &t, &opts)?;
    batch.write_jsonl(out)?;
    if !batch.dropped.is_empty() {
        warn!(
            "{} pairs dropped after every draw matched the gold translation",
            batch.dropped.len()
        );
    }
    Ok(())
}

fn synth_grammar(g: &GlobalArgs, a: &SynthGrammarArgs) -> Result<()> {
    let out = out_path(g)?;
    let text = fs::read_to_string(&a.chapter).with_context(|| format!("reading {}", a.chapter.display()))?;
    let chat = Endpoints::from_env().chat_client(&limiter(&a.model), &RetryPolicy::default())?;
    let cfg = gen_config(g, &a.model, a.temperature);
    let outcome = synthesize_grammar_examples(&chat, &text, a.chapter_index, &cfg, a.n, a.model.in_flight)?;
    // The corpus file loads as an LGID corpus; the examples file keeps rule titles.
    let corpus = Corpus::new("lgid", outcome.examples.iter().map(|e| e.pair.clone()).collect());
    corpus.save_jsonl(out)?;
    write_jsonl(&outcome.examples, &out.with_extension("examples.jsonl"))?;
    if outcome.discarded > 0 {
        warn!("{} malformed examples discarded", outcome.discarded);
    }
    Ok(())
}

fn build_freq_matrix(g: &GlobalArgs, a: &BuildFreqMatrixArgs) -> Result<()> {
    let paths: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    build_frequency_matrix(&paths)?.save(out_path(g)?)?;
    Ok(())
}

fn strategy(g: &GlobalArgs, kind: &str, s: &SelectionArgs) -> Result<SelectionStrategy> {
    let kind: StrategyKind = kind.parse().map_err(usage)?;
    let mut st = SelectionStrategy::new(kind, s.k, g.seed);
    if let Some(t) = s.threshold {
        st.threshold = Some(t);
    }
    st.validate()?;
    Ok(st)
}

/// Pool, matrix, rejected map and embedder needed by `kinds`.
struct SelectionData {
    pool: Option<ExamplePool>,
    matrix: Option<FrequencyMatrix>,
    rejected: Option<HashMap<String, String>>,
    embedder: Option<Box<dyn EmbeddingBackend>>,
}

fn selection_data(
    s: &SelectionArgs,
    kinds: &[StrategyKind],
    needs_pool: bool,
    limiter: &Arc<InFlightLimiter>,
) -> Result<SelectionData> {
    let rejected = rejected_map(s.rejected.as_deref())?;
    if !needs_pool {
        return Ok(SelectionData {
            pool: None,
            matrix: None,
            rejected,
            embedder: None,
        });
    }
    let pool_path = s
        .pool
        .as_deref()
        .ok_or_else(|| usage("few-shot selection needs --pool"))?;
    let pairs = read_corpus(pool_path)?.pairs;
    if let Some(r) = &rejected {
        let covered = pairs.iter().filter(|p| r.contains_key(&p.id)).count();
        if covered < pairs.len() {
            warn!("rejected translations cover {covered} of {} pool pairs", pairs.len());
        }
    }
    let matrix = if kinds.contains(&StrategyKind::Frequency) {
        let p = s
            .freq_matrix
            .as_deref()
            .ok_or_else(|| usage("frequency selection needs --freq-matrix"))?;
        Some(FrequencyMatrix::load(p)?)
    } else {
        None
    };
    let (pool, embedder) = if kinds.contains(&StrategyKind::Embedding) {
        let embedder: Box<dyn EmbeddingBackend> = match &s.vectors {
            Some(p) => Box::new(SidecarEmbeddings::load(p)?),
            None => {
                Box::new(Endpoints::from_env().embedding_client(&s.embed_model, limiter, &RetryPolicy::default())?)
            }
        };
        let inputs: Vec<EmbedInput<'_>> = pairs
            .iter()
            .map(|p| EmbedInput {
                id: &p.id,
                text: &p.source_leb,
            })
            .collect();
        let vectors = embed_batch(embedder.as_ref(), &inputs)?;
        (ExamplePool::with_vectors(pairs, vectors)?, Some(embedder))
    } else {
        (ExamplePool::new(pairs), None)
    };
    Ok(SelectionData {
        pool: Some(pool),
        matrix,
        rejected,
        embedder,
    })
}

#[derive(Serialize)]
struct DemoLine<'a> {
    id: &'a str,
    demos: Vec<&'a str>,
    clamped: bool,
}

fn select_demos_cmd(g: &GlobalArgs, a: &SelectDemosArgs) -> Result<()> {
    let st = strategy(g, &a.selection.strategy, &a.selection)?;
    let queries = read_corpus(&a.queries)?;
    let data = selection_data(&a.selection, &[st.kind], true, &Arc::new(InFlightLimiter::default()))?;
    let pool = data.pool.as_ref().expect("pool loaded");
    let query_vectors = match &data.embedder {
        Some(e) => {
            let inputs: Vec<EmbedInput<'_>> = queries
                .pairs
                .iter()
                .map(|p| EmbedInput {
                    id: &p.id,
                    text: &p.source_leb,
                })
                .collect();
            Some(embed_batch(e.as_ref(), &inputs)?)
        }
        None => None,
    };
    let mut selections = Vec::with_capacity(queries.len());
    for (i, q) in queries.pairs.iter().enumerate() {
        let v = query_vectors.as_ref().map(|vs| &vs[i]);
        let seed = st.seed.wrapping_add(i as u64);
        selections.push(select_demos(&st, pool, &q.source_leb, v, data.matrix.as_ref(), seed)?);
    }
    let lines = queries.pairs.iter().zip(&selections).map(|(q, s)| DemoLine {
        id: &q.id,
        demos: s.ids(),
        clamped: s.clamped,
    });
    write_jsonl(lines, out_path(g)?)?;
    Ok(())
}

fn prompt_spec(g: &GlobalArgs, mode: &str, s: &SelectionArgs) -> Result<PromptSpec> {
    let mode: PromptMode = mode.parse().map_err(usage)?;
    let st = strategy(g, &s.strategy, s)?;
    let spec = PromptSpec::new(mode, st, template(g)?);
    spec.validate().map_err(usage)?;
    Ok(spec)
}

fn context<'a>(
    chat: &'a dyn ChatBackend,
    scorer: &'a dyn ScoringBackend,
    scorer_name: &str,
    data: &'a SelectionData,
    in_flight: usize,
) -> EvalContext<'a> {
    EvalContext {
        chat,
        scorer,
        scorer_name: scorer_name.to_string(),
        embedder: data.embedder.as_deref(),
        pool: data.pool.as_ref(),
        rejected: data.rejected.as_ref(),
        matrix: data.matrix.as_ref(),
        endpoints: Endpoints::from_env(),
        in_flight,
    }
}

/// Chat backend that refuses every request; prompt building never calls it.
struct NoChat;

impl ChatBackend for NoChat {
    fn complete(&self, _: &str, _: &GenerationConfig) -> Result<String, GenError> {
        Err(GenError::ConfigMissing(
            "no chat endpoint while building prompts".into(),
        ))
    }
}

fn build_prompts_cmd(g: &GlobalArgs, a: &BuildPromptsArgs) -> Result<()> {
    let spec = prompt_spec(g, &a.mode, &a.selection)?;
    let test = read_test_set(&a.test)?;
    let needs_pool = spec.mode != PromptMode::ZeroShot;
    let data = selection_data(
        &a.selection,
        &[spec.strategy.kind],
        needs_pool,
        &Arc::new(InFlightLimiter::default()),
    )?;
    let ctx = context(&NoChat, &LocalChrfScorer, "none", &data, 1);
    let prompts = build_prompts(&ctx, &test, &spec)?;
    let lines = test.pairs.iter().zip(prompts).map(|(p, prompt)| PromptLine {
        id: p.id.clone(),
        prompt,
        mode: spec.mode,
        k: spec.k,
    });
    write_jsonl(lines, out_path(g)?)?;
    Ok(())
}

fn hyperparams(a: &PlanCurriculumArgs) -> TrainerHyperparams {
    let d = TrainerHyperparams::default();
    TrainerHyperparams {
        low_rank_adapter_rank: a.lora_rank.unwrap_or(d.low_rank_adapter_rank),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        gradient_accumulation_steps: a.grad_accum.unwrap_or(d.gradient_accumulation_steps),
        epochs: a.epochs.unwrap_or(d.epochs),
        quantized_base: d.quantized_base,
    }
}

fn plan_curriculum(g: &GlobalArgs, a: &PlanCurriculumArgs) -> Result<()> {
    let out = out_path(g)?;
    let t = template(g)?;
    let name: ConfigName = a.config.parse()?;
    let family: DataFamily = a.data.parse()?;
    let hp = hyperparams(a);
    let rejected = rejected_map(a.rejected.as_deref())?;
    let need = |p: &Option<PathBuf>, flag: &str| -> Result<Corpus> {
        let p = p.as_deref().ok_or_else(|| usage(format!("{name} needs --{flag}")))?;
        read_corpus(p)
    };
    let need_rejected = || {
        rejected
            .as_ref()
            .ok_or_else(|| usage(format!("{name} needs --rejected")))
    };
    let plan = match name {
        ConfigName::InstructMt => {
            plan_single_task(InstructionKind::Mt, &need(&a.corpus, "corpus")?, None, family, &hp, &t)?
        }
        ConfigName::InstructCont => plan_single_task(
            InstructionKind::Contrastive,
            &need(&a.corpus, "corpus")?,
            Some(need_rejected()?),
            family,
            &hp,
            &t,
        )?,
        ConfigName::InstructGrammar => plan_single_task(
            InstructionKind::Grammar,
            &need(&a.grammar, "grammar")?,
            None,
            family,
            &hp,
            &t,
        )?,
        ConfigName::ContMt => plan_cont_mt(&need(&a.corpus, "corpus")?, need_rejected()?, family, &hp, g.seed, &t)?,
        ConfigName::GrammarContMt => plan_grammar_cont_mt(
            &need(&a.grammar, "grammar")?,
            &need(&a.corpus, "corpus")?,
            need_rejected()?,
            family,
            &hp,
            g.seed,
            &t,
        )?,
    };
    write_plan(&plan, &t, out)?;
    Ok(())
}

fn export_cpo(g: &GlobalArgs, a: &ExportCpoArgs) -> Result<()> {
    let t = template(g)?;
    let corpus = read_corpus(&a.corpus)?;
    let rejected = load_rejected(&a.rejected)?;
    let triples: Vec<(SentencePair, String)> = corpus
        .pairs
        .into_iter()
        .filter_map(|p| rejected.get(&p.id).map(|r| (p.clone(), r.clone())))
        .collect();
    let n = export_cpo_dataset(&triples, &t, out_path(g)?)?;
    info!("{n} preference records");
    Ok(())
}

type Backends = (Box<dyn ChatBackend>, Box<dyn ScoringBackend>, &'static str);

/// Chat client and scorer for an evaluation. The remote scorer is used
/// unless `--local-metric` asks for chrF.
fn eval_backends(s: &ScoringArgs, limiter: &Arc<InFlightLimiter>) -> Result<Backends> {
    let ep = Endpoints::from_env();
    let retry = RetryPolicy::default();
    let chat = Box::new(ep.chat_client(limiter, &retry)?);
    if s.local_metric {
        return Ok((chat, Box::new(LocalChrfScorer), "chrf"));
    }
    let scale = match s.score_scale.as_str() {
        "percent" => ScoreScale::Percent,
        "unit" => ScoreScale::Unit,
        other => return Err(usage(format!("unknown score scale `{other}`"))),
    };
    Ok((chat, Box::new(ep.scoring_client(scale, limiter, &retry)?), "remote"))
}

fn evaluate(g: &GlobalArgs, a: &EvaluateArgs) -> Result<()> {
    let out = out_path(g)?;
    let spec = prompt_spec(g, &a.mode, &a.selection)?;
    let test = read_test_set(&a.test)?;
    let limiter = limiter(&a.model);
    let (chat, scorer, scorer_name) = eval_backends(&a.scoring, &limiter)?;
    let needs_pool = spec.mode != PromptMode::ZeroShot;
    let data = selection_data(&a.selection, &[spec.strategy.kind], needs_pool, &limiter)?;
    let ctx = context(chat.as_ref(), scorer.as_ref(), scorer_name, &data, a.model.in_flight);
    let run = run_eval(&ctx, &a.system, &test, &spec, &gen_config(g, &a.model, a.temperature))?;
    if !run.failures.is_empty() {
        warn!("{} sentences failed and are left out of the mean", run.failures.len());
    }
    run.save(out)?;
    Ok(())
}

fn ablate(g: &GlobalArgs, a: &AblateArgs) -> Result<()> {
    let out = out_path(g)?;
    let t = template(g)?;
    let strategies: Vec<SelectionStrategy> = a
        .strategies
        .iter()
        .map(|k| strategy(g, k, &a.selection))
        .collect::<Result<_>>()?;
    let kinds: Vec<StrategyKind> = strategies.iter().map(|s| s.kind).collect();
    let test = read_test_set(&a.test)?;
    let limiter = limiter(&a.model);
    let (chat, scorer, scorer_name) = eval_backends(&a.scoring, &limiter)?;
    let data = selection_data(&a.selection, &kinds, true, &limiter)?;
    let ctx = context(chat.as_ref(), scorer.as_ref(), scorer_name, &data, a.model.in_flight);
    let cfg = gen_config(g, &a.model, a.temperature);
    let rows = ablation_sweep(&ctx, &a.system, &strategies, &a.ks, &test, &cfg, &t)?;
    fs::write(out, ablation_csv(&rows)).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn report(g: &GlobalArgs, a: &ReportArgs) -> Result<()> {
    let runs: Vec<EvalRun> = a.runs.iter().map(|p| EvalRun::load(p)).collect::<Result<_, _>>()?;
    let table = aggregate_table(&runs)?;
    let text = match a.format.as_str() {
        "text" => table.render_text(),
        "csv" => table.render_csv(),
        other => return Err(usage(format!("unknown report format `{other}`"))),
    };
    match &g.out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
