use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use log::info;

use clausewatch::classify::{classify_batch, BatchContext, ClassifyMode, ContentType, Pipeline, Prediction, ScanOptions};
use clausewatch::config::AppConfig;
use clausewatch::corpus::synthetic::{generate_corpus, SyntheticConfig};
use clausewatch::corpus::{
    derive_task_dataset, load_corpus, stratified_split, Category, Corpus, Partition, SplitAssignment, SplitRatios,
    TaskExample, TaskName, TaskSpec, Taxonomy,
};
use clausewatch::demo::{demo_pipeline, demo_setup, phrase_chat};
use clausewatch::detector::{cross_validate, positive_f1, train_detector, LinearDetector, TrainConfig, C_GRID};
use clausewatch::eval::{
    aggregate_runs, error_decomposition, f1_scores, read_observations, write_breakdown_csv, write_error_table_csv,
    write_ranking_csv, ErrorRecord, RunObservation,
};
use clausewatch::meta_analysis::{rank_configs, write_meta_csv};
use clausewatch::retrieval::{Bm25Params, KbEntry, KnowledgeBase, RetrievalMode};

use crate::{
    ClassifyArgs, Cli, Command, ErrorsArgs, EvalArgs, IndexArgs, MetaArgs, ModeArg, PartitionArg, RetrievalArg,
    ScanArgs, ServeArgs, SplitArgs, SynthArgs, TrainArgs,
};

/// Marks a failure caused by bad arguments or input files (exit code 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl fmt::Display) -> anyhow::Error {
    Invalid(msg.to_string()).into()
}

fn existing(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(invalid(format!("{} does not exist", path.display())))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => AppConfig::load(existing(p)?).map_err(invalid)?,
        None => AppConfig::default(),
    };
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::Split(a) => split(a, seed),
        Command::Index(a) => index(a, &config),
        Command::TrainDetector(a) => train(a, &config, seed),
        Command::Scan(a) => scan(a, &config, seed),
        Command::Classify(a) => classify(a, &config, seed),
        Command::Eval(a) => eval(a, seed),
        Command::Errors(a) => errors(a),
        Command::Meta(a) => meta(a),
        Command::Serve(a) => serve(a, config, seed),
    }
}

/// Writes to `out`, or stdout when absent.
fn with_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
            f(&mut w)?;
            w.flush()?;
            info!("wrote {}", path.display());
            Ok(())
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn parse_task(s: &str) -> Result<TaskName> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = TaskName::ALL.iter().map(|t| t.as_str()).collect();
        invalid(format!("unknown task '{s}' (expected one of {})", names.join(", ")))
    })
}

fn partition(p: PartitionArg) -> Partition {
    match p {
        PartitionArg::Train => Partition::Train,
        PartitionArg::Val => Partition::Val,
        PartitionArg::Test => Partition::Test,
    }
}

fn retrieval_mode(r: RetrievalArg) -> RetrievalMode {
    match r {
        RetrievalArg::Dense => RetrievalMode::Dense,
        RetrievalArg::Hybrid => RetrievalMode::Hybrid,
    }
}

fn read_corpus(path: &Path, taxonomy: &Taxonomy) -> Result<Corpus> {
    load_corpus(existing(path)?, taxonomy).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn read_split(path: &Path) -> Result<SplitAssignment> {
    SplitAssignment::load(existing(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn synth(a: SynthArgs, seed: u64) -> Result<()> {
    if a.contracts == 0 || a.ok + a.abusive == 0 {
        return Err(invalid("need at least one contract and one clause"));
    }
    let cfg = SyntheticConfig { ok_clauses: a.ok, abusive_clauses: a.abusive, contracts: a.contracts, seed, ..Default::default() };
    let corpus = generate_corpus(&cfg, &Taxonomy::default());
    with_output(Some(&a.out), |w| Ok(corpus.write_jsonl(w)?))
}

fn split(a: SplitArgs, seed: u64) -> Result<()> {
    let ratios: SplitRatios = a.ratios.parse().map_err(|e| invalid(format!("--ratios: {e}")))?;
    let task = parse_task(&a.task)?;
    let taxonomy = Taxonomy::default();
    let corpus = read_corpus(&a.corpus, &taxonomy)?;
    let dataset = derive_task_dataset(&corpus, &TaskSpec::new(task, &taxonomy), &taxonomy);
    let split = stratified_split(&dataset, ratios, task, seed).map_err(invalid)?;
    info!("{}: {} train / {} val / {} test", task.as_str(), split.train.len(), split.val.len(), split.test.len());
    with_output(Some(&a.out), |w| Ok(writeln!(w, "{}", split.to_json())?))
}

fn index(a: IndexArgs, config: &AppConfig) -> Result<()> {
    let taxonomy = Taxonomy::default();
    let corpus = read_corpus(&a.corpus, &taxonomy)?;
    let keep: Option<HashSet<String>> = match &a.split {
        Some(p) => Some(read_split(p)?.ids(partition(a.partition)).iter().cloned().collect()),
        None => None,
    };
    let entries: Vec<KbEntry> = corpus
        .clauses()
        .iter()
        .filter(|c| keep.as_ref().map_or(true, |k| k.contains(&c.id)))
        .map(KbEntry::from)
        .collect();
    if entries.is_empty() {
        return Err(invalid("no clauses selected for the knowledge base"));
    }
    let providers = config.providers.build(&taxonomy).map_err(invalid)?;
    let kb = KnowledgeBase::build(entries, providers.embedding.as_ref(), Bm25Params::default())?;
    let out = a.out.unwrap_or_else(|| config.paths.knowledge_base.clone());
    kb.save(&out).with_context(|| format!("writing {}", out.display()))?;
    info!("indexed {} clauses into {}", kb.len(), out.display());
    Ok(())
}

fn train(a: TrainArgs, config: &AppConfig, seed: u64) -> Result<()> {
    let taxonomy = Taxonomy::default();
    let corpus = read_corpus(&a.corpus, &taxonomy)?;
    let split = a.split.as_deref().map(read_split).transpose()?;
    let select = |p: Partition| -> Vec<(String, bool)> {
        let ids: Option<HashSet<&str>> = split.as_ref().map(|s| s.ids(p).iter().map(String::as_str).collect());
        corpus
            .clauses()
            .iter()
            .filter(|c| ids.as_ref().map_or(true, |ids| ids.contains(c.id.as_str())))
            .map(|c| (c.text.clone(), c.is_abusive()))
            .collect()
    };
    let data = select(Partition::Train);
    let mut cfg = TrainConfig { c: a.c, epochs: a.epochs, seed, abusive_weight: a.abusive_weight, ..Default::default() };
    let mut summary = serde_json::json!({ "train_size": data.len() });
    if let Some(folds) = a.cv {
        let (results, best) = cross_validate(&data, cfg, &C_GRID, folds).map_err(invalid)?;
        summary["cv"] = serde_json::to_value(&results)?;
        cfg.c = best;
    }
    summary["c"] = cfg.c.into();
    let model = train_detector(&data, cfg).map_err(invalid)?;
    summary["train_f1"] = positive_f1(&model, &data).into();
    if split.is_some() {
        let test = select(Partition::Test);
        if !test.is_empty() {
            summary["test_size"] = test.len().into();
            summary["test_f1"] = positive_f1(&model, &test).into();
        }
    }
    let out = a.out.unwrap_or_else(|| config.paths.detector.clone());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    model.save(&out).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn configured_pipeline(config: &AppConfig) -> Result<Pipeline> {
    let taxonomy = Taxonomy::default();
    let detector = LinearDetector::load(existing(&config.paths.detector)?)
        .map_err(|e| invalid(format!("{}: {e}", config.paths.detector.display())))?;
    let kb_dir = existing(&config.paths.knowledge_base)?;
    let kb = KnowledgeBase::load(kb_dir).map_err(|e| invalid(format!("{}: {e}", kb_dir.display())))?;
    let template = config.paths.template().map_err(invalid)?;
    let providers = config.providers.build(&taxonomy).map_err(invalid)?;
    Ok(Pipeline::new(
        taxonomy,
        detector,
        kb,
        providers.embedding,
        providers.rerank,
        providers.chat,
        template,
        config.pipeline.clone(),
    )?)
}

fn demo(config: &AppConfig, seed: u64) -> Pipeline {
    info!("building the demo knowledge base");
    let setup = demo_setup(400, 120, seed);
    let chat = Arc::new(phrase_chat(&setup.taxonomy));
    demo_pipeline(setup, chat, config.pipeline.clone())
}

fn scan(a: ScanArgs, config: &AppConfig, seed: u64) -> Result<()> {
    let content = fs::read_to_string(existing(&a.file)?).with_context(|| format!("reading {}", a.file.display()))?;
    let content_type = match &a.content_type {
        Some(s) => s.parse::<ContentType>().map_err(invalid)?,
        None => match a.file.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("html" | "htm" | "xhtml") => ContentType::Html,
            _ => ContentType::Text,
        },
    };
    let categories = a
        .categories
        .as_deref()
        .map(|s| s.split(',').map(|c| c.parse::<Category>().map_err(invalid)).collect::<Result<Vec<_>>>())
        .transpose()?;
    let options = ScanOptions {
        categories,
        threshold: a.threshold,
        include_similar: !a.no_similar,
        max_similar: a.max_similar,
    };
    let pipeline = if a.demo { demo(config, seed) } else { configured_pipeline(config)? };
    let outcome = pipeline.scan(&content, content_type, &options);
    info!(
        "{} chunks, {} flagged, {} classification calls",
        outcome.report.document.chunk_count,
        outcome.report.document.flagged_count,
        outcome.llm_calls()
    );
    if let Some(path) = &a.audit {
        with_output(Some(path), |w| {
            for entry in &outcome.audit {
                writeln!(w, "{}", serde_json::to_string(entry)?)?;
            }
            Ok(())
        })?;
    }
    with_output(a.out.as_deref(), |w| Ok(writeln!(w, "{}", outcome.report.to_json())?))
}

fn classify(a: ClassifyArgs, config: &AppConfig, seed: u64) -> Result<()> {
    let task_name = parse_task(&a.task)?;
    let taxonomy = Taxonomy::default();
    let corpus = read_corpus(&a.corpus, &taxonomy)?;
    let split = read_split(&a.split)?;
    if split.task != task_name {
        return Err(invalid(format!("split was made for {}, not {}", split.task.as_str(), task_name.as_str())));
    }
    let task = TaskSpec::new(task_name, &taxonomy);
    let dataset = derive_task_dataset(&corpus, &task, &taxonomy);
    let pick = |p: Partition| -> Vec<TaskExample> {
        let ids: HashSet<&str> = split.ids(p).iter().map(String::as_str).collect();
        dataset.iter().filter(|e| ids.contains(e.clause_id.as_str())).cloned().collect()
    };
    let train_pool = pick(Partition::Train);
    let examples = pick(partition(a.partition));
    if examples.is_empty() {
        return Err(invalid("the selected partition is empty"));
    }
    let mode = match a.mode {
        ModeArg::FewShot => {
            if a.k == 0 {
                return Err(invalid("--k must be positive"));
            }
            ClassifyMode::FewShot { k: a.k }
        }
        ModeArg::Rag => ClassifyMode::Rag { retrieval: retrieval_mode(a.retrieval) },
        ModeArg::MajorityVote => ClassifyMode::MajorityVote { retrieval: retrieval_mode(a.retrieval) },
    };
    let kb = match mode {
        ClassifyMode::FewShot { .. } => None,
        _ => {
            let dir: PathBuf = a.kb.clone().unwrap_or_else(|| config.paths.knowledge_base.clone());
            Some(KnowledgeBase::load(existing(&dir)?).map_err(|e| invalid(format!("{}: {e}", dir.display())))?)
        }
    };
    let template = config.paths.template().map_err(invalid)?;
    let providers = config.providers.build(&taxonomy).map_err(invalid)?;
    let ctx = BatchContext {
        taxonomy: &taxonomy,
        template: &template,
        kb: kb.as_ref(),
        embedder: Some(providers.embedding.as_ref()),
        reranker: providers.rerank.as_deref(),
        chat: Some(providers.chat.as_ref()),
        retrieval: config.pipeline.retrieval.clone(),
        train_pool: &train_pool,
        seed,
        concurrency: config.pipeline.concurrency,
    };
    let predictions = classify_batch(&ctx, &task, &examples, mode).map_err(|e| match e {
        clausewatch::classify::ClassifyError::Prompt(p) => invalid(p),
        other => other.into(),
    })?;
    let failed = predictions.iter().filter(|p| p.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} instances failed and are scored as empty predictions", predictions.len());
    }
    with_output(a.out.as_deref(), |w| {
        for p in &predictions {
            writeln!(w, "{}", serde_json::to_string(p)?)?;
        }
        Ok(())
    })
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let reader = BufReader::new(File::open(existing(path)?)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| invalid(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    if out.is_empty() {
        return Err(invalid(format!("{} holds no predictions", path.display())));
    }
    Ok(out)
}

fn check_labels(preds: &[Prediction], task: &TaskSpec) -> Result<()> {
    let known: HashSet<&str> = task.class_set.iter().map(String::as_str).collect();
    for p in preds {
        if let Some(l) = p.gold.iter().chain(&p.predicted).find(|l| !known.contains(l.as_str())) {
            return Err(invalid(format!("{}: label '{l}' is not in the {} class set", p.clause_id, task.name.as_str())));
        }
    }
    Ok(())
}

fn eval(a: EvalArgs, seed: u64) -> Result<()> {
    let task = TaskSpec::new(parse_task(&a.task)?, &Taxonomy::default());
    let preds = read_predictions(&a.predictions)?;
    check_labels(&preds, &task)?;
    let gold: Vec<Vec<&str>> = preds.iter().map(|p| p.gold.iter().map(String::as_str).collect()).collect();
    let pred: Vec<Vec<&str>> = preds.iter().map(|p| p.predicted.iter().map(String::as_str).collect()).collect();
    let report = f1_scores(&gold, &pred, &task.class_set)?;
    if let (Some(runs), Some(config_id)) = (&a.runs, &a.config_id) {
        let obs = RunObservation {
            config_id: config_id.clone(),
            task_id: task.name.as_str().to_string(),
            seed,
            macro_f1: report.macro_f1,
            micro_f1: report.micro_f1,
        };
        let mut f = OpenOptions::new().create(true).append(true).open(runs)?;
        writeln!(f, "{}", serde_json::to_string(&obs)?)?;
    }
    with_output(a.out.as_deref(), |w| Ok(writeln!(w, "{}", serde_json::to_string_pretty(&report)?)?))
}

fn errors(a: ErrorsArgs) -> Result<()> {
    let task = TaskSpec::new(parse_task(&a.task)?, &Taxonomy::default());
    let mut rows = Vec::new();
    for spec in &a.predictions {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| spec.clone());
                (stem, p)
            }
        };
        let preds = read_predictions(&path)?;
        check_labels(&preds, &task)?;
        let records: Vec<ErrorRecord> = preds
            .into_iter()
            .map(|p| ErrorRecord { gold: p.gold, predicted: p.predicted, retrieved_labels: p.retrieved_labels })
            .collect();
        rows.push((name, error_decomposition(&records, &task.class_set).map_err(invalid)?));
    }
    with_output(a.out.as_deref(), |w| {
        if a.csv {
            write_error_table_csv(&rows, w)?;
        } else {
            let map: serde_json::Map<String, serde_json::Value> =
                rows.iter().map(|(n, d)| Ok((n.clone(), serde_json::to_value(d)?))).collect::<Result<_>>()?;
            writeln!(w, "{}", serde_json::to_string_pretty(&map)?)?;
        }
        Ok(())
    })
}

fn meta(a: MetaArgs) -> Result<()> {
    let obs = read_observations(File::open(existing(&a.runs)?)?).map_err(invalid)?;
    let results = rank_configs(&obs).map_err(invalid)?;
    if let Some(p) = &a.ranking_out {
        with_output(Some(p), |w| Ok(write_ranking_csv(&aggregate_runs(&obs), w)?))?;
    }
    if let Some(p) = &a.breakdown_out {
        with_output(Some(p), |w| Ok(write_breakdown_csv(&obs, 2, w)?))?;
    }
    match &a.out {
        Some(p) => with_output(Some(p), |w| Ok(write_meta_csv(&results, w)?)),
        None => with_output(None, |w| Ok(writeln!(w, "{}", serde_json::to_string_pretty(&results)?)?)),
    }
}

fn serve(a: ServeArgs, mut config: AppConfig, seed: u64) -> Result<()> {
    if let Some(h) = a.host {
        config.server.host = h;
    }
    if let Some(p) = a.port {
        config.server.port = p;
    }
    let pipeline = if a.demo { demo(&config, seed) } else { configured_pipeline(&config)? };
    let state = clausewatch_service::AppState::new(Arc::new(pipeline), config.server.clone());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(clausewatch_service::serve(state)).context("server stopped")
}
