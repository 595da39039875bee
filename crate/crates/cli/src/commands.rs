use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use edsa_core::classifiers::ModelKind;
use edsa_core::corpus;
use edsa_core::ensemble::{
    default_scheme, fit_predictor, run_edsa, EnsembleReport, HashPredictor, LexiconPredictor, SentimentPredictor,
};
use edsa_core::evaluation::{cross_validate, write_metrics_csv, CrossValReport, MetricRow, Summary};
use edsa_core::events::{detect, events_table, EventMethod, EventRecord};
use edsa_core::preprocess::apply_corpus;
use edsa_core::vectorize::{train_cbow, CbowConfig, ExternalEmbeddings, SparseRow, Vocabulary};
use edsa_core::{seed, Corpus, PipelineKind, PipelineSpec, SentimentLabel, Tweet};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle;
use crate::config::{Config, SENTIMENT140};
use crate::error::{CliError, Result};
use crate::output::{self, write_json, write_ndjson};

/// Everything a subcommand needs: the effective config and where to write.
pub struct Ctx {
    pub config: Config,
    pub hash: String,
    pub out: PathBuf,
}

impl Ctx {
    pub fn new(config: Config) -> Self {
        Ctx {
            hash: config.hash(),
            out: config.report_dir(),
            config,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// A loaded dataset and the name it goes by in reports.
pub struct Dataset {
    pub name: String,
    pub corpus: Corpus,
}

pub fn load_dataset(cfg: &Config) -> Result<Dataset> {
    let key = cfg.dataset.to_ascii_lowercase();
    let named_size = match key.as_str() {
        "c1" => Some(Some(cfg.ingest.c1_size)),
        "c2" => Some(Some(cfg.ingest.c2_size)),
        "c3" => Some(None),
        _ => None,
    };
    match named_size {
        Some(size) => {
            let source = match &cfg.paths.corpus {
                Some(p) => cfg.input_path(p),
                None => cfg.data_root().join(SENTIMENT140),
            };
            if !source.exists() {
                return Err(CliError::MissingInput(format!(
                    "dataset {key} reads {}, which does not exist (set EDSA_DATA_DIR or paths.corpus)",
                    source.display()
                )));
            }
            let (full, report) = corpus::parse_csv(&source, cfg.ingest.limit)?;
            log::info!(
                "{}: {} rows, {} parsed, {} malformed, {} duplicate",
                source.display(),
                report.rows,
                report.parsed,
                report.malformed,
                report.duplicates
            );
            let corpus = match size {
                // Prefixes of one stratified order, so C1 is inside C2.
                Some(n) => corpus::stratified_subsets(&full, &[n], seed::derive(cfg.seed, "subsets"))?
                    .pop()
                    .expect("one size requested"),
                None => full,
            };
            Ok(Dataset {
                name: key.to_uppercase(),
                corpus,
            })
        }
        None => {
            let path = cfg.input_path(Path::new(&cfg.dataset));
            if !path.exists() {
                return Err(CliError::MissingInput(format!("dataset {} does not exist", path.display())));
            }
            let is_dump = matches!(
                path.extension().and_then(|e| e.to_str()),
                Some("ndjson") | Some("jsonl")
            );
            let corpus = if is_dump {
                let f = std::fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
                corpus::read_dump(std::io::BufReader::new(f))?
            } else {
                corpus::parse_csv(&path, cfg.ingest.limit)?.0
            };
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| cfg.dataset.clone());
            Ok(Dataset { name, corpus })
        }
    }
}

/// Tweets with a binary label, for training and evaluation.
fn labelled(corpus: &Corpus) -> Result<(Corpus, Vec<SentimentLabel>)> {
    let binary = corpus.filter_labels(&[SentimentLabel::Negative, SentimentLabel::Positive]);
    if binary.is_empty() {
        return Err(CliError::MissingInput("dataset has no positive or negative labels".into()));
    }
    let labels = binary.labels()?;
    Ok((binary, labels))
}

fn embeddings(cfg: &Config) -> Result<Option<(ExternalEmbeddings, PathBuf)>> {
    match &cfg.paths.embeddings {
        Some(p) => {
            let path = cfg.input_path(p);
            Ok(Some((ExternalEmbeddings::load(&path)?, path)))
        }
        None => Ok(None),
    }
}

pub fn ingest(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let data = load_dataset(&ctx.config)?;
    let path = ctx.path("corpus.ndjson");
    let mut w = output::create(&path)?;
    corpus::write_dump(&data.corpus, &mut w)?;
    std::io::Write::flush(&mut w).map_err(|e| CliError::io(&path, e))?;
    println!("{}: {} tweets", data.name, data.corpus.len());
    Ok(vec![path])
}

pub fn preprocess(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let data = load_dataset(cfg)?;
    let mut spec = PipelineSpec::resolve(cfg.preprocess.pipeline);
    if let Some(lemma) = cfg.preprocess.lemmatize {
        spec = spec.with_lemma(lemma);
    }
    let docs = apply_corpus(&data.corpus, &spec);
    let path = ctx.path(&format!("tokens.{}.ndjson", spec.kind.as_str()));
    write_ndjson(&path, &docs)?;
    println!("{} documents through {}", docs.len(), spec.kind);
    Ok(vec![path])
}

#[derive(Serialize)]
struct VocabArtifact<'a> {
    config_hash: &'a str,
    pipeline: PipelineSpec,
    vocab_hash: String,
    vocabulary: &'a Vocabulary,
}

#[derive(Serialize)]
struct MatrixRow<'a> {
    tweet_id: u64,
    #[serde(flatten)]
    row: &'a SparseRow,
}

pub fn vectorize(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let data = load_dataset(cfg)?;
    let spec = cfg.train.pipeline_spec();
    let docs = apply_corpus(&data.corpus, &spec);
    let vocab = Vocabulary::build(&docs, cfg.train.min_df)?;
    let matrix = vocab.transform(&docs, cfg.vectorize.scheme);
    let p = spec.kind.as_str();
    let vocab_path = ctx.path(&format!("vocab.{p}.json"));
    write_json(
        &vocab_path,
        &VocabArtifact {
            config_hash: &ctx.hash,
            pipeline: spec,
            vocab_hash: vocab.hash(),
            vocabulary: &vocab,
        },
    )?;
    let matrix_path = ctx.path(&format!("matrix.{p}.{}.ndjson", cfg.vectorize.scheme));
    write_ndjson(
        &matrix_path,
        docs.iter().zip(&matrix.rows).map(|(d, row)| MatrixRow { tweet_id: d.tweet_id, row }),
    )?;
    println!("{} documents x {} terms ({})", matrix.n_rows(), matrix.n_cols, cfg.vectorize.scheme);
    let mut files = vec![vocab_path, matrix_path];
    if cfg.vectorize.cbow {
        let cbow_cfg = CbowConfig {
            seed: seed::derive(cfg.seed, "cbow"),
            ..cfg.train.cbow.clone()
        };
        let (model, report) = train_cbow(&docs, &cbow_cfg)?;
        let path = ctx.path(&format!("cbow.{p}.bin"));
        model.save(&path)?;
        let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
        println!("cbow: {} words, final epoch loss {last:.4}", model.vocab().len());
        files.push(path);
    }
    Ok(files)
}

#[derive(Serialize, Deserialize)]
struct EventsArtifact {
    config_hash: String,
    method: EventMethod,
    events: Vec<EventRecord>,
}

pub fn detect_events(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let data = load_dataset(cfg)?;
    let docs = apply_corpus(&data.corpus, &PipelineSpec::resolve(PipelineKind::Ct));
    let found = cfg
        .ensemble
        .methods
        .par_iter()
        .map(|&m| {
            let events = detect(m, &data.corpus, &docs, &cfg.detect, seed::derive(cfg.seed, m.as_str()))?;
            Ok((m, events))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut files = Vec::new();
    for (m, events) in found {
        let path = ctx.path(&format!("events.{m}.json"));
        write_json(
            &path,
            &EventsArtifact {
                config_hash: ctx.hash.clone(),
                method: m,
                events: events.iter().map(EventRecord::from).collect(),
            },
        )?;
        println!("{m}: {} events", events.len());
        print!("{}", events_table(&events));
        files.push(path);
    }
    Ok(files)
}

/// Learned models named in `names`; stub voters are skipped.
fn learned(names: &[String]) -> Vec<ModelKind> {
    names.iter().filter_map(|n| n.parse().ok()).collect()
}

pub fn train(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let kinds = learned(&cfg.ensemble.models);
    if kinds.is_empty() {
        return Err(CliError::Usage("no trainable model selected".into()));
    }
    let data = load_dataset(cfg)?;
    let (corpus, labels) = labelled(&data.corpus)?;
    let tweets: Vec<&Tweet> = corpus.iter().collect();
    let emb = embeddings(cfg)?;
    let mut files = Vec::new();
    for kind in kinds {
        let p = fit_predictor(
            kind,
            &tweets,
            &labels,
            &cfg.train,
            emb.as_ref().map(|(e, _)| e),
            seed::derive(cfg.seed, "train"),
        )?;
        let dir = cfg.model_dir().join(kind.as_str());
        files.extend(bundle::save(&p, kind, &dir, &ctx.hash, emb.as_ref().map(|(_, p)| p.as_path()))?);
        println!("{kind}: trained on {} tweets -> {}", tweets.len(), dir.display());
    }
    Ok(files)
}

/// Display name used in metric rows.
fn algorithm_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::Nb => "NB",
        ModelKind::Lr => "LR",
        ModelKind::Ridge => "RC",
        ModelKind::Svm => "SVM",
        ModelKind::Softmax => "Softmax",
        ModelKind::Lstm => "LSTM",
    }
}

fn term_weight(kind: ModelKind, external: bool) -> String {
    match (default_scheme(kind), kind) {
        (Some(s), _) => s.as_str().to_string(),
        (None, ModelKind::Softmax) if external => "embeddings".into(),
        _ => "cbow".into(),
    }
}

#[derive(Serialize)]
struct EvaluateArtifact<'a> {
    config_hash: &'a str,
    dataset: &'a str,
    folds: usize,
    report: &'a CrossValReport,
}

pub fn evaluate(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let kinds = &cfg.evaluate.models;
    if kinds.is_empty() {
        return Err(CliError::Usage("no model selected for evaluation".into()));
    }
    let data = load_dataset(cfg)?;
    let (corpus, labels) = labelled(&data.corpus)?;
    let tweets: Vec<&Tweet> = corpus.iter().collect();
    let emb = embeddings(cfg)?;
    let report = cross_validate(
        kinds,
        &tweets,
        &labels,
        &cfg.train,
        emb.as_ref().map(|(e, _)| e),
        cfg.evaluate.folds,
        seed::derive(cfg.seed, "evaluate"),
    )?;
    let pipeline = cfg.train.pipeline.to_string();
    let row = |algorithm: &str, weight: String, s: &Summary| MetricRow {
        dataset: data.name.clone(),
        algorithm: algorithm.to_string(),
        term_weight: weight,
        pipeline: pipeline.clone(),
        accuracy: s.accuracy,
        precision: s.precision,
        recall: s.recall,
    };
    let mut rows: Vec<MetricRow> = report
        .per_model
        .iter()
        .map(|(&k, r)| row(algorithm_name(k), term_weight(k, emb.is_some()), &r.mean))
        .collect();
    if let Some(e) = &report.ensemble {
        rows.push(row("EDSA", "vote".into(), &e.mean));
    }
    let csv_path = ctx.path("metrics.csv");
    write_metrics_csv(&rows, output::create(&csv_path)?)?;
    let json_path = ctx.path("evaluate.json");
    write_json(
        &json_path,
        &EvaluateArtifact {
            config_hash: &ctx.hash,
            dataset: &data.name,
            folds: cfg.evaluate.folds,
            report: &report,
        },
    )?;
    print!("{}", metrics_table(&rows));
    Ok(vec![csv_path, json_path])
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
}

fn metrics_table(rows: &[MetricRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:<10} {:<12} {:<8} {:>8} {:>9} {:>6}",
        "dataset", "algorithm", "term_weight", "pipeline", "accuracy", "precision", "recall"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<8} {:<10} {:<12} {:<8} {:>8.3} {:>9} {:>6}",
            r.dataset,
            r.algorithm,
            r.term_weight,
            r.pipeline,
            r.accuracy,
            fmt_opt(r.precision),
            fmt_opt(r.recall)
        );
    }
    s
}

/// Build a voter from its config name.
fn voter(name: &str, cfg: &Config) -> Result<Box<dyn SentimentPredictor>> {
    if name == "lexicon" {
        let pos: Vec<&str> = cfg.ensemble.lexicon_positive.iter().map(String::as_str).collect();
        let neg: Vec<&str> = cfg.ensemble.lexicon_negative.iter().map(String::as_str).collect();
        return Ok(Box::new(LexiconPredictor::new(name, &pos, &neg)));
    }
    if let Some(salt) = name.strip_prefix("hash:") {
        let salt = salt
            .parse()
            .map_err(|_| CliError::Usage(format!("bad hash model {name:?}, expected hash:<integer>")))?;
        return Ok(Box::new(HashPredictor {
            name: name.to_string(),
            salt,
        }));
    }
    let kind: ModelKind = name
        .parse()
        .map_err(|_| CliError::Usage(format!("unknown model {name:?}")))?;
    Ok(Box::new(bundle::load(&cfg.model_dir().join(kind.as_str()))?))
}

#[derive(Serialize, Deserialize)]
struct EnsembleArtifact {
    config_hash: String,
    #[serde(flatten)]
    report: EnsembleReport,
}

pub fn ensemble(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let cfg = &ctx.config;
    let voters = cfg
        .ensemble
        .models
        .iter()
        .map(|n| voter(n, cfg))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn SentimentPredictor> = voters.iter().map(|v| v.as_ref()).collect();
    let data = load_dataset(cfg)?;
    let report = run_edsa(&data.corpus, &cfg.ensemble.methods, &cfg.detect, &refs, cfg.seed)?;
    let json_path = ctx.path("ensemble.json");
    write_json(
        &json_path,
        &EnsembleArtifact {
            config_hash: ctx.hash.clone(),
            report: report.clone(),
        },
    )?;
    let csv_path = ctx.path("ensemble.csv");
    report.write_csv(output::create(&csv_path)?)?;
    print!("{}", ensemble_table(&report));
    Ok(vec![json_path, csv_path])
}

fn ensemble_table(report: &EnsembleReport) -> String {
    let mut s = String::new();
    for m in &report.methods {
        let _ = writeln!(s, "{}: {} events", m.name, m.events.len());
        for (i, e) in m.events.iter().enumerate() {
            let _ = writeln!(
                s,
                "  {i:>3} {:<8} {:>6} tweets  {} .. {}  {}",
                e.vote.as_str(),
                e.tweets.len(),
                e.interval[0],
                e.interval[1],
                e.keywords.join(" ")
            );
        }
    }
    s
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Collect whatever the other commands left in the output directory into
/// `report.md`.
pub fn report(ctx: &Ctx) -> Result<Vec<PathBuf>> {
    let mut md = String::from("# EDSA report\n\n");
    let mut found = false;
    let metrics = ctx.path("metrics.csv");
    if metrics.exists() {
        found = true;
        let mut rdr = csv::Reader::from_path(&metrics).map_err(edsa_core::Error::from)?;
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<MetricRow>, _>>()
            .map_err(edsa_core::Error::from)?;
        md.push_str("## Sentiment metrics\n\n| dataset | algorithm | term weight | pipeline | accuracy | precision | recall |\n|---|---|---|---|---|---|---|\n");
        for r in &rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {:.3} | {} | {} |",
                r.dataset,
                r.algorithm,
                r.term_weight,
                r.pipeline,
                r.accuracy,
                fmt_opt(r.precision),
                fmt_opt(r.recall)
            );
        }
        md.push('\n');
    }
    for m in EventMethod::ALL {
        let path = ctx.path(&format!("events.{m}.json"));
        if !path.exists() {
            continue;
        }
        found = true;
        let a: EventsArtifact = read_json(&path)?;
        let _ = writeln!(md, "## Events: {m}\n\n| magnitude | start | end | keywords |\n|---|---|---|---|");
        for e in &a.events {
            let _ = writeln!(md, "| {:.1} | {} | {} | {} |", e.magnitude, e.start, e.end, e.keywords.join(" "));
        }
        md.push('\n');
    }
    let ens = ctx.path("ensemble.json");
    if ens.exists() {
        found = true;
        let a: EnsembleArtifact = read_json(&ens)?;
        let _ = writeln!(md, "## Event sentiment\n\nModels: {}\n", a.report.models.join(", "));
        for m in &a.report.methods {
            let mut tally: BTreeMap<SentimentLabel, usize> = BTreeMap::new();
            for e in &m.events {
                *tally.entry(e.vote).or_default() += 1;
            }
            let summary: Vec<String> = tally.iter().map(|(l, n)| format!("{n} {}", l.as_str())).collect();
            let _ = writeln!(md, "### {} ({})\n", m.name, summary.join(", "));
            md.push_str("| event | vote | tweets | interval | keywords |\n|---|---|---|---|---|\n");
            for (i, e) in m.events.iter().enumerate() {
                let _ = writeln!(
                    md,
                    "| {i} | {} | {} | {} .. {} | {} |",
                    e.vote.as_str(),
                    e.tweets.len(),
                    e.interval[0],
                    e.interval[1],
                    e.keywords.join(" ")
                );
            }
            md.push('\n');
        }
    }
    if !found {
        return Err(CliError::MissingInput(format!(
            "nothing to report in {} (run evaluate, detect-events or ensemble first)",
            ctx.out.display()
        )));
    }
    let path = ctx.path("report.md");
    output::write_bytes(&path, md.as_bytes())?;
    print!("{md}");
    Ok(vec![path])
}
