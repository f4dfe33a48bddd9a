//! One function per subcommand. Each writes its outputs plus a manifest and
//! returns what it computed, so the pipeline can also be driven in-process.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, ValueEnum};
use ctpe::corpus::{load_corpus, CorpusStore, SegmentationSpec, Split};
use ctpe::embedding::{detect_dim, load_pretrained, EmbeddingTable};
use ctpe::encoder::TwinEncoder;
use ctpe::evaluation::{evaluate_run, Judgments, MetricsReport};
use ctpe::exec::Execution;
use ctpe::representation::{embed_corpus, EmbeddingStore};
use ctpe::retrieval::{read_run, write_run, RankedList};
use ctpe::synthetic::{generate, SyntheticSpec};
use ctpe::trainer::{parse_kv, train_with, TrainConfig, TrainReport};
use log::info;
use serde::Serialize;

use crate::experiment::{lists_to_run, random_vectors, rank_average, rank_model, rank_tfidf_baseline};
use crate::manifest::{manifest_path, RunManifest};
use crate::{CliError, CliResult};

fn snapshot(args: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(args).expect("arguments serialize")
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn parse_part_order(text: &Option<String>) -> Option<Vec<String>> {
    text.as_ref()
        .map(|s| s.split(',').map(|p| p.trim().to_string()).collect())
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    /// Raw corpus output (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Judgments output (`query candidate 1` lines).
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub candidates_per_topic: Option<usize>,
    #[arg(long)]
    pub tests_per_topic: Option<usize>,
    #[arg(long)]
    pub vocab_per_topic: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub coherence: Option<f64>,
    #[arg(long)]
    pub title_coherence: Option<f64>,
    /// Full generator specification as JSON; individual flags override it.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

impl GenerateArgs {
    pub fn new(out: PathBuf, qrels: PathBuf, seed: u64) -> Self {
        GenerateArgs {
            out,
            qrels,
            seed,
            topics: None,
            candidates_per_topic: None,
            tests_per_topic: None,
            vocab_per_topic: None,
            noise: None,
            coherence: None,
            title_coherence: None,
            spec: None,
        }
    }

    pub fn synthetic_spec(&self) -> CliResult<SyntheticSpec> {
        let mut spec = match &self.spec {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => SyntheticSpec::default(),
        };
        spec.seed = self.seed;
        if let Some(v) = self.topics {
            spec.topics = v;
        }
        if let Some(v) = self.candidates_per_topic {
            spec.candidates_per_topic = v;
        }
        if let Some(v) = self.tests_per_topic {
            spec.tests_per_topic = v;
        }
        if let Some(v) = self.vocab_per_topic {
            spec.vocab_per_topic = v;
        }
        if let Some(v) = self.noise {
            spec.noise = v;
        }
        if let Some(v) = self.coherence {
            spec.coherence = v;
        }
        if let Some(v) = self.title_coherence {
            spec.title_coherence = v;
        }
        Ok(spec)
    }
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<Judgments> {
    let start = Instant::now();
    let spec = args.synthetic_spec()?;
    let corpus = generate(&spec)?;
    let mut out = create(&args.out)?;
    corpus
        .write_corpus(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(&args.out, e))?;
    let mut q = create(&args.qrels)?;
    corpus
        .judgments
        .write_qrels(&mut q)
        .and_then(|_| q.flush())
        .map_err(|e| CliError::io(&args.qrels, e))?;

    let mut manifest = RunManifest::new("generate", snapshot(&spec), Some(spec.seed));
    manifest.output("corpus", &args.out)?;
    manifest.output("qrels", &args.qrels)?;
    manifest.timing.seconds = start.elapsed().as_secs_f64();
    manifest.write(&manifest_path(&args.out))?;
    info!(
        "generated {} documents, {} queries",
        corpus.documents.len(),
        corpus.judgments.relevant.len()
    );
    Ok(corpus.judgments)
}

// -------------------------------------------------------------- preprocess

#[derive(Debug, Clone, Args, Serialize)]
pub struct PreprocessArgs {
    /// Raw corpus (JSON lines).
    #[arg(long)]
    pub raw: PathBuf,
    /// Preprocessed corpus output.
    #[arg(long)]
    pub out: PathBuf,
    /// Segmentation: `meaningful`, `meaningful:<part>`, a fraction or a percentage.
    #[arg(long, default_value = "meaningful")]
    pub pos: String,
    #[arg(long, default_value_t = 200)]
    pub l_max: usize,
    /// Comma-separated part order, overriding the file's.
    #[arg(long)]
    pub part_order: Option<String>,
    /// Also write the documents' groundtruth as judgments.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
}

fn segmentation(pos: &str, raw: &Path, part_order: &Option<String>) -> CliResult<SegmentationSpec> {
    let order = match parse_part_order(part_order) {
        Some(o) => o,
        None => {
            let file = File::open(raw).map_err(|e| CliError::io(raw, e))?;
            let (order, _) = ctpe::corpus::parse_raw_corpus(BufReader::new(file), None)?;
            order
        }
    };
    Ok(SegmentationSpec::parse(pos, &order)?)
}

pub fn cmd_preprocess(args: &PreprocessArgs) -> CliResult<CorpusStore> {
    let start = Instant::now();
    let order = parse_part_order(&args.part_order);
    let spec = segmentation(&args.pos, &args.raw, &args.part_order)?;
    let store = load_corpus(&args.raw, spec, args.l_max, order.as_deref())?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    store.save(&args.out)?;

    let mut manifest = RunManifest::new("preprocess", snapshot(args), None);
    manifest.input("raw", &args.raw);
    manifest.output("corpus", &args.out)?;
    if let Some(path) = &args.qrels {
        let judgments = Judgments {
            relevant: store.groundtruth(),
            candidates: store.pair_ids(Split::Candidate).into_iter().map(String::from).collect(),
        };
        let mut out = create(path)?;
        judgments
            .write_qrels(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| CliError::io(path, e))?;
        manifest.output("qrels", path)?;
    }
    manifest.timing.seconds = start.elapsed().as_secs_f64();
    manifest.write(&manifest_path(&args.out))?;
    info!(
        "{} documents, {} pairs, {} dropped",
        store.documents.len(),
        store.pairs.len(),
        store.dropped()
    );
    Ok(store)
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Uniform random word vectors over the corpus vocabulary.
    #[default]
    Random,
    /// Word vectors read from `--vectors`.
    Pretrained,
}

/// Word-vector backend and training hyperparameters. Precedence, lowest
/// first: built-in defaults, `--config` file, `--set` entries, named flags.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Backend::Random)]
    pub backend: Backend,
    /// Word-vector file for the pretrained backend.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Word-vector dimension (random backend; default 100).
    #[arg(long)]
    pub dim: Option<usize>,
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` configuration entries.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long)]
    pub n_f: Option<usize>,
    /// Kernel widths, e.g. `1,2,3,5`.
    #[arg(long)]
    pub widths: Option<String>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// `uniform` or `tfidf`.
    #[arg(long)]
    pub sampling: Option<String>,
    #[arg(long)]
    pub tfidf_k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub const DEFAULT_DIM: usize = 100;

impl ModelArgs {
    pub fn train_config(&self) -> CliResult<TrainConfig> {
        let mut config = TrainConfig::default();
        let mut apply = |key: &str, value: &str| -> CliResult<()> {
            if config.set(key, value)? {
                Ok(())
            } else {
                Err(CliError::Config(format!("unknown configuration key `{key}`")))
            }
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            for (k, v) in parse_kv(&text)? {
                apply(&k, &v)?;
            }
        }
        for entry in &self.set {
            let (k, v) = entry
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("expected KEY=VALUE, got `{entry}`")))?;
            apply(k.trim(), v.trim())?;
        }
        let flags: [(&str, Option<String>); 11] = [
            ("l", self.l.map(|v| v.to_string())),
            ("n_f", self.n_f.map(|v| v.to_string())),
            ("widths", self.widths.clone()),
            ("margin", self.margin.map(|v| v.to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("batch", self.batch.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("sampling", self.sampling.clone()),
            ("tfidf_k", self.tfidf_k.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                apply(k, &v)?;
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Loads or draws the word-vector table for `store`.
    pub fn table(&self, store: &CorpusStore, seed: u64) -> CliResult<EmbeddingTable> {
        match self.backend {
            Backend::Random => {
                if self.vectors.is_some() {
                    return Err(CliError::Config(
                        "`--vectors` needs `--backend pretrained`".into(),
                    ));
                }
                Ok(random_vectors(store, self.dim.unwrap_or(DEFAULT_DIM), seed)?)
            }
            Backend::Pretrained => {
                let path = self.vectors.as_ref().ok_or_else(|| {
                    CliError::Config("`--backend pretrained` needs `--vectors`".into())
                })?;
                let dim = match self.dim {
                    Some(d) => d,
                    None => detect_dim(path)?,
                };
                Ok(load_pretrained(path, dim)?)
            }
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Preprocessed corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint output; the loss log goes to `<out>.log` and random word
    /// vectors to `<out>.vectors`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

pub fn default_vectors_path(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".vectors")
}

fn render_log(report: &TrainReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# trained {} documents, skipped {}; best epoch {}; stop {:?} after epoch {}",
        report.trained_documents,
        report.skipped_documents.len(),
        report.best_epoch,
        report.stop_reason,
        report.stopped_epoch
    );
    out.push_str("epoch\tmean_loss\n");
    for e in &report.epochs {
        let _ = writeln!(out, "{}\t{}", e.epoch, e.mean_loss);
    }
    out
}

pub fn cmd_train(args: &TrainArgs, exec: Execution) -> CliResult<(TwinEncoder, TrainReport)> {
    let start = Instant::now();
    let config = args.model.train_config()?;
    let store = CorpusStore::load(&args.corpus)?;
    let table = args.model.table(&store, config.seed)?;
    let (twin, report) = train_with(&store, &table, &config, exec, |e| {
        info!("epoch {}: mean loss {:.6}", e.epoch, e.mean_loss)
    })?;

    let mut manifest = RunManifest::new(
        "train",
        serde_json::json!({ "args": snapshot(args), "resolved": snapshot(&config) }),
        Some(config.seed),
    );
    manifest.input("corpus", &args.corpus);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    twin.save(&args.out)?;
    manifest.output("checkpoint", &args.out)?;
    let log = with_suffix(&args.out, ".log");
    write_text(&log, &render_log(&report))?;
    manifest.output("log", &log)?;
    match args.model.backend {
        Backend::Random => {
            let path = default_vectors_path(&args.out);
            table.save(&path)?;
            manifest.output("vectors", &path)?;
        }
        Backend::Pretrained => {
            if let Some(v) = &args.model.vectors {
                manifest.input("vectors", v);
            }
        }
    }
    manifest.timing.seconds = start.elapsed().as_secs_f64();
    manifest.timing.epoch_seconds = report.epochs.iter().map(|e| e.seconds).collect();
    manifest.write(&manifest_path(&args.out))?;
    Ok((twin, report))
}

// ------------------------------------------------------------------- embed

#[derive(Debug, Clone, Args, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Word vectors; defaults to `<checkpoint>.vectors`.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Embedding store output.
    #[arg(long)]
    pub out: PathBuf,
}

fn load_model(checkpoint: &Path, vectors: &Option<PathBuf>) -> CliResult<(TwinEncoder, EmbeddingTable, PathBuf)> {
    let twin = TwinEncoder::load(checkpoint)?;
    let path = vectors
        .clone()
        .unwrap_or_else(|| default_vectors_path(checkpoint));
    let table = load_pretrained(&path, twin.config.dim)?;
    Ok((twin, table, path))
}

pub fn cmd_embed(args: &EmbedArgs, exec: Execution) -> CliResult<EmbeddingStore> {
    let start = Instant::now();
    let store = CorpusStore::load(&args.corpus)?;
    let (twin, table, vectors) = load_model(&args.checkpoint, &args.vectors)?;
    let (emb, skipped) = embed_corpus(&twin, &table, &store, exec);
    if !skipped.is_empty() {
        info!("{} document(s) could not be embedded", skipped.len());
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    emb.save(&args.out)?;
    let mut manifest = RunManifest::new("embed", snapshot(args), None);
    manifest.input("corpus", &args.corpus);
    manifest.input("checkpoint", &args.checkpoint);
    manifest.input("vectors", &vectors);
    manifest.output("store", &args.out)?;
    manifest.timing.seconds = start.elapsed().as_secs_f64();
    manifest.write(&manifest_path(&args.out))?;
    Ok(emb)
}

// ---------------------------------------------------------------- retrieve

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Cosine of averaged word vectors.
    Avg,
    /// Cosine of TF-IDF vectors.
    Tfidf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RetrieveArgs {
    /// Embedding store (pair-similarity retrieval).
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Checkpoint the store must come from.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Single-vector baseline instead of pair similarity.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Preprocessed corpus (baselines).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Word vectors (avg baseline, or checking `--checkpoint`).
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    /// Keep only the best N candidates per query; full ranking by default.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Run file output.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_retrieve(args: &RetrieveArgs, exec: Execution) -> CliResult<Vec<RankedList>> {
    let start = Instant::now();
    let mut manifest = RunManifest::new("retrieve", snapshot(args), None);
    let need = |p: &Option<PathBuf>, what: &str| {
        p.clone()
            .ok_or_else(|| CliError::Config(format!("this retrieval mode needs `--{what}`")))
    };
    let lists = match args.baseline {
        None => {
            let path = need(&args.store, "store")?;
            let emb = EmbeddingStore::load(&path)?;
            manifest.input("store", &path);
            if let Some(ckpt) = &args.checkpoint {
                let (twin, table, _) = load_model(ckpt, &args.vectors)?;
                emb.check_model(&twin, &table)?;
                manifest.input("checkpoint", ckpt);
            }
            let queries = emb.ids(Split::Test);
            let candidates = emb.ids(Split::Candidate);
            ctpe::retrieval::rank_pairs(&emb, &queries, &emb, &candidates, args.depth, exec)?
        }
        Some(Baseline::Avg) => {
            let corpus = need(&args.corpus, "corpus")?;
            let vectors = need(&args.vectors, "vectors")?;
            let store = CorpusStore::load(&corpus)?;
            let table = load_pretrained(&vectors, detect_dim(&vectors)?)?;
            manifest.input("corpus", &corpus);
            manifest.input("vectors", &vectors);
            rank_average(&store, &table, args.depth, exec)?
        }
        Some(Baseline::Tfidf) => {
            let corpus = need(&args.corpus, "corpus")?;
            let store = CorpusStore::load(&corpus)?;
            manifest.input("corpus", &corpus);
            rank_tfidf_baseline(&store, args.depth, exec)?
        }
    };
    let mut out = create(&args.out)?;
    write_run(&lists, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(&args.out, e))?;
    manifest.output("run", &args.out)?;
    manifest.timing.seconds = start.elapsed().as_secs_f64();
    manifest.write(&manifest_path(&args.out))?;
    Ok(lists)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Preprocessed corpus whose candidates form the judged universe.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub topn: usize,
    /// Depth for NDCG and bpref; full ranking by default.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Text report output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report output.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

pub fn load_judgments(qrels: &Path) -> CliResult<Judgments> {
    let file = File::open(qrels).map_err(|e| CliError::io(qrels, e))?;
    Ok(Judgments::read_qrels(BufReader::new(file))?)
}

pub fn cmd_evaluate(args: &EvaluateArgs, exec: Execution) -> CliResult<MetricsReport> {
    let start = Instant::now();
    let file = File::open(&args.run).map_err(|e| CliError::io(&args.run, e))?;
    let run = read_run(BufReader::new(file))?;
    let mut judgments = load_judgments(&args.qrels)?;
    match &args.corpus {
        Some(path) => {
            let store = CorpusStore::load(path)?;
            judgments
                .candidates
                .extend(store.pair_ids(Split::Candidate).into_iter().map(String::from));
        }
        None => {
            for list in run.values() {
                judgments
                    .candidates
                    .extend(list.iter().map(|(id, _)| id.clone()));
            }
        }
    }
    let report = evaluate_run(&run, &judgments, args.topn, args.cutoff, exec)?;

    let mut manifest = RunManifest::new("evaluate", snapshot(args), None);
    manifest.input("run", &args.run);
    manifest.input("qrels", &args.qrels);
    if let Some(path) = &args.out {
        write_text(path, &report.render_text())?;
        manifest.output("report", path)?;
    }
    if let Some(path) = &args.json {
        write_text(path, &report.to_json())?;
        manifest.output("json", path)?;
    }
    if let Some(primary) = args.out.as_ref().or(args.json.as_ref()) {
        manifest.timing.seconds = start.elapsed().as_secs_f64();
        manifest.write(&manifest_path(primary))?;
    }
    Ok(report)
}

// --------------------------------------------------------------- sweep-pos

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    /// Raw corpus (JSON lines).
    #[arg(long)]
    pub raw: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Comma-separated segmentation positions.
    #[arg(long, default_value = "0.2,0.4,0.6,0.8,meaningful")]
    pub positions: String,
    #[arg(long, default_value_t = 200)]
    pub l_max: usize,
    #[arg(long)]
    pub part_order: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub topn: usize,
    /// Directory for per-position reports and the summary table.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    pub report: MetricsReport,
}

pub fn render_sweep(rows: &[SweepRow], topn: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# segmentation sweep; topN = {topn}; NDCG and bpref over full ranking");
    let _ = write!(out, "{:<6}", "pos");
    if let Some(first) = rows.first() {
        for h in first.report.header_names() {
            let _ = write!(out, " {h:>8}");
        }
    }
    out.push('\n');
    for row in rows {
        let m = &row.report.mean;
        let _ = write!(out, "{:<6}", row.label);
        for v in [m.precision, m.recall, m.f1, m.ap, m.ndcg, m.bpref] {
            let _ = write!(out, " {v:>8.4}");
        }
        out.push('\n');
    }
    out
}

/// Re-segments, retrains and evaluates the corpus at every position with
/// identical seeds.
pub fn cmd_sweep_pos(args: &SweepArgs, exec: Execution) -> CliResult<Vec<SweepRow>> {
    let start = Instant::now();
    let config = args.model.train_config()?;
    let judgments = load_judgments(&args.qrels)?;
    let order = match parse_part_order(&args.part_order) {
        Some(o) => o,
        None => {
            let file = File::open(&args.raw).map_err(|e| CliError::io(&args.raw, e))?;
            ctpe::corpus::parse_raw_corpus(BufReader::new(file), None)?.0
        }
    };
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let mut manifest = RunManifest::new(
        "sweep-pos",
        serde_json::json!({ "args": snapshot(args), "resolved": snapshot(&config) }),
        Some(config.seed),
    );
    manifest.input("raw", &args.raw);
    manifest.input("qrels", &args.qrels);

    let mut rows = Vec::new();
    for item in args.positions.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let spec = SegmentationSpec::parse(item, &order)?;
        if matches!(spec, SegmentationSpec::Meaningful { .. }) && order.len() < 2 {
            log::warn!("no part seam in this corpus; skipping `{item}`");
            continue;
        }
        let store = load_corpus(&args.raw, spec, args.l_max, Some(&order))?;
        let table = args.model.table(&store, config.seed)?;
        let (twin, _) = train_with(&store, &table, &config, exec, |_| {})?;
        let lists = rank_model(&store, &twin, &table, None, exec)?;
        let mut judged = judgments.clone();
        judged
            .candidates
            .extend(store.pair_ids(Split::Candidate).into_iter().map(String::from));
        let report = evaluate_run(&lists_to_run(lists), &judged, args.topn, None, exec)?;
        let label = spec.label();
        let stem = format!("report-{}", label.trim_end_matches('%'));
        let text = args.out_dir.join(format!("{stem}.txt"));
        let json = args.out_dir.join(format!("{stem}.json"));
        write_text(&text, &report.render_text())?;
        write_text(&json, &report.to_json())?;
        manifest.output(&format!("{stem}.txt"), &text)?;
        manifest.output(&format!("{stem}.json"), &json)?;
        info!("pos {label}: MAP {:.4}", report.map());
        rows.push(SweepRow { label, report });
    }
    if rows.is_empty() {
        return Err(CliError::Config("no segmentation position to sweep".into()));
    }
    let summary = args.out_dir.join("summary.txt");
    write_text(&summary, &render_sweep(&rows, args.topn))?;
    manifest.output("summary", &summary)?;
    manifest.timing.seconds = start.elapsed().as_secs_f64();
    manifest.write(&manifest_path(&summary))?;
    Ok(rows)
}
