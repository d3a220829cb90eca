//! Stage orchestration: ingest → classify → factors → regress → report.
//!
//! Each stage writes into its own directory under `output_dir` and finishes
//! by writing `stamp.json`, which records a fingerprint of the stage's
//! configuration and input files plus a hash of every output. A stage whose
//! fingerprint matches and whose outputs are intact is skipped. After every
//! stage `manifest.json` is rebuilt from the stamps.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cluster::{classify_corpus, ClusterError, GridCell};
use crate::config::{ConfigError, IngestSource, PipelineConfig};
use crate::factors::{
    buzzword_series_name, candidate_term, count_mentions, read_panel, select_buzzwords, stock_factors, term_series,
    top_ngrams, write_buzzwords, write_panel, write_top_ngrams, BuzzwordSet, FactorSeries,
};
use crate::ingest::{
    daily_volume, day_span_utc, fetch_range, read_corpus, read_raw_comments, write_corpus, Corpus, FetchReport,
    PushshiftClient, RateLimiter, RetryPolicy,
};
use crate::regress::{
    render_table, run_model_suite, Benchmark, Family, ModelSpec, ReturnsPanel, StockInputs, SuiteResult, TableColumn,
    Variant,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Classify,
    Factors,
    Regress,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Classify, Stage::Factors, Stage::Regress, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Classify => "classify",
            Stage::Factors => "factors",
            Stage::Regress => "regress",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether a failure is the caller's to fix (bad input, missing file) or a
/// fault inside the tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    User,
    Internal,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: Stage, kind: FailureKind, message: String },
}

impl PipelineError {
    /// 1 for user errors, 2 for internal ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Stage { kind: FailureKind::User, .. } => 1,
            PipelineError::Stage { kind: FailureKind::Internal, .. } => 2,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            PipelineError::Config(_) => None,
        }
    }
}

struct Failure {
    kind: FailureKind,
    message: String,
}

fn user(e: impl fmt::Display) -> Failure {
    Failure { kind: FailureKind::User, message: e.to_string() }
}

fn internal(e: impl fmt::Display) -> Failure {
    Failure { kind: FailureKind::Internal, message: e.to_string() }
}

type StageResult<T> = Result<T, Failure>;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub stage: Stage,
    pub fingerprint: String,
    /// Output path relative to `output_dir` → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

/// What [`run_stages`] did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub executed: Vec<Stage>,
    pub skipped: Vec<Stage>,
    pub manifest: Manifest,
}

/// Output files of one stage, collected as they are written.
struct Outputs<'a> {
    root: &'a Path,
    stage: Stage,
    files: BTreeMap<String, String>,
}

impl<'a> Outputs<'a> {
    fn new(root: &'a Path, stage: Stage) -> StageResult<Self> {
        std::fs::create_dir_all(root.join(stage.name())).map_err(internal)?;
        Ok(Self { root, stage, files: BTreeMap::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> StageResult<()> {
        let rel = format!("{}/{name}", self.stage.name());
        std::fs::write(self.root.join(&rel), bytes).map_err(|e| internal(format!("writing {rel}: {e}")))?;
        self.files.insert(rel, sha256_hex(bytes));
        Ok(())
    }

    /// Registers a file the stage wrote by other means.
    fn record(&mut self, name: &str) -> StageResult<()> {
        let rel = format!("{}/{name}", self.stage.name());
        let h = hash_file(&self.root.join(&rel)).map_err(internal)?;
        self.files.insert(rel, h);
        Ok(())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(self.stage.name()).join(name)
    }
}

pub const STAMP_FILE: &str = "stamp.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn stamp_path(root: &Path, stage: Stage) -> PathBuf {
    root.join(stage.name()).join(STAMP_FILE)
}

fn read_stamp(root: &Path, stage: Stage) -> Option<Stamp> {
    let text = std::fs::read_to_string(stamp_path(root, stage)).ok()?;
    serde_json::from_str(&text).ok()
}

fn outputs_intact(root: &Path, stamp: &Stamp) -> bool {
    stamp.outputs.iter().all(|(rel, h)| hash_file(&root.join(rel)).is_ok_and(|got| &got == h))
}

fn stage_output(root: &Path, stage: Stage, name: &str) -> PathBuf {
    root.join(stage.name()).join(name)
}

/// Hash of the stage's configuration slice and every input file. Inputs are
/// keyed by file name so relocating a project keeps its stamps valid. Missing
/// inputs hash as absent so the stage itself reports them.
fn fingerprint(cfg: &PipelineConfig, stage: Stage) -> String {
    let root = &cfg.output_dir;
    let real = cfg;
    let name_only = |p: &Option<PathBuf>| p.as_ref().and_then(|p| p.file_name()).map(PathBuf::from);
    let mut cfg = cfg.clone();
    cfg.ingest.path = name_only(&cfg.ingest.path);
    cfg.text.stopwords = name_only(&cfg.text.stopwords);
    cfg.regress.returns_csv = name_only(&cfg.regress.returns_csv);
    let tickers = json!(cfg.tickers);
    let span = json!({ "start": cfg.start, "end": cfg.end, "timezone": cfg.timezone });
    let (settings, inputs): (serde_json::Value, Vec<PathBuf>) = match stage {
        Stage::Ingest => (
            json!({ "tickers": tickers, "span": span, "subreddit": cfg.subreddit, "ingest": cfg.ingest }),
            real.ingest.path.iter().filter(|_| real.ingest.source == IngestSource::File).cloned().collect(),
        ),
        Stage::Classify => (
            json!({ "tickers": tickers, "text": cfg.text, "classify": cfg.classify }),
            [stage_output(root, Stage::Ingest, STAMP_FILE)].into_iter().chain(real.text.stopwords.clone()).collect(),
        ),
        Stage::Factors => (
            json!({ "tickers": tickers, "span": span, "text": cfg.text, "factors": cfg.factors }),
            vec![stage_output(root, Stage::Ingest, STAMP_FILE), stage_output(root, Stage::Classify, STAMP_FILE)],
        ),
        Stage::Regress => (
            json!({ "tickers": tickers, "factors": cfg.factors, "regress": cfg.regress }),
            [stage_output(root, Stage::Factors, STAMP_FILE)].into_iter().chain(real.regress.returns_csv.clone()).collect(),
        ),
        Stage::Report => (json!({ "tickers": tickers }), vec![stage_output(root, Stage::Regress, STAMP_FILE)]),
    };
    let mut h = Sha256::new();
    h.update(stage.name().as_bytes());
    h.update(settings.to_string().as_bytes());
    for p in inputs {
        let file_hash = hash_file(&p).unwrap_or_else(|_| "absent".into());
        h.update(p.file_name().map(|n| n.to_string_lossy()).unwrap_or_default().as_bytes());
        h.update(file_hash.as_bytes());
    }
    hex::encode(h.finalize())
}

/// Rebuilds `manifest.json` from every stage stamp present.
pub fn write_manifest(root: &Path) -> std::io::Result<Manifest> {
    let mut files = Vec::new();
    for stage in Stage::ALL {
        let Some(stamp) = read_stamp(root, stage) else { continue };
        for (path, sha256) in &stamp.outputs {
            files.push(ManifestEntry { path: path.clone(), sha256: sha256.clone(), stage });
        }
        let rel = format!("{}/{STAMP_FILE}", stage.name());
        files.push(ManifestEntry { sha256: hash_file(&root.join(&rel))?, path: rel, stage });
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest { files };
    let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)? + "\n";
    std::fs::write(root.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// Runs the requested stages in pipeline order. Stages whose inputs and
/// settings are unchanged since their last successful run are skipped
/// unless `force` is set.
pub fn run_stages(cfg: &PipelineConfig, stages: &[Stage], force: bool) -> Result<RunSummary, PipelineError> {
    cfg.validate().map_err(ConfigError::Invalid)?;
    let root = cfg.output_dir.as_path();
    std::fs::create_dir_all(root).map_err(|e| PipelineError::Stage {
        stage: stages.first().copied().unwrap_or(Stage::Ingest),
        kind: FailureKind::User,
        message: format!("cannot create output directory {}: {e}", root.display()),
    })?;
    let mut ordered = stages.to_vec();
    ordered.sort();
    ordered.dedup();
    let mut summary = RunSummary { executed: vec![], skipped: vec![], manifest: Manifest::default() };
    for stage in ordered {
        let fp = fingerprint(cfg, stage);
        if !force {
            if let Some(stamp) = read_stamp(root, stage) {
                if stamp.fingerprint == fp && outputs_intact(root, &stamp) {
                    info!("{stage}: up to date, skipping");
                    summary.skipped.push(stage);
                    continue;
                }
            }
        }
        info!("{stage}: running");
        let fail = |f: Failure| PipelineError::Stage { stage, kind: f.kind, message: f.message };
        let mut out = Outputs::new(root, stage).map_err(fail)?;
        let result = match stage {
            Stage::Ingest => ingest_stage(cfg, &mut out),
            Stage::Classify => classify_stage(cfg, &mut out),
            Stage::Factors => factors_stage(cfg, &mut out),
            Stage::Regress => regress_stage(cfg, &mut out),
            Stage::Report => report_stage(cfg, &mut out),
        };
        result.map_err(fail)?;
        let stamp = Stamp { stage, fingerprint: fp, outputs: out.files };
        let text = serde_json::to_string_pretty(&stamp).expect("stamp serializes") + "\n";
        std::fs::write(stamp_path(root, stage), text)
            .map_err(|e| fail(internal(format!("writing stamp: {e}"))))?;
        summary.executed.push(stage);
    }
    summary.manifest = write_manifest(root).map_err(|e| PipelineError::Stage {
        stage: stages.last().copied().unwrap_or(Stage::Report),
        kind: FailureKind::Internal,
        message: format!("writing manifest: {e}"),
    })?;
    Ok(summary)
}

/// Runs every stage.
pub fn run_pipeline(cfg: &PipelineConfig, force: bool) -> Result<RunSummary, PipelineError> {
    run_stages(cfg, &Stage::ALL, force)
}

fn corpus_span(cfg: &PipelineConfig) -> (i64, i64) {
    day_span_utc(cfg.start, cfg.end, cfg.tz())
}

fn require(path: &Path, producer: Stage) -> StageResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(user(format!("{} is missing; run the {producer} stage first", path.display())))
    }
}

#[derive(Debug, Serialize)]
struct IngestReport {
    source: IngestSource,
    fetch: Option<FetchReport>,
    input_records: usize,
    duplicates: usize,
    out_of_span: usize,
    comments: usize,
    mentioning: usize,
}

fn ingest_stage(cfg: &PipelineConfig, out: &mut Outputs<'_>) -> StageResult<()> {
    let span = corpus_span(cfg);
    let (records, fetch) = match cfg.ingest.source {
        IngestSource::File => {
            let path = cfg.ingest.path.as_ref().expect("validated");
            (read_raw_comments(path).map_err(|e| user(format!("{}: {e}", path.display())))?, None)
        }
        IngestSource::Endpoint => {
            let retry = RetryPolicy { max_attempts: cfg.ingest.max_attempts, ..RetryPolicy::default() };
            let client = PushshiftClient::new(
                &cfg.ingest.endpoint,
                &cfg.subreddit,
                retry,
                RateLimiter::new(cfg.ingest.requests_per_second),
            );
            let mut report = fetch_range(&client, span.0, span.1, cfg.ingest.parallelism).map_err(user)?;
            let records = std::mem::take(&mut report.records);
            (records, Some(report))
        }
    };
    let (corpus, stats) =
        Corpus::assemble(records, &cfg.ticker_specs(), span, cfg.ingest.keep_unmentioned_bodies).map_err(user)?;
    info!("ingest: {} comments, {} mention a tracked ticker", corpus.len(), stats.mentioning);
    write_corpus(&out.path("corpus.jsonl"), &corpus).map_err(internal)?;
    out.record("corpus.jsonl")?;
    let report = IngestReport {
        source: cfg.ingest.source,
        fetch,
        input_records: stats.input_records,
        duplicates: stats.duplicates,
        out_of_span: stats.out_of_span,
        comments: corpus.len(),
        mentioning: stats.mentioning,
    };
    out.write("ingest_report.json", (serde_json::to_string_pretty(&report).map_err(internal)? + "\n").as_bytes())
}

fn load_corpus(cfg: &PipelineConfig) -> StageResult<Corpus> {
    let path = stage_output(&cfg.output_dir, Stage::Ingest, "corpus.jsonl");
    require(&path, Stage::Ingest)?;
    read_corpus(&path, corpus_span(cfg)).map_err(user)
}

/// Per-stock outcome of the grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub stock: String,
    pub comments: usize,
    pub vocabulary_size: usize,
    pub best_j: usize,
    pub best_k: usize,
    pub avg_silhouette: f64,
    pub grid: Vec<GridCell>,
}

fn classify_stage(cfg: &PipelineConfig, out: &mut Outputs<'_>) -> StageResult<()> {
    let corpus = load_corpus(cfg)?;
    let vectorizer = cfg.vectorizer().map_err(user)?;
    let grid = cfg.grid();
    let mut summaries = Vec::new();
    for spec in cfg.ticker_specs() {
        let stock = spec.symbol();
        let docs: Vec<(String, &str)> = corpus.mentioning(stock).map(|c| (c.id.clone(), c.body.as_str())).collect();
        let class = classify_corpus(&docs, &vectorizer, &grid).map_err(|e| match e {
            ClusterError::InsufficientData { .. } | ClusterError::Text(_) | ClusterError::NoFeasibleCell => {
                user(format!("{stock}: {e}"))
            }
            other => internal(format!("{stock}: {other}")),
        })?;
        info!(
            "classify: {stock} j = {}, k = {}, silhouette {:.3}",
            class.grid.best_j,
            class.grid.best_k,
            class.grid.best.avg_silhouette.unwrap_or(f64::NAN)
        );
        out.write(&format!("classes_{stock}.csv"), class.assignments_csv().as_bytes())?;
        out.write(&format!("silhouette_{stock}.csv"), class.grid.silhouette_csv().as_bytes())?;
        summaries.push(ClassSummary {
            stock: stock.to_string(),
            comments: docs.len(),
            vocabulary_size: class.vocabulary_size,
            best_j: class.grid.best_j,
            best_k: class.grid.best_k,
            avg_silhouette: class.grid.best.avg_silhouette.unwrap_or(0.0),
            grid: class.grid.cells.clone(),
        });
    }
    out.write("summary.json", (serde_json::to_string_pretty(&summaries).map_err(internal)? + "\n").as_bytes())
}

fn load_class_summary(cfg: &PipelineConfig) -> StageResult<Vec<ClassSummary>> {
    let path = stage_output(&cfg.output_dir, Stage::Classify, "summary.json");
    require(&path, Stage::Classify)?;
    let text = std::fs::read_to_string(&path).map_err(user)?;
    serde_json::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn load_classes(path: &Path) -> StageResult<HashMap<String, usize>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for rec in r.records() {
        let rec = rec.map_err(user)?;
        let class = rec[1].parse().map_err(|e| user(format!("{}: {e}", path.display())))?;
        map.insert(rec[0].to_string(), class);
    }
    Ok(map)
}

/// A stock's factor series and its ranked n-gram counts.
type StockFactors = (Vec<FactorSeries>, Vec<(String, u64)>);

fn factors_stage(cfg: &PipelineConfig, out: &mut Outputs<'_>) -> StageResult<()> {
    let corpus = load_corpus(cfg)?;
    let summaries = load_class_summary(cfg)?;
    let vectorizer = cfg.vectorizer().map_err(user)?;
    let tz = cfg.tz();
    let dates = (cfg.start, cfg.end);
    let volume = daily_volume(&corpus, dates, tz);

    let per_stock: Vec<StageResult<StockFactors>> = cfg
        .ticker_specs()
        .par_iter()
        .map(|spec| {
            let stock = spec.symbol();
            let summary = summaries
                .iter()
                .find(|s| s.stock == stock)
                .ok_or_else(|| user(format!("no classification for {stock}; rerun classify")))?;
            let classes = load_classes(&stage_output(&cfg.output_dir, Stage::Classify, &format!("classes_{stock}.csv")))?;
            let counts = count_mentions(&corpus, stock, &classes, summary.best_k, dates, tz).map_err(user)?;
            let mut series = stock_factors(&counts, &volume);
            let bodies: Vec<&str> = corpus.mentioning(stock).map(|c| c.body.as_str()).collect();
            let top = top_ngrams(&bodies, &vectorizer, cfg.factors.top_ngrams);
            let terms: Vec<String> = top.iter().map(|(t, _)| t.clone()).collect();
            series.extend(term_series(&corpus, stock, &terms, &vectorizer, &volume, tz));
            Ok((series, top))
        })
        .collect();

    let mut all_series = Vec::new();
    let mut tops = Vec::new();
    for (spec, r) in cfg.ticker_specs().iter().zip(per_stock) {
        let (series, top) = r?;
        all_series.extend(series);
        tops.push((spec.symbol().to_string(), top));
    }
    let mut buf = Vec::new();
    write_panel(&mut buf, &all_series).map_err(internal)?;
    out.write("factors.csv", &buf)?;
    let mut buf = Vec::new();
    write_top_ngrams(&mut buf, &tops).map_err(internal)?;
    out.write("top_ngrams.csv", &buf)?;
    let mut vol = String::from("date,volume\n");
    for (d, v) in &volume {
        vol.push_str(&format!("{d},{v}\n"));
    }
    out.write("volume.csv", vol.as_bytes())
}

/// One fitted (or failed) regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub stock: String,
    pub benchmark: Benchmark,
    /// Family letter; absent for the three-factor base model.
    pub family: Option<char>,
    pub variant: Variant,
    pub lag: usize,
    pub result: Option<SuiteResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockRecord {
    pub stock: String,
    pub k: usize,
    pub n_obs: usize,
    pub buzzwords: Vec<String>,
    pub buzzword_correlations: Vec<f64>,
}

/// The regress stage's JSON dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub stocks: Vec<StockRecord>,
    pub cells: Vec<CellRecord>,
}

/// Stock-level regression inputs built from the returns file and the
/// factor panel.
pub fn stock_inputs(
    cfg: &PipelineConfig,
    panel: &ReturnsPanel,
    factor_series: &[FactorSeries],
    stock_symbol: &str,
    etf: &str,
    k: usize,
) -> Result<(StockInputs, Result<BuzzwordSet, String>), String> {
    let r = &cfg.regress;
    let stock = stock_symbol.to_lowercase();
    let calendar = panel
        .complete_dates(&[&r.market_column, &r.hml_column, &r.smb_column])
        .map_err(|e| e.to_string())?;
    let rf = r.risk_free_column.as_deref();
    let excess_return = panel.excess_series(stock_symbol, rf, &stock).map_err(|e| e.to_string())?.restrict_to(&calendar);
    let etf_series = panel.excess_series(etf, rf, &stock).map_err(|e| e.to_string())?;
    let mut reddit = BTreeMap::new();
    let mut candidates = Vec::new();
    for s in factor_series.iter().filter(|s| s.stock == stock) {
        match candidate_term(&s.name) {
            Some(term) => candidates.push((term.to_string(), s.restrict_to(&calendar))),
            None => {
                reddit.insert(s.name.clone(), s.clone());
            }
        }
    }
    let n = cfg.factors.buzzwords;
    let buzz = select_buzzwords(&stock, &candidates, &excess_return, n).map_err(|e| e.to_string());
    if let Ok(set) = &buzz {
        for (i, term) in set.terms.iter().enumerate() {
            let (_, s) = candidates.iter().find(|(t, _)| t == term).expect("selected from candidates");
            reddit.insert(buzzword_series_name(i), s.clone().renamed(buzzword_series_name(i)));
        }
    }
    let inputs = StockInputs {
        stock: stock.clone(),
        k,
        n_buzzwords: n,
        calendar,
        excess_return,
        market: panel.series(&r.market_column, &stock).map_err(|e| e.to_string())?,
        etf: etf_series,
        hml: panel.series(&r.hml_column, &stock).map_err(|e| e.to_string())?,
        smb: panel.series(&r.smb_column, &stock).map_err(|e| e.to_string())?,
        reddit,
    };
    Ok((inputs, buzz))
}

fn regress_stage(cfg: &PipelineConfig, out: &mut Outputs<'_>) -> StageResult<()> {
    let returns_path = cfg
        .regress
        .returns_csv
        .as_ref()
        .ok_or_else(|| user("regress.returns_csv is not set; daily returns are required"))?;
    let file = std::fs::File::open(returns_path)
        .map_err(|e| user(format!("cannot open returns file {}: {e}", returns_path.display())))?;
    let panel = ReturnsPanel::from_csv(file).map_err(|e| user(format!("{}: {e}", returns_path.display())))?;
    let factors_path = stage_output(&cfg.output_dir, Stage::Factors, "factors.csv");
    require(&factors_path, Stage::Factors)?;
    let series = read_panel(std::fs::File::open(&factors_path).map_err(user)?).map_err(user)?;
    let summaries = load_class_summary(cfg)?;

    let mut stocks = Vec::new();
    let mut buzz_sets = Vec::new();
    let mut jobs: Vec<(ModelSpec, usize)> = Vec::new();
    let mut inputs_by_stock = Vec::new();
    for t in &cfg.tickers {
        let stock = t.symbol.to_lowercase();
        let k = summaries.iter().find(|s| s.stock == stock).map(|s| s.best_k).ok_or_else(|| {
            user(format!("no classification for {stock}; rerun classify"))
        })?;
        let etf = t.etf.as_deref().expect("validated");
        let (inputs, buzz) = stock_inputs(cfg, &panel, &series, &t.symbol, etf, k).map_err(user)?;
        let (terms, rhos) = match &buzz {
            Ok(set) => {
                buzz_sets.push(set.clone());
                (set.terms.clone(), set.correlations.clone())
            }
            Err(e) => {
                warn!("regress: {stock}: buzzword selection failed: {e}");
                (vec![], vec![])
            }
        };
        stocks.push(StockRecord {
            stock: stock.clone(),
            k,
            n_obs: inputs.excess_return.len(),
            buzzwords: terms,
            buzzword_correlations: rhos,
        });
        let idx = inputs_by_stock.len();
        for benchmark in Benchmark::ALL {
            jobs.push((ModelSpec { stock: stock.clone(), benchmark, variant: Variant::BaseFf3, lag: 0 }, idx));
            for f in Family::all() {
                jobs.push((ModelSpec::for_family(&stock, benchmark, f), idx));
            }
        }
        inputs_by_stock.push((inputs, buzz.err()));
    }

    let cells: Vec<CellRecord> = jobs
        .par_iter()
        .map(|(spec, idx)| {
            let (inputs, buzz_err) = &inputs_by_stock[*idx];
            let outcome = match (spec.variant, buzz_err) {
                (Variant::Buzzwords, Some(e)) => Err(format!("buzzword selection failed: {e}")),
                _ => run_model_suite(spec, inputs).map_err(|e| e.to_string()),
            };
            let (result, error) = match outcome {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e)),
            };
            CellRecord {
                stock: spec.stock.clone(),
                benchmark: spec.benchmark,
                family: spec.family().map(|f| f.letter()),
                variant: spec.variant,
                lag: spec.lag,
                result,
                error,
            }
        })
        .collect();
    for c in cells.iter().filter(|c| c.error.is_some()) {
        warn!(
            "regress: {} {} {:?} lag {}: {}",
            c.stock,
            c.benchmark,
            c.variant,
            c.lag,
            c.error.as_deref().unwrap_or_default()
        );
    }
    let mut buf = Vec::new();
    write_buzzwords(&mut buf, &buzz_sets).map_err(internal)?;
    out.write("buzzwords.csv", &buf)?;
    let results = Results { stocks, cells };
    out.write("results.json", (serde_json::to_string_pretty(&results).map_err(internal)? + "\n").as_bytes())
}

/// Reads a results dump written by the regress stage.
pub fn read_results(path: &Path) -> Result<Results, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// File stem of a family table, e.g. `table_a_market`.
pub fn table_name(family: Family, benchmark: Benchmark) -> String {
    format!("table_{}_{}", family.letter(), benchmark.as_str())
}

fn report_stage(cfg: &PipelineConfig, out: &mut Outputs<'_>) -> StageResult<()> {
    let path = stage_output(&cfg.output_dir, Stage::Regress, "results.json");
    require(&path, Stage::Regress)?;
    let results = read_results(&path).map_err(user)?;
    for family in Family::all() {
        for benchmark in Benchmark::ALL {
            let columns: Vec<TableColumn<'_>> = cfg
                .tickers
                .iter()
                .map(|t| {
                    let stock = t.symbol.to_lowercase();
                    let k = results.stocks.iter().find(|s| s.stock == stock).map_or(0, |s| s.k);
                    let result = results
                        .cells
                        .iter()
                        .find(|c| c.stock == stock && c.benchmark == benchmark && c.family == Some(family.letter()))
                        .and_then(|c| c.result.as_ref());
                    TableColumn { stock: t.symbol.clone(), k, n_buzzwords: cfg.factors.buzzwords, result }
                })
                .collect();
            let table = render_table(family.variant(), family.lag(), &columns).map_err(internal)?;
            let name = table_name(family, benchmark);
            out.write(&format!("{name}.txt"), table.to_text().as_bytes())?;
            out.write(&format!("{name}.csv"), table.to_csv().as_bytes())?;
        }
    }
    Ok(())
}
