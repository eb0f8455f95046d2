//! The `snipdoc` command line.
//!
//! Settings resolve as flags, then `SNIPDOC_*` environment variables, then an
//! optional TOML config file (`--config`), then built-in defaults. Exit codes:
//! 0 success, 1 empty result (or Unclear labels with `--fail-on-unclear`),
//! 2 usage or input error, 3 backend failure.

use std::collections::{HashMap, HashSet};
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, SampleSpec, SnippetRecord};
use crate::gateway::{backend_from_spec, BackendConfig, Gateway};
use crate::pipelines::{
    self, digest_json, ClassificationEntry, ClassificationStatus, ClassifiedCorpus, GeneratedDescription,
    GenerationOutcome, PipelineError, PipelineOptions, RunLogEntry, RunMetadata,
};
use crate::similarity::{score_distribution, write_scores_csv, ScoreRow};
use crate::stats::{self, AgreementLevel, ReportFormat};
use crate::taxonomy::{Category, DescriptionLabel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_EMPTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

pub const ENV_EMBED_MODEL: &str = "SNIPDOC_EMBED_MODEL";
pub const ENV_API_KEY: &str = "SNIPDOC_API_KEY";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn empty(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_EMPTY,
            message: message.into(),
        }
    }

    fn backend(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_BACKEND,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(err: PipelineError) -> Self {
        match err {
            PipelineError::CircuitOpen { .. } => CliError::backend(err.to_string()),
            other => CliError::usage(other.to_string()),
        }
    }
}

type CliResult = Result<i32, CliError>;

#[derive(Debug, Parser)]
#[command(name = "snipdoc", version, about = "README snippet description mining, classification and scoring")]
pub struct Cli {
    /// TOML file with default settings
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract snippet/description pairs from every README under a directory
    Extract {
        input_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a seeded random sample from a corpus
    Sample {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Minimum sample size; used when larger than the computed size
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        confidence: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(long)]
        proportion: Option<f64>,
    },
    /// Classify each sampled description
    Classify {
        sample: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Generate descriptions from code alone
    Generate {
        sample: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Only snippets without a description; writes suggestions.jsonl
        #[arg(long)]
        suggest: bool,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score generated descriptions against the originals
    Score {
        sample: PathBuf,
        #[arg(long)]
        generations: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Also classify both texts and flag divergent pairs
        #[arg(long)]
        classify_both: bool,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        format: Option<String>,
    },
    /// Render distribution, agreement and similarity reports
    Report {
        #[arg(long)]
        labels: PathBuf,
        /// classifications.jsonl from a classify run, for refusal and violation counts
        #[arg(long)]
        classifications: Option<PathBuf>,
        /// outcomes.jsonl from a score run
        #[arg(long)]
        outcomes: Option<PathBuf>,
        /// Second label file to compute agreement against
        #[arg(long)]
        agree_with: Option<PathBuf>,
        #[arg(long, value_parser = parse_level, default_value = "category")]
        level: AgreementLevel,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Inter-rater agreement between two label files
    Agree {
        labels_a: PathBuf,
        labels_b: PathBuf,
        #[arg(long, value_parser = parse_level, default_value = "category")]
        level: AgreementLevel,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_level(s: &str) -> Result<AgreementLevel, String> {
    match s {
        "category" => Ok(AgreementLevel::Category),
        "subtype" => Ok(AgreementLevel::Subtype),
        other => Err(format!("unknown level {other:?}; expected category or subtype")),
    }
}

#[derive(Debug, Args, Clone, Default)]
pub struct BackendArgs {
    /// `mock:<fixture.json>` or `ollama`
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub embed_model: Option<String>,
    /// Requests in flight at once
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ReportArgs {
    /// Report printed to stdout: md, csv or json (all three are written)
    #[arg(long)]
    pub format: Option<String>,
    /// Exit 1 when any description is labelled Unclear
    #[arg(long)]
    pub fail_on_unclear: bool,
    /// Count refusals as Unclear instead of listing them separately
    #[arg(long)]
    pub merge_refusals: bool,
}

/// Settings from the `--config` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub embed_model: Option<String>,
    pub concurrency: Option<usize>,
    pub timeout_secs: Option<f64>,
    pub max_retries: Option<u32>,
    pub backoff_base_ms: Option<u64>,
    pub seed: Option<u64>,
    pub confidence: Option<f64>,
    pub margin: Option<f64>,
    pub proportion: Option<f64>,
    pub format: Option<String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

/// Fully resolved settings for one invocation, recorded in `run_metadata.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend_config: Option<BackendConfig>,
    #[serde(skip_serializing_if = "serde_json::Map::is_empty")]
    pub options: serde_json::Map<String, serde_json::Value>,
}

impl RunConfig {
    fn new(command: &str, inputs: &[&Path]) -> Self {
        RunConfig {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            backend: None,
            backend_config: None,
            options: serde_json::Map::new(),
        }
    }

    fn option(mut self, key: &str, value: impl Serialize) -> Self {
        self.options
            .insert(key.into(), serde_json::to_value(value).expect("serialisable option"));
        self
    }
}

#[derive(Debug, Serialize)]
struct RunMetadataFile<'a> {
    run_config: &'a RunConfig,
    config_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    backend_id: Option<String>,
    started_at: String,
    finished_at: String,
    records_processed: usize,
    records_resumed: usize,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct Ctx {
    file: FileConfig,
    started_at: String,
}

impl Ctx {
    fn backend_config(&self, args: &BackendArgs) -> Result<(String, BackendConfig), CliError> {
        let f = &self.file;
        let mut cfg = BackendConfig::default();
        if let Some(v) = &f.endpoint {
            cfg.endpoint_url = v.clone();
        }
        if let Some(v) = &f.model {
            cfg.model_name = v.clone();
        }
        cfg.embed_model = f.embed_model.clone();
        if let Some(v) = f.concurrency {
            cfg.max_in_flight = v;
        }
        if let Some(v) = f.timeout_secs {
            cfg.timeout = secs(v)?;
        }
        if let Some(v) = f.max_retries {
            cfg.max_retries = v;
        }
        if let Some(v) = f.backoff_base_ms {
            cfg.backoff_base = Duration::from_millis(v);
        }
        cfg.apply_env();
        if let Some(v) = env_var(ENV_EMBED_MODEL) {
            cfg.embed_model = Some(v);
        }
        cfg.bearer_token = env_var(ENV_API_KEY);
        if let Some(v) = &args.endpoint {
            cfg.endpoint_url = v.clone();
        }
        if let Some(v) = &args.model {
            cfg.model_name = v.clone();
        }
        if let Some(v) = &args.embed_model {
            cfg.embed_model = Some(v.clone());
        }
        if let Some(v) = args.concurrency {
            cfg.max_in_flight = v;
        }
        if let Some(v) = args.timeout_secs {
            cfg.timeout = secs(v)?;
        }
        if let Some(v) = args.max_retries {
            cfg.max_retries = v;
        }
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        let spec = args
            .backend
            .clone()
            .or_else(|| f.backend.clone())
            .unwrap_or_else(|| "ollama".into());
        Ok((spec, cfg))
    }

    fn gateway(&self, args: &BackendArgs, run: &mut RunConfig) -> Result<Gateway, CliError> {
        let (spec, cfg) = self.backend_config(args)?;
        let backend = backend_from_spec(&spec, &cfg).map_err(CliError::usage)?;
        run.backend = Some(spec);
        run.backend_config = Some(cfg.clone());
        Gateway::new(Arc::clone(&backend), cfg).map_err(|e| CliError::usage(e.to_string()))
    }

    fn format(&self, flag: &Option<String>) -> Result<ReportFormat, CliError> {
        flag.as_deref()
            .or(self.file.format.as_deref())
            .unwrap_or("md")
            .parse()
            .map_err(CliError::usage)
    }

    fn write_metadata(
        &self,
        out_dir: &Path,
        run: &RunConfig,
        gateway: Option<&Gateway>,
        processed: usize,
        resumed: usize,
    ) -> Result<(), CliError> {
        let meta = RunMetadataFile {
            run_config: run,
            config_digest: digest_json(run),
            model_name: gateway.map(|g| g.config().model_name.clone()),
            backend_id: gateway.map(Gateway::backend_id),
            started_at: self.started_at.clone(),
            finished_at: now(),
            records_processed: processed,
            records_resumed: resumed,
        };
        let mut text = serde_json::to_string_pretty(&meta).expect("metadata serialises");
        text.push('\n');
        write_file(&out_dir.join("run_metadata.json"), &text)
    }
}

fn secs(v: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(v).map_err(|e| CliError::usage(format!("invalid timeout {v}: {e}")))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serialisable"));
        out.push('\n');
    }
    write_file(path, &out)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| CliError::usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

fn load_records(path: &Path) -> Result<Vec<SnippetRecord>, CliError> {
    let loaded = corpus::load_corpus(path).map_err(|e| CliError::usage(e.to_string()))?;
    for bad in &loaded.malformed {
        eprintln!("warning: {}:{}: {}", path.display(), bad.line, bad.message);
    }
    Ok(loaded.records)
}

fn write_run_log(out_dir: &Path, log: &[RunLogEntry]) -> Result<(), CliError> {
    write_jsonl(&out_dir.join("run_log.jsonl"), log)
}

fn pipeline_options(checkpoint: PathBuf) -> PipelineOptions {
    PipelineOptions {
        checkpoint: Some(checkpoint),
        ..PipelineOptions::default()
    }
}

/// Writes `report.{md,csv,json}` and returns the requested rendering.
fn write_reports(
    out_dir: &Path,
    report: &stats::DistributionReport,
    agreement: Option<&stats::AgreementResult>,
    similarity: Option<&crate::similarity::ScoreDistribution>,
    format: ReportFormat,
) -> Result<String, CliError> {
    let mut chosen = String::new();
    for f in [ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json] {
        let text = stats::emit_report(report, agreement, similarity, f);
        write_file(&out_dir.join(format!("report.{}", f.extension())), &text)?;
        if f == format {
            chosen = text;
        }
    }
    Ok(chosen)
}

fn cmd_extract(input_dir: &Path, out: &Path) -> CliResult {
    let extraction = corpus::extract_dir(input_dir).map_err(|e| CliError::usage(e.to_string()))?;
    for (path, err) in &extraction.failed {
        eprintln!("warning: skipped {path}: {err}");
    }
    for w in &extraction.warnings {
        eprintln!("warning: {}", serde_json::to_string(w).expect("warning serialises"));
    }
    corpus::save_corpus(&extraction.records, out).map_err(|e| CliError::usage(e.to_string()))?;
    println!(
        "{} records from {} README file(s)",
        extraction.records.len(),
        extraction.files_scanned
    );
    Ok(if extraction.records.is_empty() { EXIT_EMPTY } else { EXIT_OK })
}

#[allow(clippy::too_many_arguments)]
fn cmd_sample(
    ctx: &Ctx,
    corpus_path: &Path,
    out: &Path,
    n: Option<usize>,
    seed: Option<u64>,
    confidence: Option<f64>,
    margin: Option<f64>,
    proportion: Option<f64>,
) -> CliResult {
    let records = load_records(corpus_path)?;
    if records.is_empty() {
        return Err(CliError::empty("corpus is empty"));
    }
    let mut spec = SampleSpec::new(
        records.len() as u64,
        confidence.or(ctx.file.confidence).unwrap_or(0.95),
        margin.or(ctx.file.margin).unwrap_or(0.05),
        seed.or(ctx.file.seed).unwrap_or(0),
    );
    spec.response_proportion = proportion
        .or(ctx.file.proportion)
        .unwrap_or(corpus::DEFAULT_RESPONSE_PROPORTION);
    let sample = corpus::draw_sample(&records, &spec, n).map_err(|e| CliError::usage(e.to_string()))?;
    corpus::save_corpus(&sample, out).map_err(|e| CliError::usage(e.to_string()))?;
    println!(
        "sampled {} of {} records (computed size {}, seed {})",
        sample.len(),
        records.len(),
        spec.sample_size().map_err(|e| CliError::usage(e.to_string()))?,
        spec.seed
    );
    Ok(EXIT_OK)
}

fn cmd_classify(ctx: &Ctx, sample_path: &Path, out_dir: &Path, backend: &BackendArgs, report: &ReportArgs) -> CliResult {
    let format = ctx.format(&report.format)?;
    let records = load_records(sample_path)?;
    let (with_desc, without): (Vec<_>, Vec<_>) =
        records.into_iter().partition(|r| r.description_text().is_some());
    if !without.is_empty() {
        eprintln!("note: {} record(s) without a description skipped", without.len());
    }
    if with_desc.is_empty() {
        return Err(CliError::empty("no records with descriptions to classify"));
    }
    let mut run = RunConfig::new("classify", &[sample_path])
        .option("merge_refusals", report.merge_refusals)
        .option("parse_attempts", pipelines::DEFAULT_PARSE_ATTEMPTS);
    let gateway = ctx.gateway(backend, &mut run)?;
    ensure_dir(out_dir)?;
    let options = pipeline_options(out_dir.join("classifications.jsonl"));
    let result = pipelines::classify_records(&with_desc, &gateway, &options)?;
    let corpus = ClassifiedCorpus::from_entries(&result.outcomes, RunMetadata::for_gateway(&gateway));

    write_jsonl(&out_dir.join("labels.jsonl"), &corpus.labels)?;
    write_run_log(out_dir, &result.log)?;
    for v in &corpus.violations {
        eprintln!("violation: {}: {}", v.snippet_id, v.diagnostic);
    }
    let text = if corpus.labels.is_empty() && (!report.merge_refusals || corpus.refusals.is_empty()) {
        String::from("no labels produced\n")
    } else {
        let dist = stats::distribution_with_refusals(
            &corpus.labels,
            corpus.refusals.len() as u64,
            corpus.violations.len() as u64,
            report.merge_refusals,
        )
        .map_err(|e| CliError::usage(e.to_string()))?;
        write_reports(out_dir, &dist, None, None, format)?
    };
    ctx.write_metadata(out_dir, &run, Some(&gateway), result.log.len(), result.resumed)?;
    print!("{text}");
    println!(
        "{} labelled, {} refused, {} violation(s)",
        corpus.labels.len(),
        corpus.refusals.len(),
        corpus.violations.len()
    );
    if report.fail_on_unclear && corpus.labels.iter().any(|l| l.category == Category::Unclear) {
        return Ok(EXIT_EMPTY);
    }
    Ok(EXIT_OK)
}

fn cmd_generate(ctx: &Ctx, sample_path: &Path, out_dir: &Path, suggest: bool, backend: &BackendArgs) -> CliResult {
    let records = load_records(sample_path)?;
    let mut run = RunConfig::new("generate", &[sample_path]).option("suggest", suggest);
    let gateway = ctx.gateway(backend, &mut run)?;
    ensure_dir(out_dir)?;
    if suggest {
        let missing: Vec<SnippetRecord> = records
            .into_iter()
            .filter(|r| r.description_text().is_none())
            .collect();
        if missing.is_empty() {
            return Err(CliError::empty("every snippet already has a description"));
        }
        let options = pipeline_options(out_dir.join("suggestions.checkpoint.jsonl"));
        let suggestions = pipelines::suggest_descriptions(&missing, &gateway, &options)?;
        write_jsonl(&out_dir.join("suggestions.jsonl"), &suggestions)?;
        ctx.write_metadata(out_dir, &run, Some(&gateway), suggestions.len(), 0)?;
        let made = suggestions.iter().filter(|s| s.suggested_description.is_some()).count();
        println!("{made} of {} suggestion(s) generated", suggestions.len());
        return Ok(EXIT_OK);
    }
    if records.is_empty() {
        return Err(CliError::empty("sample is empty"));
    }
    let options = pipeline_options(out_dir.join("generations.jsonl"));
    let result = pipelines::generate_descriptions(&records, &gateway, &options)?;
    write_run_log(out_dir, &result.log)?;
    ctx.write_metadata(out_dir, &run, Some(&gateway), result.log.len(), result.resumed)?;
    let failed = result.outcomes.iter().filter(|g| g.diagnostic.is_some()).count();
    for g in result.outcomes.iter().filter(|g| g.diagnostic.is_some()) {
        eprintln!("failed: {}: {}", g.snippet_id, g.diagnostic.as_deref().unwrap_or_default());
    }
    println!(
        "{} generated, {failed} failed ({} resumed from checkpoint)",
        result.outcomes.len() - failed,
        result.resumed
    );
    Ok(EXIT_OK)
}

fn score_rows(outcomes: &[GenerationOutcome]) -> Vec<ScoreRow> {
    outcomes
        .iter()
        .filter_map(|o| {
            o.similarity.map(|s| ScoreRow {
                snippet_id: o.snippet_id.clone(),
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                divergent: o.divergent,
            })
        })
        .collect()
}

fn cmd_score(
    ctx: &Ctx,
    sample_path: &Path,
    generations_path: &Path,
    out_dir: &Path,
    classify_both: bool,
    backend: &BackendArgs,
    format: &Option<String>,
) -> CliResult {
    let format = ctx.format(format)?;
    let records = load_records(sample_path)?;
    let generations: Vec<GeneratedDescription> = read_jsonl(generations_path)?;
    let have: HashSet<&str> = generations.iter().map(|g| g.snippet_id.as_str()).collect();
    let records: Vec<SnippetRecord> = records
        .into_iter()
        .filter(|r| {
            let keep = have.contains(r.snippet_id.as_str());
            if !keep {
                eprintln!("note: no generation for {}, skipped", r.snippet_id);
            }
            keep
        })
        .collect();
    if records.is_empty() {
        return Err(CliError::empty("nothing to score"));
    }
    let mut run = RunConfig::new("score", &[sample_path, generations_path]).option("classify_both", classify_both);
    let gateway = ctx.gateway(backend, &mut run)?;
    ensure_dir(out_dir)?;
    let options = pipeline_options(out_dir.join("outcomes.jsonl"));
    let result = pipelines::score_generations(&records, &generations, &gateway, classify_both, &options)?;
    write_run_log(out_dir, &result.log)?;

    let rows = score_rows(&result.outcomes);
    let mut csv = Vec::new();
    write_scores_csv(&rows, &mut csv).map_err(|e| CliError::usage(e.to_string()))?;
    write_file(&out_dir.join("scores.csv"), &String::from_utf8(csv).expect("csv is utf-8"))?;

    let scores: Vec<_> = result.outcomes.iter().filter_map(|o| o.similarity).collect();
    let divergent = result.outcomes.iter().filter(|o| o.divergent).count();
    let mut printed = String::new();
    if let Ok(dist) = score_distribution(&scores) {
        for f in [ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json] {
            let text = stats::emit_similarity(&dist, divergent, f);
            write_file(&out_dir.join(format!("similarity.{}", f.extension())), &text)?;
            if f == format {
                printed = text;
            }
        }
    }
    ctx.write_metadata(out_dir, &run, Some(&gateway), result.log.len(), result.resumed)?;
    print!("{printed}");
    println!(
        "{} scored, {} without score, {divergent} divergent ({} resumed)",
        scores.len(),
        result.outcomes.len() - scores.len(),
        result.resumed
    );
    Ok(if scores.is_empty() { EXIT_EMPTY } else { EXIT_OK })
}

#[allow(clippy::too_many_arguments)]
fn cmd_report(
    ctx: &Ctx,
    labels_path: &Path,
    classifications: Option<&Path>,
    outcomes: Option<&Path>,
    agree_with: Option<&Path>,
    level: AgreementLevel,
    out_dir: &Path,
    report: &ReportArgs,
) -> CliResult {
    let format = ctx.format(&report.format)?;
    let labels: Vec<DescriptionLabel> = read_jsonl(labels_path)?;
    let (mut refusals, mut violations) = (0u64, 0u64);
    if let Some(path) = classifications {
        for entry in read_jsonl::<ClassificationEntry>(path)? {
            match entry.status {
                ClassificationStatus::Refused => refusals += 1,
                ClassificationStatus::Violation { .. } => violations += 1,
                ClassificationStatus::Labeled { .. } => {}
            }
        }
    }
    let dist = match stats::distribution_with_refusals(&labels, refusals, violations, report.merge_refusals) {
        Ok(d) => d,
        Err(stats::StatsError::EmptyInput) => return Err(CliError::empty("no labels to report")),
        Err(e) => return Err(CliError::usage(e.to_string())),
    };
    let agreement = match agree_with {
        Some(path) => {
            let other: Vec<DescriptionLabel> = read_jsonl(path)?;
            Some(agreement_between(&labels, &other, level)?)
        }
        None => None,
    };
    let similarity = match outcomes {
        Some(path) => {
            let outcomes: Vec<GenerationOutcome> = read_jsonl(path)?;
            let scores: Vec<_> = outcomes.iter().filter_map(|o| o.similarity).collect();
            score_distribution(&scores).ok()
        }
        None => None,
    };
    let mut run = RunConfig::new("report", &[labels_path])
        .option("merge_refusals", report.merge_refusals)
        .option("level", format!("{level:?}"));
    for p in [classifications, outcomes, agree_with].into_iter().flatten() {
        run.inputs.push(p.display().to_string());
    }
    ensure_dir(out_dir)?;
    let text = write_reports(out_dir, &dist, agreement.as_ref(), similarity.as_ref(), format)?;
    ctx.write_metadata(out_dir, &run, None, labels.len(), 0)?;
    print!("{text}");
    if report.fail_on_unclear && dist.category(Category::Unclear).count > 0 {
        return Ok(EXIT_EMPTY);
    }
    Ok(EXIT_OK)
}

/// Pairs two label lists by snippet id, in the order of `a`.
fn agreement_between(
    a: &[DescriptionLabel],
    b: &[DescriptionLabel],
    level: AgreementLevel,
) -> Result<stats::AgreementResult, CliError> {
    if a.len() != b.len() {
        return Err(CliError::usage(format!(
            "label files differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let by_id: HashMap<&str, &DescriptionLabel> = b.iter().map(|l| (l.snippet_id.as_str(), l)).collect();
    let mut paired_b = Vec::with_capacity(a.len());
    for label in a {
        let other = by_id
            .get(label.snippet_id.as_str())
            .ok_or_else(|| CliError::usage(format!("{} is missing from the second label file", label.snippet_id)))?;
        paired_b.push((*other).clone());
    }
    stats::label_agreement(a, &paired_b, level).map_err(|e| CliError::usage(e.to_string()))
}

fn cmd_agree(
    ctx: &Ctx,
    a_path: &Path,
    b_path: &Path,
    level: AgreementLevel,
    format: &Option<String>,
    out: Option<&Path>,
) -> CliResult {
    let format = ctx.format(format)?;
    let a: Vec<DescriptionLabel> = read_jsonl(a_path)?;
    let b: Vec<DescriptionLabel> = read_jsonl(b_path)?;
    if a.is_empty() {
        return Err(CliError::empty("no labels to compare"));
    }
    let agreement = agreement_between(&a, &b, level)?;
    let text = stats::emit_agreement(&agreement, format);
    if let Some(out) = out {
        write_file(out, &text)?;
    }
    print!("{text}");
    Ok(EXIT_OK)
}

/// Runs the CLI and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {}", err.message);
            err.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult {
    let ctx = Ctx {
        file: FileConfig::load(cli.config.as_deref())?,
        started_at: now(),
    };
    match &cli.command {
        Command::Extract { input_dir, out } => cmd_extract(input_dir, out),
        Command::Sample {
            corpus,
            out,
            n,
            seed,
            confidence,
            margin,
            proportion,
        } => cmd_sample(&ctx, corpus, out, *n, *seed, *confidence, *margin, *proportion),
        Command::Classify {
            sample,
            out_dir,
            backend,
            report,
        } => cmd_classify(&ctx, sample, out_dir, backend, report),
        Command::Generate {
            sample,
            out_dir,
            suggest,
            backend,
        } => cmd_generate(&ctx, sample, out_dir, *suggest, backend),
        Command::Score {
            sample,
            generations,
            out_dir,
            classify_both,
            backend,
            format,
        } => cmd_score(&ctx, sample, generations, out_dir, *classify_both, backend, format),
        Command::Report {
            labels,
            classifications,
            outcomes,
            agree_with,
            level,
            out_dir,
            report,
        } => cmd_report(
            &ctx,
            labels,
            classifications.as_deref(),
            outcomes.as_deref(),
            agree_with.as_deref(),
            *level,
            out_dir,
            report,
        ),
        Command::Agree {
            labels_a,
            labels_b,
            level,
            format,
            out,
        } => cmd_agree(&ctx, labels_a, labels_b, *level, format, out.as_deref()),
    }
}
