//! End-to-end runs: classify sampled descriptions, and generate descriptions
//! from code then score them against the originals.

mod runner;

pub use runner::{Keyed, PipelineRun, RunLogEntry, CIRCUIT_WINDOW};

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::SnippetRecord;
use crate::gateway::{Gateway, GatewayError};
use crate::prompting::{
    build_classification_prompt_with, build_description_prompt, build_generation_prompt_with,
    extract_generated_description, PromptBundle, PromptOptions,
};
use crate::similarity::{bertscore, SimilarityScore};
use crate::taxonomy::{parse_llm_classification, DescriptionLabel, ParseOutcome};
use runner::{run_resumable, Processed};

/// F1 below which a pair with differing categories is flagged divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 0.9;

/// Fresh requests made for one record before a malformed answer is final.
pub const DEFAULT_PARSE_ATTEMPTS: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("backend unreachable for {failures} of the first {window} records; run aborted")]
    CircuitOpen { failures: usize, window: usize },
    #[error("duplicate snippet_id {0:?} in input")]
    DuplicateSnippetId(String),
    #[error("no generated description supplied for {0:?}")]
    MissingGeneration(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub prompt: PromptOptions,
    pub parse_attempts: u32,
    /// Per-record JSONL checkpoint; records already in it are not redone.
    pub checkpoint: Option<PathBuf>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            prompt: PromptOptions::default(),
            parse_attempts: DEFAULT_PARSE_ATTEMPTS,
            checkpoint: None,
        }
    }
}

/// Provenance of a pipeline run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model_name: String,
    pub backend_id: String,
    pub timestamp: String,
    pub config_digest: String,
}

impl RunMetadata {
    pub fn for_gateway(gateway: &Gateway) -> Self {
        RunMetadata {
            model_name: gateway.config().model_name.clone(),
            backend_id: gateway.backend_id(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            config_digest: digest_json(gateway.config()),
        }
    }
}

/// SHA-256 of the compact JSON encoding of `value`.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serialisable");
    hex::encode(Sha256::digest(bytes))
}

/// Final state of one record in a classification run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ClassificationStatus {
    Labeled { label: DescriptionLabel },
    Refused,
    Violation { diagnostic: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationEntry {
    pub snippet_id: String,
    #[serde(flatten)]
    pub status: ClassificationStatus,
}

impl Keyed for ClassificationEntry {
    fn key(&self) -> &str {
        &self.snippet_id
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub snippet_id: String,
    pub diagnostic: String,
}

/// Labels, refusals and violations partition the classified ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifiedCorpus {
    pub labels: Vec<DescriptionLabel>,
    pub refusals: Vec<String>,
    pub violations: Vec<Violation>,
    pub run_metadata: RunMetadata,
}

impl ClassifiedCorpus {
    pub fn from_entries(entries: &[ClassificationEntry], run_metadata: RunMetadata) -> Self {
        let mut out = ClassifiedCorpus {
            labels: Vec::new(),
            refusals: Vec::new(),
            violations: Vec::new(),
            run_metadata,
        };
        for e in entries {
            match &e.status {
                ClassificationStatus::Labeled { label } => out.labels.push(label.clone()),
                ClassificationStatus::Refused => out.refusals.push(e.snippet_id.clone()),
                ClassificationStatus::Violation { diagnostic } => out.violations.push(Violation {
                    snippet_id: e.snippet_id.clone(),
                    diagnostic: diagnostic.clone(),
                }),
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.labels.len() + self.refusals.len() + self.violations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

struct ClassifyAttempt {
    status: ClassificationStatus,
    attempts: u32,
    unreachable: bool,
}

/// Sends `bundle` up to `parse_attempts` times until the answer parses.
fn classify_bundle(gateway: &Gateway, snippet_id: &str, bundle: &PromptBundle, parse_attempts: u32) -> ClassifyAttempt {
    let mut attempts = 0;
    let mut last = String::new();
    for _ in 0..parse_attempts.max(1) {
        let completion = match gateway.complete(bundle) {
            Ok(c) => c,
            Err(err) => {
                return ClassifyAttempt {
                    unreachable: err.is_unreachable(),
                    status: ClassificationStatus::Violation {
                        diagnostic: format!("backend: {err}"),
                    },
                    attempts: attempts + 1,
                }
            }
        };
        attempts += completion.attempt_count;
        match parse_llm_classification(&completion.raw_text, snippet_id) {
            ParseOutcome::Label { label, .. } => {
                return ClassifyAttempt {
                    status: ClassificationStatus::Labeled { label },
                    attempts,
                    unreachable: false,
                }
            }
            ParseOutcome::Refusal => {
                return ClassifyAttempt {
                    status: ClassificationStatus::Refused,
                    attempts,
                    unreachable: false,
                }
            }
            ParseOutcome::FormatViolation { line, diagnostic } => {
                last = format!("line {line}: {diagnostic}");
            }
        }
    }
    ClassifyAttempt {
        status: ClassificationStatus::Violation {
            diagnostic: format!("format violation after {} request(s): {last}", parse_attempts.max(1)),
        },
        attempts,
        unreachable: false,
    }
}

fn status_name(status: &ClassificationStatus) -> &'static str {
    match status {
        ClassificationStatus::Labeled { .. } => "labeled",
        ClassificationStatus::Refused => "refused",
        ClassificationStatus::Violation { .. } => "violation",
    }
}

/// Classifies every record's description, returning per-record entries in
/// input order.
pub fn classify_records(
    sample: &[SnippetRecord],
    gateway: &Gateway,
    options: &PipelineOptions,
) -> Result<PipelineRun<ClassificationEntry>, PipelineError> {
    let ids: Vec<&str> = sample.iter().map(|r| r.snippet_id.as_str()).collect();
    run_resumable(
        &ids,
        options.checkpoint.as_deref(),
        gateway.config().max_in_flight,
        |i| {
            let record = &sample[i];
            let started = Instant::now();
            let attempt = match build_classification_prompt_with(record, &options.prompt) {
                Ok(bundle) => classify_bundle(gateway, &record.snippet_id, &bundle, options.parse_attempts),
                Err(err) => ClassifyAttempt {
                    status: ClassificationStatus::Violation {
                        diagnostic: format!("prompt: {err}"),
                    },
                    attempts: 0,
                    unreachable: false,
                },
            };
            let diagnostic = match &attempt.status {
                ClassificationStatus::Violation { diagnostic } => Some(diagnostic.clone()),
                _ => None,
            };
            Processed {
                log: RunLogEntry {
                    snippet_id: record.snippet_id.clone(),
                    stage: "classify".into(),
                    status: status_name(&attempt.status).into(),
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempts: attempt.attempts,
                    diagnostic,
                },
                value: ClassificationEntry {
                    snippet_id: record.snippet_id.clone(),
                    status: attempt.status,
                },
                unreachable: attempt.unreachable,
            }
        },
    )
}

/// Classifies every record and partitions the outcomes.
pub fn classify_corpus(
    sample: &[SnippetRecord],
    gateway: &Gateway,
    options: &PipelineOptions,
) -> Result<ClassifiedCorpus, PipelineError> {
    let run = classify_records(sample, gateway, options)?;
    Ok(ClassifiedCorpus::from_entries(&run.outcomes, RunMetadata::for_gateway(gateway)))
}

/// A description generated from code alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedDescription {
    pub snippet_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl Keyed for GeneratedDescription {
    fn key(&self) -> &str {
        &self.snippet_id
    }
}

/// Asks the backend for a one-line description of each snippet's code.
pub fn generate_descriptions(
    sample: &[SnippetRecord],
    gateway: &Gateway,
    options: &PipelineOptions,
) -> Result<PipelineRun<GeneratedDescription>, PipelineError> {
    let ids: Vec<&str> = sample.iter().map(|r| r.snippet_id.as_str()).collect();
    run_resumable(
        &ids,
        options.checkpoint.as_deref(),
        gateway.config().max_in_flight,
        |i| {
            let record = &sample[i];
            let started = Instant::now();
            let mut attempts = 0;
            let mut unreachable = false;
            let result: Result<String, String> = build_generation_prompt_with(record, &options.prompt)
                .map_err(|e| format!("prompt: {e}"))
                .and_then(|bundle| {
                    let completion = gateway.complete(&bundle).map_err(|e| {
                        unreachable = e.is_unreachable();
                        attempts = match e {
                            GatewayError::BackendUnreachable { attempts, .. }
                            | GatewayError::BackendTimeout { attempts }
                            | GatewayError::EmptyResponse { attempts } => attempts,
                            _ => 1,
                        };
                        format!("backend: {e}")
                    })?;
                    attempts = completion.attempt_count;
                    extract_generated_description(&completion.raw_text)
                        .ok_or_else(|| "backend returned no description".to_string())
                });
            let (generated, diagnostic) = match result {
                Ok(text) => (Some(text), None),
                Err(diag) => (None, Some(diag)),
            };
            Processed {
                log: RunLogEntry {
                    snippet_id: record.snippet_id.clone(),
                    stage: "generate".into(),
                    status: if generated.is_some() { "generated" } else { "failed" }.into(),
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempts,
                    diagnostic: diagnostic.clone(),
                },
                value: GeneratedDescription {
                    snippet_id: record.snippet_id.clone(),
                    original_description: record.description_text().map(str::to_string),
                    generated_description: generated,
                    diagnostic,
                },
                unreachable,
            }
        },
    )
}

/// Generated description and its comparison with the original.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub snippet_id: String,
    pub original_description: String,
    pub generated_description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_label: Option<DescriptionLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_label: Option<DescriptionLabel>,
    pub divergent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl Keyed for GenerationOutcome {
    fn key(&self) -> &str {
        &self.snippet_id
    }
}

/// True when the pair scores below the threshold and was put in different categories.
pub fn is_divergent(
    similarity: Option<&SimilarityScore>,
    original: Option<&DescriptionLabel>,
    generated: Option<&DescriptionLabel>,
) -> bool {
    match (similarity, original, generated) {
        (Some(s), Some(o), Some(g)) => s.f1 < DIVERGENCE_THRESHOLD && o.category != g.category,
        _ => false,
    }
}

fn similarity_of(gateway: &Gateway, generated: &str, original: &str) -> Result<SimilarityScore, String> {
    let candidate = gateway.embed(generated).map_err(|e| format!("embed generated: {e}"))?;
    let reference = gateway.embed(original).map_err(|e| format!("embed original: {e}"))?;
    bertscore(&candidate, &reference).map_err(|e| format!("score: {e}"))
}

fn classify_text(
    gateway: &Gateway,
    snippet_id: &str,
    text: &str,
    code: &str,
    options: &PipelineOptions,
) -> Result<Option<DescriptionLabel>, (String, bool)> {
    let bundle = build_description_prompt(snippet_id, text, Some(code), &options.prompt)
        .map_err(|e| (format!("prompt: {e}"), false))?;
    let attempt = classify_bundle(gateway, snippet_id, &bundle, options.parse_attempts);
    match attempt.status {
        ClassificationStatus::Labeled { label } => Ok(Some(label)),
        ClassificationStatus::Refused => Ok(None),
        ClassificationStatus::Violation { diagnostic } => Err((diagnostic, attempt.unreachable)),
    }
}

/// Scores each generated description against the record's original one.
/// With `classify_both`, both texts are classified and divergence computed.
pub fn score_generations(
    sample: &[SnippetRecord],
    generations: &[GeneratedDescription],
    gateway: &Gateway,
    classify_both: bool,
    options: &PipelineOptions,
) -> Result<PipelineRun<GenerationOutcome>, PipelineError> {
    let by_id: std::collections::HashMap<&str, &GeneratedDescription> =
        generations.iter().map(|g| (g.snippet_id.as_str(), g)).collect();
    let mut paired = Vec::with_capacity(sample.len());
    for record in sample {
        let g = by_id
            .get(record.snippet_id.as_str())
            .ok_or_else(|| PipelineError::MissingGeneration(record.snippet_id.clone()))?;
        paired.push((record, *g));
    }
    let ids: Vec<&str> = sample.iter().map(|r| r.snippet_id.as_str()).collect();
    run_resumable(
        &ids,
        options.checkpoint.as_deref(),
        gateway.config().max_in_flight,
        |i| {
            let (record, generation) = paired[i];
            let started = Instant::now();
            let original = record.description_text().unwrap_or_default().to_string();
            let generated = generation.generated_description.clone().unwrap_or_default();
            let mut diagnostics: Vec<String> = Vec::new();
            let mut unreachable = false;

            let similarity = if let Some(d) = &generation.diagnostic {
                diagnostics.push(format!("generation: {d}"));
                None
            } else if original.trim().is_empty() {
                diagnostics.push("record has no original description".into());
                None
            } else if generated.trim().is_empty() {
                diagnostics.push("no generated description".into());
                None
            } else {
                similarity_of(gateway, &generated, &original)
                    .map_err(|d| diagnostics.push(d))
                    .ok()
            };

            let (mut original_label, mut generated_label) = (None, None);
            if classify_both && !original.trim().is_empty() && !generated.trim().is_empty() {
                for (text, slot, which) in [
                    (&original, &mut original_label, "original"),
                    (&generated, &mut generated_label, "generated"),
                ] {
                    match classify_text(gateway, &record.snippet_id, text, &record.code, options) {
                        Ok(label) => *slot = label,
                        Err((d, unreach)) => {
                            unreachable |= unreach;
                            diagnostics.push(format!("classify {which}: {d}"));
                        }
                    }
                }
            }
            let divergent = is_divergent(similarity.as_ref(), original_label.as_ref(), generated_label.as_ref());
            let diagnostic = (!diagnostics.is_empty()).then(|| diagnostics.join("; "));
            Processed {
                log: RunLogEntry {
                    snippet_id: record.snippet_id.clone(),
                    stage: "score".into(),
                    status: if similarity.is_some() { "scored" } else { "failed" }.into(),
                    latency_ms: started.elapsed().as_millis() as u64,
                    attempts: 1,
                    diagnostic: diagnostic.clone(),
                },
                value: GenerationOutcome {
                    snippet_id: record.snippet_id.clone(),
                    original_description: original,
                    generated_description: generated,
                    similarity,
                    original_label,
                    generated_label,
                    divergent,
                    diagnostic,
                },
                unreachable,
            }
        },
    )
}

/// Generates a description for each record from its code, then scores it.
/// Checkpointing, when configured, applies to the scoring stage.
pub fn generate_and_score(
    sample: &[SnippetRecord],
    gateway: &Gateway,
    classify_both: bool,
    options: &PipelineOptions,
) -> Result<Vec<GenerationOutcome>, PipelineError> {
    let generation_options = PipelineOptions {
        checkpoint: None,
        ..options.clone()
    };
    // only generate what the scoring checkpoint does not already hold
    let done: std::collections::HashSet<String> = match &options.checkpoint {
        Some(path) => std::fs::read_to_string(path)
            .unwrap_or_default()
            .lines()
            .filter_map(|l| serde_json::from_str::<GenerationOutcome>(l).ok())
            .map(|o| o.snippet_id)
            .collect(),
        None => Default::default(),
    };
    let todo: Vec<SnippetRecord> = sample
        .iter()
        .filter(|r| !done.contains(&r.snippet_id))
        .cloned()
        .collect();
    let generations = generate_descriptions(&todo, gateway, &generation_options)?.outcomes;
    let mut all = generations;
    for record in sample.iter().filter(|r| done.contains(&r.snippet_id)) {
        all.push(GeneratedDescription {
            snippet_id: record.snippet_id.clone(),
            original_description: None,
            generated_description: None,
            diagnostic: None,
        });
    }
    Ok(score_generations(sample, &all, gateway, classify_both, options)?.outcomes)
}

/// A proposed description for a snippet that has none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suggestion {
    pub snippet_id: String,
    pub source_path: String,
    pub block_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Generates descriptions for records that lack one. Records that already
/// have a description are skipped.
pub fn suggest_descriptions(
    corpus: &[SnippetRecord],
    gateway: &Gateway,
    options: &PipelineOptions,
) -> Result<Vec<Suggestion>, PipelineError> {
    let missing: Vec<SnippetRecord> = corpus
        .iter()
        .filter(|r| r.description_text().is_none())
        .cloned()
        .collect();
    let run = generate_descriptions(&missing, gateway, options)?;
    Ok(missing
        .iter()
        .zip(run.outcomes)
        .map(|(record, g)| Suggestion {
            snippet_id: record.snippet_id.clone(),
            source_path: record.source_path.clone(),
            block_index: record.block_index,
            suggested_description: g.generated_description,
            diagnostic: g.diagnostic,
        })
        .collect())
}
