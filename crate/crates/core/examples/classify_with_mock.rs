// Classify descriptions against a scripted backend and print the distribution.

use std::sync::Arc;
use std::time::Duration;

use snipdoc::corpus::SnippetRecord;
use snipdoc::gateway::{MockBackend, MockFixture, MockReply, MockRule};
use snipdoc::pipelines::{classify_corpus, PipelineOptions};
use snipdoc::stats::{distribution_with_refusals, emit_report, ReportFormat};
use snipdoc::{BackendConfig, Gateway};

fn rule(needle: &str, answer: &str) -> MockRule {
    MockRule {
        user_contains: Some(needle.into()),
        responses: vec![MockReply::Text(answer.into())],
        ..MockRule::default()
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let descriptions = [
        ("npm install left-pad", "Install with npm."),
        ("leftPad('5', 3, '0')", "Pads a string to the given length."),
        ("leftPad.configure({ ch: ' ' })", "Set the default padding character."),
        ("???", "See below."),
    ];
    let sample: Vec<SnippetRecord> = descriptions
        .iter()
        .enumerate()
        .map(|(i, (code, desc))| SnippetRecord {
            package_name: "left-pad".into(),
            snippet_id: SnippetRecord::make_id("left-pad", "README.md", i),
            language_hint: Some("js".into()),
            code: code.to_string(),
            description: Some(desc.to_string()),
            source_path: "README.md".into(),
            block_index: i,
        })
        .collect();

    let backend = MockBackend::new(MockFixture {
        rules: vec![
            rule("Install", "Type: Instruction\nOption: Installation instruction"),
            rule("Pads", "Type: Example\nOption: Feature explanation"),
            rule("Set the default", "Type: Instruction\nOption: Usage instruction"),
        ],
        default: Some(MockReply::Text("Couldn't decide a task or description".into())),
        ..MockFixture::default()
    });
    let config = BackendConfig {
        backoff_base: Duration::ZERO,
        ..BackendConfig::default()
    };
    let gateway = Gateway::new(Arc::new(backend), config)?;

    let corpus = classify_corpus(&sample, &gateway, &PipelineOptions::default())?;
    println!(
        "{} labels, {} refusals, {} violations from {}",
        corpus.labels.len(),
        corpus.refusals.len(),
        corpus.violations.len(),
        corpus.run_metadata.backend_id
    );
    let report = distribution_with_refusals(&corpus.labels, corpus.refusals.len() as u64, 0, false)?;
    print!("{}", emit_report(&report, None, None, ReportFormat::Markdown));
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
