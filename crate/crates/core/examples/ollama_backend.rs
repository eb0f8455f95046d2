// Talk to a local Ollama server. Set SNIPDOC_ENDPOINT / SNIPDOC_MODEL to
// point elsewhere; without a server the example just says so.

use std::sync::Arc;
use std::time::Duration;

use snipdoc::corpus::SnippetRecord;
use snipdoc::gateway::{GatewayError, OllamaBackend};
use snipdoc::prompting::build_classification_prompt;
use snipdoc::taxonomy::parse_llm_classification;
use snipdoc::{BackendConfig, Gateway};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut config = BackendConfig {
        timeout: Duration::from_secs(30),
        max_retries: 0,
        ..BackendConfig::default()
    };
    config.apply_env();
    let backend = OllamaBackend::new(config.endpoint_url.clone(), None);
    let gateway = Gateway::new(Arc::new(backend), config)?;

    let record = SnippetRecord {
        package_name: "audio-loader".into(),
        snippet_id: "audio-loader:README.md:0".into(),
        language_hint: Some("js".into()),
        code: "load('sound.mp3').then(play);".into(),
        description: Some("Load an audio file.".into()),
        source_path: "README.md".into(),
        block_index: 0,
    };
    let bundle = build_classification_prompt(&record)?;
    match gateway.complete(&bundle) {
        Ok(done) => {
            println!("{} answered in {} ms:\n{}", done.backend_id, done.latency_ms, done.raw_text);
            println!("parsed: {:?}", parse_llm_classification(&done.raw_text, &record.snippet_id));
        }
        Err(GatewayError::BackendUnreachable { message, .. }) => {
            println!("no server at {}: {message}", gateway.config().endpoint_url);
        }
        Err(other) => println!("request failed: {other}"),
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
