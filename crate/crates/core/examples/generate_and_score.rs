// Generate descriptions from code, score them, and flag divergent pairs.

use std::sync::Arc;
use std::time::Duration;

use snipdoc::corpus::SnippetRecord;
use snipdoc::gateway::{MockBackend, MockFixture, MockReply, MockRule};
use snipdoc::pipelines::{generate_and_score, PipelineOptions};
use snipdoc::{BackendConfig, Gateway};

fn reply(system: Option<&str>, user: Option<&str>, text: &str) -> MockRule {
    MockRule {
        system_contains: system.map(str::to_string),
        user_contains: user.map(str::to_string),
        responses: vec![MockReply::Text(text.into())],
    }
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sample = vec![
        SnippetRecord {
            package_name: "audio-loader".into(),
            snippet_id: "audio-loader:README.md:0".into(),
            language_hint: Some("js".into()),
            code: "load('sound.mp3').then(play);".into(),
            description: Some("Load an audio file.".into()),
            source_path: "README.md".into(),
            block_index: 0,
        },
        SnippetRecord {
            package_name: "audio-loader".into(),
            snippet_id: "audio-loader:README.md:1".into(),
            language_hint: Some("sh".into()),
            code: "npm install audio-loader".into(),
            description: Some("Install the loader.".into()),
            source_path: "README.md".into(),
            block_index: 1,
        },
    ];
    let generation = "one-line DESCRIPTION";
    let backend = MockBackend::new(MockFixture {
        rules: vec![
            reply(Some(generation), Some("load("), "DESCRIPTION: Load an audio file."),
            reply(Some(generation), None, "DESCRIPTION: Shows how to add the package."),
            reply(None, Some("DESCRIPTION:\nInstall"), "Type: Instruction\nOption: Installation instruction"),
        ],
        default: Some(MockReply::Text("Type: Example\nOption: Code example".into())),
        ..MockFixture::default()
    });
    let config = BackendConfig {
        backoff_base: Duration::ZERO,
        ..BackendConfig::default()
    };
    let gateway = Gateway::new(Arc::new(backend), config)?;

    for o in generate_and_score(&sample, &gateway, true, &PipelineOptions::default())? {
        let f1 = o.similarity.map_or(f64::NAN, |s| s.f1);
        println!(
            "{}: f1 {f1:.4} divergent={}  {:?} -> {:?}",
            o.snippet_id, o.divergent, o.original_description, o.generated_description
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
