// Size and draw a reproducible random sample.

use snipdoc::corpus::{draw_sample, sample_size, SampleSpec, SnippetRecord};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // the full npm corpus
    let n = sample_size(1_024_579, 0.95, 0.05, 0.5)?;
    println!("sample size for 1,024,579 snippets: {n}");

    let corpus: Vec<SnippetRecord> = (0..2_000)
        .map(|i| SnippetRecord {
            package_name: format!("pkg{}", i / 4),
            snippet_id: SnippetRecord::make_id(&format!("pkg{}", i / 4), "README.md", i % 4),
            language_hint: None,
            code: format!("demo({i});"),
            description: Some(format!("Snippet {i}.")),
            source_path: "README.md".into(),
            block_index: i % 4,
        })
        .collect();

    let spec = SampleSpec::new(corpus.len() as u64, 0.95, 0.05, 42);
    let first = draw_sample(&corpus, &spec, None)?;
    let again = draw_sample(&corpus, &spec, None)?;
    println!("drew {} of {} (seed {})", first.len(), corpus.len(), spec.seed);
    println!("first three: {:?}", first.iter().take(3).map(|r| &r.snippet_id).collect::<Vec<_>>());
    assert_eq!(first, again);

    let padded = draw_sample(&corpus, &spec, Some(400))?;
    println!("with a floor of 400: {}", padded.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
