// Greedy token-matching similarity between two descriptions.

use snipdoc::gateway::MockEmbedding;
use snipdoc::similarity::{bertscore, score_distribution, tokenize, TokenEmbeddingSet};

fn embed(text: &str, model: &MockEmbedding) -> Result<TokenEmbeddingSet, Box<dyn std::error::Error>> {
    let tokens = tokenize(text);
    let vectors = tokens.iter().map(|t| model.vector(t)).collect();
    Ok(TokenEmbeddingSet::new(tokens, vectors)?)
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let model = MockEmbedding::default();
    let pairs = [
        ("Load an audio file.", "Load an audio file."),
        ("Loads the audio file from disk.", "Load an audio file."),
        ("Start the HTTP server.", "Load an audio file."),
    ];
    let mut scores = Vec::new();
    for (generated, original) in pairs {
        let s = bertscore(&embed(generated, &model)?, &embed(original, &model)?)?;
        println!("{:.4} {:.4} {:.4}  {generated:?} vs {original:?}", s.precision, s.recall, s.f1);
        scores.push(s);
    }
    let dist = score_distribution(&scores)?;
    println!("mean F1 {:.4} over {} pairs", dist.mean_4dp(), dist.count);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
