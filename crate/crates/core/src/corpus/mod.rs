//! README snippet extraction, the JSONL dataset format, and sampling.

mod markdown;
mod record;
mod sampling;
mod store;

pub use markdown::{extract_dir, is_readme_file, parse_readme, DirExtraction, ExtractWarning, Extraction};
pub use record::SnippetRecord;
pub use sampling::{critical_value, draw_sample, sample_size, SampleSpec, DEFAULT_RESPONSE_PROPORTION};
pub use store::{load_corpus, read_corpus, save_corpus, write_corpus, LoadedCorpus, MalformedLine};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate snippet_id {id:?} on line {line}")]
    DuplicateSnippetId { id: String, line: usize },
    #[error("invalid sample spec: {0}")]
    InvalidSpec(String),
    #[error("override count {requested} exceeds population of {population}")]
    OverrideExceedsPopulation { requested: usize, population: usize },
    #[error("cannot sample from an empty corpus")]
    EmptyCorpus,
    #[error("sample spec population {spec} does not match corpus size {actual}")]
    PopulationMismatch { spec: u64, actual: usize },
}

impl CorpusError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.into(),
            source,
        }
    }
}
