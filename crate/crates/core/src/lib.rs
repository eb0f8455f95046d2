//! Mining README code snippets and the prose that describes them.
//!
//! * [`corpus`] extracts snippet/description pairs from README markdown,
//!   stores them as JSONL, and draws seeded samples.
//! * [`taxonomy`] holds the Instruction / Example / Unclear label space and
//!   parses model answers.
//! * [`prompting`] renders classification and generation prompts.
//! * [`gateway`] talks to a text-generation backend (Ollama over HTTP, or a
//!   scripted mock).
//! * [`pipelines`] classifies samples and generates and scores descriptions.
//! * [`similarity`] is the greedy token-matching similarity metric.
//! * [`stats`] computes label distributions, kappa agreement and reports.
//! * [`cli`] is the `snipdoc` command line.

pub mod cli;
pub mod corpus;
pub mod gateway;
pub mod pipelines;
pub mod prompting;
pub mod similarity;
pub mod stats;
pub mod taxonomy;

pub use corpus::{parse_readme, SnippetRecord};
pub use gateway::{BackendConfig, Gateway};
pub use similarity::{bertscore, SimilarityScore};
pub use taxonomy::{Category, DescriptionLabel, Subtype};
