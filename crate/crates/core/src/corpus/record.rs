use serde::{Deserialize, Serialize};

/// One fenced code block from a README together with the prose that precedes it.
///
/// Field order here is the on-disk field order of the dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnippetRecord {
    pub package_name: String,
    pub snippet_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_hint: Option<String>,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub source_path: String,
    pub block_index: usize,
}

impl SnippetRecord {
    /// Identifier used by the extractor: `<package>:<source_path>:<block_index>`.
    pub fn make_id(package_name: &str, source_path: &str, block_index: usize) -> String {
        format!("{package_name}:{source_path}:{block_index}")
    }

    /// The description, if present and not blank.
    pub fn description_text(&self) -> Option<&str> {
        self.description
            .as_deref()
            .filter(|d| !d.trim().is_empty())
    }
}
