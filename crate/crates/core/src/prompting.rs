//! Classification and generation prompts.

use serde::{Deserialize, Serialize};

use crate::corpus::SnippetRecord;

/// System text for classification requests, stored verbatim as an asset.
pub const CLASSIFICATION_TEMPLATE: &str = include_str!("../assets/classification_prompt.txt");

/// SHA-256 of [`CLASSIFICATION_TEMPLATE`]. Editing the asset breaks this.
pub const CLASSIFICATION_TEMPLATE_SHA256: &str =
    "81ba480afd0c117a2688955ff6fa50ecd69420d35e592848755fe5e5bdded76c";

/// System text for generation requests.
pub const GENERATION_TEMPLATE: &str = "\
You are a developer who creates a README file. You have to follow the rules below:
- Write a one-line DESCRIPTION for the CODE below.
- Do not INCLUDE any comment.
- DESCRIPTION should be short and only one line.
- DO NOT answer MORE THAN ONE answer for each question.
- DO NOT IMPROVE or CHANGE the FORMAT, FOLLOW THE OUTPUT FORMAT STRICTLY.

OUTPUT FORMAT:
DESCRIPTION: <one line describing what the code does>
";

pub const DEFAULT_CHAR_BUDGET: usize = 32_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            max_tokens: 256,
        }
    }
}

/// Fully rendered request text plus decoding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub decode_params: DecodeParams,
}

impl PromptBundle {
    pub fn char_len(&self) -> usize {
        self.system_text.chars().count() + self.user_text.chars().count()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("snippet {0} has no description to classify")]
    MissingDescription(String),
    #[error("snippet {0} has no code")]
    MissingCode(String),
    #[error("prompt for snippet {snippet_id} is {chars} characters, over the budget of {budget}")]
    TruncationRefused {
        snippet_id: String,
        chars: usize,
        budget: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptOptions {
    pub decode_params: DecodeParams,
    pub char_budget: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            decode_params: DecodeParams::default(),
            char_budget: DEFAULT_CHAR_BUDGET,
        }
    }
}

/// Wraps `code` in a backtick fence longer than any backtick run inside it,
/// so the code is carried unmodified.
fn fenced(code: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for ch in code.chars() {
        if ch == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    let fence = "`".repeat(longest.max(2) + 1);
    format!("{fence}\n{code}\n{fence}")
}

fn check_budget(bundle: PromptBundle, id: &str, budget: usize) -> Result<PromptBundle, PromptError> {
    let chars = bundle.char_len();
    if chars > budget {
        return Err(PromptError::TruncationRefused {
            snippet_id: id.to_string(),
            chars,
            budget,
        });
    }
    Ok(bundle)
}

pub fn build_classification_prompt(record: &SnippetRecord) -> Result<PromptBundle, PromptError> {
    build_classification_prompt_with(record, &PromptOptions::default())
}

/// Classification request: the fixed rule block as system text, and the
/// description followed by the code as user text.
pub fn build_classification_prompt_with(
    record: &SnippetRecord,
    options: &PromptOptions,
) -> Result<PromptBundle, PromptError> {
    let description = record
        .description_text()
        .ok_or_else(|| PromptError::MissingDescription(record.snippet_id.clone()))?;
    let user_text = format!(
        "DESCRIPTION:\n{description}\n\nCODE:\n{}\n",
        fenced(&record.code)
    );
    check_budget(
        PromptBundle {
            system_text: CLASSIFICATION_TEMPLATE.to_string(),
            user_text,
            decode_params: options.decode_params,
        },
        &record.snippet_id,
        options.char_budget,
    )
}

/// Classification request for free text that has no snippet attached, such
/// as a generated description. The code section is omitted.
pub fn build_description_prompt(
    snippet_id: &str,
    description: &str,
    code: Option<&str>,
    options: &PromptOptions,
) -> Result<PromptBundle, PromptError> {
    if description.trim().is_empty() {
        return Err(PromptError::MissingDescription(snippet_id.to_string()));
    }
    let user_text = match code {
        Some(code) => format!("DESCRIPTION:\n{description}\n\nCODE:\n{}\n", fenced(code)),
        None => format!("DESCRIPTION:\n{description}\n"),
    };
    check_budget(
        PromptBundle {
            system_text: CLASSIFICATION_TEMPLATE.to_string(),
            user_text,
            decode_params: options.decode_params,
        },
        snippet_id,
        options.char_budget,
    )
}

pub fn build_generation_prompt(record: &SnippetRecord) -> Result<PromptBundle, PromptError> {
    build_generation_prompt_with(record, &PromptOptions::default())
}

/// Generation request. The user text carries the code only; the original
/// description is never sent.
pub fn build_generation_prompt_with(
    record: &SnippetRecord,
    options: &PromptOptions,
) -> Result<PromptBundle, PromptError> {
    if record.code.trim().is_empty() {
        return Err(PromptError::MissingCode(record.snippet_id.clone()));
    }
    check_budget(
        PromptBundle {
            system_text: GENERATION_TEMPLATE.to_string(),
            user_text: format!("CODE:\n{}\n", fenced(&record.code)),
            decode_params: options.decode_params,
        },
        &record.snippet_id,
        options.char_budget,
    )
}

/// Pulls the description out of a generation answer: the first non-blank
/// line, without a leading `DESCRIPTION:` label.
pub fn extract_generated_description(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let text = match line.split_once(':') {
        Some((key, rest)) if key.trim().eq_ignore_ascii_case("description") => rest.trim(),
        _ => line,
    };
    (!text.is_empty()).then(|| text.to_string())
}
