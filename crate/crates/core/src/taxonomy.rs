//! Description categories and the strict three-line answer format.
//!
//! An answer looks like
//!
//! ```text
//! Type: Instruction
//! Option: Installation instruction
//! Example: guide to install and configure software ...
//! ```
//!
//! Keys and values are matched case-insensitively with surrounding
//! whitespace ignored, but the line structure itself is not repaired.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The exact sentence a model may answer with when it cannot decide.
pub const REFUSAL_SENTENCE: &str = "Couldn't decide a task or description";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Instruction,
    Example,
    Unclear,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Instruction, Category::Example, Category::Unclear];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Instruction => "Instruction",
            Category::Example => "Example",
            Category::Unclear => "Unclear",
        }
    }

    pub fn subtypes(self) -> &'static [Subtype] {
        match self {
            Category::Instruction => &[Subtype::InstallationInstruction, Subtype::UsageInstruction],
            Category::Example => &[
                Subtype::UsageExample,
                Subtype::FeatureExplanation,
                Subtype::CodeExample,
            ],
            Category::Unclear => &[],
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = normalize(s);
        match norm.as_str() {
            "instruction" | "instructions" => Ok(Category::Instruction),
            "example" | "examples" => Ok(Category::Example),
            "unclear" => Ok(Category::Unclear),
            _ => Err(format!("unknown category {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subtype {
    #[serde(rename = "Installation instruction")]
    InstallationInstruction,
    #[serde(rename = "Usage instruction")]
    UsageInstruction,
    #[serde(rename = "Usage example")]
    UsageExample,
    #[serde(rename = "Feature explanation")]
    FeatureExplanation,
    #[serde(rename = "Code example")]
    CodeExample,
}

impl Subtype {
    pub const ALL: [Subtype; 5] = [
        Subtype::InstallationInstruction,
        Subtype::UsageInstruction,
        Subtype::UsageExample,
        Subtype::FeatureExplanation,
        Subtype::CodeExample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subtype::InstallationInstruction => "Installation instruction",
            Subtype::UsageInstruction => "Usage instruction",
            Subtype::UsageExample => "Usage example",
            Subtype::FeatureExplanation => "Feature explanation",
            Subtype::CodeExample => "Code example",
        }
    }
}

impl fmt::Display for Subtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subtype {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = normalize(s);
        Subtype::ALL
            .into_iter()
            .find(|st| st.as_str().to_lowercase() == norm)
            .ok_or_else(|| format!("unknown option {s:?}"))
    }
}

pub fn category_of(subtype: Subtype) -> Category {
    match subtype {
        Subtype::InstallationInstruction | Subtype::UsageInstruction => Category::Instruction,
        Subtype::UsageExample | Subtype::FeatureExplanation | Subtype::CodeExample => {
            Category::Example
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelSource {
    Human,
    Model,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("category {0} requires an option")]
    MissingSubtype(Category),
    #[error("category Unclear takes no option")]
    UnexpectedSubtype,
    #[error("option {subtype} does not belong to category {category}")]
    SubtypeMismatch { category: Category, subtype: Subtype },
}

/// A taxonomy assignment for one snippet description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLabel")]
pub struct DescriptionLabel {
    pub snippet_id: String,
    pub category: Category,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subtype: Option<Subtype>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub source: LabelSource,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabel {
    snippet_id: String,
    category: Category,
    #[serde(default)]
    subtype: Option<Subtype>,
    #[serde(default)]
    rationale: Option<String>,
    source: LabelSource,
    #[serde(default)]
    raw_response: Option<String>,
}

impl TryFrom<RawLabel> for DescriptionLabel {
    type Error = LabelError;

    fn try_from(raw: RawLabel) -> Result<Self, Self::Error> {
        let mut label = DescriptionLabel::new(raw.snippet_id, raw.category, raw.subtype, raw.source)?;
        label.rationale = raw.rationale;
        label.raw_response = raw.raw_response;
        Ok(label)
    }
}

impl DescriptionLabel {
    /// Builds a label, enforcing that the subtype is present exactly when the
    /// category is not `Unclear` and that it belongs to that category.
    pub fn new(
        snippet_id: impl Into<String>,
        category: Category,
        subtype: Option<Subtype>,
        source: LabelSource,
    ) -> Result<Self, LabelError> {
        match (category, subtype) {
            (Category::Unclear, Some(_)) => return Err(LabelError::UnexpectedSubtype),
            (Category::Unclear, None) => {}
            (c, None) => return Err(LabelError::MissingSubtype(c)),
            (c, Some(st)) if category_of(st) != c => {
                return Err(LabelError::SubtypeMismatch {
                    category: c,
                    subtype: st,
                })
            }
            _ => {}
        }
        Ok(DescriptionLabel {
            snippet_id: snippet_id.into(),
            category,
            subtype,
            rationale: None,
            source,
            raw_response: None,
        })
    }

    pub fn from_subtype(snippet_id: impl Into<String>, subtype: Subtype, source: LabelSource) -> Self {
        DescriptionLabel {
            snippet_id: snippet_id.into(),
            category: category_of(subtype),
            subtype: Some(subtype),
            rationale: None,
            source,
            raw_response: None,
        }
    }

    pub fn unclear(snippet_id: impl Into<String>, source: LabelSource) -> Self {
        DescriptionLabel {
            snippet_id: snippet_id.into(),
            category: Category::Unclear,
            subtype: None,
            rationale: None,
            source,
            raw_response: None,
        }
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = Some(rationale.into());
        self
    }

    /// Renders the label in the answer format.
    pub fn to_answer(&self) -> String {
        let mut out = format!("Type: {}", self.category);
        if let Some(st) = self.subtype {
            out.push_str("\nOption: ");
            out.push_str(st.as_str());
        }
        if let Some(r) = &self.rationale {
            out.push_str("\nExample: ");
            out.push_str(r);
        }
        out
    }
}

/// Result of reading one model answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseOutcome {
    /// A well-formed answer. `warning` is set when lines followed the answer.
    Label {
        label: DescriptionLabel,
        warning: Option<String>,
    },
    Refusal,
    FormatViolation { line: usize, diagnostic: String },
}

impl ParseOutcome {
    pub fn label(&self) -> Option<&DescriptionLabel> {
        match self {
            ParseOutcome::Label { label, .. } => Some(label),
            _ => None,
        }
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn contains_refusal(text: &str) -> bool {
    let norm = normalize(&text.replace('\u{2019}', "'"));
    norm.contains(&REFUSAL_SENTENCE.to_lowercase())
}

/// `Some(value)` when `line` is `<key>:<value>` for the given key.
fn keyed<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let (k, v) = line.split_once(':')?;
    k.trim().eq_ignore_ascii_case(key).then(|| v.trim())
}

fn violation(line: usize, diagnostic: impl Into<String>) -> ParseOutcome {
    ParseOutcome::FormatViolation {
        line,
        diagnostic: diagnostic.into(),
    }
}

/// Parses a raw classification answer for `snippet_id`.
///
/// Line numbers in diagnostics are 1-based over the non-blank lines of the
/// answer.
pub fn parse_llm_classification(raw_text: &str, snippet_id: &str) -> ParseOutcome {
    if contains_refusal(raw_text) {
        return ParseOutcome::Refusal;
    }
    let lines: Vec<&str> = raw_text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    let Some(first) = lines.first() else {
        return violation(1, "empty response");
    };
    let Some(type_value) = keyed(first, "Type") else {
        return violation(1, format!("expected `Type: <category>`, found {first:?}"));
    };
    let category = match type_value.parse::<Category>() {
        Ok(c) => c,
        Err(e) => return violation(1, e),
    };

    let mut idx = 1;
    let mut subtype = None;
    if let Some(option_value) = lines.get(idx).and_then(|l| keyed(l, "Option")) {
        if category == Category::Unclear {
            let v = normalize(option_value);
            if !matches!(v.as_str(), "" | "none" | "n/a" | "-") {
                return violation(2, format!("category Unclear takes no option, found {option_value:?}"));
            }
        } else {
            match option_value.parse::<Subtype>() {
                Ok(st) if category_of(st) == category => subtype = Some(st),
                Ok(st) => {
                    return violation(2, format!("option {st} does not belong to category {category}"))
                }
                Err(e) => return violation(2, e),
            }
        }
        idx += 1;
    } else if category != Category::Unclear {
        return violation(2, "expected `Option: <option>`");
    }

    let mut rationale = None;
    if let Some(value) = lines.get(idx).and_then(|l| keyed(l, "Example")) {
        rationale = (!value.is_empty()).then(|| value.to_string());
        idx += 1;
    }
    let warning = (idx < lines.len())
        .then(|| format!("{} trailing line(s) after the answer ignored", lines.len() - idx));

    let mut label = DescriptionLabel::new(snippet_id, category, subtype, LabelSource::Model)
        .expect("subtype membership checked above");
    label.rationale = rationale;
    label.raw_response = Some(raw_text.to_string());
    ParseOutcome::Label { label, warning }
}
