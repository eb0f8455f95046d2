//! Deterministic scripted backend, loaded from a JSON fixture.
//!
//! ```json
//! {
//!   "id": "fixture-a",
//!   "rules": [
//!     {"user_contains": "npm install", "responses": ["Type: Instruction\nOption: Installation instruction"]},
//!     {"system_contains": "one-line DESCRIPTION", "responses": [{"error": "unreachable"}, "DESCRIPTION: Loads audio."]}
//!   ],
//!   "default": "Type: Example\nOption: Code example",
//!   "embedding": {"mode": "hashed", "dim": 64}
//! }
//! ```
//!
//! Rules are tried in order; a rule matches when every given substring
//! occurs. Each rule steps through its `responses` on successive matches and
//! then repeats the last one. Token embeddings are derived from SHA-256 of
//! the token, so the same token always gets the same vector.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, TransportError};
use crate::prompting::PromptBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Unreachable,
    Timeout,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockReply {
    Text(String),
    Error { error: MockFailure },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_contains: Option<String>,
    pub responses: Vec<MockReply>,
}

impl MockRule {
    fn matches(&self, bundle: &PromptBundle) -> bool {
        self.system_contains
            .as_deref()
            .is_none_or(|s| bundle.system_text.contains(s))
            && self
                .user_contains
                .as_deref()
                .is_none_or(|s| bundle.user_text.contains(s))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Dense vector with components in [-1, 1).
    #[default]
    Hashed,
    /// Components in [0, 1), so every cosine is non-negative.
    HashedPositive,
    /// A basis vector; distinct tokens are orthogonal unless their hashes collide.
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEmbedding {
    #[serde(default)]
    pub mode: EmbeddingMode,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Explicit vectors for particular tokens.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub vectors: BTreeMap<String, Vec<f64>>,
}

fn default_dim() -> usize {
    64
}

impl Default for MockEmbedding {
    fn default() -> Self {
        MockEmbedding {
            mode: EmbeddingMode::Hashed,
            dim: default_dim(),
            vectors: BTreeMap::new(),
        }
    }
}

impl MockEmbedding {
    pub fn vector(&self, token: &str) -> Vec<f64> {
        if let Some(v) = self.vectors.get(token) {
            return v.clone();
        }
        match self.mode {
            EmbeddingMode::OneHot => {
                let digest = Sha256::digest(token.as_bytes());
                let idx = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
                let mut v = vec![0.0; self.dim];
                v[(idx % self.dim as u64) as usize] = 1.0;
                v
            }
            EmbeddingMode::Hashed | EmbeddingMode::HashedPositive => {
                let mut v = Vec::with_capacity(self.dim);
                let mut block = 0u32;
                while v.len() < self.dim {
                    let mut h = Sha256::new();
                    h.update(token.as_bytes());
                    h.update(block.to_le_bytes());
                    for pair in h.finalize().chunks(2) {
                        if v.len() == self.dim {
                            break;
                        }
                        let unit = u16::from_le_bytes([pair[0], pair[1]]) as f64 / 65536.0;
                        v.push(match self.mode {
                            EmbeddingMode::Hashed => unit * 2.0 - 1.0,
                            _ => unit,
                        });
                    }
                    block += 1;
                }
                if v.iter().all(|&x| x == 0.0) {
                    v[0] = 1.0;
                }
                v
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Reply when no rule matches; without one, unmatched prompts get an empty reply.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<MockReply>,
    #[serde(default)]
    pub embedding: MockEmbedding,
}

fn default_id() -> String {
    "mock".into()
}

impl Default for MockFixture {
    fn default() -> Self {
        MockFixture {
            id: default_id(),
            rules: Vec::new(),
            default: None,
            embedding: MockEmbedding::default(),
        }
    }
}

#[derive(Debug)]
pub struct MockBackend {
    fixture: MockFixture,
    cursors: Mutex<Vec<usize>>,
}

impl MockBackend {
    pub fn new(fixture: MockFixture) -> Self {
        let cursors = Mutex::new(vec![0; fixture.rules.len()]);
        MockBackend { fixture, cursors }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, String> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| e.to_string())?;
        let fixture: MockFixture = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        Ok(MockBackend::new(fixture))
    }

    pub fn fixture(&self) -> &MockFixture {
        &self.fixture
    }

    fn reply_for(&self, bundle: &PromptBundle) -> Option<MockReply> {
        for (i, rule) in self.fixture.rules.iter().enumerate() {
            if rule.matches(bundle) && !rule.responses.is_empty() {
                let mut cursors = self.cursors.lock().expect("mock cursor lock");
                let at = cursors[i].min(rule.responses.len() - 1);
                cursors[i] += 1;
                return Some(rule.responses[at].clone());
            }
        }
        self.fixture.default.clone()
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        format!("mock:{}", self.fixture.id)
    }

    fn generate(&self, _: &str, bundle: &PromptBundle, _: Duration) -> Result<String, TransportError> {
        match self.reply_for(bundle) {
            Some(MockReply::Text(t)) => Ok(t),
            Some(MockReply::Error { error }) => match error {
                MockFailure::Unreachable => Err(TransportError::Unreachable("mock: scripted failure".into())),
                MockFailure::Timeout => Err(TransportError::Timeout),
                MockFailure::Empty => Ok(String::new()),
            },
            None => Ok(String::new()),
        }
    }

    fn embed(&self, _: &str, inputs: &[String], _: Duration) -> Result<Vec<Vec<f64>>, TransportError> {
        Ok(inputs.iter().map(|t| self.fixture.embedding.vector(t)).collect())
    }
}
