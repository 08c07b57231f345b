//! Description-type vocabulary and positive/negative target word lists.
//!
//! Both live in one JSON document:
//!
//! ```json
//! {
//!   "types": [
//!     { "role": "resolution", "words": ["low-resolution", "blurred"] },
//!     { "role": "aerial", "words": ["high", "top"], "enabled": false }
//!   ],
//!   "targets": { "positives": ["grass"], "negatives": ["water"] }
//! }
//! ```
//!
//! Array order is significant: the position of a word inside its type is the
//! tie-break key when two words score identically.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::InferenceBackend;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};

/// Default vocabulary shipped with the crate.
pub const DEFAULT_VOCABULARY_JSON: &str = include_str!("../assets/vocabulary.json");

/// Category of prompt decoration.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Resolution,
    Frame,
    Environment,
    Aerial,
    ContextAware,
    Custom(String),
}

impl Role {
    /// Roles filled by the engineered-prompt template.
    pub const TEMPLATE: [Role; 3] = [Role::Resolution, Role::Frame, Role::Environment];

    pub fn as_str(&self) -> &str {
        match self {
            Role::Resolution => "resolution",
            Role::Frame => "frame",
            Role::Environment => "environment",
            Role::Aerial => "aerial",
            Role::ContextAware => "context_aware",
            Role::Custom(name) => name,
        }
    }

    /// Roles outside the template ship disabled unless a file says otherwise.
    fn enabled_by_default(&self) -> bool {
        !matches!(self, Role::Aerial | Role::ContextAware)
    }
}

impl FromStr for Role {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "resolution" => Role::Resolution,
            "frame" => Role::Frame,
            "environment" => Role::Environment,
            "aerial" => Role::Aerial,
            "context_aware" | "context-aware" => Role::ContextAware,
            other => Role::Custom(other.to_string()),
        })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Role {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s.is_empty() {
            return Err(serde::de::Error::custom("role must not be empty"));
        }
        Ok(s.parse().unwrap())
    }
}

/// One row of the vocabulary: a role and its candidate words.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptionType {
    pub role: Role,
    pub words: Vec<String>,
    /// Disabled types are kept in the file but skipped during selection.
    pub enabled: bool,
    /// One unit vector per word once embedded; empty before that.
    pub embeddings: Vec<EmbeddingVector>,
}

impl DescriptionType {
    pub fn new(role: Role, words: Vec<String>) -> Self {
        let enabled = role.enabled_by_default();
        Self {
            role,
            words,
            enabled,
            embeddings: Vec::new(),
        }
    }

    pub fn is_embedded(&self) -> bool {
        self.embeddings.len() == self.words.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescriptionVocabulary {
    pub types: Vec<DescriptionType>,
    /// Token standing for the class word in templates.
    pub class_slot_marker: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetLists {
    pub positives: Vec<String>,
    #[serde(default)]
    pub negatives: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeRecord {
    role: Role,
    words: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    enabled: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyFile {
    types: Vec<TypeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    targets: Option<TargetLists>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetsFile {
    #[allow(dead_code)]
    #[serde(default)]
    types: Option<serde_json::Value>,
    targets: TargetLists,
}

impl DescriptionVocabulary {
    /// Parses and validates a vocabulary document without embedding it.
    ///
    /// `required` lists the roles that must be present; pass
    /// [`Role::TEMPLATE`] for vocabularies that feed the engineered template.
    pub fn parse(text: &str, origin: &Path, required: &[Role]) -> Result<Self> {
        let file: VocabularyFile =
            serde_json::from_str(text).map_err(|e| Error::schema(origin, &e))?;
        let types = file
            .types
            .into_iter()
            .map(|r| {
                let mut t = DescriptionType::new(r.role, r.words);
                if let Some(enabled) = r.enabled {
                    t.enabled = enabled;
                }
                t
            })
            .collect();
        let vocab = Self {
            types,
            class_slot_marker: "{}".to_string(),
        };
        vocab.validate(required)?;
        Ok(vocab)
    }

    pub fn validate(&self, required: &[Role]) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::Validation(
                "vocabulary has no description types".into(),
            ));
        }
        let mut seen_roles = HashSet::new();
        for t in &self.types {
            if !seen_roles.insert(&t.role) {
                return Err(Error::Validation(format!("duplicate role '{}'", t.role)));
            }
            if t.words.is_empty() {
                return Err(Error::Validation(format!("role '{}' has no words", t.role)));
            }
            let mut seen_words = HashSet::new();
            for w in &t.words {
                if w.trim().is_empty() {
                    return Err(Error::Validation(format!("empty word under '{}'", t.role)));
                }
                if !seen_words.insert(w.as_str()) {
                    return Err(Error::Validation(format!(
                        "duplicate word '{w}' under role '{}'",
                        t.role
                    )));
                }
            }
        }
        for role in required {
            if !self.types.iter().any(|t| &t.role == role && t.enabled) {
                return Err(Error::Validation(format!("missing required role '{role}'")));
            }
        }
        Ok(())
    }

    /// Embeds every word with `backend`, replacing any previous embeddings.
    pub fn embed(&mut self, backend: &dyn InferenceBackend) -> Result<()> {
        for t in &mut self.types {
            t.embeddings = t
                .words
                .iter()
                .map(|w| backend.embed_text(w))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    pub fn get(&self, role: &Role) -> Option<&DescriptionType> {
        self.types.iter().find(|t| &t.role == role)
    }

    /// Serializes roles, words and enabled flags (embeddings are not stored).
    pub fn to_json(&self, targets: Option<&TargetLists>) -> String {
        let file = VocabularyFile {
            types: self
                .types
                .iter()
                .map(|t| TypeRecord {
                    role: t.role.clone(),
                    words: t.words.clone(),
                    enabled: (t.enabled != t.role.enabled_by_default()).then_some(t.enabled),
                })
                .collect(),
            targets: targets.cloned(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    /// The vocabulary compiled into the crate, unembedded.
    pub fn builtin() -> Self {
        Self::parse(
            DEFAULT_VOCABULARY_JSON,
            Path::new("<builtin vocabulary>"),
            &Role::TEMPLATE,
        )
        .expect("builtin vocabulary is valid")
    }
}

/// Loads a vocabulary that must provide every template role, and embeds it.
pub fn load_vocabulary(
    path: impl AsRef<Path>,
    backend: &dyn InferenceBackend,
) -> Result<DescriptionVocabulary> {
    load_vocabulary_with(path, backend, &Role::TEMPLATE)
}

/// Like [`load_vocabulary`] with an explicit set of required roles.
pub fn load_vocabulary_with(
    path: impl AsRef<Path>,
    backend: &dyn InferenceBackend,
    required: &[Role],
) -> Result<DescriptionVocabulary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vocab = DescriptionVocabulary::parse(&text, path, required)?;
    vocab.embed(backend)?;
    Ok(vocab)
}

impl TargetLists {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: TargetsFile =
            serde_json::from_str(text).map_err(|e| Error::schema(origin, &e))?;
        file.targets.validate()?;
        Ok(file.targets)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::Validation("target list has no positives".into()));
        }
        for list in [&self.positives, &self.negatives] {
            if list.iter().any(|w| w.trim().is_empty()) {
                return Err(Error::Validation("empty target word".into()));
            }
        }
        let pos: HashSet<&str> = self.positives.iter().map(String::as_str).collect();
        if let Some(dup) = self.negatives.iter().find(|n| pos.contains(n.as_str())) {
            return Err(Error::Validation(format!(
                "'{dup}' is listed as both positive and negative"
            )));
        }
        Ok(())
    }

    /// Number of positive targets.
    pub fn x(&self) -> usize {
        self.positives.len()
    }

    /// Number of negative targets.
    pub fn y(&self) -> usize {
        self.negatives.len()
    }

    pub fn positives_only(&self) -> Self {
        Self {
            positives: self.positives.clone(),
            negatives: Vec::new(),
        }
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_VOCABULARY_JSON, Path::new("<builtin vocabulary>"))
            .expect("builtin targets are valid")
    }
}

pub fn load_targets(path: impl AsRef<Path>) -> Result<TargetLists> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TargetLists::parse(&text, path)
}
