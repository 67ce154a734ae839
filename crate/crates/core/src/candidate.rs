//! Subject line candidates and where they came from.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Rule,
    Generated,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubjectLineCandidate {
    pub text: String,
    pub source: Provenance,
}

impl SubjectLineCandidate {
    pub fn rule(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            source: Provenance::Rule,
        }
    }

    pub fn generated(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            source: Provenance::Generated,
        }
    }
}
