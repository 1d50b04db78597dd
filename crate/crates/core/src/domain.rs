//! Shared vocabulary: verdicts, claims, documents and probe polarity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Canonical three-valued answer about a claim with respect to one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Verdict {
    Support,
    Refute,
    Neutral,
}

impl Verdict {
    /// All verdicts in score-vector order (S, R, N).
    pub const ALL: [Verdict; 3] = [Verdict::Support, Verdict::Refute, Verdict::Neutral];

    /// Position of this verdict in an (S, R, N) score triple.
    pub fn index(self) -> usize {
        match self {
            Verdict::Support => 0,
            Verdict::Refute => 1,
            Verdict::Neutral => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Verdict> {
        Verdict::ALL.get(index).copied()
    }

    /// Swap Support and Refute; Neutral is a fixed point.
    pub fn invert(self) -> Verdict {
        invert_verdict(self)
    }

    pub fn short(self) -> &'static str {
        match self {
            Verdict::Support => "S",
            Verdict::Refute => "R",
            Verdict::Neutral => "N",
        }
    }
}

/// Maps an answer to a negated probe back onto the original proposition.
pub fn invert_verdict(v: Verdict) -> Verdict {
    match v {
        Verdict::Support => Verdict::Refute,
        Verdict::Refute => Verdict::Support,
        Verdict::Neutral => Verdict::Neutral,
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Verdict::Support => "Support",
            Verdict::Refute => "Refute",
            Verdict::Neutral => "Neutral",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown verdict `{0}` (expected Support, Refute or Neutral)")]
pub struct ParseVerdictError(pub String);

impl FromStr for Verdict {
    type Err = ParseVerdictError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "support" | "supports" | "s" => Ok(Verdict::Support),
            "refute" | "refutes" | "r" => Ok(Verdict::Refute),
            "neutral" | "n" => Ok(Verdict::Neutral),
            _ => Err(ParseVerdictError(s.to_string())),
        }
    }
}

/// Whether a probe asks the original question or its negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Agree,
    Conflict,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarity::Agree => f.write_str("Agree"),
            Polarity::Conflict => f.write_str("Conflict"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DomainError {
    #[error("claim `{0}` has empty text")]
    EmptyClaim(String),
    #[error("document `{0}` has empty text")]
    EmptyDocument(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub text: String,
}

impl Claim {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, DomainError> {
        let claim = Claim {
            id: id.into(),
            text: text.into(),
        };
        claim.validate()?;
        Ok(claim)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.text.trim().is_empty() {
            return Err(DomainError::EmptyClaim(self.id.clone()));
        }
        Ok(())
    }
}

/// A retrievable text. `label` is only present in evaluation corpora.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Verdict>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self, DomainError> {
        let doc = Document {
            id: id.into(),
            text: text.into(),
            source: String::new(),
            label: None,
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn with_label(mut self, label: Verdict) -> Self {
        self.label = Some(label);
        self
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        if self.text.trim().is_empty() {
            return Err(DomainError::EmptyDocument(self.id.clone()));
        }
        Ok(())
    }
}
