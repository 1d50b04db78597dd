//! Response resolution: free-text LLM output to a canonical [`Verdict`].
//!
//! Completion-mode output is read off the word following an anchor adverb
//! ("relatively", "quite") through a lexicon. Question-answer output runs
//! through an ordered list of regular expressions where the first match wins.
//! Anything unresolvable is Neutral.

use std::collections::BTreeMap;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::domain::{Polarity, Verdict};
use crate::probegen::InteractionMode;

/// A leading rule must match within this many characters of the trimmed text.
pub const LEADING_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolverError {
    #[error("invalid pattern `{pattern}`: {reason}")]
    Pattern { pattern: String, reason: String },
    #[error("resolution rules need at least one {0}")]
    Empty(&'static str),
    #[error("cannot read rules file {path}: {reason}")]
    Load { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPattern {
    /// Case-insensitive regular expression.
    pub pattern: String,
    pub verdict: Verdict,
    /// Only counts when the match starts within [`LEADING_WINDOW`] characters.
    #[serde(default)]
    pub leading: bool,
}

impl QaPattern {
    fn new(pattern: &str, verdict: Verdict, leading: bool) -> Self {
        QaPattern {
            pattern: pattern.to_string(),
            verdict,
            leading,
        }
    }
}

/// Serializable rule data. Compile into a [`Resolver`] before use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionRules {
    pub completion_anchor_words: Vec<String>,
    pub completion_lexicon: BTreeMap<String, Verdict>,
    pub qa_patterns: Vec<QaPattern>,
}

impl Default for ResolutionRules {
    fn default() -> Self {
        let mut lexicon = BTreeMap::new();
        for word in ["high", "likely", "strong", "significant", "plausible", "substantial"] {
            lexicon.insert(word.to_string(), Verdict::Support);
        }
        for word in ["low", "unlikely", "weak", "small", "negligible"] {
            lexicon.insert(word.to_string(), Verdict::Refute);
        }
        for word in ["uncertain", "unclear", "unknown", "debatable", "inconclusive"] {
            lexicon.insert(word.to_string(), Verdict::Neutral);
        }

        use Verdict::*;
        let qa_patterns = vec![
            QaPattern::new(r"\byes\b", Support, true),
            QaPattern::new(r"\bno\b", Refute, true),
            QaPattern::new(
                r"\bi\s+am\s+not\s+sure\b|\bnot\s+sure\b|\bcannot\s+(?:be\s+)?determined?\b|\bcan'?t\s+determine\b",
                Neutral,
                false,
            ),
            QaPattern::new(r"\bis\s+not\s+true\b", Refute, false),
            QaPattern::new(r"\bis\s+not\s+false\b", Support, false),
            QaPattern::new(r"\bis\s+incorrect\b", Refute, false),
            QaPattern::new(r"\bis\s+correct\b", Support, false),
            QaPattern::new(r"\bis\s+true\b", Support, false),
            QaPattern::new(r"\bis\s+false\b", Refute, false),
        ];

        ResolutionRules {
            completion_anchor_words: vec!["relatively".into(), "quite".into()],
            completion_lexicon: lexicon,
            qa_patterns,
        }
    }
}

impl ResolutionRules {
    /// Reads a TOML rules file. Sections that are absent keep their defaults.
    pub fn load(path: &Path) -> Result<Self, ResolverError> {
        #[derive(Deserialize)]
        struct RulesFile {
            completion_anchor_words: Option<Vec<String>>,
            completion_lexicon: Option<BTreeMap<String, Verdict>>,
            qa_patterns: Option<Vec<QaPattern>>,
        }
        let load_err = |reason: String| ResolverError::Load {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
        let file: RulesFile = toml::from_str(&text).map_err(|e| load_err(e.to_string()))?;
        let defaults = ResolutionRules::default();
        Ok(ResolutionRules {
            completion_anchor_words: file
                .completion_anchor_words
                .unwrap_or(defaults.completion_anchor_words),
            completion_lexicon: file
                .completion_lexicon
                .map(|m| m.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect())
                .unwrap_or(defaults.completion_lexicon),
            qa_patterns: file.qa_patterns.unwrap_or(defaults.qa_patterns),
        })
    }
}

#[derive(Debug, Clone)]
struct CompiledPattern {
    regex: Regex,
    verdict: Verdict,
    leading: bool,
}

/// Compiled, immutable resolution rules.
#[derive(Debug, Clone)]
pub struct Resolver {
    anchors: Vec<String>,
    lexicon: BTreeMap<String, Verdict>,
    patterns: Vec<CompiledPattern>,
}

impl Default for Resolver {
    fn default() -> Self {
        Resolver::new(&ResolutionRules::default()).expect("default rules compile")
    }
}

/// One raw sample returned by a backend for a probe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub probe_id: String,
    pub probe_polarity: Polarity,
    pub sample_index: usize,
}

fn trim_leading(text: &str) -> &str {
    text.trim_start_matches(|c: char| {
        c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}' | '*')
    })
}

fn normalize_word(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

impl Resolver {
    pub fn new(rules: &ResolutionRules) -> Result<Self, ResolverError> {
        if rules.completion_anchor_words.is_empty() {
            return Err(ResolverError::Empty("anchor word"));
        }
        if rules.completion_lexicon.is_empty() {
            return Err(ResolverError::Empty("lexicon entry"));
        }
        if rules.qa_patterns.is_empty() {
            return Err(ResolverError::Empty("question-answer pattern"));
        }
        let patterns = rules
            .qa_patterns
            .iter()
            .map(|p| {
                let regex = RegexBuilder::new(&p.pattern)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| ResolverError::Pattern {
                        pattern: p.pattern.clone(),
                        reason: e.to_string(),
                    })?;
                Ok(CompiledPattern {
                    regex,
                    verdict: p.verdict,
                    leading: p.leading,
                })
            })
            .collect::<Result<Vec<_>, ResolverError>>()?;
        Ok(Resolver {
            anchors: rules
                .completion_anchor_words
                .iter()
                .map(|w| w.to_lowercase())
                .collect(),
            lexicon: rules
                .completion_lexicon
                .iter()
                .map(|(k, v)| (k.to_lowercase(), *v))
                .collect(),
            patterns,
        })
    }

    /// Looks up the word after the first anchor adverb. If the text has no
    /// anchor (the model continued straight after the prompt's adverb), the
    /// first word is used instead.
    pub fn resolve_completion(&self, text: &str) -> Verdict {
        let words: Vec<String> = text.split_whitespace().map(normalize_word).collect();
        let anchor_pos = words
            .iter()
            .position(|w| self.anchors.iter().any(|a| a == w));
        let candidate = match anchor_pos {
            Some(i) => words.get(i + 1),
            None => words.iter().find(|w| !w.is_empty()),
        };
        candidate
            .and_then(|w| self.lexicon.get(w.as_str()))
            .copied()
            .unwrap_or(Verdict::Neutral)
    }

    /// Applies the ordered question-answer patterns; the first match decides.
    pub fn resolve_qa(&self, text: &str) -> Verdict {
        let text = trim_leading(text);
        for rule in &self.patterns {
            let hit = if rule.leading {
                rule.regex
                    .find(text)
                    .is_some_and(|m| text[..m.start()].chars().count() < LEADING_WINDOW)
            } else {
                rule.regex.is_match(text)
            };
            if hit {
                return rule.verdict;
            }
        }
        Verdict::Neutral
    }

    /// Resolves relative to the probe's own proposition; conflict inversion
    /// happens during tallying.
    pub fn resolve(&self, response: &RawResponse, mode: InteractionMode) -> Verdict {
        self.resolve_text(&response.text, mode)
    }

    pub fn resolve_text(&self, text: &str, mode: InteractionMode) -> Verdict {
        match mode {
            InteractionMode::Completion => self.resolve_completion(text),
            InteractionMode::QuestionAnswer => self.resolve_qa(text),
        }
    }
}
