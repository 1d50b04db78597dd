//! Multi-aspect interrogation probes.
//!
//! A probe set for one (claim, document) pair contains an agree group (the
//! original question plus paraphrases) and a conflict group (the negated
//! question plus paraphrases). Templates are plain data with `{claim}` and
//! `{document}` placeholders; the question-answer instruction is appended per
//! interaction mode at render time.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Claim, Document, Polarity};

pub const CLAIM_PLACEHOLDER: &str = "{claim}";
pub const DOCUMENT_PLACEHOLDER: &str = "{document}";

/// Instruction appended to every question-answer probe.
pub const QA_INSTRUCTION: &str =
    "Please answer with either yes or no. If you are not sure, please say 'I am not sure'.";

pub const DEFAULT_MAX_DOCUMENT_CHARS: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionMode {
    /// Sentence completion; probes end on an adverb and the model fills the blank.
    Completion,
    /// Chat-style question answering constrained to yes / no / not sure.
    #[serde(alias = "qa", alias = "q&a")]
    QuestionAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProbeError {
    #[error("template set has no {0} template")]
    MissingPolarity(Polarity),
    #[error("template `{id}` is for {found:?} mode but the probe set is {expected:?}")]
    ModeMismatch {
        id: String,
        expected: InteractionMode,
        found: InteractionMode,
    },
    #[error("template `{id}` must contain exactly one {{claim}} and one {{document}} placeholder")]
    Placeholders { id: String },
    #[error("paraphrase template `{id}` has no original {polarity} sibling")]
    OrphanParaphrase { id: String, polarity: Polarity },
    #[error("template list is empty")]
    NoTemplates,
    #[error("duplicate template id `{0}`")]
    DuplicateId(String),
    #[error("cannot read template file {path}: {reason}")]
    Load { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeTemplate {
    pub id: String,
    pub polarity: Polarity,
    #[serde(default)]
    pub is_paraphrase: bool,
    pub mode: InteractionMode,
    pub pattern: String,
}

impl ProbeTemplate {
    fn new(
        id: &str,
        polarity: Polarity,
        is_paraphrase: bool,
        mode: InteractionMode,
        pattern: &str,
    ) -> Self {
        ProbeTemplate {
            id: id.to_string(),
            polarity,
            is_paraphrase,
            mode,
            pattern: pattern.to_string(),
        }
    }

    fn check_placeholders(&self) -> Result<(), ProbeError> {
        let claims = self.pattern.matches(CLAIM_PLACEHOLDER).count();
        let docs = self.pattern.matches(DOCUMENT_PLACEHOLDER).count();
        if claims != 1 || docs != 1 {
            return Err(ProbeError::Placeholders {
                id: self.id.clone(),
            });
        }
        Ok(())
    }

    /// Substitutes both placeholders in a single pass, so placeholder-like
    /// text inside the claim or document is never expanded again.
    pub fn render(&self, claim_text: &str, document_text: &str) -> String {
        let mut out = String::with_capacity(self.pattern.len() + claim_text.len() + document_text.len());
        let mut rest = self.pattern.as_str();
        loop {
            let next_claim = rest.find(CLAIM_PLACEHOLDER);
            let next_doc = rest.find(DOCUMENT_PLACEHOLDER);
            let (pos, len, value) = match (next_claim, next_doc) {
                (Some(c), Some(d)) if c < d => (c, CLAIM_PLACEHOLDER.len(), claim_text),
                (Some(_), Some(d)) => (d, DOCUMENT_PLACEHOLDER.len(), document_text),
                (Some(c), None) => (c, CLAIM_PLACEHOLDER.len(), claim_text),
                (None, Some(d)) => (d, DOCUMENT_PLACEHOLDER.len(), document_text),
                (None, None) => break,
            };
            out.push_str(&rest[..pos]);
            out.push_str(value);
            rest = &rest[pos + len..];
        }
        out.push_str(rest);
        out
    }
}

/// Checks the structural invariants of a template list: placeholders, unique
/// ids, and that every paraphrase has an original of the same polarity.
pub fn validate_templates(templates: &[ProbeTemplate]) -> Result<(), ProbeError> {
    if templates.is_empty() {
        return Err(ProbeError::NoTemplates);
    }
    let mut seen = std::collections::HashSet::new();
    for t in templates {
        t.check_placeholders()?;
        if !seen.insert(t.id.as_str()) {
            return Err(ProbeError::DuplicateId(t.id.clone()));
        }
    }
    for t in templates.iter().filter(|t| t.is_paraphrase) {
        let has_original = templates
            .iter()
            .any(|o| !o.is_paraphrase && o.polarity == t.polarity && o.mode == t.mode);
        if !has_original {
            return Err(ProbeError::OrphanParaphrase {
                id: t.id.clone(),
                polarity: t.polarity,
            });
        }
    }
    Ok(())
}

/// The built-in probe set: one original and one paraphrase per polarity.
pub fn default_templates(mode: InteractionMode) -> Vec<ProbeTemplate> {
    use InteractionMode::*;
    use Polarity::*;
    match mode {
        QuestionAnswer => vec![
            ProbeTemplate::new(
                "ag-original",
                Agree,
                false,
                QuestionAnswer,
                "Abstract: {document}\n\nBased on the abstract, is the following claim \"{claim}\" true?",
            ),
            ProbeTemplate::new(
                "ag-paraphrase",
                Agree,
                true,
                QuestionAnswer,
                "Is claim \"{claim}\" supported by the study described in paper \"{document}\".",
            ),
            ProbeTemplate::new(
                "cf-original",
                Conflict,
                false,
                QuestionAnswer,
                "Abstract: {document}\n\nBased on the abstract, is the following claim \"{claim}\" false?",
            ),
            ProbeTemplate::new(
                "cf-paraphrase",
                Conflict,
                true,
                QuestionAnswer,
                "Is claim \"{claim}\" refuted by the study described in paper \"{document}\".",
            ),
        ],
        Completion => vec![
            ProbeTemplate::new(
                "ag-original",
                Agree,
                false,
                Completion,
                "Based on the study presented in the paper \"{document}\", the likelihood that '{claim}' is relatively",
            ),
            ProbeTemplate::new(
                "ag-paraphrase",
                Agree,
                true,
                Completion,
                "According to the study described in the paper \"{document}\", the chance that '{claim}' is quite",
            ),
            ProbeTemplate::new(
                "cf-original",
                Conflict,
                false,
                Completion,
                "Based on the study presented in the paper \"{document}\", the likelihood that '{claim}' is false is relatively",
            ),
            ProbeTemplate::new(
                "cf-paraphrase",
                Conflict,
                true,
                Completion,
                "According to the study described in the paper \"{document}\", the chance that '{claim}' is refuted is quite",
            ),
        ],
    }
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    templates: Vec<ProbeTemplate>,
}

/// Loads a TOML template file (`[[templates]]` tables) and validates it.
pub fn load_templates(path: &Path) -> Result<Vec<ProbeTemplate>, ProbeError> {
    let load_err = |reason: String| ProbeError::Load {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| load_err(e.to_string()))?;
    let file: TemplateFile = toml::from_str(&text).map_err(|e| load_err(e.to_string()))?;
    validate_templates(&file.templates)?;
    Ok(file.templates)
}

/// One rendered probe. Metadata travels with the prompt so backends and
/// transcripts can key on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub id: String,
    pub polarity: Polarity,
    pub is_paraphrase: bool,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub claim_id: String,
    pub document_id: String,
    pub mode: InteractionMode,
    /// Original probe first, then agree paraphrases in template order.
    pub agree_probes: Vec<Probe>,
    pub conflict_probes: Vec<Probe>,
}

impl ProbeSet {
    /// The original (non-paraphrase) agree probe.
    pub fn original(&self) -> &Probe {
        &self.agree_probes[0]
    }

    /// All probes, agree group first.
    pub fn iter(&self) -> impl Iterator<Item = &Probe> {
        self.agree_probes.iter().chain(self.conflict_probes.iter())
    }

    pub fn len(&self) -> usize {
        self.agree_probes.len() + self.conflict_probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderOptions {
    pub max_document_chars: usize,
    pub qa_instruction: String,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            max_document_chars: DEFAULT_MAX_DOCUMENT_CHARS,
            qa_instruction: QA_INSTRUCTION.to_string(),
        }
    }
}

/// Cuts `text` to at most `cap` characters, preferring the end of the last
/// complete sentence that fits.
pub fn truncate_document(text: &str, cap: usize) -> &str {
    if text.chars().count() <= cap {
        return text;
    }
    let hard_end = text.char_indices().nth(cap).map(|(i, _)| i).unwrap_or(text.len());
    let head = &text[..hard_end];
    let boundary = head
        .char_indices()
        .rev()
        .find(|&(i, c)| {
            matches!(c, '.' | '!' | '?')
                && text[i + c.len_utf8()..]
                    .chars()
                    .next()
                    .is_none_or(char::is_whitespace)
        })
        .map(|(i, c)| i + c.len_utf8());
    match boundary {
        Some(end) => &text[..end],
        None => head,
    }
}

/// Renders every template for one (claim, document) pair.
pub fn build_probe_set(
    claim: &Claim,
    doc: &Document,
    templates: &[ProbeTemplate],
    mode: InteractionMode,
    options: &RenderOptions,
) -> Result<ProbeSet, ProbeError> {
    if templates.is_empty() {
        return Err(ProbeError::NoTemplates);
    }
    if let Some(t) = templates.iter().find(|t| t.mode != mode) {
        return Err(ProbeError::ModeMismatch {
            id: t.id.clone(),
            expected: mode,
            found: t.mode,
        });
    }
    for polarity in [Polarity::Agree, Polarity::Conflict] {
        if !templates.iter().any(|t| t.polarity == polarity) {
            return Err(ProbeError::MissingPolarity(polarity));
        }
    }
    validate_templates(templates)?;

    let document_text = truncate_document(&doc.text, options.max_document_chars);
    let render = |t: &ProbeTemplate| {
        let mut prompt = t.render(&claim.text, document_text);
        if mode == InteractionMode::QuestionAnswer && !options.qa_instruction.is_empty() {
            prompt.push(' ');
            prompt.push_str(&options.qa_instruction);
        }
        Probe {
            id: t.id.clone(),
            polarity: t.polarity,
            is_paraphrase: t.is_paraphrase,
            prompt,
        }
    };
    let group = |polarity: Polarity| -> Vec<Probe> {
        // originals before paraphrases, template order otherwise preserved
        let originals = templates
            .iter()
            .filter(|t| t.polarity == polarity && !t.is_paraphrase);
        let paraphrases = templates
            .iter()
            .filter(|t| t.polarity == polarity && t.is_paraphrase);
        originals.chain(paraphrases).map(render).collect()
    };

    Ok(ProbeSet {
        claim_id: claim.id.clone(),
        document_id: doc.id.clone(),
        mode,
        agree_probes: group(Polarity::Agree),
        conflict_probes: group(Polarity::Conflict),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn climate_claim() -> Claim {
        Claim::new("climate", "Human activities may cause climate change").unwrap()
    }

    fn doc() -> Document {
        Document::new(
            "A",
            "We analyse 150 years of temperature records. Anthropogenic forcing explains most of the warming.",
        )
        .unwrap()
    }

    #[test]
    fn default_templates_cover_both_polarities_in_each_mode() {
        for mode in [InteractionMode::Completion, InteractionMode::QuestionAnswer] {
            let templates = default_templates(mode);
            assert!(templates.len() >= 4);
            validate_templates(&templates).unwrap();
            for t in templates.iter().filter(|t| t.polarity == Polarity::Conflict) {
                assert!(templates
                    .iter()
                    .any(|o| o.polarity == Polarity::Conflict && !o.is_paraphrase));
                assert_eq!(t.mode, mode);
            }
        }
    }

    #[test]
    fn qa_conflict_original_matches_logged_prompt() {
        let set = build_probe_set(
            &climate_claim(),
            &doc(),
            &default_templates(InteractionMode::QuestionAnswer),
            InteractionMode::QuestionAnswer,
            &RenderOptions::default(),
        )
        .unwrap();
        let cf = &set.conflict_probes[0];
        assert_eq!(cf.id, "cf-original");
        assert!(cf.prompt.contains(
            "Based on the abstract, is the following claim \"Human activities may cause climate change\" false?"
        ));
        assert!(cf.prompt.ends_with(QA_INSTRUCTION));
    }

    #[test]
    fn completion_agree_original_ends_on_the_anchor_adverb() {
        let claim = Claim::new("c", "human activities may cause climate change").unwrap();
        let set = build_probe_set(
            &claim,
            &doc(),
            &default_templates(InteractionMode::Completion),
            InteractionMode::Completion,
            &RenderOptions::default(),
        )
        .unwrap();
        let original = set.original();
        assert!(original
            .prompt
            .ends_with("the likelihood that 'human activities may cause climate change' is relatively"));
        assert!(!original.prompt.contains(QA_INSTRUCTION));
    }

    #[test]
    fn four_default_templates_give_two_probes_per_group() {
        let set = build_probe_set(
            &climate_claim(),
            &doc(),
            &default_templates(InteractionMode::QuestionAnswer),
            InteractionMode::QuestionAnswer,
            &RenderOptions::default(),
        )
        .unwrap();
        assert_eq!(set.agree_probes.len(), 2);
        assert_eq!(set.conflict_probes.len(), 2);
        assert_eq!(set.original().id, "ag-original");
        assert!(!set.original().is_paraphrase);
    }

    #[test]
    fn agree_paraphrase_is_a_verbatim_substitution() {
        let claim = climate_claim();
        let document = doc();
        let set = build_probe_set(
            &claim,
            &document,
            &default_templates(InteractionMode::QuestionAnswer),
            InteractionMode::QuestionAnswer,
            &RenderOptions::default(),
        )
        .unwrap();
        let expected = format!(
            "Is claim \"{}\" supported by the study described in paper \"{}\". {}",
            claim.text, document.text, QA_INSTRUCTION
        );
        assert_eq!(set.agree_probes[1].prompt, expected);
    }

    #[test]
    fn agree_only_templates_are_rejected() {
        let templates: Vec<_> = default_templates(InteractionMode::QuestionAnswer)
            .into_iter()
            .filter(|t| t.polarity == Polarity::Agree)
            .collect();
        let err = build_probe_set(
            &climate_claim(),
            &doc(),
            &templates,
            InteractionMode::QuestionAnswer,
            &RenderOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, ProbeError::MissingPolarity(Polarity::Conflict));
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let err = build_probe_set(
            &climate_claim(),
            &doc(),
            &default_templates(InteractionMode::Completion),
            InteractionMode::QuestionAnswer,
            &RenderOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ProbeError::ModeMismatch { .. }));
    }

    #[test]
    fn placeholder_count_is_enforced() {
        let mut templates = default_templates(InteractionMode::QuestionAnswer);
        templates[0].pattern = "is {claim} {claim} true in {document}?".into();
        assert!(matches!(
            validate_templates(&templates),
            Err(ProbeError::Placeholders { .. })
        ));
    }

    #[test]
    fn orphan_paraphrase_is_rejected() {
        let templates: Vec<_> = default_templates(InteractionMode::QuestionAnswer)
            .into_iter()
            .filter(|t| t.id != "cf-original")
            .collect();
        assert!(matches!(
            validate_templates(&templates),
            Err(ProbeError::OrphanParaphrase { .. })
        ));
    }

    #[test]
    fn truncation_prefers_sentence_boundaries() {
        let text = "First sentence. Second sentence is longer. Third.";
        assert_eq!(truncate_document(text, 100), text);
        assert_eq!(truncate_document(text, 30), "First sentence.");
        assert_eq!(truncate_document("no boundary here at all", 8), "no bound");
        // decimal points are not sentence ends
        assert_eq!(truncate_document("Warming of 1.5 degrees. More text", 25), "Warming of 1.5 degrees.");
        // a cut right after the decimal point is not a boundary either
        assert_eq!(truncate_document("Ok. Warming of 1.5 degrees", 17), "Ok.");
    }

    #[test]
    fn long_documents_are_capped_in_prompts() {
        let long = "Sentence number one. ".repeat(500);
        let document = Document::new("long", long).unwrap();
        let options = RenderOptions {
            max_document_chars: 100,
            ..RenderOptions::default()
        };
        let set = build_probe_set(
            &climate_claim(),
            &document,
            &default_templates(InteractionMode::QuestionAnswer),
            InteractionMode::QuestionAnswer,
            &options,
        )
        .unwrap();
        assert!(set.original().prompt.len() < 400);
    }

    #[test]
    fn template_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.toml");
        let file = toml::to_string(&serde_json::json!({
            "templates": default_templates(InteractionMode::QuestionAnswer)
        }))
        .unwrap();
        std::fs::write(&path, file).unwrap();
        let loaded = load_templates(&path).unwrap();
        assert_eq!(loaded, default_templates(InteractionMode::QuestionAnswer));
    }

    proptest! {
        #[test]
        fn rendering_is_deterministic_and_complete(
            claim_text in "[A-Za-z ,.]{1,60}",
            doc_text in "[A-Za-z0-9 ,.]{1,300}",
        ) {
            prop_assume!(!claim_text.trim().is_empty() && !doc_text.trim().is_empty());
            let claim = Claim::new("c", claim_text.clone()).unwrap();
            let document = Document::new("d", doc_text.clone()).unwrap();
            let templates = default_templates(InteractionMode::QuestionAnswer);
            let a = build_probe_set(&claim, &document, &templates, InteractionMode::QuestionAnswer, &RenderOptions::default()).unwrap();
            let b = build_probe_set(&claim, &document, &templates, InteractionMode::QuestionAnswer, &RenderOptions::default()).unwrap();
            prop_assert_eq!(&a, &b);
            let agree = templates.iter().filter(|t| t.polarity == Polarity::Agree).count();
            prop_assert_eq!(a.agree_probes.len(), agree);
            prop_assert_eq!(a.conflict_probes.len(), templates.len() - agree);
            for probe in a.iter() {
                prop_assert!(!probe.prompt.contains(CLAIM_PLACEHOLDER));
                prop_assert!(!probe.prompt.contains(DOCUMENT_PLACEHOLDER));
                prop_assert!(probe.prompt.contains(&claim_text));
                prop_assert!(probe.prompt.contains(&doc_text));
            }
        }
    }
}
