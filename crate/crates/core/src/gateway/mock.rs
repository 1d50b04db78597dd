//! Scripted mock backend.
//!
//! A script maps (document id, polarity, paraphrase flag) to a categorical
//! distribution over canned responses. Every draw uses its own generator
//! seeded from (seed, document id, probe id, sample index), so results do not
//! depend on call order or thread scheduling.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendInfo, BackendKind, GatewayError, SampleRequest};
use crate::domain::{Polarity, Verdict};

/// Document id that matches any document without its own entry.
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CannedResponse {
    pub text: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    pub document_id: String,
    pub polarity: Polarity,
    pub is_paraphrase: bool,
    pub responses: Vec<CannedResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    pub seed: u64,
    pub entries: Vec<MockEntry>,
}

/// The answer a perfectly reliable model gives to a yes/no probe of the given
/// polarity about a document with the given label.
pub fn qa_answer(label: Verdict, polarity: Polarity) -> &'static str {
    match (label, polarity) {
        (Verdict::Neutral, _) => "I am not sure.",
        (Verdict::Support, Polarity::Agree) | (Verdict::Refute, Polarity::Conflict) => "Yes.",
        (Verdict::Refute, Polarity::Agree) | (Verdict::Support, Polarity::Conflict) => "No.",
    }
}

const QA_ANSWERS: [&str; 3] = ["Yes.", "No.", "I am not sure."];

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::InvalidScript(format!("{}: {e}", path.display())))?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| GatewayError::InvalidScript(format!("{}: {e}", path.display())))?;
        script.validate()?;
        Ok(script)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let mut keys = std::collections::HashSet::new();
        for e in &self.entries {
            if e.responses.is_empty() {
                return Err(GatewayError::InvalidScript(format!(
                    "entry for `{}` has no responses",
                    e.document_id
                )));
            }
            if e.responses.iter().any(|r| !(r.p.is_finite() && r.p >= 0.0)) {
                return Err(GatewayError::InvalidScript(format!(
                    "entry for `{}` has a negative or non-finite probability",
                    e.document_id
                )));
            }
            let total: f64 = e.responses.iter().map(|r| r.p).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(GatewayError::InvalidScript(format!(
                    "entry for `{}` sums to {total}",
                    e.document_id
                )));
            }
            if !keys.insert((e.document_id.as_str(), e.polarity, e.is_paraphrase)) {
                return Err(GatewayError::InvalidScript(format!(
                    "duplicate entry for `{}` {} paraphrase={}",
                    e.document_id, e.polarity, e.is_paraphrase
                )));
            }
        }
        Ok(())
    }

    /// Question-answer script in which each sample is the correct answer for
    /// the document's label with probability `p_correct`; the two wrong
    /// answers split the rest evenly.
    pub fn noisy<'a>(
        labels: impl IntoIterator<Item = (&'a str, Verdict)>,
        p_correct: f64,
        seed: u64,
    ) -> Self {
        let mut entries = Vec::new();
        for (doc_id, label) in labels {
            for polarity in [Polarity::Agree, Polarity::Conflict] {
                let correct = qa_answer(label, polarity);
                let responses = QA_ANSWERS
                    .iter()
                    .map(|&text| CannedResponse {
                        text: text.to_string(),
                        p: if text == correct { p_correct } else { (1.0 - p_correct) / 2.0 },
                    })
                    .filter(|r| r.p > 0.0)
                    .collect::<Vec<_>>();
                for is_paraphrase in [false, true] {
                    entries.push(MockEntry {
                        document_id: doc_id.to_string(),
                        polarity,
                        is_paraphrase,
                        responses: responses.clone(),
                    });
                }
            }
        }
        MockScript { seed, entries }
    }

    /// Agree probes always answer correctly; conflict probes always answer
    /// wrongly ("Yes." for neutral documents).
    pub fn adversarial<'a>(labels: impl IntoIterator<Item = (&'a str, Verdict)>, seed: u64) -> Self {
        let mut entries = Vec::new();
        for (doc_id, label) in labels {
            let wrong_conflict = match label {
                Verdict::Support | Verdict::Neutral => "Yes.",
                Verdict::Refute => "No.",
            };
            for (polarity, text) in [
                (Polarity::Agree, qa_answer(label, Polarity::Agree)),
                (Polarity::Conflict, wrong_conflict),
            ] {
                for is_paraphrase in [false, true] {
                    entries.push(MockEntry {
                        document_id: doc_id.to_string(),
                        polarity,
                        is_paraphrase,
                        responses: vec![CannedResponse {
                            text: text.to_string(),
                            p: 1.0,
                        }],
                    });
                }
            }
        }
        MockScript { seed, entries }
    }
}

type EntryKey = (String, Polarity, bool);

#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    entries: HashMap<EntryKey, Vec<CannedResponse>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Result<Self, GatewayError> {
        script.validate()?;
        let seed = script.seed;
        Ok(MockBackend {
            seed,
            entries: script
                .entries
                .into_iter()
                .map(|e| ((e.document_id, e.polarity, e.is_paraphrase), e.responses))
                .collect(),
        })
    }

    /// Replaces the script's seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn lookup(&self, document_id: &str, polarity: Polarity, is_paraphrase: bool) -> Option<&[CannedResponse]> {
        self.entries
            .get(&(document_id.to_string(), polarity, is_paraphrase))
            .or_else(|| self.entries.get(&(WILDCARD.to_string(), polarity, is_paraphrase)))
            .map(Vec::as_slice)
    }

    fn stream(&self, document_id: &str, probe_id: &str, sample_index: usize) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update((document_id.len() as u64).to_le_bytes());
        hasher.update(document_id.as_bytes());
        hasher.update((probe_id.len() as u64).to_le_bytes());
        hasher.update(probe_id.as_bytes());
        hasher.update((sample_index as u64).to_le_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&hasher.finalize());
        ChaCha8Rng::from_seed(seed)
    }
}

impl Backend for MockBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            kind: BackendKind::ScriptedMock,
            model_name: "scripted-mock".into(),
            endpoint: None,
            temperature: None,
            seed: Some(self.seed),
        }
    }

    fn generate(&self, request: &SampleRequest<'_>) -> Result<String, GatewayError> {
        let probe = request.probe;
        let responses = self
            .lookup(request.document_id, probe.polarity, probe.is_paraphrase)
            .ok_or_else(|| GatewayError::ScriptMiss {
                document_id: request.document_id.to_string(),
                polarity: probe.polarity,
                is_paraphrase: probe.is_paraphrase,
            })?;
        let u: f64 = self
            .stream(request.document_id, &probe.id, request.sample_index)
            .random();
        let mut cumulative = 0.0;
        for r in responses {
            cumulative += r.p;
            if u < cumulative {
                return Ok(r.text.clone());
            }
        }
        // rounding left u above the last cumulative bound
        Ok(responses
            .iter()
            .rev()
            .find(|r| r.p > 0.0)
            .unwrap_or(&responses[responses.len() - 1])
            .text
            .clone())
    }
}
