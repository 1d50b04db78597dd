//! Sampling interface over LLM backends.
//!
//! [`Backend`] produces one response per call; [`sample`] and [`interrogate`]
//! run the K-samples-per-probe protocol on top of it. Backends:
//!
//! - [`remote::RemoteBackend`]: JSON-over-HTTP chat or completion endpoint with
//!   retries and a request-rate ceiling.
//! - [`mock::MockBackend`]: seeded categorical draws from a script, keyed by
//!   (document, polarity, paraphrase flag).
//! - [`replay::ReplayBackend`]: answers from a recorded transcript.

pub mod mock;
pub mod remote;
pub mod replay;
pub mod transcript;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::Polarity;
use crate::probegen::{Probe, ProbeSet};
use crate::resolver::RawResponse;

pub use mock::{MockBackend, MockScript};
pub use remote::{RemoteBackend, RemoteConfig, RemoteKind};
pub use replay::ReplayBackend;
pub use transcript::{TranscriptRecord, TranscriptWriter};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("mock script has no entry for document `{document_id}`, {polarity} {}", if *.is_paraphrase { "paraphrase" } else { "original" })]
    ScriptMiss {
        document_id: String,
        polarity: Polarity,
        is_paraphrase: bool,
    },
    #[error("transcript has no response for document `{document_id}`, probe `{probe_id}`, sample {sample_index}")]
    ReplayMiss {
        document_id: String,
        probe_id: String,
        sample_index: usize,
    },
    #[error("invalid mock script: {0}")]
    InvalidScript(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("transcript I/O: {0}")]
    Transcript(String),
    #[error("probe `{probe_id}`: {source}")]
    Probe {
        probe_id: String,
        #[source]
        source: Box<GatewayError>,
    },
    #[error("k must be at least 1")]
    ZeroSamples,
}

impl GatewayError {
    /// The underlying error with any probe annotation removed.
    pub fn root(&self) -> &GatewayError {
        match self {
            GatewayError::Probe { source, .. } => source.root(),
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteChat,
    RemoteCompletion,
    ScriptedMock,
    Replay,
}

/// Non-secret description of a backend, suitable for reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub kind: BackendKind,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Everything a backend may key on for one sample.
#[derive(Debug, Clone, Copy)]
pub struct SampleRequest<'a> {
    pub claim_id: &'a str,
    pub document_id: &'a str,
    pub probe: &'a Probe,
    pub sample_index: usize,
}

pub trait Backend: Send + Sync {
    fn info(&self) -> BackendInfo;

    /// Produces one response text.
    fn generate(&self, request: &SampleRequest<'_>) -> Result<String, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn info(&self) -> BackendInfo {
        (**self).info()
    }

    fn generate(&self, request: &SampleRequest<'_>) -> Result<String, GatewayError> {
        (**self).generate(request)
    }
}

/// Draws `k` responses for one probe, in sample-index order.
pub fn sample(
    backend: &dyn Backend,
    claim_id: &str,
    document_id: &str,
    probe: &Probe,
    k: usize,
) -> Result<Vec<RawResponse>, GatewayError> {
    if k == 0 {
        return Err(GatewayError::ZeroSamples);
    }
    (0..k)
        .map(|sample_index| {
            let request = SampleRequest {
                claim_id,
                document_id,
                probe,
                sample_index,
            };
            backend.generate(&request).map(|text| RawResponse {
                text,
                probe_id: probe.id.clone(),
                probe_polarity: probe.polarity,
                sample_index,
            })
        })
        .collect()
}

/// All samples for one probe.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResponses {
    pub probe_id: String,
    pub polarity: Polarity,
    pub is_paraphrase: bool,
    pub prompt: String,
    pub responses: Vec<RawResponse>,
}

/// Samples every probe `k` times. Probes run concurrently; the result is in
/// probe order (agree group first) and the first failing probe in that order
/// is the one reported.
pub fn interrogate(
    backend: &dyn Backend,
    probe_set: &ProbeSet,
    k: usize,
) -> Result<Vec<ProbeResponses>, GatewayError> {
    let probes: Vec<&Probe> = probe_set.iter().collect();
    let results: Vec<Result<ProbeResponses, GatewayError>> = probes
        .par_iter()
        .map(|probe| {
            sample(backend, &probe_set.claim_id, &probe_set.document_id, probe, k)
                .map(|responses| ProbeResponses {
                    probe_id: probe.id.clone(),
                    polarity: probe.polarity,
                    is_paraphrase: probe.is_paraphrase,
                    prompt: probe.prompt.clone(),
                    responses,
                })
                .map_err(|e| GatewayError::Probe {
                    probe_id: probe.id.clone(),
                    source: Box::new(e),
                })
        })
        .collect();
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Claim, Document};
    use crate::probegen::{build_probe_set, default_templates, InteractionMode, RenderOptions};
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Echo;

    impl Backend for Echo {
        fn info(&self) -> BackendInfo {
            BackendInfo {
                kind: BackendKind::ScriptedMock,
                model_name: "echo".into(),
                endpoint: None,
                temperature: None,
                seed: None,
            }
        }

        fn generate(&self, request: &SampleRequest<'_>) -> Result<String, GatewayError> {
            Ok(format!("{}#{}", request.probe.id, request.sample_index))
        }
    }

    struct FailOn(&'static str, AtomicUsize);

    impl Backend for FailOn {
        fn info(&self) -> BackendInfo {
            Echo.info()
        }

        fn generate(&self, request: &SampleRequest<'_>) -> Result<String, GatewayError> {
            self.1.fetch_add(1, Ordering::SeqCst);
            if request.probe.id.starts_with(self.0) {
                Err(GatewayError::BackendUnavailable("connection refused".into()))
            } else {
                Ok("Yes.".into())
            }
        }
    }

    fn probe_set() -> ProbeSet {
        build_probe_set(
            &Claim::new("c", "Human activities may cause climate change").unwrap(),
            &Document::new("d", "An abstract.").unwrap(),
            &default_templates(InteractionMode::QuestionAnswer),
            InteractionMode::QuestionAnswer,
            &RenderOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn interrogation_is_ordered_and_complete() {
        let set = probe_set();
        let out = interrogate(&Echo, &set, 10).unwrap();
        assert_eq!(out.iter().map(|p| p.responses.len()).sum::<usize>(), 40);
        let ids: Vec<_> = out.iter().map(|p| p.probe_id.as_str()).collect();
        assert_eq!(ids, ["ag-original", "ag-paraphrase", "cf-original", "cf-paraphrase"]);
        for p in &out {
            for (i, r) in p.responses.iter().enumerate() {
                assert_eq!(r.sample_index, i);
                assert_eq!(r.text, format!("{}#{}", p.probe_id, i));
            }
        }
    }

    #[test]
    fn failures_name_the_first_failing_probe() {
        let set = probe_set();
        let err = interrogate(&FailOn("cf", AtomicUsize::new(0)), &set, 3).unwrap_err();
        match err {
            GatewayError::Probe { probe_id, source } => {
                assert_eq!(probe_id, "cf-original");
                assert!(matches!(*source, GatewayError::BackendUnavailable(_)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_samples_is_an_error() {
        let set = probe_set();
        assert_eq!(
            sample(&Echo, "c", "d", set.original(), 0),
            Err(GatewayError::ZeroSamples)
        );
    }
}
