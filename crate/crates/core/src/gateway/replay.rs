//! Backend that answers from a recorded transcript instead of a model.

use std::collections::HashMap;
use std::path::Path;

use super::transcript::{read_transcript, TranscriptRecord};
use super::{Backend, BackendInfo, BackendKind, GatewayError, SampleRequest};

type ReplayKey = (String, String, String, usize);

#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: HashMap<ReplayKey, String>,
}

impl ReplayBackend {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        let responses = records
            .into_iter()
            .map(|r| ((r.claim_id, r.document_id, r.probe_id, r.sample_index), r.response_text))
            .collect();
        ReplayBackend { responses }
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        Ok(ReplayBackend::from_records(read_transcript(path)?))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo {
            kind: BackendKind::Replay,
            model_name: "transcript-replay".into(),
            endpoint: None,
            temperature: None,
            seed: None,
        }
    }

    fn generate(&self, request: &SampleRequest<'_>) -> Result<String, GatewayError> {
        let key = (
            request.claim_id.to_string(),
            request.document_id.to_string(),
            request.probe.id.clone(),
            request.sample_index,
        );
        self.responses.get(&key).cloned().ok_or_else(|| GatewayError::ReplayMiss {
            document_id: request.document_id.to_string(),
            probe_id: request.probe.id.clone(),
            sample_index: request.sample_index,
        })
    }
}
