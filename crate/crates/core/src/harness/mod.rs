//! End-to-end orchestration: datasets, the per-document pipeline, metrics,
//! alpha grid search, correlation reports and configuration.

pub mod config;
pub mod correlation;
pub mod dataset;
pub mod evaluate;
pub mod metrics;
pub mod pipeline;
pub mod verify;

use crate::fusion::FusionError;
use crate::gateway::GatewayError;
use crate::probegen::ProbeError;
use crate::resolver::ResolverError;
use crate::retrieval::RetrievalError;

pub use config::Config;
pub use correlation::{correlation_report, CorrelationMatrix, ScoreSeries};
pub use dataset::{load_claims, load_dataset, ClaimIndex, DatasetRecord};
pub use evaluate::{EvaluationReport, GridSearchReport, MethodMetrics};
pub use metrics::{ClassMetrics, ConfusionMatrix};
pub use pipeline::{Ablation, DocumentResult, DocumentTally, Pipeline, RunContext};
pub use verify::ClaimReport;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("document `{doc_id}` refers to unknown claim `{claim_id}`")]
    UnknownClaimId { doc_id: String, claim_id: String },
    #[error("duplicate document id `{0}`")]
    DuplicateDocId(String),
    #[error("document `{doc_id}`: {source}")]
    Document {
        doc_id: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Resolver(#[from] ResolverError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid alpha grid: {0}")]
    InvalidGrid(String),
    #[error("correlation: {0}")]
    Correlation(String),
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Strips document and probe annotations down to the originating error.
    pub fn root(&self) -> &HarnessError {
        match self {
            HarnessError::Document { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
        move |source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, reason: impl ToString) -> HarnessError {
        HarnessError::Parse {
            path: path.display().to_string(),
            reason: reason.to_string(),
        }
    }
}
