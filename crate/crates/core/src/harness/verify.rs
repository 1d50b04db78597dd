//! Retrieval-backed verification of a single claim.

use serde::{Deserialize, Serialize};

use super::pipeline::{Ablation, DocumentResult, Pipeline, RunMetadata};
use super::HarnessError;
use crate::domain::{Claim, Verdict};
use crate::retrieval::{Embedder, VectorStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedResult {
    pub rank: usize,
    pub similarity: f64,
    #[serde(flatten)]
    pub result: DocumentResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representative {
    pub doc_id: String,
    pub confidence: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimReport {
    pub claim: Claim,
    pub top_n: usize,
    pub documents: Vec<RetrievedResult>,
    pub representative_support: Option<Representative>,
    pub representative_refute: Option<Representative>,
    pub run: RunMetadata,
}

/// Highest meta confidence among documents whose meta verdict is `verdict`;
/// the better-ranked document wins ties.
pub fn representative(documents: &[RetrievedResult], verdict: Verdict) -> Option<Representative> {
    documents
        .iter()
        .filter(|d| d.result.meta.verdict == verdict)
        .fold(None::<&RetrievedResult>, |best, d| match best {
            Some(b) if d.result.meta.confidence <= b.result.meta.confidence => Some(b),
            _ => Some(d),
        })
        .map(|d| Representative {
            doc_id: d.result.doc_id.clone(),
            confidence: d.result.meta.confidence,
            similarity: d.similarity,
        })
}

pub fn verify_claim(
    pipeline: &Pipeline,
    claim: &Claim,
    store: &VectorStore,
    embedder: &dyn Embedder,
    top_n: usize,
) -> Result<ClaimReport, HarnessError> {
    claim.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    let hits = store.search(embedder, claim, top_n)?;
    let pairs: Vec<_> = hits.iter().map(|h| (claim.clone(), h.document.clone())).collect();
    let tallies = pipeline.analyze_many(&pairs, Ablation::All)?;
    let documents: Vec<RetrievedResult> = tallies
        .iter()
        .zip(&hits)
        .enumerate()
        .map(|(i, (tally, hit))| RetrievedResult {
            rank: i + 1,
            similarity: hit.similarity,
            result: pipeline.fuse(tally, Ablation::All),
        })
        .collect();
    Ok(ClaimReport {
        claim: claim.clone(),
        top_n,
        representative_support: representative(&documents, Verdict::Support),
        representative_refute: representative(&documents, Verdict::Refute),
        documents,
        run: pipeline.metadata(),
    })
}
