//! Labelled evaluation, alpha grid search over cached tallies.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{ClaimIndex, DatasetRecord};
use super::metrics::ClassMetrics;
use super::pipeline::{Ablation, DocumentResult, DocumentTally, Pipeline, RunMetadata};
use super::HarnessError;
use crate::domain::{Claim, Document, Verdict};
use crate::fusion::{FusionParams, Strategy, TIE_EPSILON};

/// A verdict source scored by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RAG")]
    Rag,
    #[serde(rename = "WP")]
    Wp,
    #[serde(rename = "WIG")]
    Wig,
    #[serde(rename = "WBU")]
    Wbu,
    #[serde(rename = "META")]
    Meta,
}

impl Method {
    pub const FUSED: [Method; 4] = [Method::Wp, Method::Wig, Method::Wbu, Method::Meta];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rag => "RAG",
            Method::Wp => "WP",
            Method::Wig => "WIG",
            Method::Wbu => "WBU",
            Method::Meta => "META",
        }
    }

    pub fn verdict(self, r: &DocumentResult) -> Verdict {
        match self {
            Method::Rag => r.rag_baseline,
            Method::Wp => r.wp.verdict,
            Method::Wig => r.wig.verdict,
            Method::Wbu => r.wbu.verdict,
            Method::Meta => r.meta.verdict,
        }
    }

    /// Normalized confidence; the baseline has none.
    pub fn confidence(self, r: &DocumentResult) -> Option<f64> {
        match self {
            Method::Rag => None,
            Method::Wp => Some(r.wp.confidence_norm),
            Method::Wig => Some(r.wig.confidence_norm),
            Method::Wbu => Some(r.wbu.confidence_norm),
            Method::Meta => Some(r.meta.confidence),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub rag: ClassMetrics,
    pub wp: ClassMetrics,
    pub wig: ClassMetrics,
    pub wbu: ClassMetrics,
    pub meta: ClassMetrics,
}

impl MethodMetrics {
    pub fn get(&self, method: Method) -> &ClassMetrics {
        match method {
            Method::Rag => &self.rag,
            Method::Wp => &self.wp,
            Method::Wig => &self.wig,
            Method::Wbu => &self.wbu,
            Method::Meta => &self.meta,
        }
    }
}

fn method_metrics(results: &[DocumentResult], method: Method) -> ClassMetrics {
    ClassMetrics::from_pairs(
        results
            .iter()
            .filter_map(|r| r.label.map(|label| (label, method.verdict(r)))),
    )
}

pub fn score_results(results: &[DocumentResult]) -> MethodMetrics {
    MethodMetrics {
        rag: method_metrics(results, Method::Rag),
        wp: method_metrics(results, Method::Wp),
        wig: method_metrics(results, Method::Wig),
        wbu: method_metrics(results, Method::Wbu),
        meta: method_metrics(results, Method::Meta),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaUsed {
    pub wp: f64,
    pub wig: f64,
    pub wbu: f64,
}

impl AlphaUsed {
    pub fn of(params: &FusionParams) -> Self {
        AlphaUsed {
            wp: params.alpha_for(Strategy::WeightedProportions),
            wig: params.alpha_for(Strategy::WeightedInformationGain),
            wbu: params.alpha_for(Strategy::WeightedBeliefUpdate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset_id: String,
    pub ablation: Ablation,
    pub alpha: AlphaUsed,
    /// Number of documents per true class, (S, R, N).
    pub support: [usize; 3],
    pub metrics: MethodMetrics,
    pub documents: Vec<DocumentResult>,
    pub run: RunMetadata,
}

/// Pairs each record with its claim, in document-id order.
pub fn pair_records(records: &[DatasetRecord], claims: &ClaimIndex) -> Result<Vec<(Claim, Document)>, HarnessError> {
    super::dataset::validate_dataset(records)?;
    let mut pairs = records
        .iter()
        .map(|r| {
            let claim = claims.get(&r.claim_id).ok_or_else(|| HarnessError::UnknownClaimId {
                doc_id: r.doc_id.clone(),
                claim_id: r.claim_id.clone(),
            })?;
            Ok((claim.clone(), r.document()))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    pairs.sort_by(|a, b| a.1.id.cmp(&b.1.id));
    Ok(pairs)
}

/// Interrogates and tallies every labelled record once.
pub fn collect_tallies(
    pipeline: &Pipeline,
    records: &[DatasetRecord],
    claims: &ClaimIndex,
    ablation: Ablation,
) -> Result<Vec<DocumentTally>, HarnessError> {
    pipeline.analyze_many(&pair_records(records, claims)?, ablation)
}

pub fn fuse_tallies(tallies: &[DocumentTally], params: &FusionParams) -> Vec<DocumentResult> {
    tallies.iter().map(|t| DocumentResult::from_tally(t, params)).collect()
}

/// Builds a report from cached tallies. `params` are the configured
/// parameters; the ablation pins alphas as needed.
pub fn evaluate_tallies(
    dataset_id: &str,
    tallies: &[DocumentTally],
    params: &FusionParams,
    ablation: Ablation,
    run: RunMetadata,
) -> EvaluationReport {
    let effective = ablation.effective_params(params);
    let documents = fuse_tallies(tallies, &effective);
    let mut support = [0usize; 3];
    for label in documents.iter().filter_map(|d| d.label) {
        support[label.index()] += 1;
    }
    EvaluationReport {
        dataset_id: dataset_id.to_string(),
        ablation,
        alpha: AlphaUsed::of(&effective),
        support,
        metrics: score_results(&documents),
        documents,
        run,
    }
}

pub fn evaluate(
    pipeline: &Pipeline,
    dataset_id: &str,
    records: &[DatasetRecord],
    claims: &ClaimIndex,
    ablation: Ablation,
) -> Result<EvaluationReport, HarnessError> {
    let tallies = collect_tallies(pipeline, records, claims, ablation)?;
    Ok(evaluate_tallies(dataset_id, &tallies, pipeline.params(), ablation, pipeline.metadata()))
}

fn round_alpha(a: f64) -> f64 {
    (a * 1e9).round() / 1e9
}

/// Parses `start:end:step` (inclusive) or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, HarnessError> {
    let bad = |msg: String| HarnessError::InvalidGrid(msg);
    let number = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("`{}` is not a number", s.trim())));
    let mut grid = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, end, step] = parts.as_slice() else {
            return Err(bad("ranges take the form start:end:step".into()));
        };
        let (start, end, step) = (number(start)?, number(end)?, number(step)?);
        if step <= 0.0 || step.is_nan() || end < start {
            return Err(bad("range needs step > 0 and end >= start".into()));
        }
        let count = ((end - start) / step + 1e-9).floor() as usize;
        (0..=count).map(|i| round_alpha(start + i as f64 * step)).collect::<Vec<_>>()
    } else {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| number(s).map(round_alpha))
            .collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() {
        return Err(bad("grid is empty".into()));
    }
    if let Some(a) = grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(bad(format!("alpha {a} is outside [0, 1]")));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub alpha: f64,
    pub method: Method,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub mean_confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOutRow {
    pub method: Method,
    pub alpha: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SearchScope {
    FullDataset,
    DevSplit {
        fraction: f64,
        seed: u64,
        dev_documents: usize,
        heldout_documents: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub dataset_id: String,
    pub grid: Vec<f64>,
    pub scope: SearchScope,
    pub rows: Vec<GridRow>,
    pub best: Vec<GridRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout: Option<Vec<HeldOutRow>>,
    pub run: RunMetadata,
}

impl GridSearchReport {
    pub fn best_for(&self, method: Method) -> Option<&GridRow> {
        self.best.iter().find(|r| r.method == method)
    }
}

/// Deterministic membership of a document in the dev portion.
pub fn in_dev_split(doc_id: &str, fraction: f64, seed: u64) -> bool {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(doc_id.as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(head) as f64 / 18_446_744_073_709_551_616.0) < fraction
}

fn grid_rows(tallies: &[DocumentTally], grid: &[f64]) -> Vec<GridRow> {
    let mut rows = Vec::with_capacity(grid.len() * Method::FUSED.len());
    for &alpha in grid {
        let results = fuse_tallies(tallies, &FusionParams::with_alpha(alpha));
        let metrics = score_results(&results);
        for method in Method::FUSED {
            let m = metrics.get(method);
            let mean_confidence = results.iter().filter_map(|r| method.confidence(r)).sum::<f64>() / results.len() as f64;
            rows.push(GridRow {
                alpha,
                method,
                accuracy: m.accuracy,
                macro_f1: m.macro_f1,
                mean_confidence,
            });
        }
    }
    rows
}

/// Accuracy first, then macro-F1, then mean confidence, then closeness to
/// 0.5, then the larger alpha.
fn better(candidate: &GridRow, incumbent: &GridRow) -> bool {
    let keys = |r: &GridRow| [r.accuracy, r.macro_f1, r.mean_confidence, -(r.alpha - 0.5).abs(), r.alpha];
    for (c, i) in keys(candidate).into_iter().zip(keys(incumbent)) {
        if c > i + TIE_EPSILON {
            return true;
        }
        if c < i - TIE_EPSILON {
            return false;
        }
    }
    false
}

fn pick_best(rows: &[GridRow]) -> Vec<GridRow> {
    Method::FUSED
        .iter()
        .filter_map(|&method| {
            rows.iter()
                .filter(|r| r.method == method)
                .fold(None::<&GridRow>, |best, r| match best {
                    Some(b) if !better(r, b) => Some(b),
                    _ => Some(r),
                })
                .copied()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevSplit {
    pub fraction: f64,
    pub seed: u64,
}

/// Re-fuses cached tallies at every grid point. With a dev split, the best
/// alpha is chosen on the dev documents and scored on the rest.
pub fn grid_search(
    dataset_id: &str,
    tallies: &[DocumentTally],
    grid: &[f64],
    dev_split: Option<DevSplit>,
    run: RunMetadata,
) -> Result<GridSearchReport, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::InvalidGrid("grid is empty".into()));
    }
    if tallies.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let (search_set, heldout_set, scope): (Vec<DocumentTally>, Vec<DocumentTally>, SearchScope) = match dev_split {
        None => (tallies.to_vec(), Vec::new(), SearchScope::FullDataset),
        Some(DevSplit { fraction, seed }) => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(HarnessError::InvalidGrid("dev fraction must lie strictly between 0 and 1".into()));
            }
            let (dev, held): (Vec<_>, Vec<_>) =
                tallies.iter().cloned().partition(|t| in_dev_split(&t.doc_id, fraction, seed));
            if dev.is_empty() || held.is_empty() {
                return Err(HarnessError::InvalidGrid("dev split leaves an empty partition".into()));
            }
            let scope = SearchScope::DevSplit {
                fraction,
                seed,
                dev_documents: dev.len(),
                heldout_documents: held.len(),
            };
            (dev, held, scope)
        }
    };
    let rows = grid_rows(&search_set, grid);
    let best = pick_best(&rows);
    let heldout = (!heldout_set.is_empty()).then(|| {
        best.iter()
            .map(|b| {
                let metrics = score_results(&fuse_tallies(&heldout_set, &FusionParams::with_alpha(b.alpha)));
                let m = metrics.get(b.method);
                HeldOutRow {
                    method: b.method,
                    alpha: b.alpha,
                    accuracy: m.accuracy,
                    macro_f1: m.macro_f1,
                }
            })
            .collect()
    });
    Ok(GridSearchReport {
        dataset_id: dataset_id.to_string(),
        grid: grid.to_vec(),
        scope,
        rows,
        best,
        heldout,
        run,
    })
}
