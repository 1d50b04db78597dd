//! Labelled dataset and claims files (JSONL).

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::domain::{Claim, Document, Verdict};

/// One labelled (claim, abstract) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub doc_id: String,
    pub claim_id: String,
    pub text: String,
    pub label: Verdict,
    #[serde(default)]
    pub source: String,
}

impl DatasetRecord {
    pub fn document(&self) -> Document {
        Document {
            id: self.doc_id.clone(),
            text: self.text.clone(),
            source: self.source.clone(),
            label: Some(self.label),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClaimRecord {
    claim_id: String,
    text: String,
}

pub type ClaimIndex = BTreeMap<String, Claim>;

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let file = File::open(path).map_err(HarnessError::io(path))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(HarnessError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| HarnessError::parse(path, format!("line {}: {e}", lineno + 1)))?;
        out.push(value);
    }
    Ok(out)
}

/// Checks non-emptiness, unique document ids and non-empty texts.
pub fn validate_dataset(records: &[DatasetRecord]) -> Result<(), HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.doc_id.as_str()) {
            return Err(HarnessError::DuplicateDocId(r.doc_id.clone()));
        }
        r.document()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRecord>, HarnessError> {
    let records: Vec<DatasetRecord> = read_jsonl(path)?;
    validate_dataset(&records)?;
    Ok(records)
}

pub fn load_claims(path: &Path) -> Result<ClaimIndex, HarnessError> {
    let records: Vec<ClaimRecord> = read_jsonl(path)?;
    let mut index = ClaimIndex::new();
    for r in records {
        let claim = Claim::new(r.claim_id.clone(), r.text).map_err(|e| HarnessError::parse(path, e))?;
        if index.insert(r.claim_id.clone(), claim).is_some() {
            return Err(HarnessError::parse(path, format!("duplicate claim id `{}`", r.claim_id)));
        }
    }
    Ok(index)
}

/// File stem used as the dataset identifier in reports.
pub fn dataset_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}
