//! Append-only JSONL log of every (prompt, response) pair.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{GatewayError, ProbeResponses};
use crate::domain::Polarity;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub run_id: String,
    pub claim_id: String,
    pub document_id: String,
    pub probe_id: String,
    pub polarity: Polarity,
    pub sample_index: usize,
    pub prompt: String,
    pub response_text: String,
    pub timestamp: String,
}

impl TranscriptRecord {
    /// One record per sample, in probe then sample order.
    pub fn from_interrogation(
        run_id: &str,
        claim_id: &str,
        document_id: &str,
        probes: &[ProbeResponses],
        timestamp: &str,
    ) -> Vec<TranscriptRecord> {
        probes
            .iter()
            .flat_map(|p| {
                p.responses.iter().map(move |r| TranscriptRecord {
                    run_id: run_id.to_string(),
                    claim_id: claim_id.to_string(),
                    document_id: document_id.to_string(),
                    probe_id: p.probe_id.clone(),
                    polarity: p.polarity,
                    sample_index: r.sample_index,
                    prompt: p.prompt.clone(),
                    response_text: r.text.clone(),
                    timestamp: timestamp.to_string(),
                })
            })
            .collect()
    }
}

/// Appends records to a JSONL file; safe to share between threads.
#[derive(Debug)]
pub struct TranscriptWriter {
    path: PathBuf,
    out: Mutex<BufWriter<File>>,
}

impl TranscriptWriter {
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| GatewayError::Transcript(e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
        Ok(TranscriptWriter {
            path: path.to_path_buf(),
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, records: &[TranscriptRecord]) -> Result<(), GatewayError> {
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        for record in records {
            let line = serde_json::to_string(record).map_err(|e| GatewayError::Transcript(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| GatewayError::Transcript(e.to_string()))?;
        }
        out.flush().map_err(|e| GatewayError::Transcript(e.to_string()))
    }
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>, GatewayError> {
    let file = File::open(path).map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Transcript(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| {
            GatewayError::Transcript(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}
