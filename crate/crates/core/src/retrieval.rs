//! Embedding, an exact cosine-similarity vector store, and corpus loading.
//!
//! The store file is JSONL: a header record
//! `{"format", "version", "dim", "embedder_id", "count"}` followed by one
//! `{"id", "vector", "document"}` record per entry, sorted by id. Saves go
//! through a temporary file and a rename.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::domain::{Claim, Document, Verdict};
use crate::gateway::remote::{JsonClient, RetryPolicy};
use crate::gateway::GatewayError;

pub const STORE_FORMAT: &str = "claimprobe-vector-store";
pub const STORE_VERSION: u32 = 1;
pub const HASHING_DIM: usize = 256;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("document id `{0}` is already in the store")]
    DuplicateId(String),
    #[error("vector dimension {found} does not match the store dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("store was built with embedder `{store}` but `{given}` was supplied")]
    EmbedderMismatch { store: String, given: String },
    #[error("the vector store is empty")]
    EmptyStore,
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("top_n must be at least 1")]
    ZeroTopN,
    #[error("nothing to ingest")]
    NoDocuments,
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("{path}: {reason}")]
    Format { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl ToString) -> RetrievalError {
    RetrievalError::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; zero vectors have similarity 0 with everything.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (dot / denom).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    /// Identifies the model that produced a vector; stored with the index.
    fn id(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

/// Feature-hashing bag of words: lowercase alphanumeric tokens hashed into a
/// fixed number of buckets, then L2-normalized. Offline and deterministic.
#[derive(Debug, Clone, Copy)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dim: HASHING_DIM }
    }
}

impl HashingEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        HashingEmbedder { dim: dim.max(1) }
    }
}

// FNV-1a, fixed here so vectors stay stable across toolchains.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl Embedder for HashingEmbedder {
    fn id(&self) -> String {
        format!("hashing-{}-v1", self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let lowered = trimmed.to_lowercase();
        let mut tokens: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        if tokens.is_empty() {
            tokens.push(&lowered);
        }
        let mut values = vec![0.0; self.dim];
        for token in tokens {
            values[(fnv1a(token.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.iter_mut().for_each(|v| *v /= norm);
        EmbeddingVector::new(values)
    }
}

/// Embedding endpoint with the OpenAI-compatible shape
/// `{model, input}` -> `{data: [{embedding: [...]}]}`.
#[derive(Debug)]
pub struct RemoteEmbedder {
    endpoint: String,
    model_name: String,
    client: JsonClient,
}

impl RemoteEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model_name: impl Into<String>,
        auth_env: Option<String>,
        retry: RetryPolicy,
    ) -> Result<Self, RetrievalError> {
        Ok(RemoteEmbedder {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            client: JsonClient::new(auth_env, retry, None, Duration::from_secs(60))?,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}", self.model_name)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let body = self
            .client
            .post(&self.endpoint, &json!({"model": self.model_name, "input": text}))?;
        let values = body
            .get("data")
            .and_then(|d| d.get(0))
            .and_then(|d| d.get("embedding"))
            .and_then(|e| e.as_array())
            .map(|a| a.iter().filter_map(|v| v.as_f64()).collect::<Vec<_>>())
            .filter(|v| !v.is_empty())
            .ok_or_else(|| GatewayError::BackendUnavailable("response has no embedding".into()))?;
        EmbeddingVector::new(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub vector: EmbeddingVector,
    pub document: Document,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dim: Option<usize>,
    embedder_id: String,
    entries: BTreeMap<String, StoreEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub document: Document,
    pub similarity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreHeader {
    format: String,
    version: u32,
    dim: Option<usize>,
    embedder_id: String,
    count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreRecord {
    id: String,
    vector: EmbeddingVector,
    document: Document,
}

impl VectorStore {
    pub fn new(embedder_id: impl Into<String>) -> Self {
        VectorStore {
            dim: None,
            embedder_id: embedder_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&StoreEntry> {
        self.entries.get(id)
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.entries.values().map(|e| &e.document)
    }

    fn check_embedder(&self, embedder: &dyn Embedder) -> Result<(), RetrievalError> {
        let given = embedder.id();
        if given != self.embedder_id {
            return Err(RetrievalError::EmbedderMismatch {
                store: self.embedder_id.clone(),
                given,
            });
        }
        Ok(())
    }

    /// Inserts pre-computed vectors. Either every document is inserted or none.
    pub fn insert_vectors(&mut self, items: Vec<(Document, EmbeddingVector)>) -> Result<usize, RetrievalError> {
        if items.is_empty() {
            return Err(RetrievalError::NoDocuments);
        }
        let mut seen = std::collections::HashSet::new();
        let mut dim = self.dim;
        for (doc, vector) in &items {
            if self.entries.contains_key(&doc.id) || !seen.insert(doc.id.as_str()) {
                return Err(RetrievalError::DuplicateId(doc.id.clone()));
            }
            match dim {
                Some(d) if d != vector.dim() => {
                    return Err(RetrievalError::DimensionMismatch {
                        expected: d,
                        found: vector.dim(),
                    })
                }
                _ => dim = Some(vector.dim()),
            }
        }
        self.dim = dim;
        let count = items.len();
        for (document, vector) in items {
            self.entries.insert(document.id.clone(), StoreEntry { vector, document });
        }
        Ok(count)
    }

    /// Embeds and inserts documents; nothing is inserted if any step fails.
    pub fn ingest(&mut self, embedder: &dyn Embedder, documents: Vec<Document>) -> Result<usize, RetrievalError> {
        self.check_embedder(embedder)?;
        if documents.is_empty() {
            return Err(RetrievalError::NoDocuments);
        }
        if let Some(dup) = documents.iter().find(|d| self.entries.contains_key(&d.id)) {
            return Err(RetrievalError::DuplicateId(dup.id.clone()));
        }
        let items = documents
            .into_iter()
            .map(|doc| embedder.embed(&doc.text).map(|v| (doc, v)))
            .collect::<Result<Vec<_>, _>>()?;
        self.insert_vectors(items)
    }

    /// Top `top_n` entries by descending cosine similarity; equal
    /// similarities are ordered by ascending document id.
    pub fn search_vector(&self, query: &EmbeddingVector, top_n: usize) -> Result<Vec<SearchHit>, RetrievalError> {
        if top_n == 0 {
            return Err(RetrievalError::ZeroTopN);
        }
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyStore);
        }
        if let Some(d) = self.dim.filter(|&d| d != query.dim()) {
            return Err(RetrievalError::DimensionMismatch {
                expected: d,
                found: query.dim(),
            });
        }
        // BTreeMap iteration is already id-ordered, so a stable sort keeps ties by id
        let mut scored: Vec<(&StoreEntry, f64)> = self
            .entries
            .values()
            .map(|e| (e, cosine_similarity(query, &e.vector)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scored
            .into_iter()
            .take(top_n)
            .map(|(e, similarity)| SearchHit {
                document: e.document.clone(),
                similarity,
            })
            .collect())
    }

    pub fn search(&self, embedder: &dyn Embedder, claim: &Claim, top_n: usize) -> Result<Vec<SearchHit>, RetrievalError> {
        self.check_embedder(embedder)?;
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyStore);
        }
        let query = embedder.embed(&claim.text)?;
        self.search_vector(&query, top_n)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."));
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
        {
            let mut out = BufWriter::new(tmp.as_file());
            let header = StoreHeader {
                format: STORE_FORMAT.into(),
                version: STORE_VERSION,
                dim: self.dim,
                embedder_id: self.embedder_id.clone(),
                count: self.entries.len(),
            };
            write_json_line(&mut out, &header, path)?;
            for (id, entry) in &self.entries {
                let record = StoreRecord {
                    id: id.clone(),
                    vector: entry.vector.clone(),
                    document: entry.document.clone(),
                };
                write_json_line(&mut out, &record, path)?;
            }
            out.flush().map_err(io_err(path))?;
        }
        tmp.as_file().sync_all().map_err(io_err(path))?;
        tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let file = File::open(path).map_err(io_err(path))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| format_err(path, "missing header"))?
            .map_err(io_err(path))?;
        let header: StoreHeader = serde_json::from_str(&header_line).map_err(|e| format_err(path, e))?;
        if header.format != STORE_FORMAT || header.version != STORE_VERSION {
            return Err(format_err(
                path,
                format!("unsupported store format {} v{}", header.format, header.version),
            ));
        }
        let mut store = VectorStore::new(header.embedder_id);
        store.dim = header.dim;
        let mut items = Vec::new();
        for line in lines {
            let line = line.map_err(io_err(path))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: StoreRecord = serde_json::from_str(&line).map_err(|e| format_err(path, e))?;
            if record.id != record.document.id {
                return Err(format_err(path, format!("record id `{}` differs from its document id", record.id)));
            }
            items.push((record.document, EmbeddingVector::new(record.vector.values)?));
        }
        if items.len() != header.count {
            return Err(format_err(
                path,
                format!("header says {} entries, found {}", header.count, items.len()),
            ));
        }
        if !items.is_empty() {
            store.insert_vectors(items)?;
        }
        Ok(store)
    }
}

fn write_json_line<W: Write, T: Serialize>(out: &mut W, value: &T, path: &Path) -> Result<(), RetrievalError> {
    let line = serde_json::to_string(value).map_err(|e| format_err(path, e))?;
    writeln!(out, "{line}").map_err(io_err(path))
}

#[derive(Debug, Deserialize)]
struct CorpusLine {
    #[serde(alias = "doc_id")]
    id: String,
    text: String,
    #[serde(default)]
    source: String,
    #[serde(default)]
    label: Option<Verdict>,
}

#[derive(Debug, Deserialize)]
struct Sidecar {
    #[serde(alias = "doc_id")]
    id: String,
    #[serde(default)]
    source: String,
    #[serde(default)]
    label: Option<Verdict>,
}

pub const SIDECAR_NAME: &str = "metadata.jsonl";

/// Reads a corpus from a JSONL file (document or dataset records) or from a
/// directory of `*.txt` files with an optional `metadata.jsonl` sidecar.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>, RetrievalError> {
    if path.is_dir() {
        return load_corpus_dir(path);
    }
    let file = File::open(path).map_err(io_err(path))?;
    let mut docs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusLine = serde_json::from_str(&line)
            .map_err(|e| format_err(path, format!("line {}: {e}", lineno + 1)))?;
        let doc = Document {
            id: rec.id,
            text: rec.text,
            source: rec.source,
            label: rec.label,
        };
        doc.validate().map_err(|e| format_err(path, e))?;
        docs.push(doc);
    }
    Ok(docs)
}

fn load_corpus_dir(dir: &Path) -> Result<Vec<Document>, RetrievalError> {
    let mut metadata = BTreeMap::new();
    let sidecar = dir.join(SIDECAR_NAME);
    if sidecar.exists() {
        let file = File::open(&sidecar).map_err(io_err(&sidecar))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(io_err(&sidecar))?;
            if line.trim().is_empty() {
                continue;
            }
            let m: Sidecar = serde_json::from_str(&line).map_err(|e| format_err(&sidecar, e))?;
            metadata.insert(m.id.clone(), m);
        }
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    let mut docs = Vec::new();
    for p in paths {
        let id = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
        let meta = metadata.remove(&id);
        let doc = Document {
            id,
            text: text.trim().to_string(),
            source: meta.as_ref().map(|m| m.source.clone()).unwrap_or_default(),
            label: meta.and_then(|m| m.label),
        };
        doc.validate().map_err(|e| format_err(&p, e))?;
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(id: &str, text: &str) -> Document {
        Document::new(id, text).unwrap()
    }

    #[test]
    fn hashing_embedder_is_deterministic_and_normalized() {
        let e = HashingEmbedder::default();
        let a = e.embed("Human activities may cause climate change").unwrap();
        let b = e.embed("Human activities may cause climate change").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), HASHING_DIM);
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert!((e.embed("!!!").unwrap().norm() - 1.0).abs() < 1e-9);
        assert!(matches!(e.embed("   "), Err(RetrievalError::EmptyText)));
    }

    #[test]
    fn ingest_rejects_duplicates_and_foreign_embedders() {
        let e = HashingEmbedder::default();
        let mut store = VectorStore::new(e.id());
        assert_eq!(store.ingest(&e, vec![doc("a", "one"), doc("b", "two")]).unwrap(), 2);
        assert!(matches!(
            store.ingest(&e, vec![doc("c", "three"), doc("a", "again")]),
            Err(RetrievalError::DuplicateId(id)) if id == "a"
        ));
        assert_eq!(store.len(), 2, "failed ingest must not insert anything");
        assert!(matches!(
            store.ingest(&HashingEmbedder::with_dim(64), vec![doc("z", "zzz")]),
            Err(RetrievalError::EmbedderMismatch { .. })
        ));
        assert!(matches!(
            store.insert_vectors(vec![(doc("q", "q"), EmbeddingVector::new(vec![1.0; 3]).unwrap())]),
            Err(RetrievalError::DimensionMismatch { expected: 256, found: 3 })
        ));
    }

    #[test]
    fn empty_store_and_zero_top_n() {
        let e = HashingEmbedder::default();
        let store = VectorStore::new(e.id());
        let claim = Claim::new("c", "anything").unwrap();
        assert!(matches!(store.search(&e, &claim, 3), Err(RetrievalError::EmptyStore)));
        let mut store = store;
        store.ingest(&e, vec![doc("a", "one")]).unwrap();
        assert!(matches!(store.search(&e, &claim, 0), Err(RetrievalError::ZeroTopN)));
    }

    #[test]
    fn exhaustive_search_and_identical_texts() {
        let e = HashingEmbedder::default();
        let mut store = VectorStore::new(e.id());
        store
            .ingest(
                &e,
                vec![
                    doc("b", "vaccines and autism"),
                    doc("a", "vaccines and autism"),
                    doc("c", "ocean heat content rises"),
                ],
            )
            .unwrap();
        let hits = store.search(&e, &Claim::new("q", "autism vaccines").unwrap(), 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].document.id, "a");
        assert_eq!(hits[1].document.id, "b");
        assert_eq!(hits[0].similarity, hits[1].similarity);
        assert!(hits[1].similarity >= hits[2].similarity);
    }

    #[test]
    fn save_load_round_trip() {
        let e = HashingEmbedder::default();
        let mut store = VectorStore::new(e.id());
        store
            .ingest(&e, vec![doc("a", "one fish").with_label(Verdict::Support), doc("b", "two fish")])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        store.save(&path).unwrap();
        let back = VectorStore::load(&path).unwrap();
        assert_eq!(back, store);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().contains(STORE_FORMAT));
        // a second save over the same path replaces it
        back.save(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    }

    #[test]
    fn corrupt_store_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        std::fs::write(&path, r#"{"format":"claimprobe-vector-store","version":1,"dim":2,"embedder_id":"x","count":2}"#).unwrap();
        assert!(matches!(VectorStore::load(&path), Err(RetrievalError::Format { .. })));
    }

    #[test]
    fn corpus_directory_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p1.txt"), "First abstract.\n").unwrap();
        std::fs::write(dir.path().join("p2.txt"), "Second abstract.").unwrap();
        std::fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        std::fs::write(
            dir.path().join(SIDECAR_NAME),
            "{\"id\":\"p2\",\"source\":\"journal\",\"label\":\"Refute\"}\n",
        )
        .unwrap();
        let docs = load_corpus(dir.path()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].text, "First abstract.");
        assert_eq!(docs[1].label, Some(Verdict::Refute));
        assert_eq!(docs[1].source, "journal");
    }

    #[test]
    fn corpus_jsonl_accepts_dataset_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"doc_id\":\"x\",\"claim_id\":\"c\",\"text\":\"t\",\"label\":\"Neutral\",\"source\":\"s\"}\n{\"id\":\"y\",\"text\":\"u\"}\n",
        )
        .unwrap();
        let docs = load_corpus(&path).unwrap();
        assert_eq!(docs[0].id, "x");
        assert_eq!(docs[0].label, Some(Verdict::Neutral));
        assert_eq!(docs[1].label, None);
    }

    proptest! {
        #[test]
        fn cosine_is_bounded_and_self_similar(v in prop::collection::vec(-10.0f64..10.0, 8)) {
            let a = EmbeddingVector::new(v).unwrap();
            prop_assume!(a.norm() > 1e-6);
            prop_assert!((cosine_similarity(&a, &a) - 1.0).abs() <= 1e-9);
            let b = EmbeddingVector::new(a.values.iter().rev().copied().collect()).unwrap();
            let c = cosine_similarity(&a, &b);
            prop_assert!((-1.0..=1.0).contains(&c));
        }
    }
}
