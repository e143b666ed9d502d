//! Exact cosine-similarity retrieval over embedded translation pairs.
//!
//! The index is a flat list of (pair, vector) entries scanned exhaustively;
//! at the corpus sizes this pipeline targets (≤ ~100k pairs) exact search is
//! both simpler and reproducible, so no approximate structures are used.

mod provider;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::ParallelPair;
use crate::util::{self, IoError};

pub use provider::{
    EmbeddingProvider, HashEmbedder, HttpEmbedder, HttpEmbedderConfig, EMBED_URL_ENV,
};

/// Batch size used when attributing provider failures to pair ids during
/// index builds. Providers may batch further internally.
const BUILD_BATCH: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("zero-norm vector rejected")]
    ZeroNorm,
    #[error("invalid vector: {msg}")]
    InvalidVector { msg: String },
    #[error("cannot build an index from an empty pair list")]
    EmptyPairs,
    #[error("duplicate pair id `{id}` in index")]
    DuplicateId { id: String },
    #[error("provider mismatch: index was built with `{expected}`, queried with `{got}`")]
    ProviderMismatch { expected: String, got: String },
    #[error("embedding provider failed: {msg}")]
    Provider { msg: String },
    #[error("embedding provider failed on pairs [{}]: {msg}", ids.join(", "))]
    ProviderBatch { ids: Vec<String>, msg: String },
    #[error("bad index file {path}: {msg}")]
    BadIndex { path: String, msg: String },
}

/// A fixed-dimension embedding with positive Euclidean norm and finite
/// components. Zero vectors are rejected at construction so cosine scores
/// are always defined.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::InvalidVector {
                msg: "dimension must be > 0".into(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::InvalidVector {
                msg: "non-finite component".into(),
            });
        }
        if norm(&values) == 0.0 {
            return Err(RetrievalError::ZeroNorm);
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

fn norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| v as f64 * v as f64)
        .sum::<f64>()
        .sqrt()
}

/// Cosine similarity `(s·v)/(‖s‖‖v‖)` accumulated in f64 and clamped to
/// [-1, 1] to absorb rounding.
pub fn cosine_similarity(s: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if s.dim() != v.dim() {
        return Err(RetrievalError::DimMismatch {
            expected: s.dim(),
            got: v.dim(),
        });
    }
    let mut dot = 0.0f64;
    let mut ns = 0.0f64;
    let mut nv = 0.0f64;
    for i in 0..s.values.len() {
        let (a, b) = (s.values[i] as f64, v.values[i] as f64);
        dot += a * b;
        ns += a * a;
        nv += b * b;
    }
    if ns == 0.0 || nv == 0.0 {
        return Err(RetrievalError::ZeroNorm);
    }
    Ok((dot / (ns.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Which side of each pair is embedded into the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSide {
    #[default]
    Source,
    Target,
}

impl IndexSide {
    fn text<'a>(&self, pair: &'a ParallelPair) -> &'a str {
        match self {
            IndexSide::Source => &pair.source,
            IndexSide::Target => &pair.target,
        }
    }
}

/// One indexed pair with its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub pair: ParallelPair,
    pub vector: EmbeddingVector,
}

/// An immutable collection of embedded pairs. Entry order is ingestion
/// order and pair ids are unique; `provider_id` records which embedder
/// produced the vectors so incompatible queries are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    entries: Vec<IndexEntry>,
    dim: usize,
    provider_id: String,
    ids: HashSet<String>,
}

impl VectorIndex {
    pub fn new(dim: usize, provider_id: impl Into<String>) -> Self {
        Self {
            entries: Vec::new(),
            dim,
            provider_id: provider_id.into(),
            ids: HashSet::new(),
        }
    }

    pub fn push(
        &mut self,
        pair: ParallelPair,
        vector: EmbeddingVector,
    ) -> Result<(), RetrievalError> {
        if vector.dim() != self.dim {
            return Err(RetrievalError::DimMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        if !self.ids.insert(pair.id.clone()) {
            return Err(RetrievalError::DuplicateId { id: pair.id });
        }
        self.entries.push(IndexEntry { pair, vector });
        Ok(())
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Embeds the chosen side of every pair and builds the index. The pair list
/// must be non-empty and ids unique; a provider failure names the pair ids
/// of the failing batch.
pub fn build_index(
    pairs: &[ParallelPair],
    provider: &dyn EmbeddingProvider,
    side: IndexSide,
) -> Result<VectorIndex, RetrievalError> {
    if pairs.is_empty() {
        return Err(RetrievalError::EmptyPairs);
    }
    let mut index = VectorIndex::new(provider.dim(), provider.provider_id());
    for chunk in pairs.chunks(BUILD_BATCH) {
        let texts: Vec<String> = chunk.iter().map(|p| side.text(p).to_string()).collect();
        let vectors = provider
            .embed_batch(&texts)
            .map_err(|e| RetrievalError::ProviderBatch {
                ids: chunk.iter().map(|p| p.id.clone()).collect(),
                msg: e.to_string(),
            })?;
        if vectors.len() != chunk.len() {
            return Err(RetrievalError::ProviderBatch {
                ids: chunk.iter().map(|p| p.id.clone()).collect(),
                msg: format!(
                    "provider returned {} vectors for {} texts",
                    vectors.len(),
                    chunk.len()
                ),
            });
        }
        for (pair, vector) in chunk.iter().zip(vectors) {
            index.push(pair.clone(), vector)?;
        }
    }
    Ok(index)
}

/// One retrieved example with its similarity score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredExample {
    pub pair: ParallelPair,
    pub score: f64,
}

/// Examples selected for one query: at most `cap_used` items, every score
/// strictly above `threshold_used`, sorted by score descending with ties in
/// index-entry order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleSet {
    pub items: Vec<ScoredExample>,
    pub threshold_used: f64,
    pub cap_used: usize,
}

/// Scores every index entry against `query` (exact, exhaustive) and keeps
/// the top `n` entries whose similarity strictly exceeds `k`. Iterating in
/// similarity order makes the result independent of index insertion order,
/// up to exact-score ties which fall back to entry order.
pub fn select_examples(
    index: &VectorIndex,
    query: &str,
    provider: &dyn EmbeddingProvider,
    k: f64,
    n: usize,
    exclude_id: Option<&str>,
) -> Result<ExampleSet, RetrievalError> {
    if provider.provider_id() != index.provider_id() {
        return Err(RetrievalError::ProviderMismatch {
            expected: index.provider_id().to_string(),
            got: provider.provider_id().to_string(),
        });
    }
    let query_vec = provider
        .embed_batch(std::slice::from_ref(&query.to_string()))?
        .into_iter()
        .next()
        .ok_or_else(|| RetrievalError::Provider {
            msg: "provider returned no vector for query".into(),
        })?;

    let mut scored: Vec<ScoredExample> = Vec::new();
    for entry in index.entries() {
        if exclude_id == Some(entry.pair.id.as_str()) {
            continue;
        }
        let score = cosine_similarity(&query_vec, &entry.vector)?;
        if score > k {
            scored.push(ScoredExample {
                pair: entry.pair.clone(),
                score,
            });
        }
    }
    // Stable sort keeps entry order for equal scores.
    scored.sort_by(|a, b| b.score.total_cmp(&a.score));
    scored.truncate(n);
    Ok(ExampleSet {
        items: scored,
        threshold_used: k,
        cap_used: n,
    })
}

const INDEX_MAGIC: &[u8; 8] = b"DRGFVIDX";
const INDEX_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SidecarRecord {
    id: String,
    src: String,
    tgt: String,
    src_lang: String,
    tgt_lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qe_score: Option<f64>,
}

impl VectorIndex {
    /// Binary layout: magic, version, dim (u32 LE), count (u64 LE),
    /// provider-id length (u32 LE) + UTF-8 bytes, then `count * dim` f32 LE
    /// vector components in entry order.
    pub fn binary_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.provider_id.len() + self.len() * self.dim * 4);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.provider_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.provider_id.as_bytes());
        for entry in &self.entries {
            for &v in entry.vector.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// JSONL of the indexed pairs, one record per entry in entry order.
    pub fn sidecar_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for entry in &self.entries {
            let p = &entry.pair;
            let record = SidecarRecord {
                id: p.id.clone(),
                src: p.source.clone(),
                tgt: p.target.clone(),
                src_lang: p.src_lang.clone(),
                tgt_lang: p.tgt_lang.clone(),
                qe_score: p.qe_score,
            };
            out.extend_from_slice(
                serde_json::to_string(&record)
                    .expect("serializable")
                    .as_bytes(),
            );
            out.push(b'\n');
        }
        out
    }
}

/// Sidecar path for an index file: the index path with `.pairs.jsonl`
/// appended.
pub fn sidecar_path(index_path: &Path) -> PathBuf {
    let mut name = index_path.as_os_str().to_os_string();
    name.push(".pairs.jsonl");
    PathBuf::from(name)
}

/// Persists the index (binary vectors plus pair sidecar) atomically.
pub fn save_index(index: &VectorIndex, path: &Path) -> Result<(), RetrievalError> {
    util::atomic_write_all(&[
        (path.to_path_buf(), index.binary_bytes()),
        (sidecar_path(path), index.sidecar_bytes()),
    ])?;
    Ok(())
}

/// Loads an index persisted by [`save_index`]; reload is bit-exact.
pub fn load_index(path: &Path) -> Result<VectorIndex, RetrievalError> {
    let path_str = path.display().to_string();
    let bad = |msg: &str| RetrievalError::BadIndex {
        path: path_str.clone(),
        msg: msg.to_string(),
    };
    let bytes = util::read_bytes(path)?;
    let mut cursor = 0usize;
    let mut take = |len: usize| -> Result<&[u8], RetrievalError> {
        let end = cursor
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| RetrievalError::BadIndex {
                path: path_str.clone(),
                msg: "truncated file".into(),
            })?;
        let slice = &bytes[cursor..end];
        cursor = end;
        Ok(slice)
    };

    if take(8)? != INDEX_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != INDEX_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let id_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let provider_id = std::str::from_utf8(take(id_len)?)
        .map_err(|_| bad("provider id is not UTF-8"))?
        .to_string();

    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        let raw = take(dim * 4)?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        vectors.push(
            EmbeddingVector::new(values).map_err(|e| RetrievalError::BadIndex {
                path: path_str.clone(),
                msg: e.to_string(),
            })?,
        );
    }
    if cursor != bytes.len() {
        return Err(bad("trailing bytes after vectors"));
    }

    let sidecar = sidecar_path(path);
    let text = util::read_to_string(&sidecar)?;
    let mut pairs = Vec::with_capacity(count);
    for (line_no, line) in util::numbered_lines(&text) {
        let record: SidecarRecord =
            serde_json::from_str(line).map_err(|e| RetrievalError::BadIndex {
                path: sidecar.display().to_string(),
                msg: format!("line {line_no}: {e}"),
            })?;
        let pair = ParallelPair::new(
            record.id,
            record.src,
            record.tgt,
            record.src_lang,
            record.tgt_lang,
            record.qe_score,
        )
        .map_err(|e| RetrievalError::BadIndex {
            path: sidecar.display().to_string(),
            msg: format!("line {line_no}: {e}"),
        })?;
        pairs.push(pair);
    }
    if pairs.len() != count {
        return Err(bad(&format!(
            "sidecar has {} pairs, header says {count}",
            pairs.len()
        )));
    }

    let mut index = VectorIndex::new(dim, provider_id);
    for (pair, vector) in pairs.into_iter().zip(vectors) {
        index.push(pair, vector)?;
    }
    Ok(index)
}
