//! Parallel corpus ingestion, quality filtering, splitting, and statistics.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::util::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("empty corpus: {path}")]
    Empty { path: String },
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("duplicate pair id `{id}`")]
    DuplicateId { id: String },
    #[error("invalid pair `{id}`: {msg}")]
    InvalidPair { id: String, msg: String },
    #[error("no quality score for pair id `{id}`")]
    MissingScore { id: String },
    #[error("split sizes exceed corpus: required {required}, available {available}")]
    SplitTooLarge { required: usize, available: usize },
}

/// One source/target sentence pair with language tags and an optional
/// quality-estimation score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub id: String,
    pub source: String,
    pub target: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub qe_score: Option<f64>,
}

impl ParallelPair {
    /// Builds a pair, enforcing non-empty texts (after trimming), distinct
    /// language tags, and a QE score within [0, 100] when present.
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        target: impl Into<String>,
        src_lang: impl Into<String>,
        tgt_lang: impl Into<String>,
        qe_score: Option<f64>,
    ) -> Result<Self, CorpusError> {
        let pair = Self {
            id: id.into(),
            source: source.into(),
            target: target.into(),
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            qe_score,
        };
        pair.validate()?;
        Ok(pair)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let fail = |msg: &str| {
            Err(CorpusError::InvalidPair {
                id: self.id.clone(),
                msg: msg.to_string(),
            })
        };
        if self.source.trim().is_empty() {
            return fail("source is empty");
        }
        if self.target.trim().is_empty() {
            return fail("target is empty");
        }
        if self.src_lang == self.tgt_lang {
            return fail("src_lang equals tgt_lang");
        }
        if let Some(score) = self.qe_score {
            if !(0.0..=100.0).contains(&score) || score.is_nan() {
                return fail("qe_score outside [0, 100]");
            }
        }
        Ok(())
    }
}

/// An ordered collection of [`ParallelPair`]s with unique ids; iteration
/// order is always the ingestion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pairs: Vec<ParallelPair>,
    pub domain_tag: String,
}

impl ParallelCorpus {
    pub fn new(
        pairs: Vec<ParallelPair>,
        domain_tag: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for pair in &pairs {
            if !seen.insert(pair.id.as_str()) {
                return Err(CorpusError::DuplicateId {
                    id: pair.id.clone(),
                });
            }
        }
        Ok(Self {
            pairs,
            domain_tag: domain_tag.into(),
        })
    }

    pub fn pairs(&self) -> &[ParallelPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ParallelPair> {
        self.pairs.iter()
    }

    /// Replaces every pair's source text via `f`, keeping ids, targets, and
    /// order. Used by dictionary rephrasing.
    pub fn map_sources(&self, mut f: impl FnMut(&ParallelPair) -> String) -> Self {
        let pairs = self
            .pairs
            .iter()
            .map(|p| ParallelPair {
                source: f(p),
                ..p.clone()
            })
            .collect();
        Self {
            pairs,
            domain_tag: self.domain_tag.clone(),
        }
    }
}

/// Corpus file format on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// `source<TAB>target`, one pair per line.
    Tsv,
    /// One JSON object per line: `{"src", "tgt", "id"?, "qe_score"?}`.
    Jsonl,
}

impl CorpusFormat {
    /// Infers the format from a file extension (`.tsv` / `.jsonl`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") => Some(Self::Tsv),
            Some("jsonl") => Some(Self::Jsonl),
            _ => None,
        }
    }
}

/// Corpus-level settings the wire formats do not carry: language tags apply
/// to every pair in the file, `domain_tag` labels the corpus.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub src_lang: String,
    pub tgt_lang: String,
    pub domain_tag: String,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            src_lang: "zh".into(),
            tgt_lang: "en".into(),
            domain_tag: String::new(),
        }
    }
}

/// One corpus record as serialized in JSONL files.
#[derive(Debug, Serialize, Deserialize)]
struct CorpusRecord {
    src: String,
    tgt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qe_score: Option<f64>,
}

/// Loads a parallel corpus from `path`, preserving file order. Missing ids
/// are assigned from 1-based line numbers.
pub fn load_parallel_corpus(
    path: &Path,
    format: CorpusFormat,
    options: &LoadOptions,
) -> Result<ParallelCorpus, CorpusError> {
    let text = util::read_to_string(path)?;
    let path_str = path.display().to_string();
    let malformed = |line: usize, msg: String| CorpusError::Malformed {
        path: path_str.clone(),
        line,
        msg,
    };

    let mut pairs = Vec::new();
    for (line_no, line) in util::numbered_lines(&text) {
        let (source, target, id, qe_score) = match format {
            CorpusFormat::Tsv => {
                let mut fields = line.split('\t');
                let src = fields.next().unwrap_or_default();
                let tgt = fields
                    .next()
                    .ok_or_else(|| malformed(line_no, "missing target column".into()))?;
                if fields.next().is_some() {
                    return Err(malformed(line_no, "more than two columns".into()));
                }
                (src.to_string(), tgt.to_string(), None, None)
            }
            CorpusFormat::Jsonl => {
                let record: CorpusRecord =
                    serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
                (record.src, record.tgt, record.id, record.qe_score)
            }
        };
        let id = id.unwrap_or_else(|| line_no.to_string());
        let pair = ParallelPair::new(
            id,
            source,
            target,
            options.src_lang.clone(),
            options.tgt_lang.clone(),
            qe_score,
        )
        .map_err(|e| malformed(line_no, e.to_string()))?;
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(CorpusError::Empty { path: path_str });
    }
    ParallelCorpus::new(pairs, options.domain_tag.clone())
}

/// Serializes a corpus to its canonical JSONL byte form (LF newlines, ids
/// always present, `qe_score` only when set).
pub fn corpus_to_jsonl(corpus: &ParallelCorpus) -> Vec<u8> {
    let mut out = Vec::new();
    for pair in corpus.iter() {
        let record = CorpusRecord {
            src: pair.source.clone(),
            tgt: pair.target.clone(),
            id: Some(pair.id.clone()),
            qe_score: pair.qe_score,
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

/// A pair rejected by [`quality_filter`], with the score that rejected it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub score: f64,
    pub threshold: f64,
}

/// Ids and scores of pairs discarded by quality filtering.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionReport {
    pub threshold: f64,
    pub rejected: Vec<Rejection>,
}

impl RejectionReport {
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in &self.rejected {
            out.extend_from_slice(serde_json::to_string(r).expect("serializable").as_bytes());
            out.push(b'\n');
        }
        out
    }
}

/// Keeps pairs whose score is `>= threshold` ("below threshold" is
/// discarded, so the boundary value itself survives), preserving input
/// order. Every pair id must have a score.
pub fn quality_filter(
    corpus: &ParallelCorpus,
    scores: &BTreeMap<String, f64>,
    threshold: f64,
) -> Result<(ParallelCorpus, RejectionReport), CorpusError> {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for pair in corpus.iter() {
        let score = *scores
            .get(&pair.id)
            .ok_or_else(|| CorpusError::MissingScore {
                id: pair.id.clone(),
            })?;
        if score >= threshold {
            kept.push(pair.clone());
        } else {
            rejected.push(Rejection {
                id: pair.id.clone(),
                score,
                threshold,
            });
        }
    }
    let corpus = ParallelCorpus::new(kept, corpus.domain_tag.clone())?;
    Ok((
        corpus,
        RejectionReport {
            threshold,
            rejected,
        },
    ))
}

/// Loads a QE-score file (JSONL `{"id", "score"}`) into an id → score map.
pub fn load_scores(path: &Path) -> Result<BTreeMap<String, f64>, CorpusError> {
    #[derive(Deserialize)]
    struct ScoreRecord {
        id: String,
        score: f64,
    }

    let text = util::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut scores = BTreeMap::new();
    for (line_no, line) in util::numbered_lines(&text) {
        let record: ScoreRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
                path: path_str.clone(),
                line: line_no,
                msg: e.to_string(),
            })?;
        if scores.insert(record.id.clone(), record.score).is_some() {
            return Err(CorpusError::DuplicateId { id: record.id });
        }
    }
    Ok(scores)
}

/// Disjoint train/test/extra views of one corpus. `extra` is the remainder
/// that feeds the vector index.
#[derive(Debug, Clone)]
pub struct SplitCorpus {
    pub train: ParallelCorpus,
    pub test: ParallelCorpus,
    pub extra: ParallelCorpus,
}

/// Splits a corpus into train/test/extra with a seeded Fisher–Yates shuffle
/// over indices. Deterministic in (corpus, train_n, test_n, seed); splits
/// keep the shuffled order.
pub fn split_corpus(
    corpus: &ParallelCorpus,
    train_n: usize,
    test_n: usize,
    seed: u64,
) -> Result<SplitCorpus, CorpusError> {
    let total = corpus.len();
    let required = train_n + test_n;
    if required > total {
        return Err(CorpusError::SplitTooLarge {
            required,
            available: total,
        });
    }

    let mut indices: Vec<usize> = (0..total).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..total).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }

    let collect = |range: &[usize]| -> Vec<ParallelPair> {
        range.iter().map(|&i| corpus.pairs()[i].clone()).collect()
    };
    let tag = corpus.domain_tag.clone();
    Ok(SplitCorpus {
        train: ParallelCorpus::new(collect(&indices[..train_n]), tag.clone())?,
        test: ParallelCorpus::new(collect(&indices[train_n..train_n + test_n]), tag.clone())?,
        extra: ParallelCorpus::new(collect(&indices[train_n + test_n..]), tag)?,
    })
}

/// Mean and median of one length measure across a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub mean: f64,
    pub median: f64,
}

/// Per-split pair counts; they always sum to the totals of the split they
/// were computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub test: usize,
    pub extra: usize,
}

/// Size and length summary of a corpus. Lengths are reported both in
/// Unicode scalar values and in whitespace tokens; character counts stay
/// informative for unsegmented scripts where token counts are not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pair_count: usize,
    pub source_chars: LengthStats,
    pub source_tokens: LengthStats,
    pub target_chars: LengthStats,
    pub target_tokens: LengthStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<SplitCounts>,
}

fn length_stats(lengths: &mut [usize]) -> LengthStats {
    if lengths.is_empty() {
        return LengthStats {
            mean: 0.0,
            median: 0.0,
        };
    }
    lengths.sort_unstable();
    let n = lengths.len();
    let mean = lengths.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        lengths[n / 2] as f64
    } else {
        (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0
    };
    LengthStats { mean, median }
}

/// Computes counts and length summaries; an empty corpus yields zeroes.
pub fn corpus_stats(corpus: &ParallelCorpus) -> CorpusStats {
    let mut src_chars: Vec<usize> = Vec::with_capacity(corpus.len());
    let mut src_tokens: Vec<usize> = Vec::with_capacity(corpus.len());
    let mut tgt_chars: Vec<usize> = Vec::with_capacity(corpus.len());
    let mut tgt_tokens: Vec<usize> = Vec::with_capacity(corpus.len());
    for pair in corpus.iter() {
        src_chars.push(pair.source.chars().count());
        src_tokens.push(pair.source.split_whitespace().count());
        tgt_chars.push(pair.target.chars().count());
        tgt_tokens.push(pair.target.split_whitespace().count());
    }
    CorpusStats {
        pair_count: corpus.len(),
        source_chars: length_stats(&mut src_chars),
        source_tokens: length_stats(&mut src_tokens),
        target_chars: length_stats(&mut tgt_chars),
        target_tokens: length_stats(&mut tgt_tokens),
        splits: None,
    }
}

impl SplitCorpus {
    /// Stats over the union of the three splits, with per-split counts.
    pub fn stats(&self) -> Result<CorpusStats, CorpusError> {
        let mut pairs = Vec::with_capacity(self.train.len() + self.test.len() + self.extra.len());
        pairs.extend(self.train.iter().cloned());
        pairs.extend(self.test.iter().cloned());
        pairs.extend(self.extra.iter().cloned());
        let union = ParallelCorpus::new(pairs, self.train.domain_tag.clone())?;
        let mut stats = corpus_stats(&union);
        stats.splits = Some(SplitCounts {
            train: self.train.len(),
            test: self.test.len(),
            extra: self.extra.len(),
        });
        Ok(stats)
    }
}
