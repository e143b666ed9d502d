//! Metrics over hypothesis translations: corpus BLEU, terminology
//! translation success rate, unaligned-translation-word rate, and token
//! length distributions. Neural metric scores (COMET-style) are ingested
//! from files, never computed here.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{MatchMode, SortedDictionary};
use crate::util::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("cannot evaluate an empty corpus")]
    EmptyCorpus,
    #[error("reference for `{id}` has no tokens")]
    EmptyReference { id: String },
    #[error("duplicate id `{id}`")]
    DuplicateId { id: String },
    #[error("no alignment for `{id}`")]
    MissingAlignment { id: String },
    #[error("alignment for `{id}` points at {side} token {index}, out of range")]
    AlignmentOutOfRange {
        id: String,
        index: usize,
        side: &'static str,
    },
}

/// One evaluation unit: source sentence, model hypothesis, and reference
/// translation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalTriple {
    pub id: String,
    pub source: String,
    pub hypothesis: String,
    pub reference: String,
}

/// Tokenization used by BLEU and length metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tokenizer {
    /// Unicode-whitespace segmentation, for space-delimited languages.
    #[default]
    Whitespace,
    /// Every non-whitespace character is one token, for unsegmented scripts.
    Char,
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        match self {
            Tokenizer::Whitespace => text.split_whitespace().map(str::to_string).collect(),
            Tokenizer::Char => text
                .chars()
                .filter(|c| !c.is_whitespace())
                .map(String::from)
                .collect(),
        }
    }
}

/// BLEU smoothing. `Off` scores 0 whenever a precision is zero; `AddOne`
/// applies (correct+1)/(total+1) to every order, for tiny corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    #[default]
    Off,
    AddOne,
}

/// Corpus-level BLEU-4 with all intermediate counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub score: f64,
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    pub tokenizer: Tokenizer,
    pub smoothing: Smoothing,
}

/// Standard corpus BLEU-4: modified n-gram precisions pooled over the
/// corpus, geometric mean over orders 1..=4, brevity penalty
/// `exp(1 - ref_len/hyp_len)` when the hypothesis side is shorter.
pub fn corpus_bleu(
    triples: &[EvalTriple],
    tokenizer: Tokenizer,
    smoothing: Smoothing,
) -> Result<BleuReport, EvalError> {
    if triples.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let mut seen = HashSet::new();
    let mut correct = [0usize; 4];
    let mut total = [0usize; 4];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for triple in triples {
        if !seen.insert(triple.id.as_str()) {
            return Err(EvalError::DuplicateId {
                id: triple.id.clone(),
            });
        }
        let hyp = tokenizer.tokenize(&triple.hypothesis);
        let reference = tokenizer.tokenize(&triple.reference);
        if reference.is_empty() {
            return Err(EvalError::EmptyReference {
                id: triple.id.clone(),
            });
        }
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=4usize {
            if hyp.len() < n {
                continue;
            }
            total[n - 1] += hyp.len() - n + 1;
            let mut ref_counts: HashMap<&[String], usize> = HashMap::new();
            if reference.len() >= n {
                for window in reference.windows(n) {
                    *ref_counts.entry(window).or_insert(0) += 1;
                }
            }
            let mut hyp_counts: HashMap<&[String], usize> = HashMap::new();
            for window in hyp.windows(n) {
                *hyp_counts.entry(window).or_insert(0) += 1;
            }
            for (ngram, count) in hyp_counts {
                correct[n - 1] += count.min(ref_counts.get(ngram).copied().unwrap_or(0));
            }
        }
    }

    let mut precisions = [0.0f64; 4];
    for n in 0..4 {
        precisions[n] = match smoothing {
            Smoothing::Off => {
                if total[n] == 0 {
                    0.0
                } else {
                    correct[n] as f64 / total[n] as f64
                }
            }
            Smoothing::AddOne => (correct[n] + 1) as f64 / (total[n] + 1) as f64,
        };
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let score = if precisions.iter().any(|&p| p <= 0.0) {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport {
        score,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
        tokenizer,
        smoothing,
    })
}

/// Terminology translation success counts. `attempted` counts accepted
/// source-term occurrences, `succeeded` counts those covered by a target
/// term occurrence in the hypothesis; `rate` is None when nothing was
/// attempted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermReport {
    pub attempted: usize,
    pub succeeded: usize,
    pub rate: Option<f64>,
}

/// Non-overlapping occurrence count of `needle` in `haystack`.
/// `MatchMode::WholeToken` additionally requires non-alphanumeric
/// neighbours and compares case-insensitively.
fn count_occurrences(haystack: &str, needle: &str, matching: MatchMode) -> usize {
    let (hay, ndl): (Vec<char>, Vec<char>) = match matching {
        MatchMode::Substring => (haystack.chars().collect(), needle.chars().collect()),
        MatchMode::WholeToken => (
            haystack.to_lowercase().chars().collect(),
            needle.to_lowercase().chars().collect(),
        ),
    };
    if ndl.is_empty() || ndl.len() > hay.len() {
        return 0;
    }
    let mut count = 0;
    let mut pos = 0;
    while pos + ndl.len() <= hay.len() {
        let here = hay[pos..pos + ndl.len()] == ndl[..];
        let boundary = matching == MatchMode::Substring
            || ((pos == 0 || !hay[pos - 1].is_alphanumeric())
                && (pos + ndl.len() == hay.len() || !hay[pos + ndl.len()].is_alphanumeric()));
        if here && boundary {
            count += 1;
            pos += ndl.len();
        } else {
            pos += 1;
        }
    }
    count
}

/// Per-occurrence terminology success: for every accepted source-term
/// occurrence (same masking as rephrasing, so longer terms shadow their
/// substrings) the hypothesis must contain the target term at least once per
/// occurrence, capped by the hypothesis occurrence count. `matching` governs
/// how target terms are located in the hypothesis.
pub fn term_success_rate(
    triples: &[EvalTriple],
    dict: &SortedDictionary,
    matching: MatchMode,
) -> TermReport {
    let mut attempted = 0usize;
    let mut succeeded = 0usize;
    for triple in triples {
        let mut per_entry: HashMap<usize, usize> = HashMap::new();
        for span in dict.match_spans(&triple.source) {
            *per_entry.entry(span.entry_idx).or_insert(0) += 1;
        }
        for (entry_idx, occurrences) in per_entry {
            let entry = &dict.entries()[entry_idx];
            attempted += occurrences;
            succeeded += occurrences.min(count_occurrences(
                &triple.hypothesis,
                &entry.w_tgt,
                matching,
            ));
        }
    }
    let rate = if attempted == 0 {
        None
    } else {
        Some(succeeded as f64 / attempted as f64)
    };
    TermReport {
        attempted,
        succeeded,
        rate,
    }
}

/// Unaligned-translation-word counts pooled over the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtwReport {
    pub total_hyp_tokens: usize,
    pub unaligned_tokens: usize,
    pub rate: f64,
}

/// A hypothesis token is unaligned iff its index appears in no alignment
/// link. Indices are validated against the whitespace tokenizations of the
/// hypothesis (left side) and reference (right side).
pub fn utw_rate(
    triples: &[EvalTriple],
    alignments: &BTreeMap<String, Vec<(usize, usize)>>,
) -> Result<UtwReport, EvalError> {
    let mut total = 0usize;
    let mut unaligned = 0usize;
    for triple in triples {
        let links = alignments
            .get(&triple.id)
            .ok_or_else(|| EvalError::MissingAlignment {
                id: triple.id.clone(),
            })?;
        let hyp_tokens = triple.hypothesis.split_whitespace().count();
        let ref_tokens = triple.reference.split_whitespace().count();
        let mut aligned = vec![false; hyp_tokens];
        for &(i, j) in links {
            if i >= hyp_tokens {
                return Err(EvalError::AlignmentOutOfRange {
                    id: triple.id.clone(),
                    index: i,
                    side: "hypothesis",
                });
            }
            if j >= ref_tokens {
                return Err(EvalError::AlignmentOutOfRange {
                    id: triple.id.clone(),
                    index: j,
                    side: "reference",
                });
            }
            aligned[i] = true;
        }
        total += hyp_tokens;
        unaligned += aligned.iter().filter(|&&a| !a).count();
    }
    let rate = if total == 0 {
        0.0
    } else {
        unaligned as f64 / total as f64
    };
    Ok(UtwReport {
        total_hyp_tokens: total,
        unaligned_tokens: unaligned,
        rate,
    })
}

/// Parses Pharaoh-format alignments: one line per sentence, space-separated
/// `i-j` links, an empty line meaning no links. Line order must match the
/// evaluation order.
pub fn parse_pharaoh(text: &str) -> Result<Vec<Vec<(usize, usize)>>, EvalError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let mut links = Vec::new();
        for token in line.split_whitespace() {
            let parse = || -> Option<(usize, usize)> {
                let (i, j) = token.split_once('-')?;
                Some((i.parse().ok()?, j.parse().ok()?))
            };
            let link = parse().ok_or_else(|| EvalError::Malformed {
                path: "<alignments>".into(),
                line: idx + 1,
                msg: format!("bad link token `{token}`"),
            })?;
            links.push(link);
        }
        out.push(links);
    }
    Ok(out)
}

/// Loads a Pharaoh alignment file.
pub fn load_pharaoh(path: &Path) -> Result<Vec<Vec<(usize, usize)>>, EvalError> {
    let text = util::read_to_string(path)?;
    parse_pharaoh(&text).map_err(|e| match e {
        EvalError::Malformed { line, msg, .. } => EvalError::Malformed {
            path: path.display().to_string(),
            line,
            msg,
        },
        other => other,
    })
}

/// One histogram bin: token lengths in `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBin {
    pub start: usize,
    pub count: usize,
}

/// Token-length histogram plus summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    pub bin_width: usize,
    pub bins: Vec<LengthBin>,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

/// Bins tokenized lengths into fixed-width bins (default width 10). The
/// 95th percentile uses the nearest-rank convention; an empty input yields
/// an empty histogram with zero summaries.
pub fn length_distribution(
    texts: &[String],
    tokenizer: Tokenizer,
    bin_width: usize,
) -> LengthDistribution {
    let width = bin_width.max(1);
    let mut lengths: Vec<usize> = texts.iter().map(|t| tokenizer.tokenize(t).len()).collect();
    lengths.sort_unstable();
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for &len in &lengths {
        *histogram.entry(len / width * width).or_insert(0) += 1;
    }
    let bins = histogram
        .into_iter()
        .map(|(start, count)| LengthBin { start, count })
        .collect();
    if lengths.is_empty() {
        return LengthDistribution {
            bin_width: width,
            bins,
            mean: 0.0,
            median: 0.0,
            p95: 0.0,
        };
    }
    let n = lengths.len();
    let mean = lengths.iter().sum::<usize>() as f64 / n as f64;
    let median = if n % 2 == 1 {
        lengths[n / 2] as f64
    } else {
        (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0
    };
    let rank = ((0.95 * n as f64).ceil() as usize).max(1);
    let p95 = lengths[rank - 1] as f64;
    LengthDistribution {
        bin_width: width,
        bins,
        mean,
        median,
        p95,
    }
}

/// Loads external per-segment scores (JSONL `{"id", "score"}`), e.g. from a
/// neural metric run elsewhere. Duplicate ids and non-numeric scores are
/// rejected.
pub fn ingest_external_scores(path: &Path) -> Result<BTreeMap<String, f64>, EvalError> {
    #[derive(Deserialize)]
    struct ScoreRecord {
        id: String,
        score: f64,
    }
    let text = util::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut scores = BTreeMap::new();
    for (line_no, line) in util::numbered_lines(&text) {
        let record: ScoreRecord = serde_json::from_str(line).map_err(|e| EvalError::Malformed {
            path: path_str.clone(),
            line: line_no,
            msg: e.to_string(),
        })?;
        if scores.insert(record.id.clone(), record.score).is_some() {
            return Err(EvalError::DuplicateId { id: record.id });
        }
    }
    Ok(scores)
}

/// Loads a hypotheses file (JSONL `{"id", "hypothesis"}`), preserving order.
pub fn load_hypotheses(path: &Path) -> Result<Vec<(String, String)>, EvalError> {
    #[derive(Deserialize)]
    struct HypRecord {
        id: String,
        hypothesis: String,
    }
    let text = util::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, line) in util::numbered_lines(&text) {
        let record: HypRecord = serde_json::from_str(line).map_err(|e| EvalError::Malformed {
            path: path_str.clone(),
            line: line_no,
            msg: e.to_string(),
        })?;
        if !seen.insert(record.id.clone()) {
            return Err(EvalError::DuplicateId { id: record.id });
        }
        out.push((record.id, record.hypothesis));
    }
    Ok(out)
}
