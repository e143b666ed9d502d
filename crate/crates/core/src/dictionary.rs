//! Terminology dictionaries and dictionary-enhanced source rephrasing.
//!
//! Rephrasing replaces every accepted occurrence of a source-language term
//! with its target-language translation. Entries are applied longest source
//! term first; once a span is replaced it is masked, so shorter terms can
//! never match inside an earlier replacement or inside inserted target text.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use aho_corasick::AhoCorasick;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, ParallelPair};
use crate::lang::display_language;
use crate::util::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum DictError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("invalid dictionary entry: {msg}")]
    InvalidEntry { msg: String },
    #[error("extraction prompt needs at least one pair")]
    EmptyPairList,
}

/// One terminology pair: a source-language term and its target-language
/// translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictEntry {
    pub w_src: String,
    pub w_tgt: String,
}

impl DictEntry {
    /// Both sides must be non-empty, distinct, and single-line (the TSV wire
    /// format cannot carry tabs or newlines inside a term).
    pub fn new(w_src: impl Into<String>, w_tgt: impl Into<String>) -> Result<Self, DictError> {
        let entry = Self {
            w_src: w_src.into(),
            w_tgt: w_tgt.into(),
        };
        let fail = |msg: String| Err(DictError::InvalidEntry { msg });
        if entry.w_src.is_empty() || entry.w_tgt.is_empty() {
            return fail(format!(
                "empty term in ({:?}, {:?})",
                entry.w_src, entry.w_tgt
            ));
        }
        if entry.w_src == entry.w_tgt {
            return fail(format!("w_src equals w_tgt: {:?}", entry.w_src));
        }
        for side in [&entry.w_src, &entry.w_tgt] {
            if side.contains('\t') || side.contains('\n') || side.contains('\r') {
                return fail(format!("term contains tab or newline: {side:?}"));
            }
        }
        Ok(entry)
    }

    /// Term length in Unicode scalar values; the sort key for rephrasing.
    pub fn src_len(&self) -> usize {
        self.w_src.chars().count()
    }
}

/// How source terms are located in a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Exact codepoint substring match, no boundary requirement. Suits
    /// unsegmented scripts.
    #[default]
    Substring,
    /// Substring match that additionally requires non-alphanumeric (or
    /// text-edge) neighbours, for space-delimited languages.
    WholeToken,
}

/// A non-fatal irregularity noticed while building a dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictWarning {
    pub line: Option<usize>,
    pub msg: String,
}

/// A terminology dictionary canonicalized for rephrasing: entries sorted by
/// source-term length (descending, in Unicode scalar values), ties broken by
/// lexicographic source term, with unique source terms.
///
/// The multi-pattern automaton over all source terms is built once at
/// construction; lookups are a single scan of the sentence regardless of
/// dictionary size.
#[derive(Debug, Clone)]
pub struct SortedDictionary {
    entries: Vec<DictEntry>,
    match_mode: MatchMode,
    automaton: Option<AhoCorasick>,
}

impl PartialEq for SortedDictionary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.match_mode == other.match_mode
    }
}

impl SortedDictionary {
    /// Canonicalizes `entries`: duplicates on `w_src` are dropped (first
    /// occurrence wins, a warning is reported when the dropped translation
    /// differed), then the sort invariant is established.
    pub fn from_entries(
        entries: Vec<DictEntry>,
        match_mode: MatchMode,
    ) -> (Self, Vec<DictWarning>) {
        let mut warnings = Vec::new();
        let mut seen: HashMap<String, String> = HashMap::new();
        let mut unique = Vec::with_capacity(entries.len());
        for entry in entries {
            match seen.get(&entry.w_src) {
                None => {
                    seen.insert(entry.w_src.clone(), entry.w_tgt.clone());
                    unique.push(entry);
                }
                Some(first_tgt) if *first_tgt != entry.w_tgt => warnings.push(DictWarning {
                    line: None,
                    msg: format!(
                        "duplicate w_src {:?}: keeping {:?}, dropping {:?}",
                        entry.w_src, first_tgt, entry.w_tgt
                    ),
                }),
                Some(_) => {}
            }
        }
        unique.sort_by(|a, b| {
            b.src_len()
                .cmp(&a.src_len())
                .then_with(|| a.w_src.cmp(&b.w_src))
        });
        let automaton = if unique.is_empty() {
            None
        } else {
            Some(
                AhoCorasick::new(unique.iter().map(|e| e.w_src.as_bytes()))
                    .expect("patterns are non-empty and fit automaton limits"),
            )
        };
        (
            Self {
                entries: unique,
                match_mode,
                automaton,
            },
            warnings,
        )
    }

    pub fn entries(&self) -> &[DictEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn match_mode(&self) -> MatchMode {
        self.match_mode
    }

    /// Canonical TSV bytes of the sorted entries; also the hashing basis for
    /// dataset manifests.
    pub fn to_tsv(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.entries {
            out.extend_from_slice(e.w_src.as_bytes());
            out.push(b'\t');
            out.extend_from_slice(e.w_tgt.as_bytes());
            out.push(b'\n');
        }
        out
    }

    /// Accepted term occurrences in `text`, as byte spans sorted by start.
    ///
    /// Entries are visited in sorted order; within one entry occurrences are
    /// taken left to right. An occurrence is accepted iff its span overlaps
    /// no previously accepted span, which both masks replaced regions and
    /// gives longer terms priority at overlapping positions.
    pub fn match_spans(&self, text: &str) -> Vec<MatchSpan> {
        let Some(automaton) = &self.automaton else {
            return Vec::new();
        };
        let mut candidates: Vec<(usize, usize, usize)> = automaton
            .find_overlapping_iter(text)
            .map(|m| (m.pattern().as_usize(), m.start(), m.end()))
            .filter(|&(_, start, end)| match self.match_mode {
                MatchMode::Substring => true,
                MatchMode::WholeToken => token_boundary(text, start, end),
            })
            .collect();
        candidates.sort_by_key(|&(entry_idx, start, _)| (entry_idx, start));

        let mut accepted: Vec<MatchSpan> = Vec::new();
        for (entry_idx, start, end) in candidates {
            if accepted.iter().all(|s| end <= s.start || start >= s.end) {
                accepted.push(MatchSpan {
                    entry_idx,
                    start,
                    end,
                });
            }
        }
        accepted.sort_by_key(|s| s.start);
        accepted
    }

    /// Entries whose source term has at least one accepted occurrence in
    /// `text`, deduplicated, in first-occurrence order. This is the matched
    /// set a chained record appends after the translation.
    pub fn matched_entries(&self, text: &str) -> Vec<&DictEntry> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for span in self.match_spans(text) {
            if seen.insert(span.entry_idx) {
                out.push(&self.entries[span.entry_idx]);
            }
        }
        out
    }
}

/// One accepted term occurrence: `entry_idx` indexes the sorted entries,
/// `start`/`end` are byte offsets into the matched text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchSpan {
    pub entry_idx: usize,
    pub start: usize,
    pub end: usize,
}

fn token_boundary(text: &str, start: usize, end: usize) -> bool {
    let before_ok = text[..start]
        .chars()
        .next_back()
        .is_none_or(|c| !c.is_alphanumeric());
    let after_ok = text[end..]
        .chars()
        .next()
        .is_none_or(|c| !c.is_alphanumeric());
    before_ok && after_ok
}

/// One applied replacement; offsets are character positions in the original
/// sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub start: usize,
    pub end: usize,
    pub w_src: String,
    pub w_tgt: String,
}

/// A rephrased sentence together with the replacements that produced it.
/// Replacement spans never overlap and are sorted by start; applying them to
/// the original source reproduces `rephrased` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RephraseResult {
    pub rephrased: String,
    pub replacements: Vec<Replacement>,
}

impl RephraseResult {
    /// Inverse substitution: rebuilds the original sentence from the
    /// rephrased text and the recorded spans.
    pub fn invert(&self) -> String {
        let chars: Vec<char> = self.rephrased.chars().collect();
        let mut out = String::new();
        // Walk the rephrased text; each recorded span occupies w_tgt there
        // and w_src in the original.
        let mut rephrased_pos = 0usize;
        let mut original_pos = 0usize;
        for rep in &self.replacements {
            let gap = rep.start - original_pos;
            out.extend(&chars[rephrased_pos..rephrased_pos + gap]);
            out.push_str(&rep.w_src);
            rephrased_pos += gap + rep.w_tgt.chars().count();
            original_pos = rep.end;
        }
        out.extend(&chars[rephrased_pos..]);
        out
    }
}

/// Rephrases one sentence: every accepted occurrence of a source term is
/// replaced by its target term. A sentence with no matches comes back
/// unchanged with no replacements.
pub fn dict_rephrase(sentence: &str, dict: &SortedDictionary) -> RephraseResult {
    let spans = dict.match_spans(sentence);
    let mut rephrased = String::with_capacity(sentence.len());
    let mut replacements = Vec::with_capacity(spans.len());
    let mut prev_end = 0usize;
    for span in &spans {
        rephrased.push_str(&sentence[prev_end..span.start]);
        let entry = &dict.entries()[span.entry_idx];
        rephrased.push_str(&entry.w_tgt);
        replacements.push(Replacement {
            start: sentence[..span.start].chars().count(),
            end: sentence[..span.end].chars().count(),
            w_src: entry.w_src.clone(),
            w_tgt: entry.w_tgt.clone(),
        });
        prev_end = span.end;
    }
    rephrased.push_str(&sentence[prev_end..]);
    RephraseResult {
        rephrased,
        replacements,
    }
}

/// Per-entry hit counts from rephrasing a whole corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RephraseStats {
    pub total_replacements: usize,
    /// Hit count per dictionary entry, in sorted-entry order.
    pub hits: Vec<usize>,
}

impl RephraseStats {
    /// JSONL `{"w_src", "w_tgt", "hits"}`, one line per entry.
    pub fn to_jsonl(&self, dict: &SortedDictionary) -> Vec<u8> {
        #[derive(Serialize)]
        struct Line<'a> {
            w_src: &'a str,
            w_tgt: &'a str,
            hits: usize,
        }
        let mut out = Vec::new();
        for (entry, &hits) in dict.entries().iter().zip(&self.hits) {
            let line = Line {
                w_src: &entry.w_src,
                w_tgt: &entry.w_tgt,
                hits,
            };
            out.extend_from_slice(
                serde_json::to_string(&line)
                    .expect("serializable")
                    .as_bytes(),
            );
            out.push(b'\n');
        }
        out
    }
}

/// Rephrases every source in `corpus`, leaving targets untouched.
pub fn rephrase_corpus(
    corpus: &ParallelCorpus,
    dict: &SortedDictionary,
) -> (ParallelCorpus, RephraseStats) {
    let mut stats = RephraseStats {
        total_replacements: 0,
        hits: vec![0; dict.len()],
    };
    let rephrased = corpus.map_sources(|pair| {
        let spans = dict.match_spans(&pair.source);
        stats.total_replacements += spans.len();
        for span in &spans {
            stats.hits[span.entry_idx] += 1;
        }
        dict_rephrase(&pair.source, dict).rephrased
    });
    (rephrased, stats)
}

/// Loads a dictionary from a TSV file (`w_src<TAB>w_tgt`, UTF-8, one entry
/// per line, `#`-prefixed comment lines ignored). An empty file is a valid
/// empty dictionary. Duplicate source terms keep the first translation; a
/// conflicting duplicate produces a warning carrying its line number.
pub fn load_dictionary(
    path: &Path,
    match_mode: MatchMode,
) -> Result<(SortedDictionary, Vec<DictWarning>), DictError> {
    let text = util::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut first_seen: HashMap<String, String> = HashMap::new();
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    for (line_no, line) in util::numbered_lines(&text) {
        if line.starts_with('#') {
            continue;
        }
        let malformed = |msg: String| DictError::Malformed {
            path: path_str.clone(),
            line: line_no,
            msg,
        };
        let mut fields = line.split('\t');
        let w_src = fields.next().unwrap_or_default();
        let w_tgt = fields
            .next()
            .ok_or_else(|| malformed("missing w_tgt column".into()))?;
        if fields.next().is_some() {
            return Err(malformed("more than two columns".into()));
        }
        let entry = DictEntry::new(w_src, w_tgt).map_err(|e| malformed(e.to_string()))?;
        match first_seen.get(&entry.w_src) {
            None => {
                first_seen.insert(entry.w_src.clone(), entry.w_tgt.clone());
                entries.push(entry);
            }
            Some(first_tgt) if *first_tgt != entry.w_tgt => warnings.push(DictWarning {
                line: Some(line_no),
                msg: format!(
                    "duplicate w_src {:?}: keeping {:?}, dropping {:?}",
                    entry.w_src, first_tgt, entry.w_tgt
                ),
            }),
            Some(_) => {}
        }
    }
    let (dict, _) = SortedDictionary::from_entries(entries, match_mode);
    Ok((dict, warnings))
}

/// Renders the terminology-extraction prompt for a batch of pairs: the
/// reviewer instruction followed by the numbered pairs. Byte-deterministic.
pub fn extraction_prompt(pairs: &[ParallelPair], domain_tag: &str) -> Result<String, DictError> {
    let first = pairs.first().ok_or(DictError::EmptyPairList)?;
    let src_name = display_language(&first.src_lang);
    let tgt_name = display_language(&first.tgt_lang);
    let mut out = format!(
        "You are a seasoned translator specializing in the {domain_tag} domain. \
         Please review the provided {src_name}-{tgt_name} translation pairs and \
         identify the most specialized {domain_tag} terms from each pair. \
         Skip any pairs that do not contain specialized {domain_tag} terms.\n"
    );
    for (i, pair) in pairs.iter().enumerate() {
        let _ = write!(
            out,
            "\n{}. {}: {}\n   {}: {}\n",
            i + 1,
            display_language(&pair.src_lang),
            pair.source,
            display_language(&pair.tgt_lang),
            pair.target
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn dict_of(entries: &[(&str, &str)]) -> SortedDictionary {
        let entries = entries
            .iter()
            .map(|&(s, t)| DictEntry::new(s, t).unwrap())
            .collect();
        let (dict, warnings) = SortedDictionary::from_entries(entries, MatchMode::Substring);
        assert!(warnings.is_empty());
        dict
    }

    #[test]
    fn sort_is_longest_first_then_lexicographic() {
        let dict = dict_of(&[
            ("disk", "盘"),
            ("data disk", "数据盘"),
            ("dcba", "x"),
            ("abcd", "y"),
        ]);
        let order: Vec<_> = dict.entries().iter().map(|e| e.w_src.as_str()).collect();
        assert_eq!(order, ["data disk", "abcd", "dcba", "disk"]);
    }

    #[test]
    fn sort_length_is_in_scalar_values_not_bytes() {
        // Three CJK chars (9 UTF-8 bytes) vs four ASCII chars (4 bytes):
        // the ASCII term is longer in scalar values and must sort first.
        let dict = dict_of(&[("挂耳板", "plate"), ("abcd", "x")]);
        let order: Vec<_> = dict.entries().iter().map(|e| e.w_src.as_str()).collect();
        assert_eq!(order, ["abcd", "挂耳板"]);
    }

    #[test]
    fn duplicate_w_src_first_wins_with_warning() {
        let entries = vec![
            DictEntry::new("disk", "盘").unwrap(),
            DictEntry::new("disk", "磁盘").unwrap(),
            DictEntry::new("disk", "盘").unwrap(),
        ];
        let (dict, warnings) = SortedDictionary::from_entries(entries, MatchMode::Substring);
        assert_eq!(dict.len(), 1);
        assert_eq!(dict.entries()[0].w_tgt, "盘");
        // Conflicting duplicate warns, identical duplicate does not.
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].msg.contains("disk"));
    }

    #[test]
    fn entry_invariants() {
        assert!(DictEntry::new("", "x").is_err());
        assert!(DictEntry::new("x", "").is_err());
        assert!(DictEntry::new("x", "x").is_err());
        assert!(DictEntry::new("a\tb", "x").is_err());
        assert!(DictEntry::new("a", "b\nc").is_err());
    }

    #[test]
    fn load_sorts_and_skips_comments() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# terminology for tests").unwrap();
        writeln!(f, "disk\t盘").unwrap();
        writeln!(f, "data disk\t数据盘").unwrap();
        let (dict, warnings) = load_dictionary(f.path(), MatchMode::Substring).unwrap();
        assert!(warnings.is_empty());
        let order: Vec<_> = dict.entries().iter().map(|e| e.w_src.as_str()).collect();
        assert_eq!(order, ["data disk", "disk"]);
    }

    #[test]
    fn load_empty_file_gives_empty_dictionary() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let (dict, warnings) = load_dictionary(f.path(), MatchMode::Substring).unwrap();
        assert!(dict.is_empty());
        assert!(warnings.is_empty());
        // An empty dictionary rephrases to identity.
        let result = dict_rephrase("左挂耳板", &dict);
        assert_eq!(result.rephrased, "左挂耳板");
        assert!(result.replacements.is_empty());
    }

    #[test]
    fn load_duplicate_conflict_reports_line() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "disk\t盘").unwrap();
        writeln!(f, "usage\t使用量").unwrap();
        writeln!(f, "disk\t磁盘").unwrap();
        let (dict, warnings) = load_dictionary(f.path(), MatchMode::Substring).unwrap();
        assert_eq!(dict.len(), 2);
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].line, Some(3));
    }

    #[test]
    fn load_sorted_order_matches_comparison_sort_oracle() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut f = tempfile::NamedTempFile::new().unwrap();
        let mut raw: Vec<(String, String)> = Vec::new();
        for i in 0..1000 {
            let len = rng.random_range(1..=12);
            let w_src: String = (0..len)
                .map(|_| (b'a' + rng.random_range(0..26u8)) as char)
                .collect();
            let w_tgt = format!("t{i}");
            writeln!(f, "{w_src}\t{w_tgt}").unwrap();
            raw.push((w_src, w_tgt));
        }
        let (dict, _) = load_dictionary(f.path(), MatchMode::Substring).unwrap();

        // Oracle: dedupe first-wins, then a selection sort on the
        // (length desc, w_src asc) key.
        let mut oracle: Vec<(String, String)> = Vec::new();
        for (s, t) in raw {
            if !oracle.iter().any(|(os, _)| *os == s) {
                oracle.push((s, t));
            }
        }
        for i in 0..oracle.len() {
            let mut best = i;
            for j in (i + 1)..oracle.len() {
                let (ls, lb) = (oracle[j].0.chars().count(), oracle[best].0.chars().count());
                if ls > lb || (ls == lb && oracle[j].0 < oracle[best].0) {
                    best = j;
                }
            }
            oracle.swap(i, best);
        }
        let got: Vec<(String, String)> = dict
            .entries()
            .iter()
            .map(|e| (e.w_src.clone(), e.w_tgt.clone()))
            .collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn rephrase_cjk_terminology_sentence() {
        let dict = dict_of(&[("挂耳板", "mounting ear plate"), ("连接器", "connector")]);
        let result = dict_rephrase("左挂耳板到主板的左挂耳连接器(J6081)的低速信号线缆", &dict);
        assert_eq!(
            result.rephrased,
            "左mounting ear plate到主板的左挂耳connector(J6081)的低速信号线缆"
        );
        assert_eq!(result.replacements.len(), 2);
        assert_eq!(result.replacements[0].start, 1);
        assert_eq!(result.replacements[0].end, 4);
        assert_eq!(result.replacements[0].w_src, "挂耳板");
        assert_eq!(result.replacements[1].start, 11);
        assert_eq!(result.replacements[1].end, 14);
        assert_eq!(result.replacements[1].w_src, "连接器");
    }

    #[test]
    fn longer_term_wins_and_masks_shorter_ones() {
        let dict = dict_of(&[("data disk", "A"), ("disk", "B"), ("usage", "C")]);
        let result = dict_rephrase("data disk usage", &dict);
        assert_eq!(result.rephrased, "A C");
        let applied: Vec<_> = result
            .replacements
            .iter()
            .map(|r| r.w_src.as_str())
            .collect();
        assert_eq!(applied, ["data disk", "usage"]);
    }

    #[test]
    fn all_occurrences_are_replaced() {
        let dict = dict_of(&[("盘", "disk")]);
        let result = dict_rephrase("盘一盘二盘", &dict);
        assert_eq!(result.rephrased, "disk一disk二disk");
        assert_eq!(result.replacements.len(), 3);
    }

    #[test]
    fn whole_token_mode_requires_boundaries() {
        let entries = vec![DictEntry::new("disk", "盘").unwrap()];
        let (dict, _) = SortedDictionary::from_entries(entries, MatchMode::WholeToken);
        let hit = dict_rephrase("the disk is full", &dict);
        assert_eq!(hit.rephrased, "the 盘 is full");
        let miss = dict_rephrase("ramdisk is full", &dict);
        assert_eq!(miss.rephrased, "ramdisk is full");
        let punct = dict_rephrase("check disk.", &dict);
        assert_eq!(punct.rephrased, "check 盘.");
    }

    #[test]
    fn rephrase_corpus_counts_hits() {
        let dict = dict_of(&[("盘", "disk"), ("网口", "port")]);
        let pairs = vec![
            ParallelPair::new("1", "盘和网口", "disk and port", "zh", "en", None).unwrap(),
            ParallelPair::new("2", "两个盘", "two disks", "zh", "en", None).unwrap(),
            ParallelPair::new("3", "无匹配", "no match", "zh", "en", None).unwrap(),
        ];
        let corpus = ParallelCorpus::new(pairs, "IT").unwrap();
        let (rephrased, stats) = rephrase_corpus(&corpus, &dict);
        assert_eq!(rephrased.pairs()[0].source, "disk和port");
        assert_eq!(rephrased.pairs()[1].source, "两个disk");
        assert_eq!(rephrased.pairs()[2].source, "无匹配");
        // Targets never change.
        assert_eq!(rephrased.pairs()[0].target, corpus.pairs()[0].target);
        assert_eq!(stats.total_replacements, 3);
        // Sorted order: 网口 (len 2) before 盘 (len 1).
        assert_eq!(stats.hits, vec![1, 2]);

        let jsonl = String::from_utf8(stats.to_jsonl(&dict)).unwrap();
        assert_eq!(
            jsonl.lines().next().unwrap(),
            "{\"w_src\":\"网口\",\"w_tgt\":\"port\",\"hits\":1}"
        );
    }

    #[test]
    fn rephrase_corpus_hit_counts_match_counting_oracle() {
        use dragforge_testkit::oracle_rephrase;
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let entries = vec![
            ("盘".to_string(), "disk".to_string()),
            ("数据盘".to_string(), "data disk".to_string()),
            ("网口".to_string(), "port".to_string()),
            ("口".to_string(), "opening".to_string()),
        ];
        let dict = {
            let built = entries
                .iter()
                .map(|(s, t)| DictEntry::new(s.clone(), t.clone()).unwrap())
                .collect();
            SortedDictionary::from_entries(built, MatchMode::Substring).0
        };
        let parts = ["数据盘", "盘", "网口", "口", "电缆", "数据"];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let pairs: Vec<ParallelPair> = (0..100)
            .map(|i| {
                let source: String = (0..rng.random_range(1..6))
                    .map(|_| parts[rng.random_range(0..parts.len())])
                    .collect();
                ParallelPair::new(i.to_string(), source, "t", "zh", "en", None).unwrap()
            })
            .collect();
        let corpus = ParallelCorpus::new(pairs, "IT").unwrap();
        let (_, stats) = rephrase_corpus(&corpus, &dict);

        // Counting oracle: per-sentence accepted spans, tallied per entry.
        let mut expected = vec![0usize; dict.len()];
        for pair in corpus.iter() {
            for (_, _, w_src, _) in oracle_rephrase(&pair.source, &entries, false).replacements {
                let idx = dict
                    .entries()
                    .iter()
                    .position(|e| e.w_src == w_src)
                    .unwrap();
                expected[idx] += 1;
            }
        }
        assert_eq!(stats.hits, expected);
        assert_eq!(stats.total_replacements, expected.iter().sum::<usize>());
    }

    #[test]
    fn rephrase_corpus_without_matches_is_identity() {
        let dict = dict_of(&[("术语", "term")]);
        let pairs = vec![ParallelPair::new("1", "没有", "none", "zh", "en", None).unwrap()];
        let corpus = ParallelCorpus::new(pairs, "").unwrap();
        let (rephrased, stats) = rephrase_corpus(&corpus, &dict);
        assert_eq!(rephrased.pairs(), corpus.pairs());
        assert_eq!(stats.total_replacements, 0);
    }

    #[test]
    fn extraction_prompt_shape() {
        let pairs = vec![ParallelPair::new(
            "1",
            "在每个元数据服务器上执行如下命令查询MDS数据盘使用量。",
            "Run the following command on each metadata server to query the MDS data disk usage.",
            "zh",
            "en",
            None,
        )
        .unwrap()];
        let prompt = extraction_prompt(&pairs, "IT").unwrap();
        assert!(prompt.starts_with("You are a seasoned translator specializing in the IT domain"));
        assert!(prompt.contains("Chinese-English translation pairs"));
        assert!(
            prompt.contains("1. Chinese: 在每个元数据服务器上执行如下命令查询MDS数据盘使用量。")
        );
        assert!(prompt.contains("   English: Run the following command"));

        let law = extraction_prompt(&pairs, "Law").unwrap();
        assert!(law.starts_with("You are a seasoned translator specializing in the Law domain"));
        assert!(law.contains("specialized Law terms"));
    }

    #[test]
    fn extraction_prompt_rejects_empty_input() {
        assert!(matches!(
            extraction_prompt(&[], "IT"),
            Err(DictError::EmptyPairList)
        ));
    }

    #[test]
    fn rephrase_matches_oracle_on_tricky_cases() {
        // Rank priority beats leftmost start: "bcd" is longer so it claims
        // [1,4) and "ab" is rejected for overlap.
        let dict = dict_of(&[("bcd", "X"), ("ab", "Y")]);
        let result = dict_rephrase("abcd", &dict);
        assert_eq!(result.rephrased, "aX");

        // Self-overlap within one entry: leftmost occurrence wins.
        let dict = dict_of(&[("aa", "Z")]);
        let result = dict_rephrase("aaa", &dict);
        assert_eq!(result.rephrased, "Za");
        assert_eq!(result.replacements.len(), 1);

        // A rejected overlap does not block a later disjoint occurrence.
        let dict = dict_of(&[("aba", "L"), ("bab", "M")]);
        let result = dict_rephrase("ababab", &dict);
        assert_eq!(result.rephrased, "LM");
    }

    mod properties {
        use super::*;
        use dragforge_testkit::oracle_rephrase;
        use proptest::prelude::*;

        fn arb_dict_entries() -> impl Strategy<Value = Vec<(String, String)>> {
            prop::collection::vec(("[abcd ]{1,6}", "[XYZw]{1,5}"), 0..6).prop_map(|raw| {
                let mut out: Vec<(String, String)> = Vec::new();
                for (s, t) in raw {
                    let s = s.trim().to_string();
                    if s.is_empty() || s == t || out.iter().any(|(os, _)| *os == s) {
                        continue;
                    }
                    out.push((s, t));
                }
                out
            })
        }

        fn build(entries: &[(String, String)]) -> SortedDictionary {
            let entries = entries
                .iter()
                .map(|(s, t)| DictEntry::new(s.clone(), t.clone()).unwrap())
                .collect();
            SortedDictionary::from_entries(entries, MatchMode::Substring).0
        }

        proptest! {
            #[test]
            fn equals_brute_force_oracle(
                sentence in "[abcd ]{0,30}",
                entries in arb_dict_entries(),
            ) {
                let dict = build(&entries);
                let result = dict_rephrase(&sentence, &dict);
                let oracle = oracle_rephrase(&sentence, &entries, false);
                prop_assert_eq!(&result.rephrased, &oracle.rephrased);
                let got: Vec<_> = result
                    .replacements
                    .iter()
                    .map(|r| (r.start, r.end, r.w_src.clone(), r.w_tgt.clone()))
                    .collect();
                prop_assert_eq!(got, oracle.replacements);
            }

            #[test]
            fn spans_never_overlap_and_reconstruct(
                sentence in "[abcd ]{0,30}",
                entries in arb_dict_entries(),
            ) {
                let dict = build(&entries);
                let result = dict_rephrase(&sentence, &dict);
                for pair in result.replacements.windows(2) {
                    prop_assert!(pair[0].end <= pair[1].start);
                }
                prop_assert_eq!(result.invert(), sentence);
            }

            #[test]
            fn output_invariant_under_entry_permutation(
                sentence in "[abcd ]{0,30}",
                entries in arb_dict_entries(),
            ) {
                let forward = build(&entries);
                let mut reversed_entries = entries.clone();
                reversed_entries.reverse();
                let reversed = build(&reversed_entries);
                prop_assert_eq!(
                    dict_rephrase(&sentence, &forward),
                    dict_rephrase(&sentence, &reversed)
                );
            }

            #[test]
            fn rephrasing_is_stable_when_targets_cannot_reintroduce_terms(
                sentence in "[abcd ]{0,30}",
                entries in prop::collection::vec(("[abcd]{1,4}", "[XYZ]{1,4}"), 0..5),
            ) {
                // Target alphabet is disjoint from the source alphabet, so a
                // second pass can never find new term occurrences. (Mere
                // non-containment of w_src in w_tgt is not enough: a target
                // ending in a term prefix can recreate a term across the
                // replacement boundary.)
                let mut unique: Vec<(String, String)> = Vec::new();
                for (s, t) in entries {
                    if !unique.iter().any(|(os, _)| *os == s) {
                        unique.push((s, t));
                    }
                }
                let dict = build(&unique);
                let once = dict_rephrase(&sentence, &dict);
                let twice = dict_rephrase(&once.rephrased, &dict);
                prop_assert_eq!(&twice.rephrased, &once.rephrased);
                prop_assert!(twice.replacements.is_empty());
            }
        }
    }
}
