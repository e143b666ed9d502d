//! Few-shot translation prompts and the dictionary enhancement record
//! shapes.
//!
//! All rendering here is pure and byte-deterministic: identical inputs give
//! identical records, which is what lets emitted datasets be golden-tested
//! and reproduced bit for bit.

use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, ParallelPair};
use crate::dictionary::{DictEntry, SortedDictionary};
use crate::lang::display_language;

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("similarity threshold k must lie in [0, 1], got {0}")]
    InvalidThreshold(f64),
}

/// Dictionary enhancement applied when building records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictMode {
    /// No dictionary augmentation.
    DictNone,
    /// Source terms are replaced by their target translations in the input.
    DictRephrasing,
    /// Dictionary entries join the dataset as standalone translation records.
    DictInstruction,
    /// Matched `w_src = w_tgt` pairs are appended after the translation.
    DictChain,
}

impl DictMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DictMode::DictNone => "dict_none",
            DictMode::DictRephrasing => "dict_rephrasing",
            DictMode::DictInstruction => "dict_instruction",
            DictMode::DictChain => "dict_chain",
        }
    }
}

impl std::fmt::Display for DictMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Prompt-building settings: the enhancement mode, the display name of the
/// target language, and the retrieval knobs (threshold `k`, example cap `n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub mode: DictMode,
    pub target_language: String,
    pub k: f64,
    pub n: usize,
}

impl PromptConfig {
    pub fn new(
        mode: DictMode,
        target_language: impl Into<String>,
        k: f64,
        n: usize,
    ) -> Result<Self, PromptError> {
        if !(0.0..=1.0).contains(&k) || k.is_nan() {
            return Err(PromptError::InvalidThreshold(k));
        }
        Ok(Self {
            mode,
            target_language: target_language.into(),
            k,
            n,
        })
    }
}

/// Record metadata: which enhancement produced it, which examples its input
/// carries, the corpus domain, and the originating pair (absent for
/// dictionary-entry records).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub mode: DictMode,
    pub example_ids: Vec<String>,
    pub domain_tag: String,
    pub pair_id: Option<String>,
}

/// One fine-tuning sample: the translation instruction, the input (few-shot
/// examples plus the text to translate), and the expected output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub meta: RecordMeta,
}

/// The translation instruction for one target language.
pub fn instruction_line(target_language: &str) -> String {
    format!("Translating the following content into {target_language}")
}

/// Marker separating a translation from its chained terminology list.
pub const CHAIN_HEADER: &str = "\nTerms:";

fn example_block(pair: &ParallelPair) -> String {
    format!(
        "{}: {}\n{}: {}",
        display_language(&pair.src_lang),
        pair.source,
        display_language(&pair.tgt_lang),
        pair.target
    )
}

/// The record input: example blocks in the given (retrieval-score) order,
/// blank-line separated, followed by the bare source to translate.
fn render_input(source: &str, examples: &[ParallelPair]) -> String {
    let mut out = String::new();
    for example in examples {
        out.push_str(&example_block(example));
        out.push_str("\n\n");
    }
    out.push_str(source);
    out
}

/// Full prompt text: the instruction line, the example blocks, then the
/// source to translate. With no examples this is instruction plus source.
pub fn render_fewshot_prompt(
    source: &str,
    examples: &[ParallelPair],
    target_language: &str,
) -> String {
    format!(
        "{}\n\n{}",
        instruction_line(target_language),
        render_input(source, examples)
    )
}

/// Assembles one record. `source_text` must already carry the mode's
/// transformation (rephrased iff mode is dict_rephrasing) and `output` the
/// chained suffix iff mode is dict_chain.
pub fn build_record(
    source_text: &str,
    output: &str,
    examples: &[ParallelPair],
    config: &PromptConfig,
    domain_tag: &str,
    pair_id: Option<&str>,
) -> InstructionRecord {
    InstructionRecord {
        instruction: instruction_line(&config.target_language),
        input: render_input(source_text, examples),
        output: output.to_string(),
        meta: RecordMeta {
            mode: config.mode,
            example_ids: examples.iter().map(|p| p.id.clone()).collect(),
            domain_tag: domain_tag.to_string(),
            pair_id: pair_id.map(str::to_string),
        },
    }
}

/// The chained output: the translation followed by one `w_src = w_tgt` line
/// per matched entry, in sentence-occurrence order. No matches degrade to
/// the plain translation.
pub fn chain_output(target: &str, matched: &[DictEntry]) -> String {
    if matched.is_empty() {
        return target.to_string();
    }
    let mut out = String::with_capacity(target.len() + 16 * matched.len());
    out.push_str(target);
    out.push_str(CHAIN_HEADER);
    for entry in matched {
        out.push('\n');
        out.push_str(&entry.w_src);
        out.push_str(" = ");
        out.push_str(&entry.w_tgt);
    }
    out
}

/// Removes a chained terminology suffix, if present, so chained outputs can
/// be scored as plain translations.
pub fn strip_chain_suffix(text: &str) -> &str {
    match text.rfind(CHAIN_HEADER) {
        Some(pos) => &text[..pos],
        None => text,
    }
}

/// One record per matched pair with the translation target chained with the
/// entries whose source terms occur in the pair's source.
pub fn render_dict_chain(
    pair: &ParallelPair,
    matched: &[DictEntry],
    target_language: &str,
    domain_tag: &str,
) -> InstructionRecord {
    let config = PromptConfig {
        mode: DictMode::DictChain,
        target_language: target_language.to_string(),
        k: 0.0,
        n: 0,
    };
    build_record(
        &pair.source,
        &chain_output(&pair.target, matched),
        &[],
        &config,
        domain_tag,
        Some(&pair.id),
    )
}

/// Dictionary entries as standalone translation records: the instruction
/// with the bare source term as input and the target term as output.
pub fn dict_entry_records(
    dict: &SortedDictionary,
    target_language: &str,
    domain_tag: &str,
) -> Vec<InstructionRecord> {
    dict.entries()
        .iter()
        .map(|entry| InstructionRecord {
            instruction: instruction_line(target_language),
            input: entry.w_src.clone(),
            output: entry.w_tgt.clone(),
            meta: RecordMeta {
                mode: DictMode::DictInstruction,
                example_ids: Vec::new(),
                domain_tag: domain_tag.to_string(),
                pair_id: None,
            },
        })
        .collect()
}

/// The dict-instruction dataset shape: one plain record per corpus pair on
/// the unmodified source, plus one record per dictionary entry. The result
/// always holds exactly `corpus.len() + dict.len()` records.
pub fn expand_dict_instruction(
    corpus: &ParallelCorpus,
    dict: &SortedDictionary,
    target_language: &str,
) -> Vec<InstructionRecord> {
    let config = PromptConfig {
        mode: DictMode::DictInstruction,
        target_language: target_language.to_string(),
        k: 0.0,
        n: 0,
    };
    let mut records: Vec<InstructionRecord> = corpus
        .iter()
        .map(|pair| {
            build_record(
                &pair.source,
                &pair.target,
                &[],
                &config,
                &corpus.domain_tag,
                Some(&pair.id),
            )
        })
        .collect();
    records.extend(dict_entry_records(
        dict,
        target_language,
        &corpus.domain_tag,
    ));
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::MatchMode;

    fn pair(id: &str, src: &str, tgt: &str) -> ParallelPair {
        ParallelPair::new(id, src, tgt, "zh", "en", None).unwrap()
    }

    fn dict_of(entries: &[(&str, &str)]) -> SortedDictionary {
        let entries = entries
            .iter()
            .map(|&(s, t)| DictEntry::new(s, t).unwrap())
            .collect();
        SortedDictionary::from_entries(entries, MatchMode::Substring).0
    }

    #[test]
    fn prompt_with_no_examples_is_instruction_plus_source() {
        let prompt = render_fewshot_prompt("你好", &[], "English");
        assert_eq!(
            prompt,
            "Translating the following content into English\n\n你好"
        );
        let instruction_lines = prompt
            .lines()
            .filter(|l| l.starts_with("Translating the following content into"))
            .count();
        assert_eq!(instruction_lines, 1);
    }

    #[test]
    fn examples_appear_once_each_in_given_order() {
        let examples = vec![pair("e1", "一", "one"), pair("e2", "二", "two")];
        let prompt = render_fewshot_prompt("三", &examples, "English");
        let first = prompt.find("Chinese: 一").unwrap();
        let second = prompt.find("Chinese: 二").unwrap();
        assert!(first < second);
        assert_eq!(prompt.matches("Chinese: 一").count(), 1);
        assert_eq!(prompt.matches("English: two").count(), 1);
        assert!(prompt.ends_with("三"));
    }

    #[test]
    fn rendering_is_byte_deterministic() {
        let examples = vec![pair("e1", "一", "one")];
        let a = render_fewshot_prompt("三", &examples, "English");
        let b = render_fewshot_prompt("三", &examples, "English");
        assert_eq!(a.into_bytes(), b.into_bytes());
    }

    #[test]
    fn build_record_dict_none_bare_source() {
        let config = PromptConfig::new(DictMode::DictNone, "English", 0.7, 2).unwrap();
        let record = build_record("源句", "target", &[], &config, "IT", Some("p1"));
        assert_eq!(
            record.instruction,
            "Translating the following content into English"
        );
        assert_eq!(record.input, "源句");
        assert_eq!(record.output, "target");
        assert_eq!(record.meta.mode, DictMode::DictNone);
        assert_eq!(record.meta.pair_id.as_deref(), Some("p1"));
        assert!(record.meta.example_ids.is_empty());
    }

    #[test]
    fn build_record_rephrasing_uses_rephrased_text() {
        let dict = dict_of(&[("挂耳板", "mounting ear plate"), ("连接器", "connector")]);
        let source = "左挂耳板到主板的左挂耳连接器(J6081)的低速信号线缆";
        let rephrased = crate::dictionary::dict_rephrase(source, &dict).rephrased;
        let config = PromptConfig::new(DictMode::DictRephrasing, "English", 0.7, 2).unwrap();
        let record = build_record(&rephrased, "cable", &[], &config, "IT", Some("p1"));
        assert!(record.input.contains("mounting ear plate"));
        assert!(record.input.contains("connector"));
        assert!(!record.input.contains("挂耳板"));
        assert!(!record.input.contains("连接器"));
    }

    #[test]
    fn record_meta_tracks_example_ids() {
        let config = PromptConfig::new(DictMode::DictNone, "English", 0.7, 2).unwrap();
        let examples = vec![pair("e9", "一", "one"), pair("e4", "二", "two")];
        let record = build_record("三", "three", &examples, &config, "IT", Some("p1"));
        assert_eq!(record.meta.example_ids, vec!["e9", "e4"]);
    }

    #[test]
    fn prompt_config_validates_threshold() {
        assert!(PromptConfig::new(DictMode::DictNone, "English", 1.2, 2).is_err());
        assert!(PromptConfig::new(DictMode::DictNone, "English", -0.1, 2).is_err());
        assert!(PromptConfig::new(DictMode::DictNone, "English", 0.7, 0).is_ok());
    }

    #[test]
    fn dict_instruction_counts_corpus_plus_dictionary() {
        let pairs: Vec<ParallelPair> = (0..10)
            .map(|i| pair(&i.to_string(), &format!("源{i}"), &format!("t{i}")))
            .collect();
        let corpus = ParallelCorpus::new(pairs, "IT").unwrap();
        let dict = dict_of(&[("盘", "disk"), ("网口", "port"), ("线缆", "cable")]);
        let records = expand_dict_instruction(&corpus, &dict, "English");
        assert_eq!(records.len(), 13);

        let entry_records: Vec<_> = records
            .iter()
            .filter(|r| r.meta.pair_id.is_none())
            .collect();
        assert_eq!(entry_records.len(), 3);
        for record in &entry_records {
            assert!(record
                .instruction
                .starts_with("Translating the following content into"));
            let entry = dict
                .entries()
                .iter()
                .find(|e| e.w_src == record.input)
                .unwrap();
            assert_eq!(record.output, entry.w_tgt);
        }
    }

    #[test]
    fn dict_instruction_with_empty_dictionary_is_corpus_sized() {
        let corpus = ParallelCorpus::new(vec![pair("1", "源", "t")], "IT").unwrap();
        let dict = dict_of(&[]);
        assert_eq!(expand_dict_instruction(&corpus, &dict, "English").len(), 1);
    }

    #[test]
    fn dict_instruction_reproduces_domain_scale_count() {
        // 60k training pairs plus a 4k-entry dictionary give 64k records.
        let pairs: Vec<ParallelPair> = (0..60_000)
            .map(|i| pair(&i.to_string(), &format!("源{i}"), "t"))
            .collect();
        let corpus = ParallelCorpus::new(pairs, "IT").unwrap();
        let entries: Vec<DictEntry> = (0..4_000)
            .map(|i| DictEntry::new(format!("术语{i}"), format!("term{i}")).unwrap())
            .collect();
        let (dict, _) = SortedDictionary::from_entries(entries, MatchMode::Substring);
        assert_eq!(
            expand_dict_instruction(&corpus, &dict, "English").len(),
            64_000
        );
    }

    #[test]
    fn chain_record_without_matches_equals_plain_record() {
        let p = pair("1", "没有术语", "no terms");
        let chained = render_dict_chain(&p, &[], "English", "IT");
        assert_eq!(chained.output, "no terms");
        assert_eq!(chained.input, "没有术语");
    }

    #[test]
    fn chain_record_lists_matches_in_occurrence_order() {
        let dict = dict_of(&[("连接器", "connector"), ("挂耳板", "mounting ear plate")]);
        let p = pair("1", "左挂耳板到连接器", "cable from plate to connector");
        let matched = dict.matched_entries(&p.source);
        let matched: Vec<DictEntry> = matched.into_iter().cloned().collect();
        let record = render_dict_chain(&p, &matched, "English", "IT");
        assert_eq!(
            record.output,
            "cable from plate to connector\nTerms:\n挂耳板 = mounting ear plate\n连接器 = connector"
        );
        // Chained output is never shorter than the plain translation.
        assert!(record.output.len() >= p.target.len());
    }

    #[test]
    fn strip_chain_suffix_inverts_chain_output() {
        let entries = vec![
            DictEntry::new("盘", "disk").unwrap(),
            DictEntry::new("网口", "port").unwrap(),
        ];
        let chained = chain_output("the translation", &entries);
        assert_eq!(strip_chain_suffix(&chained), "the translation");
        assert_eq!(strip_chain_suffix("no chain here"), "no chain here");
        assert_eq!(chain_output("plain", &[]), "plain");
    }

    #[test]
    fn mode_exclusivity_dict_none_has_no_artifacts() {
        let dict = dict_of(&[("盘", "disk")]);
        let p = pair("1", "一个盘", "a disk");
        let config = PromptConfig::new(DictMode::DictNone, "English", 0.7, 0).unwrap();
        let record = build_record(&p.source, &p.target, &[], &config, "IT", Some(&p.id));
        assert_eq!(record.meta.mode, DictMode::DictNone);
        // Source keeps its terminology and the output has no chain suffix.
        assert!(record.input.contains("盘"));
        assert!(!record.output.contains(CHAIN_HEADER));
        let _ = dict;
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Character accounting of the two record shapes: rephrasing
            /// shifts the input by (w_tgt - w_src) per match, chaining keeps
            /// the source and appends both sides of every matched entry, so
            /// with each term occurring at most once the chained record is
            /// never shorter.
            #[test]
            fn rephrasing_record_never_longer_than_chain_record(
                filler in prop::collection::vec("[fg]{1,4}", 1..6),
                terms in prop::collection::vec(("[abc]{1,5}", "[xyz]{1,8}"), 1..4),
            ) {
                let mut unique: Vec<(String, String)> = Vec::new();
                for (s, t) in terms {
                    if !unique.iter().any(|(os, _)| *os == s) {
                        unique.push((s, t));
                    }
                }
                let entries: Vec<DictEntry> = unique
                    .iter()
                    .map(|(s, t)| DictEntry::new(s.clone(), t.clone()).unwrap())
                    .collect();
                let (dict, _) = SortedDictionary::from_entries(
                    entries,
                    crate::dictionary::MatchMode::Substring,
                );

                // Build a source where each term appears exactly once,
                // separated by filler from a disjoint alphabet.
                let mut source = String::new();
                for (i, (w_src, _)) in unique.iter().enumerate() {
                    source.push_str(&filler[i % filler.len()]);
                    source.push(' ');
                    source.push_str(w_src);
                    source.push(' ');
                }
                source.push_str(&filler[0]);
                let target = "some target translation";

                let rephrased = crate::dictionary::dict_rephrase(&source, &dict).rephrased;
                let matched: Vec<DictEntry> =
                    dict.matched_entries(&source).into_iter().cloned().collect();

                let rephrase_config =
                    PromptConfig::new(DictMode::DictRephrasing, "English", 0.7, 0).unwrap();
                let rephrase_record =
                    build_record(&rephrased, target, &[], &rephrase_config, "IT", Some("p"));
                let p = ParallelPair::new("p", source.clone(), target, "zh", "en", None).unwrap();
                let chain_record = render_dict_chain(&p, &matched, "English", "IT");

                let total_chars = |r: &InstructionRecord| {
                    r.instruction.chars().count() + r.input.chars().count() + r.output.chars().count()
                };
                prop_assert!(total_chars(&rephrase_record) <= total_chars(&chain_record));
            }

            #[test]
            fn rephrasing_length_law_holds(
                sentence in "[abcd ]{0,24}",
                terms in prop::collection::vec(("[abcd]{1,4}", "[XYZ]{1,6}"), 0..4),
            ) {
                let mut unique: Vec<(String, String)> = Vec::new();
                for (s, t) in terms {
                    if !unique.iter().any(|(os, _)| *os == s) {
                        unique.push((s, t));
                    }
                }
                let entries: Vec<DictEntry> = unique
                    .iter()
                    .map(|(s, t)| DictEntry::new(s.clone(), t.clone()).unwrap())
                    .collect();
                let (dict, _) = SortedDictionary::from_entries(
                    entries,
                    crate::dictionary::MatchMode::Substring,
                );
                let result = crate::dictionary::dict_rephrase(&sentence, &dict);
                let expected = sentence.chars().count() as i64
                    - result.replacements.iter().map(|r| r.w_src.chars().count() as i64).sum::<i64>()
                    + result.replacements.iter().map(|r| r.w_tgt.chars().count() as i64).sum::<i64>();
                prop_assert_eq!(result.rephrased.chars().count() as i64, expected);
            }
        }
    }
}
