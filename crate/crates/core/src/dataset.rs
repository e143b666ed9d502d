//! End-to-end dataset construction: per-pair dictionary enhancement plus
//! retrieval-augmented few-shot examples, JSONL emission, and the run
//! manifest that makes emitted datasets auditable and reproducible.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{corpus_to_jsonl, ParallelCorpus};
use crate::dictionary::{DictEntry, SortedDictionary};
use crate::prompting::{
    build_record, chain_output, dict_entry_records, DictMode, InstructionRecord, PromptConfig,
};
use crate::retrieval::{select_examples, EmbeddingProvider, RetrievalError, VectorIndex};
use crate::util::{self, IoError};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("retrieval failed for pair `{pair_id}`: {source}")]
    Retrieval {
        pair_id: String,
        #[source]
        source: RetrievalError,
    },
    #[error("qe threshold must lie in [0, 100], got {0}")]
    InvalidThreshold(f64),
    #[error("manifest mismatch on {field}: train has `{train}`, this run has `{current}`")]
    ManifestMismatch {
        field: &'static str,
        train: String,
        current: String,
    },
}

/// Pipeline settings shared by train- and test-set construction. Defaults
/// follow the reference setup: `k` 0.7, `n` 2, QE threshold 80.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub prompt: PromptConfig,
    pub qe_threshold: f64,
    /// Attach few-shot examples to test records too. Off by default: test
    /// prompts carry only the (transformed) source unless explicitly asked.
    pub test_fewshot: bool,
}

impl PipelineConfig {
    pub fn new(prompt: PromptConfig) -> Self {
        Self {
            prompt,
            qe_threshold: 80.0,
            test_fewshot: false,
        }
    }

    pub fn with_qe_threshold(mut self, threshold: f64) -> Result<Self, DatasetError> {
        if !(0.0..=100.0).contains(&threshold) || threshold.is_nan() {
            return Err(DatasetError::InvalidThreshold(threshold));
        }
        self.qe_threshold = threshold;
        Ok(self)
    }
}

/// Applies the configured dictionary mode to one (source, target) pair,
/// returning the record's input-side source text and output text.
fn apply_mode(
    mode: DictMode,
    source: &str,
    target: &str,
    dict: &SortedDictionary,
) -> (String, String) {
    match mode {
        DictMode::DictNone | DictMode::DictInstruction => (source.to_string(), target.to_string()),
        DictMode::DictRephrasing => (
            crate::dictionary::dict_rephrase(source, dict).rephrased,
            target.to_string(),
        ),
        DictMode::DictChain => {
            let matched: Vec<DictEntry> =
                dict.matched_entries(source).into_iter().cloned().collect();
            (source.to_string(), chain_output(target, &matched))
        }
    }
}

/// Builds training records: per pair, examples are retrieved against the
/// original (pre-rephrasing) source so the dictionary mode never perturbs
/// example selection, then the mode's transformation is applied and the
/// record assembled. In dict_instruction mode the dictionary entries are
/// appended as standalone records, giving |corpus| + |dict| records.
pub fn build_training_set(
    corpus: &ParallelCorpus,
    dict: &SortedDictionary,
    index: &VectorIndex,
    provider: &dyn EmbeddingProvider,
    config: &PipelineConfig,
) -> Result<Vec<InstructionRecord>, DatasetError> {
    let prompt = &config.prompt;
    let mut records = Vec::with_capacity(corpus.len());
    for pair in corpus.iter() {
        let examples = select_examples(index, &pair.source, provider, prompt.k, prompt.n, None)
            .map_err(|e| DatasetError::Retrieval {
                pair_id: pair.id.clone(),
                source: e,
            })?;
        let example_pairs: Vec<_> = examples.items.into_iter().map(|s| s.pair).collect();
        let (source_text, output) = apply_mode(prompt.mode, &pair.source, &pair.target, dict);
        records.push(build_record(
            &source_text,
            &output,
            &example_pairs,
            prompt,
            &corpus.domain_tag,
            Some(&pair.id),
        ));
    }
    if prompt.mode == DictMode::DictInstruction {
        records.extend(dict_entry_records(
            dict,
            &prompt.target_language,
            &corpus.domain_tag,
        ));
    }
    Ok(records)
}

/// Builds test records with the same dictionary transformation as training;
/// outputs carry the reference translations for the evaluation harness.
/// Few-shot retrieval is attached only when `config.test_fewshot` is set and
/// a retrieval context is supplied. Dict-instruction mode adds no dictionary
/// records here: the test set stays one record per test pair.
pub fn build_test_set(
    corpus: &ParallelCorpus,
    dict: &SortedDictionary,
    config: &PipelineConfig,
    retrieval: Option<(&VectorIndex, &dyn EmbeddingProvider)>,
) -> Result<Vec<InstructionRecord>, DatasetError> {
    let prompt = &config.prompt;
    let mut records = Vec::with_capacity(corpus.len());
    for pair in corpus.iter() {
        let example_pairs = match (config.test_fewshot, retrieval) {
            (true, Some((index, provider))) => {
                select_examples(index, &pair.source, provider, prompt.k, prompt.n, None)
                    .map_err(|e| DatasetError::Retrieval {
                        pair_id: pair.id.clone(),
                        source: e,
                    })?
                    .items
                    .into_iter()
                    .map(|s| s.pair)
                    .collect()
            }
            _ => Vec::new(),
        };
        let (source_text, output) = apply_mode(prompt.mode, &pair.source, &pair.target, dict);
        records.push(build_record(
            &source_text,
            &output,
            &example_pairs,
            prompt,
            &corpus.domain_tag,
            Some(&pair.id),
        ));
    }
    Ok(records)
}

/// Canonical JSONL bytes for a record list: one compact object per line,
/// UTF-8, LF newlines, keys in fixed order.
pub fn records_to_jsonl(records: &[InstructionRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for record in records {
        out.extend_from_slice(
            serde_json::to_string(record)
                .expect("serializable")
                .as_bytes(),
        );
        out.push(b'\n');
    }
    out
}

/// Writes records as JSONL, atomically.
pub fn emit_jsonl(records: &[InstructionRecord], path: &Path) -> Result<(), DatasetError> {
    util::atomic_write(path, &records_to_jsonl(records))?;
    Ok(())
}

/// Reads a record file written by [`emit_jsonl`]; re-reading reproduces the
/// emitted records exactly.
pub fn read_records(path: &Path) -> Result<Vec<InstructionRecord>, DatasetError> {
    let text = util::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut records = Vec::new();
    for (line_no, line) in util::numbered_lines(&text) {
        let record: InstructionRecord =
            serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
                path: path_str.clone(),
                line: line_no,
                msg: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Audit record accompanying every emitted dataset: the configuration, the
/// content hashes of all inputs, the record count, and the tool version.
/// Two runs that agree on this manifest agree on their outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub mode: DictMode,
    pub target_language: String,
    pub k: f64,
    pub n: usize,
    pub record_count: usize,
    pub corpus_sha256: String,
    pub dict_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_sha256: Option<String>,
}

impl Manifest {
    pub fn new(
        config: &PipelineConfig,
        corpus: &ParallelCorpus,
        dict: &SortedDictionary,
        index: Option<&VectorIndex>,
        record_count: usize,
    ) -> Self {
        Self {
            tool: "dragforge".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: config.prompt.mode,
            target_language: config.prompt.target_language.clone(),
            k: config.prompt.k,
            n: config.prompt.n,
            record_count,
            corpus_sha256: util::sha256_hex(&corpus_to_jsonl(corpus)),
            dict_sha256: util::sha256_hex(&dict.to_tsv()),
            index_sha256: index.map(|i| util::sha256_hex(&i.binary_bytes())),
        }
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("serializable");
        bytes.push(b'\n');
        bytes
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = util::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Malformed {
            path: path.display().to_string(),
            line: 1,
            msg: e.to_string(),
        })
    }

    /// Train/test consistency gate: the dictionary transformation and the
    /// dictionary content itself must agree across the two runs.
    pub fn check_consistent_with(&self, train: &Manifest) -> Result<(), DatasetError> {
        if self.mode != train.mode {
            return Err(DatasetError::ManifestMismatch {
                field: "mode",
                train: train.mode.to_string(),
                current: self.mode.to_string(),
            });
        }
        if self.dict_sha256 != train.dict_sha256 {
            return Err(DatasetError::ManifestMismatch {
                field: "dict_sha256",
                train: train.dict_sha256.clone(),
                current: self.dict_sha256.clone(),
            });
        }
        Ok(())
    }
}

/// Manifest path for a dataset file: the dataset path with
/// `.manifest.json` appended.
pub fn manifest_path(dataset_path: &Path) -> PathBuf {
    let mut name = dataset_path.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Emits a dataset together with its manifest, all-or-nothing.
pub fn emit_dataset(
    records: &[InstructionRecord],
    manifest: &Manifest,
    path: &Path,
) -> Result<(), DatasetError> {
    util::atomic_write_all(&[
        (path.to_path_buf(), records_to_jsonl(records)),
        (manifest_path(path), manifest.to_json_bytes()),
    ])?;
    Ok(())
}

/// Fine-tuning and inference settings emitted for the training stage.
/// Defaults are the reference hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainRunConfig {
    pub learning_rate: f64,
    pub batch_size: u32,
    pub max_seq_len: u32,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub lora_rank: u32,
    pub beam_width: u32,
    pub temperature: f64,
    pub length_penalty: f64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 2,
            max_seq_len: 512,
            weight_decay: 1e-5,
            warmup_ratio: 0.01,
            lora_rank: 16,
            beam_width: 4,
            temperature: 0.0,
            length_penalty: 1.0,
        }
    }
}

impl TrainRunConfig {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("serializable");
        bytes.push(b'\n');
        bytes
    }
}

/// Writes the training/inference configuration as JSON, atomically.
pub fn emit_train_config(config: &TrainRunConfig, path: &Path) -> Result<(), DatasetError> {
    util::atomic_write(path, &config.to_json_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ParallelPair;
    use crate::dictionary::MatchMode;
    use crate::retrieval::{build_index, HashEmbedder, IndexSide};

    fn pair(id: &str, src: &str, tgt: &str) -> ParallelPair {
        ParallelPair::new(id, src, tgt, "zh", "en", None).unwrap()
    }

    fn small_corpus() -> ParallelCorpus {
        let pairs = vec![
            pair("p1", "数据盘已满", "the data disk is full"),
            pair("p2", "切换网口", "switch the port"),
            pair("p3", "没有术语", "no terms here"),
        ];
        ParallelCorpus::new(pairs, "IT").unwrap()
    }

    fn small_dict() -> SortedDictionary {
        let entries = vec![
            DictEntry::new("数据盘", "data disk").unwrap(),
            DictEntry::new("网口", "port").unwrap(),
        ];
        SortedDictionary::from_entries(entries, MatchMode::Substring).0
    }

    fn extra_index(provider: &HashEmbedder) -> VectorIndex {
        let pairs = vec![
            pair("x1", "数据盘已经满了", "the data disk is already full"),
            pair("x2", "请切换网口", "please switch the port"),
            pair("x3", "完全无关的句子", "a totally unrelated sentence"),
        ];
        build_index(&pairs, provider, IndexSide::Source).unwrap()
    }

    fn config(mode: DictMode) -> PipelineConfig {
        PipelineConfig::new(PromptConfig::new(mode, "English", 0.7, 2).unwrap())
    }

    #[test]
    fn dict_none_with_zero_cap_gives_plain_records() {
        let provider = HashEmbedder::new(32, 0);
        let index = extra_index(&provider);
        let mut cfg = config(DictMode::DictNone);
        cfg.prompt.n = 0;
        let records =
            build_training_set(&small_corpus(), &small_dict(), &index, &provider, &cfg).unwrap();
        assert_eq!(records.len(), 3);
        for (record, pair) in records.iter().zip(small_corpus().iter()) {
            assert_eq!(record.input, pair.source);
            assert_eq!(record.output, pair.target);
            assert!(record.meta.example_ids.is_empty());
        }
    }

    #[test]
    fn dict_instruction_mode_appends_dictionary_records() {
        let provider = HashEmbedder::new(32, 0);
        let index = extra_index(&provider);
        let cfg = config(DictMode::DictInstruction);
        let records =
            build_training_set(&small_corpus(), &small_dict(), &index, &provider, &cfg).unwrap();
        assert_eq!(records.len(), 3 + 2);
        assert!(records[3].meta.pair_id.is_none());
        assert_eq!(records[3].input, "数据盘");
        assert_eq!(records[3].output, "data disk");
    }

    #[test]
    fn rephrasing_mode_retrieves_on_original_source() {
        let provider = HashEmbedder::new(32, 0);
        let index = extra_index(&provider);
        let cfg = config(DictMode::DictRephrasing);
        let rephrased =
            build_training_set(&small_corpus(), &small_dict(), &index, &provider, &cfg).unwrap();
        let plain = build_training_set(
            &small_corpus(),
            &small_dict(),
            &index,
            &provider,
            &config(DictMode::DictNone),
        )
        .unwrap();
        for (a, b) in rephrased.iter().zip(plain.iter()) {
            // Same examples selected regardless of the dictionary mode.
            assert_eq!(a.meta.example_ids, b.meta.example_ids);
        }
        assert!(rephrased[0].input.contains("data disk"));
        assert!(!rephrased[0].input.ends_with("数据盘已满"));
    }

    #[test]
    fn chain_mode_appends_terms_to_output() {
        let provider = HashEmbedder::new(32, 0);
        let index = extra_index(&provider);
        let cfg = config(DictMode::DictChain);
        let records =
            build_training_set(&small_corpus(), &small_dict(), &index, &provider, &cfg).unwrap();
        assert!(records[0].output.ends_with("Terms:\n数据盘 = data disk"));
        assert_eq!(records[2].output, "no terms here");
    }

    #[test]
    fn test_set_uses_same_transform_without_examples() {
        let cfg = config(DictMode::DictRephrasing);
        let records = build_test_set(&small_corpus(), &small_dict(), &cfg, None).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].input, "data disk已满");
        assert!(records.iter().all(|r| r.meta.example_ids.is_empty()));
        // References stay on the output side for the evaluation harness.
        assert_eq!(records[0].output, "the data disk is full");

        let plain = build_test_set(
            &small_corpus(),
            &small_dict(),
            &config(DictMode::DictNone),
            None,
        )
        .unwrap();
        assert_eq!(plain[0].input, "数据盘已满");
    }

    #[test]
    fn test_set_dict_instruction_stays_corpus_sized() {
        let cfg = config(DictMode::DictInstruction);
        let records = build_test_set(&small_corpus(), &small_dict(), &cfg, None).unwrap();
        assert_eq!(records.len(), 3);
    }

    #[test]
    fn emit_jsonl_line_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        emit_jsonl(&[], &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"");

        let cfg = config(DictMode::DictNone);
        let records = build_test_set(&small_corpus(), &small_dict(), &cfg, None).unwrap();
        emit_jsonl(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        // Fixed key order on every line.
        assert!(text.lines().all(|l| l.starts_with("{\"instruction\":")));
    }

    #[test]
    fn jsonl_round_trip_on_generated_records() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let records: Vec<InstructionRecord> = (0..500)
            .map(|i| {
                let cfg = PromptConfig::new(
                    DictMode::DictNone,
                    "English",
                    rng.random_range(0.0..1.0),
                    rng.random_range(0..4),
                )
                .unwrap();
                build_record(
                    &format!("源文本 {i} 「带标点」"),
                    &format!("target text {i} with \"quotes\" and \\ slashes"),
                    &[],
                    &cfg,
                    "IT",
                    Some(&format!("id-{i}")),
                )
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.jsonl");
        emit_jsonl(&records, &path).unwrap();
        let reread = read_records(&path).unwrap();
        assert_eq!(reread, records);
    }

    #[test]
    fn manifest_round_trip_and_consistency() {
        let provider = HashEmbedder::new(32, 0);
        let index = extra_index(&provider);
        let cfg = config(DictMode::DictRephrasing);
        let corpus = small_corpus();
        let dict = small_dict();

        let train = build_training_set(&corpus, &dict, &index, &provider, &cfg).unwrap();
        let train_manifest = Manifest::new(&cfg, &corpus, &dict, Some(&index), train.len());
        let test = build_test_set(&corpus, &dict, &cfg, None).unwrap();
        let test_manifest = Manifest::new(&cfg, &corpus, &dict, None, test.len());

        assert_eq!(train_manifest.mode, test_manifest.mode);
        assert_eq!(train_manifest.dict_sha256, test_manifest.dict_sha256);
        test_manifest
            .check_consistent_with(&train_manifest)
            .unwrap();

        let other_dict = SortedDictionary::from_entries(
            vec![DictEntry::new("别的", "other").unwrap()],
            MatchMode::Substring,
        )
        .0;
        let mismatched = Manifest::new(&cfg, &corpus, &other_dict, None, test.len());
        assert!(matches!(
            mismatched.check_consistent_with(&train_manifest),
            Err(DatasetError::ManifestMismatch {
                field: "dict_sha256",
                ..
            })
        ));

        let mut chain_cfg = cfg.clone();
        chain_cfg.prompt.mode = DictMode::DictChain;
        let wrong_mode = Manifest::new(&chain_cfg, &corpus, &dict, None, test.len());
        assert!(matches!(
            wrong_mode.check_consistent_with(&train_manifest),
            Err(DatasetError::ManifestMismatch { field: "mode", .. })
        ));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        emit_dataset(&train, &train_manifest, &path).unwrap();
        let loaded = Manifest::load(&manifest_path(&path)).unwrap();
        assert_eq!(loaded, train_manifest);
    }

    #[test]
    fn reproducibility_same_inputs_same_bytes() {
        let provider = HashEmbedder::new(32, 0);
        let index = extra_index(&provider);
        let cfg = config(DictMode::DictRephrasing);
        let a =
            build_training_set(&small_corpus(), &small_dict(), &index, &provider, &cfg).unwrap();
        let b =
            build_training_set(&small_corpus(), &small_dict(), &index, &provider, &cfg).unwrap();
        assert_eq!(records_to_jsonl(&a), records_to_jsonl(&b));
    }

    #[test]
    fn train_config_defaults_match_reference_values() {
        let config = TrainRunConfig::default();
        assert_eq!(config.learning_rate, 3e-4);
        assert_eq!(config.batch_size, 2);
        assert_eq!(config.max_seq_len, 512);
        assert_eq!(config.weight_decay, 1e-5);
        assert_eq!(config.warmup_ratio, 0.01);
        assert_eq!(config.lora_rank, 16);
        assert_eq!(config.beam_width, 4);
        assert_eq!(config.temperature, 0.0);
        assert_eq!(config.length_penalty, 1.0);
    }

    #[test]
    fn train_config_emit_and_override() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train_config.json");
        emit_train_config(&TrainRunConfig::default(), &path).unwrap();
        let reread: TrainRunConfig =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(reread, TrainRunConfig::default());

        let overridden = TrainRunConfig {
            learning_rate: 1e-4,
            ..TrainRunConfig::default()
        };
        emit_train_config(&overridden, &path).unwrap();
        let reread: TrainRunConfig =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(reread.learning_rate, 1e-4);
        assert_eq!(reread.batch_size, 2);
        assert_eq!(reread.lora_rank, 16);
    }

    #[test]
    fn invalid_qe_threshold_rejected() {
        let cfg = config(DictMode::DictNone);
        assert!(cfg.clone().with_qe_threshold(100.0).is_ok());
        assert!(cfg.clone().with_qe_threshold(101.0).is_err());
        assert!(cfg.with_qe_threshold(-1.0).is_err());
    }
}
