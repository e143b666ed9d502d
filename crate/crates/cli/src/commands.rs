//! Subcommand definitions and their handlers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use serde::Serialize;

use dragforge_core::corpus::{self, CorpusFormat, LoadOptions, ParallelCorpus, ParallelPair};
use dragforge_core::dataset::{
    self, build_test_set, build_training_set, manifest_path, Manifest, PipelineConfig,
    TrainRunConfig,
};
use dragforge_core::dictionary::{self, MatchMode, SortedDictionary};
use dragforge_core::eval::{
    self, BleuReport, EvalTriple, LengthDistribution, Smoothing, TermReport, Tokenizer, UtwReport,
};
use dragforge_core::lang::display_language;
use dragforge_core::prompting::{strip_chain_suffix, DictMode, PromptConfig};
use dragforge_core::retrieval::{
    self, load_index, save_index, select_examples, EmbeddingProvider, HashEmbedder, HttpEmbedder,
    HttpEmbedderConfig, IndexSide, VectorIndex, EMBED_URL_ENV,
};
use dragforge_core::util;

use crate::error::CliError;

#[derive(Subcommand)]
pub enum Command {
    /// Discard pairs whose quality score falls below a threshold
    Filter(FilterArgs),
    /// Shuffle-split a corpus into train/test/extra sets
    Split(SplitArgs),
    /// Replace dictionary terms in every source sentence
    Rephrase(RephraseArgs),
    /// Emit the terminology-extraction prompt for a batch of pairs
    ExtractPrompt(ExtractPromptArgs),
    /// Embed a corpus and persist the vector index
    BuildIndex(BuildIndexArgs),
    /// Retrieve few-shot examples for one query sentence
    Retrieve(RetrieveArgs),
    /// Build the instruction-tuning training set
    BuildDataset(BuildDatasetArgs),
    /// Build the evaluation test set with the same enhancement mode
    BuildTestset(BuildTestsetArgs),
    /// Emit the fine-tuning and inference configuration
    EmitConfig(EmitConfigArgs),
    /// Score hypothesis translations against a test set
    Evaluate(EvaluateArgs),
    /// Summarize a corpus (counts and length statistics)
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum FormatArg {
    Tsv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
#[allow(clippy::enum_variant_names)]
enum ModeArg {
    DictNone,
    DictRephrasing,
    DictInstruction,
    DictChain,
}

impl From<ModeArg> for DictMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::DictNone => DictMode::DictNone,
            ModeArg::DictRephrasing => DictMode::DictRephrasing,
            ModeArg::DictInstruction => DictMode::DictInstruction,
            ModeArg::DictChain => DictMode::DictChain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SideArg {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum TokenizerArg {
    Whitespace,
    Char,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MatchingArg {
    Substring,
    WholeToken,
}

impl From<MatchingArg> for MatchMode {
    fn from(m: MatchingArg) -> Self {
        match m {
            MatchingArg::Substring => MatchMode::Substring,
            MatchingArg::WholeToken => MatchMode::WholeToken,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SmoothingArg {
    Off,
    AddOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ProviderKind {
    /// Deterministic n-gram hash embedder; no model, no network
    Hash,
    /// External embedding service speaking the texts/vectors JSON contract
    Http,
}

/// Corpus input location plus the corpus-level settings the wire formats do
/// not carry.
#[derive(Args)]
struct CorpusInput {
    /// Corpus file (TSV `source<TAB>target` or JSONL `{src, tgt, id?, qe_score?}`)
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Input format; inferred from the file extension when omitted
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Source language tag for all pairs in the file
    #[arg(long, default_value = "zh")]
    src_lang: String,
    /// Target language tag for all pairs in the file
    #[arg(long, default_value = "en")]
    tgt_lang: String,
    /// Domain tag recorded in outputs (IT/Law/Medical/...)
    #[arg(long, default_value = "")]
    domain: String,
}

impl CorpusInput {
    fn load(&self) -> Result<ParallelCorpus, CliError> {
        load_corpus_file(
            &self.input,
            self.format,
            &self.src_lang,
            &self.tgt_lang,
            &self.domain,
        )
    }
}

/// Same as [`CorpusInput`] but spelled `--corpus`, for the dataset commands.
#[derive(Args)]
struct DatasetCorpusInput {
    /// Corpus file (TSV `source<TAB>target` or JSONL `{src, tgt, id?, qe_score?}`)
    #[arg(long = "corpus", value_name = "PATH")]
    input: PathBuf,
    /// Corpus format; inferred from the file extension when omitted
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Source language tag for all pairs in the file
    #[arg(long, default_value = "zh")]
    src_lang: String,
    /// Target language tag for all pairs in the file
    #[arg(long, default_value = "en")]
    tgt_lang: String,
    /// Domain tag recorded in outputs (IT/Law/Medical/...)
    #[arg(long, default_value = "")]
    domain: String,
}

impl DatasetCorpusInput {
    fn load(&self) -> Result<ParallelCorpus, CliError> {
        load_corpus_file(
            &self.input,
            self.format,
            &self.src_lang,
            &self.tgt_lang,
            &self.domain,
        )
    }
}

fn load_corpus_file(
    path: &Path,
    format: Option<FormatArg>,
    src_lang: &str,
    tgt_lang: &str,
    domain: &str,
) -> Result<ParallelCorpus, CliError> {
    let format = match format {
        Some(FormatArg::Tsv) => CorpusFormat::Tsv,
        Some(FormatArg::Jsonl) => CorpusFormat::Jsonl,
        None => CorpusFormat::from_path(path).ok_or_else(|| {
            CliError::Validation(format!(
                "{}: cannot infer format from extension, pass --format",
                path.display()
            ))
        })?,
    };
    let options = LoadOptions {
        src_lang: src_lang.to_string(),
        tgt_lang: tgt_lang.to_string(),
        domain_tag: domain.to_string(),
    };
    Ok(corpus::load_parallel_corpus(path, format, &options)?)
}

/// Embedding provider selection. The hash provider is fully deterministic
/// and needs no network; the http provider posts to an embedding service.
#[derive(Args)]
struct ProviderArgs {
    /// Embedding provider
    #[arg(long, value_enum, default_value = "hash")]
    provider: ProviderKind,
    /// Embedding dimension
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Seed for the hash provider
    #[arg(long, default_value_t = 0)]
    embed_seed: u64,
    /// Endpoint for the http provider; defaults to $DRAGFORGE_EMBED_URL
    #[arg(long, value_name = "URL")]
    endpoint: Option<String>,
    /// Provider id recorded in (and required to match) the index
    #[arg(long, default_value = "http")]
    provider_id: String,
    /// Texts per request for the http provider
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
}

impl ProviderArgs {
    fn build(&self) -> Result<Box<dyn EmbeddingProvider>, CliError> {
        match self.provider {
            ProviderKind::Hash => Ok(Box::new(HashEmbedder::new(self.dim, self.embed_seed))),
            ProviderKind::Http => {
                let endpoint = match &self.endpoint {
                    Some(url) => url.clone(),
                    None => std::env::var(EMBED_URL_ENV).map_err(|_| {
                        CliError::Validation(format!(
                            "http provider needs --endpoint or ${EMBED_URL_ENV}"
                        ))
                    })?,
                };
                let mut config =
                    HttpEmbedderConfig::new(endpoint, self.provider_id.clone(), self.dim);
                config.batch_size = self.batch_size;
                Ok(Box::new(HttpEmbedder::new(config)?))
            }
        }
    }
}

#[derive(Args)]
pub struct FilterArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    /// QE score file, JSONL {"id", "score"}
    #[arg(long, value_name = "PATH")]
    scores: PathBuf,
    /// Keep pairs scoring at or above this value
    #[arg(long, default_value_t = 80.0)]
    threshold: f64,
    /// Output corpus (JSONL)
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Rejection report, JSONL {"id", "score", "threshold"}
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Args)]
pub struct SplitArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    /// Training split size
    #[arg(long)]
    train_n: usize,
    /// Test split size
    #[arg(long)]
    test_n: usize,
    /// Shuffle seed; splits are a pure function of it
    #[arg(long)]
    seed: u64,
    /// Directory receiving train.jsonl, test.jsonl, extra.jsonl
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
pub struct RephraseArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    /// Terminology dictionary, TSV `w_src<TAB>w_tgt`
    #[arg(long, value_name = "PATH")]
    dict: PathBuf,
    /// Require token boundaries around matches (for space-delimited sources)
    #[arg(long)]
    whole_token: bool,
    /// Output corpus (JSONL) with rephrased sources
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Per-entry hit counts, JSONL {"w_src", "w_tgt", "hits"}
    #[arg(long, value_name = "PATH")]
    stats: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExtractPromptArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    /// Use only the first N pairs
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
    /// Output file; standard output when omitted
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BuildIndexArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Which side of each pair to embed
    #[arg(long, value_enum, default_value = "source")]
    side: SideArg,
    /// Index output path; a `.pairs.jsonl` sidecar is written next to it
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
pub struct RetrieveArgs {
    /// Index file written by build-index
    #[arg(long, value_name = "PATH")]
    index: PathBuf,
    /// Query sentence
    #[arg(long)]
    query: String,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Similarity threshold; only scores strictly above it are kept
    #[arg(long, default_value_t = 0.7)]
    k: f64,
    /// Maximum number of examples
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Never return the pair with this id
    #[arg(long, value_name = "ID")]
    exclude_id: Option<String>,
    /// Output file; standard output when omitted
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct BuildDatasetArgs {
    /// Training corpus
    #[command(flatten)]
    corpus: DatasetCorpusInput,
    /// Terminology dictionary, TSV `w_src<TAB>w_tgt`
    #[arg(long, value_name = "PATH")]
    dict: PathBuf,
    /// Dictionary enhancement mode
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Index over the extra split, written by build-index
    #[arg(long, value_name = "PATH")]
    index: PathBuf,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Similarity threshold for example selection
    #[arg(long, default_value_t = 0.7)]
    k: f64,
    /// Maximum few-shot examples per record
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Target language display name; derived from --tgt-lang when omitted
    #[arg(long, value_name = "NAME")]
    target_language: Option<String>,
    /// Match dictionary terms only at token boundaries
    #[arg(long)]
    whole_token: bool,
    /// Dataset output (JSONL); a `.manifest.json` is written next to it
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
pub struct BuildTestsetArgs {
    /// Test corpus
    #[command(flatten)]
    corpus: DatasetCorpusInput,
    /// Terminology dictionary, TSV `w_src<TAB>w_tgt`
    #[arg(long, value_name = "PATH")]
    dict: PathBuf,
    /// Dictionary enhancement mode; must equal the training mode
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Training manifest to check mode and dictionary consistency against
    #[arg(long, value_name = "PATH")]
    train_manifest: Option<PathBuf>,
    /// Attach few-shot examples to test records (off by default)
    #[arg(long)]
    fewshot: bool,
    /// Index for --fewshot retrieval
    #[arg(long, value_name = "PATH", requires = "fewshot")]
    index: Option<PathBuf>,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Similarity threshold for --fewshot retrieval
    #[arg(long, default_value_t = 0.7)]
    k: f64,
    /// Maximum few-shot examples per record
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Target language display name; derived from --tgt-lang when omitted
    #[arg(long, value_name = "NAME")]
    target_language: Option<String>,
    /// Match dictionary terms only at token boundaries
    #[arg(long)]
    whole_token: bool,
    /// Test set output (JSONL); a `.manifest.json` is written next to it
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
pub struct EmitConfigArgs {
    /// Output file; standard output when omitted
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<u32>,
    #[arg(long)]
    max_seq_len: Option<u32>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    warmup_ratio: Option<f64>,
    #[arg(long)]
    lora_rank: Option<u32>,
    #[arg(long)]
    beam_width: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    length_penalty: Option<f64>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Test set JSONL written by build-testset
    #[arg(long, value_name = "PATH")]
    testset: PathBuf,
    /// Hypotheses, JSONL {"id", "hypothesis"}
    #[arg(long, value_name = "PATH")]
    hyps: PathBuf,
    /// Terminology dictionary; enables the term success-rate metric
    #[arg(long, value_name = "PATH")]
    dict: Option<PathBuf>,
    /// Original (untransformed) test corpus; required for term scoring
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// Corpus format for --corpus
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Pharaoh alignments (one `i-j ...` line per test record, in order)
    #[arg(long, value_name = "PATH")]
    alignments: Option<PathBuf>,
    /// External per-segment scores, JSONL {"id", "score"}
    #[arg(long, value_name = "PATH")]
    comet: Option<PathBuf>,
    /// Tokenizer for BLEU and length metrics
    #[arg(long, value_enum, default_value = "whitespace")]
    tokenizer: TokenizerArg,
    /// BLEU smoothing
    #[arg(long, value_enum, default_value = "off")]
    smoothing: SmoothingArg,
    /// Target-term matching in hypotheses
    #[arg(long, value_enum, default_value = "whole_token")]
    matching: MatchingArg,
    /// Histogram bin width for length distributions
    #[arg(long, default_value_t = 10)]
    bin_width: usize,
    /// Report output (JSON); standard output when omitted
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct StatsArgs {
    #[command(flatten)]
    corpus: CorpusInput,
    /// Output file; standard output when omitted
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Filter(args) => filter(args),
        Command::Split(args) => split(args),
        Command::Rephrase(args) => rephrase(args),
        Command::ExtractPrompt(args) => extract_prompt(args),
        Command::BuildIndex(args) => build_index_cmd(args),
        Command::Retrieve(args) => retrieve(args),
        Command::BuildDataset(args) => build_dataset(args),
        Command::BuildTestset(args) => build_testset(args),
        Command::EmitConfig(args) => emit_config(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Stats(args) => stats(args),
    }
}

fn write_or_print(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            util::atomic_write(path, bytes)?;
            Ok(())
        }
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(bytes)
                .map_err(|e| CliError::Io(format!("<stdout>: {e}")))?;
            Ok(())
        }
    }
}

fn load_dict(path: &Path, whole_token: bool) -> Result<SortedDictionary, CliError> {
    let mode = if whole_token {
        MatchMode::WholeToken
    } else {
        MatchMode::Substring
    };
    let (dict, warnings) = dictionary::load_dictionary(path, mode)?;
    for warning in &warnings {
        match warning.line {
            Some(line) => eprintln!("warning: {}:{line}: {}", path.display(), warning.msg),
            None => eprintln!("warning: {}: {}", path.display(), warning.msg),
        }
    }
    Ok(dict)
}

fn filter(args: FilterArgs) -> Result<(), CliError> {
    let corpus = args.corpus.load()?;
    let scores = corpus::load_scores(&args.scores)?;
    let (kept, report) = corpus::quality_filter(&corpus, &scores, args.threshold)?;
    let mut outputs = vec![(args.out.clone(), corpus::corpus_to_jsonl(&kept))];
    if let Some(report_path) = &args.report {
        outputs.push((report_path.clone(), report.to_jsonl()));
    }
    util::atomic_write_all(&outputs)?;
    eprintln!(
        "kept {} of {} pairs (threshold {}), rejected {}",
        kept.len(),
        corpus.len(),
        args.threshold,
        report.rejected.len()
    );
    Ok(())
}

fn split(args: SplitArgs) -> Result<(), CliError> {
    let corpus = args.corpus.load()?;
    let split = corpus::split_corpus(&corpus, args.train_n, args.test_n, args.seed)?;
    util::atomic_write_all(&[
        (
            args.out_dir.join("train.jsonl"),
            corpus::corpus_to_jsonl(&split.train),
        ),
        (
            args.out_dir.join("test.jsonl"),
            corpus::corpus_to_jsonl(&split.test),
        ),
        (
            args.out_dir.join("extra.jsonl"),
            corpus::corpus_to_jsonl(&split.extra),
        ),
    ])?;
    eprintln!(
        "split {} pairs into train {} / test {} / extra {} (seed {})",
        corpus.len(),
        split.train.len(),
        split.test.len(),
        split.extra.len(),
        args.seed
    );
    Ok(())
}

fn rephrase(args: RephraseArgs) -> Result<(), CliError> {
    let corpus = args.corpus.load()?;
    let dict = load_dict(&args.dict, args.whole_token)?;
    let (rephrased, stats) = dictionary::rephrase_corpus(&corpus, &dict);
    let mut outputs = vec![(args.out.clone(), corpus::corpus_to_jsonl(&rephrased))];
    if let Some(stats_path) = &args.stats {
        outputs.push((stats_path.clone(), stats.to_jsonl(&dict)));
    }
    util::atomic_write_all(&outputs)?;
    eprintln!(
        "rephrased {} pairs with {} dictionary entries, {} replacements",
        corpus.len(),
        dict.len(),
        stats.total_replacements
    );
    Ok(())
}

fn extract_prompt(args: ExtractPromptArgs) -> Result<(), CliError> {
    let corpus = args.corpus.load()?;
    let pairs: Vec<ParallelPair> = match args.limit {
        Some(n) => corpus.iter().take(n).cloned().collect(),
        None => corpus.iter().cloned().collect(),
    };
    let prompt = dictionary::extraction_prompt(&pairs, &args.corpus.domain)?;
    write_or_print(args.out.as_deref(), prompt.as_bytes())
}

fn build_index_cmd(args: BuildIndexArgs) -> Result<(), CliError> {
    let corpus = args.corpus.load()?;
    let provider = args.provider.build()?;
    let side = match args.side {
        SideArg::Source => IndexSide::Source,
        SideArg::Target => IndexSide::Target,
    };
    let index = retrieval::build_index(corpus.pairs(), provider.as_ref(), side)?;
    save_index(&index, &args.out)?;
    eprintln!(
        "indexed {} pairs (dim {}, provider {})",
        index.len(),
        index.dim(),
        index.provider_id()
    );
    Ok(())
}

fn retrieve(args: RetrieveArgs) -> Result<(), CliError> {
    let index = load_index(&args.index)?;
    let provider = args.provider.build()?;
    let examples = select_examples(
        &index,
        &args.query,
        provider.as_ref(),
        args.k,
        args.n,
        args.exclude_id.as_deref(),
    )?;
    let mut bytes =
        serde_json::to_vec_pretty(&examples).map_err(|e| CliError::Validation(e.to_string()))?;
    bytes.push(b'\n');
    write_or_print(args.out.as_deref(), &bytes)
}

fn resolve_target_language(explicit: Option<&str>, corpus: &ParallelCorpus) -> String {
    match explicit {
        Some(name) => name.to_string(),
        None => corpus
            .pairs()
            .first()
            .map(|p| display_language(&p.tgt_lang))
            .unwrap_or_else(|| "English".to_string()),
    }
}

fn build_dataset(args: BuildDatasetArgs) -> Result<(), CliError> {
    let corpus = args.corpus.load()?;
    let dict = load_dict(&args.dict, args.whole_token)?;
    let index = load_index(&args.index)?;
    let provider = args.provider.build()?;
    let target_language = resolve_target_language(args.target_language.as_deref(), &corpus);
    let prompt = PromptConfig::new(args.mode.into(), target_language, args.k, args.n)?;
    let config = PipelineConfig::new(prompt);
    let records = build_training_set(&corpus, &dict, &index, provider.as_ref(), &config)?;
    let manifest = Manifest::new(&config, &corpus, &dict, Some(&index), records.len());
    dataset::emit_dataset(&records, &manifest, &args.out)?;
    eprintln!(
        "wrote {} records ({}) to {} (manifest {})",
        records.len(),
        config.prompt.mode,
        args.out.display(),
        manifest_path(&args.out).display()
    );
    Ok(())
}

fn build_testset(args: BuildTestsetArgs) -> Result<(), CliError> {
    let corpus = args.corpus.load()?;
    let dict = load_dict(&args.dict, args.whole_token)?;
    let target_language = resolve_target_language(args.target_language.as_deref(), &corpus);
    let prompt = PromptConfig::new(args.mode.into(), target_language, args.k, args.n)?;
    let mut config = PipelineConfig::new(prompt);
    config.test_fewshot = args.fewshot;

    let index = match (args.fewshot, &args.index) {
        (true, Some(path)) => Some(load_index(path)?),
        (true, None) => return Err(CliError::Validation("--fewshot needs --index".to_string())),
        _ => None,
    };
    let provider;
    let retrieval_ctx: Option<(&VectorIndex, &dyn EmbeddingProvider)> = match &index {
        Some(idx) => {
            provider = args.provider.build()?;
            Some((idx, provider.as_ref()))
        }
        None => None,
    };

    let records = build_test_set(&corpus, &dict, &config, retrieval_ctx)?;
    let manifest = Manifest::new(&config, &corpus, &dict, index.as_ref(), records.len());
    if let Some(train_manifest_path) = &args.train_manifest {
        let train_manifest = Manifest::load(train_manifest_path)?;
        manifest.check_consistent_with(&train_manifest)?;
    }
    dataset::emit_dataset(&records, &manifest, &args.out)?;
    eprintln!(
        "wrote {} test records ({}) to {}",
        records.len(),
        config.prompt.mode,
        args.out.display()
    );
    Ok(())
}

fn emit_config(args: EmitConfigArgs) -> Result<(), CliError> {
    let mut config = TrainRunConfig::default();
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.max_seq_len {
        config.max_seq_len = v;
    }
    if let Some(v) = args.weight_decay {
        config.weight_decay = v;
    }
    if let Some(v) = args.warmup_ratio {
        config.warmup_ratio = v;
    }
    if let Some(v) = args.lora_rank {
        config.lora_rank = v;
    }
    if let Some(v) = args.beam_width {
        config.beam_width = v;
    }
    if let Some(v) = args.temperature {
        config.temperature = v;
    }
    if let Some(v) = args.length_penalty {
        config.length_penalty = v;
    }
    write_or_print(args.out.as_deref(), &config.to_json_bytes())
}

/// Full evaluation report; sections are present when their inputs were
/// supplied.
#[derive(Serialize)]
struct EvalReport {
    bleu: BleuReport,
    length_hypotheses: LengthDistribution,
    length_references: LengthDistribution,
    #[serde(skip_serializing_if = "Option::is_none")]
    term: Option<TermReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    utw: Option<UtwReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    external_score_mean: Option<f64>,
}

fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let records = dataset::read_records(&args.testset)?;
    let hypotheses = eval::load_hypotheses(&args.hyps)?;
    let hyp_map: BTreeMap<&str, &str> = hypotheses
        .iter()
        .map(|(id, h)| (id.as_str(), h.as_str()))
        .collect();

    // Join hypotheses with references in test-set order, stripping chained
    // terminology suffixes from both sides of chain-mode records.
    let mut triples = Vec::with_capacity(records.len());
    let mut matched_ids = std::collections::HashSet::new();
    for (idx, record) in records.iter().enumerate() {
        let id = record.meta.pair_id.as_ref().ok_or_else(|| {
            CliError::Validation(format!(
                "{}: record {} has no pair_id; is this a test set?",
                args.testset.display(),
                idx + 1
            ))
        })?;
        let hypothesis = *hyp_map
            .get(id.as_str())
            .ok_or_else(|| CliError::Validation(format!("no hypothesis for test pair `{id}`")))?;
        matched_ids.insert(id.as_str());
        let (hypothesis, reference) = if record.meta.mode == DictMode::DictChain {
            (
                strip_chain_suffix(hypothesis),
                strip_chain_suffix(&record.output),
            )
        } else {
            (hypothesis, record.output.as_str())
        };
        triples.push(EvalTriple {
            id: id.clone(),
            source: record.input.clone(),
            hypothesis: hypothesis.to_string(),
            reference: reference.to_string(),
        });
    }
    for (id, _) in &hypotheses {
        if !matched_ids.contains(id.as_str()) {
            return Err(CliError::Validation(format!(
                "hypothesis `{id}` has no matching test record"
            )));
        }
    }

    let tokenizer = match args.tokenizer {
        TokenizerArg::Whitespace => Tokenizer::Whitespace,
        TokenizerArg::Char => Tokenizer::Char,
    };
    let smoothing = match args.smoothing {
        SmoothingArg::Off => Smoothing::Off,
        SmoothingArg::AddOne => Smoothing::AddOne,
    };
    let bleu = eval::corpus_bleu(&triples, tokenizer, smoothing)?;
    let hyp_texts: Vec<String> = triples.iter().map(|t| t.hypothesis.clone()).collect();
    let ref_texts: Vec<String> = triples.iter().map(|t| t.reference.clone()).collect();
    let length_hypotheses = eval::length_distribution(&hyp_texts, tokenizer, args.bin_width);
    let length_references = eval::length_distribution(&ref_texts, tokenizer, args.bin_width);

    let term = match &args.dict {
        Some(dict_path) => {
            let corpus_input = args.corpus.as_ref().ok_or_else(|| {
                CliError::Validation(
                    "term evaluation needs --corpus (the original test corpus)".to_string(),
                )
            })?;
            let format = match args.format {
                Some(FormatArg::Tsv) => CorpusFormat::Tsv,
                Some(FormatArg::Jsonl) => CorpusFormat::Jsonl,
                None => CorpusFormat::from_path(corpus_input).ok_or_else(|| {
                    CliError::Validation(format!(
                        "{}: cannot infer format from extension, pass --format",
                        corpus_input.display()
                    ))
                })?,
            };
            let original =
                corpus::load_parallel_corpus(corpus_input, format, &LoadOptions::default())?;
            let sources: BTreeMap<&str, &str> = original
                .iter()
                .map(|p| (p.id.as_str(), p.source.as_str()))
                .collect();
            let mut term_triples = Vec::with_capacity(triples.len());
            for triple in &triples {
                let source = *sources.get(triple.id.as_str()).ok_or_else(|| {
                    CliError::Validation(format!(
                        "--corpus has no pair `{}` referenced by the test set",
                        triple.id
                    ))
                })?;
                term_triples.push(EvalTriple {
                    source: source.to_string(),
                    ..triple.clone()
                });
            }
            let dict = load_dict(dict_path, false)?;
            Some(eval::term_success_rate(
                &term_triples,
                &dict,
                args.matching.into(),
            ))
        }
        None => None,
    };

    let utw = match &args.alignments {
        Some(path) => {
            let lines = eval::load_pharaoh(path)?;
            if lines.len() != triples.len() {
                return Err(CliError::Validation(format!(
                    "{}: {} alignment lines for {} test records",
                    path.display(),
                    lines.len(),
                    triples.len()
                )));
            }
            let alignments: BTreeMap<String, Vec<(usize, usize)>> = triples
                .iter()
                .zip(lines)
                .map(|(t, links)| (t.id.clone(), links))
                .collect();
            Some(eval::utw_rate(&triples, &alignments)?)
        }
        None => None,
    };

    let external_score_mean = match &args.comet {
        Some(path) => {
            let scores = eval::ingest_external_scores(path)?;
            let mut total = 0.0;
            for triple in &triples {
                total += scores.get(&triple.id).copied().ok_or_else(|| {
                    CliError::Validation(format!("no external score for `{}`", triple.id))
                })?;
            }
            Some(total / triples.len() as f64)
        }
        None => None,
    };

    let report = EvalReport {
        bleu,
        length_hypotheses,
        length_references,
        term,
        utw,
        external_score_mean,
    };
    let mut bytes =
        serde_json::to_vec_pretty(&report).map_err(|e| CliError::Validation(e.to_string()))?;
    bytes.push(b'\n');
    write_or_print(args.out.as_deref(), &bytes)
}

fn stats(args: StatsArgs) -> Result<(), CliError> {
    let corpus = args.corpus.load()?;
    let stats = corpus::corpus_stats(&corpus);
    let mut bytes =
        serde_json::to_vec_pretty(&stats).map_err(|e| CliError::Validation(e.to_string()))?;
    bytes.push(b'\n');
    write_or_print(args.out.as_deref(), &bytes)
}
