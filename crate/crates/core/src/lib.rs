//! Data-engineering toolkit for dictionary- and retrieval-augmented machine
//! translation fine-tuning.
//!
//! The crate covers the data path from raw parallel corpora to emitted
//! instruction datasets and back from model hypotheses to metric reports:
//!
//! - [`corpus`]: loading, quality filtering, splitting, and summarizing
//!   bilingual parallel corpora.
//! - [`dictionary`]: terminology dictionaries, longest-match-first source
//!   rephrasing, and the terminology-extraction prompt emitter.
//! - [`retrieval`]: exact cosine-similarity search over embedded translation
//!   pairs for few-shot example selection.
//! - [`prompting`]: few-shot translation prompts and the dictionary
//!   enhancement record shapes (none / rephrasing / instruction / chain).
//! - [`dataset`]: end-to-end train/test dataset construction, JSONL
//!   emission, run manifests, and training-configuration output.
//! - [`eval`]: corpus BLEU, terminology translation success rate, unaligned
//!   translation word rate, and length distributions.

pub mod corpus;
pub mod dataset;
pub mod dictionary;
pub mod eval;
pub mod lang;
pub mod prompting;
pub mod retrieval;
pub mod util;

pub use corpus::{CorpusStats, ParallelCorpus, ParallelPair, SplitCorpus};
pub use dataset::{Manifest, PipelineConfig, TrainRunConfig};
pub use dictionary::{DictEntry, RephraseResult, SortedDictionary};
pub use eval::{BleuReport, EvalTriple, TermReport, UtwReport};
pub use prompting::{DictMode, InstructionRecord, PromptConfig};
pub use retrieval::{EmbeddingProvider, EmbeddingVector, ExampleSet, VectorIndex};
