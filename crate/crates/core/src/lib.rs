//! Build mixed sentence/document translation-instruction sets from
//! document-bounded parallel corpora, and evaluate document-level
//! translation output.
//!
//! Pipeline: [`corpus`] parses and splits the data, [`segment`] packs
//! documents into sub-documents under token budgets, [`instruct`] renders
//! JSONL instruction records, [`simulate`] and [`evaluate`] exercise the
//! [`metrics`] (s-BLEU, d-BLEU, separator coverage, TCP).

pub mod corpus;
pub mod evaluate;
pub mod instruct;
pub mod io;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod scorer;
pub mod segment;
pub mod separator;
pub mod simulate;
pub mod tokenize;

use std::path::{Path, PathBuf};

pub use corpus::{
    parse_parallel_corpus, parse_parallel_text, split_dataset, Corpus, CorpusError, DatasetSplit, LangPair,
    ParallelDocument, SplitConfig,
};
pub use instruct::{
    assemble_mixed, render_document_instruction, render_prompt, render_sentence_instruction, InstructError,
    InstructionRecord, Level, MixOptions, PromptTemplate,
};
pub use metrics::{
    corpus_bleu, coverage, dbleu, recover_sentences, sbleu, sbleu_from_documents, tcp, BleuScore, CoverageReport,
    DiscourseScores, MetricsError, Smoothing,
};
pub use rng::SplitMix64;
pub use scorer::{score_external, Endpoint, ScorerError, ScorerRequest, ScorerResponse};
pub use segment::{
    build_length_schedule, segment_document, CostMode, LengthSchedule, MixStrategy, SegmentError, SegmentationPlan,
    Segmenter, SubDocument, DEFAULT_LENGTHS,
};
pub use separator::{render_separated, strip_separators};
pub use simulate::{simulate_outputs, HypothesisRecord, SimulatorConfig};
pub use tokenize::{count_tokens, tokenize, TokenSequence, TokenizeError, Tokenizer, TokenizerSpec};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("unknown document id {0}")]
    UnknownDocId(String),
    #[error("sentence range [{start}, {end}) is not valid for document {doc_id}")]
    InvalidRange { doc_id: String, start: usize, end: usize },
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid report: {0}")]
    InvalidReport(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Tokenize(#[from] TokenizeError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Instruct(#[from] InstructError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{location}: {source}")]
    Json {
        location: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// True for failures to read or write files, as opposed to invalid data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
