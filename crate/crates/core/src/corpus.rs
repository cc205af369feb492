//! Document-bounded parallel corpora: parsing, dataset splits and statistics.
//!
//! The canonical on-disk format is a pair of UTF-8 files, one sentence per
//! line, with documents separated by exactly one empty line. Empty lines must
//! sit at the same line numbers in both files.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::SplitMix64;
use crate::separator::is_separator_token;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("document boundaries differ between source and target at line {0}")]
    BoundaryMismatch(usize),
    #[error("document {0} has a different number of source and target sentences")]
    LengthMismatch(usize),
    #[error("empty sentence at line {0}")]
    EmptySentence(usize),
    #[error("sentence at line {0} starts with a reserved separator token")]
    ReservedPrefix(usize),
    #[error("empty document before line {0}")]
    EmptyDocument(usize),
    #[error("corpus contains no documents")]
    Empty,
    #[error("invalid sentence in document {doc_id}: {reason}")]
    InvalidSentence { doc_id: String, reason: String },
    #[error("duplicate document id {0}")]
    DuplicateDocId(String),
    #[error("document {doc_id} has language pair {found}, corpus is {expected}")]
    LangPairMismatch {
        doc_id: String,
        found: LangPair,
        expected: LangPair,
    },
    #[error("invalid language pair {0:?}, expected <src>-<tgt>")]
    InvalidLangPair(String),
    #[error("corpus has {0} documents, at least 3 are needed for a split")]
    CorpusTooSmall(usize),
    #[error("invalid split configuration: {0}")]
    InvalidSplitConfig(String),
    #[error("unknown document id {0}")]
    UnknownDocId(String),
}

/// Source and target language codes (ISO 639-1, e.g. `zh`, `en`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LangPair {
    pub source: String,
    pub target: String,
}

impl LangPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }
}

impl fmt::Display for LangPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.source, self.target)
    }
}

impl FromStr for LangPair {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let valid = |code: &str| !code.is_empty() && code.chars().all(|c| c.is_ascii_alphabetic());
        match s.split_once('-') {
            Some((src, tgt)) if valid(src) && valid(tgt) => {
                Ok(LangPair::new(src.to_ascii_lowercase(), tgt.to_ascii_lowercase()))
            }
            _ => Err(CorpusError::InvalidLangPair(s.to_string())),
        }
    }
}

/// One document with sentence-aligned source and target sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelDocument {
    pub doc_id: String,
    pub lang_pair: LangPair,
    pub source: Vec<String>,
    pub target: Vec<String>,
}

impl ParallelDocument {
    pub fn new(
        doc_id: impl Into<String>,
        lang_pair: LangPair,
        source: Vec<String>,
        target: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let doc_id = doc_id.into();
        if source.is_empty() || source.len() != target.len() {
            return Err(CorpusError::InvalidSentence {
                doc_id,
                reason: format!(
                    "{} source vs {} target sentences",
                    source.len(),
                    target.len()
                ),
            });
        }
        for sentence in source.iter().chain(&target) {
            if let Err(reason) = check_sentence(sentence) {
                return Err(CorpusError::InvalidSentence {
                    doc_id,
                    reason: reason.to_string(),
                });
            }
        }
        Ok(Self {
            doc_id,
            lang_pair,
            source,
            target,
        })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

enum SentenceFault {
    Empty,
    Newline,
    Reserved,
}

impl fmt::Display for SentenceFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SentenceFault::Empty => "empty sentence",
            SentenceFault::Newline => "sentence contains a line break",
            SentenceFault::Reserved => "sentence starts with a separator token",
        })
    }
}

fn check_sentence(sentence: &str) -> Result<(), SentenceFault> {
    if sentence.trim().is_empty() {
        return Err(SentenceFault::Empty);
    }
    if sentence.contains(['\n', '\r']) {
        return Err(SentenceFault::Newline);
    }
    if sentence
        .split_whitespace()
        .next()
        .is_some_and(is_separator_token)
    {
        return Err(SentenceFault::Reserved);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub lang_pair: LangPair,
    pub documents: Vec<ParallelDocument>,
}

impl Corpus {
    pub fn new(lang_pair: LangPair, documents: Vec<ParallelDocument>) -> Result<Self, CorpusError> {
        if documents.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.lang_pair != lang_pair {
                return Err(CorpusError::LangPairMismatch {
                    doc_id: doc.doc_id.clone(),
                    found: doc.lang_pair.clone(),
                    expected: lang_pair,
                });
            }
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(CorpusError::DuplicateDocId(doc.doc_id.clone()));
            }
        }
        Ok(Self {
            lang_pair,
            documents,
        })
    }

    pub fn doc_ids(&self) -> Vec<String> {
        self.documents.iter().map(|d| d.doc_id.clone()).collect()
    }

    pub fn get(&self, doc_id: &str) -> Option<&ParallelDocument> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Lookup table from document id to its position in `documents`.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.documents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.as_str(), i))
            .collect()
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(ParallelDocument::len).sum()
    }

    /// Renders the corpus back into the two-file plain-text format.
    pub fn to_text(&self) -> (String, String) {
        let render = |side: fn(&ParallelDocument) -> &Vec<String>| {
            let mut out = String::new();
            for (i, doc) in self.documents.iter().enumerate() {
                if i > 0 {
                    out.push('\n');
                }
                for sentence in side(doc) {
                    out.push_str(sentence);
                    out.push('\n');
                }
            }
            out
        };
        (render(|d| &d.source), render(|d| &d.target))
    }

    pub fn to_records(&self) -> Vec<DocumentRecord> {
        self.documents
            .iter()
            .map(|d| DocumentRecord {
                doc_id: d.doc_id.clone(),
                src_lang: d.lang_pair.source.clone(),
                tgt_lang: d.lang_pair.target.clone(),
                source: d.source.clone(),
                target: d.target.clone(),
            })
            .collect()
    }

    pub fn from_records(records: Vec<DocumentRecord>) -> Result<Self, CorpusError> {
        let lang_pair = match records.first() {
            Some(r) => LangPair::new(r.src_lang.clone(), r.tgt_lang.clone()),
            None => return Err(CorpusError::Empty),
        };
        let documents = records
            .into_iter()
            .map(|r| {
                ParallelDocument::new(
                    r.doc_id,
                    LangPair::new(r.src_lang, r.tgt_lang),
                    r.source,
                    r.target,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Corpus::new(lang_pair, documents)
    }
}

/// One line of the corpus JSONL serialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub source: Vec<String>,
    pub target: Vec<String>,
}

/// A file split into documents: each document is a list of (line number, text).
struct Blocks {
    docs: Vec<Vec<(usize, String)>>,
    blank_lines: Vec<usize>,
}

fn split_blocks(text: &str) -> Result<Blocks, CorpusError> {
    let mut docs = Vec::new();
    let mut blank_lines = Vec::new();
    let mut current: Vec<(usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            blank_lines.push(line_no);
            if current.is_empty() {
                return Err(CorpusError::EmptyDocument(line_no));
            }
            docs.push(std::mem::take(&mut current));
            continue;
        }
        current.push((line_no, line.trim_end().to_string()));
    }
    if !current.is_empty() {
        docs.push(current);
    } else if let Some(&last) = blank_lines.last() {
        return Err(CorpusError::EmptyDocument(last + 1));
    }
    Ok(Blocks { docs, blank_lines })
}

fn validate_lines(block: &[(usize, String)]) -> Result<Vec<String>, CorpusError> {
    block
        .iter()
        .map(|(line_no, sentence)| match check_sentence(sentence) {
            Ok(()) => Ok(sentence.clone()),
            Err(SentenceFault::Reserved) => Err(CorpusError::ReservedPrefix(*line_no)),
            Err(_) => Err(CorpusError::EmptySentence(*line_no)),
        })
        .collect()
}

/// Parses the two-file plain-text format from in-memory strings.
///
/// Documents receive ids `d000000`, `d000001`, ... in file order.
pub fn parse_parallel_text(
    source: &str,
    target: &str,
    lang_pair: &LangPair,
) -> Result<Corpus, CorpusError> {
    let src = split_blocks(source)?;
    let tgt = split_blocks(target)?;

    let longest = src.blank_lines.len().max(tgt.blank_lines.len());
    for k in 0..longest {
        match (src.blank_lines.get(k), tgt.blank_lines.get(k)) {
            (Some(a), Some(b)) if a == b => {}
            (Some(a), Some(b)) => return Err(CorpusError::BoundaryMismatch(*a.min(b))),
            (Some(a), None) | (None, Some(a)) => return Err(CorpusError::BoundaryMismatch(*a)),
            (None, None) => unreachable!(),
        }
    }

    let mut documents = Vec::with_capacity(src.docs.len());
    for (index, (s, t)) in src.docs.iter().zip(&tgt.docs).enumerate() {
        if s.len() != t.len() {
            return Err(CorpusError::LengthMismatch(index));
        }
        documents.push(ParallelDocument {
            doc_id: format!("d{index:06}"),
            lang_pair: lang_pair.clone(),
            source: validate_lines(s)?,
            target: validate_lines(t)?,
        });
    }
    if src.docs.len() != tgt.docs.len() {
        // Identical boundaries but one file has no trailing document.
        return Err(CorpusError::LengthMismatch(documents.len()));
    }
    Corpus::new(lang_pair.clone(), documents)
}

/// Reads and parses a source/target file pair.
pub fn parse_parallel_corpus(
    source_path: &Path,
    target_path: &Path,
    lang_pair: &LangPair,
) -> crate::Result<Corpus> {
    let source = fs::read_to_string(source_path).map_err(|e| crate::Error::io(source_path, e))?;
    let target = fs::read_to_string(target_path).map_err(|e| crate::Error::io(target_path, e))?;
    Ok(parse_parallel_text(&source, &target, lang_pair)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_frac: f64,
    /// Fraction of the corpus forming each of the dev and test pools.
    pub pool_frac: f64,
    pub dev_docs: usize,
    pub test_docs: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.8,
            pool_frac: 0.1,
            dev_docs: 150,
            test_docs: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub discarded: Vec<String>,
}

impl DatasetSplit {
    pub fn is_train(&self, doc_id: &str) -> bool {
        self.train.iter().any(|id| id == doc_id)
    }
}

fn frac_floor(frac: f64, n: usize) -> usize {
    // The epsilon keeps exact products such as 0.1 * 10 from flooring to 0.
    (frac * n as f64 + 1e-9).floor() as usize
}

/// Shuffles the document ids and carves out train, dev and test sets.
///
/// After a [`SplitMix64`] shuffle of the ids in corpus order, the first
/// `floor(train_frac * N)` ids are train. The next `floor(pool_frac * N)` ids
/// form the dev pool and the first `dev_docs` of them are kept; the test set
/// is taken the same way from the following pool. Every other id is recorded
/// as discarded.
pub fn split_dataset(
    corpus: &Corpus,
    seed: u64,
    config: &SplitConfig,
) -> Result<DatasetSplit, CorpusError> {
    let n = corpus.documents.len();
    if n < 3 {
        return Err(CorpusError::CorpusTooSmall(n));
    }
    let SplitConfig {
        train_frac,
        pool_frac,
        dev_docs,
        test_docs,
    } = *config;
    let fracs_valid = (0.0..=1.0).contains(&train_frac)
        && (0.0..=1.0).contains(&pool_frac)
        && train_frac + 2.0 * pool_frac <= 1.0 + 1e-9;
    if !fracs_valid {
        return Err(CorpusError::InvalidSplitConfig(format!(
            "train_frac={train_frac}, pool_frac={pool_frac}"
        )));
    }

    let mut ids = corpus.doc_ids();
    SplitMix64::new(seed).shuffle(&mut ids);

    let n_train = frac_floor(train_frac, n);
    let n_pool = frac_floor(pool_frac, n);
    let mut rest = ids.into_iter();
    let train: Vec<String> = rest.by_ref().take(n_train).collect();
    let dev_pool: Vec<String> = rest.by_ref().take(n_pool).collect();
    let test_pool: Vec<String> = rest.by_ref().take(n_pool).collect();
    let mut discarded = Vec::new();

    let mut take_from_pool = |pool: Vec<String>, keep: usize| {
        let mut pool = pool;
        let extra = pool.split_off(keep.min(pool.len()));
        discarded.extend(extra);
        pool
    };
    let dev = take_from_pool(dev_pool, dev_docs);
    let test = take_from_pool(test_pool, test_docs);
    discarded.extend(rest);

    Ok(DatasetSplit {
        seed,
        train,
        dev,
        test,
        discarded,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub split: String,
    pub docs: usize,
    pub sentences: usize,
}

/// Per-split document and sentence counts, in the layout of a dataset table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dataset: String,
    pub rows: Vec<SplitStats>,
}

pub fn corpus_stats(
    corpus: &Corpus,
    split: &DatasetSplit,
    dataset: &str,
) -> Result<CorpusStats, CorpusError> {
    let index = corpus.index();
    let count = |name: &str, ids: &[String]| -> Result<SplitStats, CorpusError> {
        let mut sentences = 0;
        for id in ids {
            let i = index
                .get(id.as_str())
                .ok_or_else(|| CorpusError::UnknownDocId(id.clone()))?;
            sentences += corpus.documents[*i].len();
        }
        Ok(SplitStats {
            split: name.to_string(),
            docs: ids.len(),
            sentences,
        })
    };
    Ok(CorpusStats {
        dataset: dataset.to_string(),
        rows: vec![
            count("train", &split.train)?,
            count("valid", &split.dev)?,
            count("test", &split.test)?,
            count("discarded", &split.discarded)?,
        ],
    })
}

/// Abbreviates counts the way dataset tables do: `342K`, `6.0K`, `150`.
pub fn compact_count(n: usize) -> String {
    if n < 1000 {
        return n.to_string();
    }
    let (value, suffix) = if n < 1_000_000 {
        (n as f64 / 1e3, "K")
    } else {
        (n as f64 / 1e6, "M")
    };
    if value >= 100.0 {
        format!("{value:.0}{suffix}")
    } else {
        format!("{value:.1}{suffix}")
    }
}

impl CorpusStats {
    fn row(&self, split: &str) -> Option<&SplitStats> {
        self.rows.iter().find(|r| r.split == split)
    }

    fn triple(&self, field: fn(&SplitStats) -> usize) -> String {
        ["train", "valid", "test"]
            .iter()
            .map(|s| compact_count(self.row(s).map_or(0, field)))
            .collect::<Vec<_>>()
            .join(" / ")
    }

    /// Aligned text table: one dataset row with `train / valid / test` cells.
    pub fn to_table(&self) -> String {
        let header = [
            "Dataset".to_string(),
            "#DOC (train / valid / test)".to_string(),
            "#SENT (train / valid / test)".to_string(),
        ];
        let row = [
            self.dataset.clone(),
            self.triple(|r| r.docs),
            self.triple(|r| r.sentences),
        ];
        crate::report::aligned_table(&header, &[row.to_vec()])
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // Writing to a Vec cannot fail.
        w.write_record(["dataset", "split", "docs", "sentences"]).unwrap();
        for r in &self.rows {
            w.write_record([
                self.dataset.as_str(),
                r.split.as_str(),
                &r.docs.to_string(),
                &r.sentences.to_string(),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Ids of every document in a split, in the split's order.
pub fn subset_ids<'a>(split: &'a DatasetSplit, subset: Subset) -> Box<dyn Iterator<Item = &'a String> + 'a> {
    match subset {
        Subset::Train => Box::new(split.train.iter()),
        Subset::Dev => Box::new(split.dev.iter()),
        Subset::Test => Box::new(split.test.iter()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Dev,
    Test,
}

impl FromStr for Subset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Subset::Train),
            "dev" | "valid" => Ok(Subset::Dev),
            "test" => Ok(Subset::Test),
            other => Err(format!("unknown subset {other:?}, expected train, dev or test")),
        }
    }
}

/// Restricts a corpus to the given ids, keeping the order of `ids`.
pub fn select<'a, I>(corpus: &Corpus, ids: I) -> Result<Corpus, CorpusError>
where
    I: IntoIterator<Item = &'a String>,
{
    let index = corpus.index();
    let mut picked = BTreeSet::new();
    let mut documents = Vec::new();
    for id in ids {
        let i = *index
            .get(id.as_str())
            .ok_or_else(|| CorpusError::UnknownDocId(id.clone()))?;
        if picked.insert(i) {
            documents.push(corpus.documents[i].clone());
        }
    }
    Corpus::new(corpus.lang_pair.clone(), documents)
}
