//! Translation instruction records and the mixed sentence/document set.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DatasetSplit, LangPair, ParallelDocument};
use crate::rng::SplitMix64;
use crate::segment::{SegmentationPlan, SubDocument};
use crate::separator::render_separated;

#[derive(Debug, thiserror::Error)]
pub enum InstructError {
    #[error("no display name for language code {0:?}")]
    UnknownLanguageCode(String),
    #[error("{0} text is empty")]
    EmptyText(&'static str),
    #[error("segment [{start}, {end}) is not valid for document {doc_id}")]
    InvalidSegment {
        doc_id: String,
        start: usize,
        end: usize,
    },
    #[error("template header must contain {0}")]
    MissingPlaceholder(&'static str),
    #[error("schedule references document {0}, which is not in the training split")]
    ScheduleReferencesNonTrainDoc(String),
}

/// Budget tag of a record: sentence level or a document budget `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Sentence,
    Document(usize),
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Level::Sentence => f.write_str("SENT"),
            Level::Document(l) => write!(f, "{l}"),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Level::Sentence => s.serialize_str("SENT"),
            Level::Document(l) => s.serialize_u64(*l as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(usize),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(l) => Ok(Level::Document(l)),
            Raw::Str(s) if s == "SENT" => Ok(Level::Sentence),
            Raw::Str(s) => Err(de::Error::custom(format!("expected \"SENT\" or a number, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordMeta {
    pub doc_id: String,
    #[serde(rename = "L")]
    pub level: Level,
    pub start: usize,
    pub end: usize,
}

/// An (instruction, input, output) training triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub meta: RecordMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    /// Instruction text; `{src_lang}` and `{tgt_lang}` are replaced by
    /// language display names.
    pub header: String,
    pub response_prefix: String,
    pub language_names: BTreeMap<String, String>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        let names = [
            ("ar", "Arabic"),
            ("cs", "Czech"),
            ("de", "German"),
            ("en", "English"),
            ("es", "Spanish"),
            ("fr", "French"),
            ("it", "Italian"),
            ("ja", "Japanese"),
            ("ko", "Korean"),
            ("nl", "Dutch"),
            ("pt", "Portuguese"),
            ("ru", "Russian"),
            ("zh", "Chinese"),
        ];
        Self {
            header: "Translate the following text from {src_lang} to {tgt_lang}.".to_string(),
            response_prefix: "text:".to_string(),
            language_names: names
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), InstructError> {
        for placeholder in ["{src_lang}", "{tgt_lang}"] {
            if !self.header.contains(placeholder) {
                return Err(InstructError::MissingPlaceholder(placeholder));
            }
        }
        Ok(())
    }

    fn name(&self, code: &str) -> Result<&str, InstructError> {
        self.language_names
            .get(code)
            .map(String::as_str)
            .ok_or_else(|| InstructError::UnknownLanguageCode(code.to_string()))
    }

    pub fn instruction(&self, lang_pair: &LangPair) -> Result<String, InstructError> {
        self.validate()?;
        Ok(self
            .header
            .replace("{src_lang}", self.name(&lang_pair.source)?)
            .replace("{tgt_lang}", self.name(&lang_pair.target)?))
    }
}

pub fn render_sentence_instruction(
    src: &str,
    tgt: &str,
    lang_pair: &LangPair,
    template: &PromptTemplate,
) -> Result<InstructionRecord, InstructError> {
    if src.trim().is_empty() {
        return Err(InstructError::EmptyText("source"));
    }
    if tgt.trim().is_empty() {
        return Err(InstructError::EmptyText("target"));
    }
    Ok(InstructionRecord {
        instruction: template.instruction(lang_pair)?,
        input: src.to_string(),
        output: tgt.to_string(),
        meta: RecordMeta {
            doc_id: String::new(),
            level: Level::Sentence,
            start: 0,
            end: 1,
        },
    })
}

/// Renders a sub-document as `#1 s1 #2 s2 ...` on both sides. The
/// instruction is the same as at sentence level.
pub fn render_document_instruction(
    doc: &ParallelDocument,
    seg: &SubDocument,
    template: &PromptTemplate,
) -> Result<InstructionRecord, InstructError> {
    if seg.start >= seg.end || seg.end > doc.len() {
        return Err(InstructError::InvalidSegment {
            doc_id: doc.doc_id.clone(),
            start: seg.start,
            end: seg.end,
        });
    }
    Ok(InstructionRecord {
        instruction: template.instruction(&doc.lang_pair)?,
        input: render_separated(&doc.source[seg.start..seg.end]),
        output: render_separated(&doc.target[seg.start..seg.end]),
        meta: RecordMeta {
            doc_id: doc.doc_id.clone(),
            level: Level::Document(seg.budget),
            start: seg.start,
            end: seg.end,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixOptions {
    pub include_sentence_level: bool,
    /// Maximum number of sentence-level records; `None` keeps all of them.
    pub sentence_budget: Option<usize>,
    pub seed: u64,
}

impl Default for MixOptions {
    fn default() -> Self {
        Self {
            include_sentence_level: true,
            sentence_budget: None,
            seed: 0,
        }
    }
}

/// Builds the mixed instruction set: one document-level record per planned
/// segment plus sentence-level records from the training documents, then a
/// global seeded shuffle.
///
/// When `sentence_budget` caps the sentence records, the kept subset is the
/// prefix of a seeded shuffle of all training sentence pairs. Both shuffles
/// draw from one [`SplitMix64`] stream seeded with `opts.seed`.
pub fn assemble_mixed(
    corpus: &Corpus,
    split: &DatasetSplit,
    plans: &[SegmentationPlan],
    template: &PromptTemplate,
    opts: &MixOptions,
) -> crate::Result<Vec<InstructionRecord>> {
    template.validate()?;
    let index = corpus.index();
    let train: std::collections::HashSet<&str> = split.train.iter().map(String::as_str).collect();
    let doc_of = |doc_id: &str| -> crate::Result<&ParallelDocument> {
        if !train.contains(doc_id) {
            return Err(InstructError::ScheduleReferencesNonTrainDoc(doc_id.to_string()).into());
        }
        index
            .get(doc_id)
            .map(|&i| &corpus.documents[i])
            .ok_or_else(|| crate::corpus::CorpusError::UnknownDocId(doc_id.to_string()).into())
    };

    let mut records = Vec::new();
    for plan in plans {
        let doc = doc_of(&plan.doc_id)?;
        for seg in &plan.segments {
            let seg = SubDocument {
                budget: plan.budget,
                ..seg.clone()
            };
            records.push(render_document_instruction(doc, &seg, template)?);
        }
    }

    let mut rng = SplitMix64::new(opts.seed);
    let cap = opts.sentence_budget.unwrap_or(usize::MAX);
    if opts.include_sentence_level && cap > 0 {
        let mut pairs = Vec::new();
        for id in &split.train {
            let doc = doc_of(id)?;
            pairs.extend((0..doc.len()).map(|i| (doc, i)));
        }
        if cap < pairs.len() {
            rng.shuffle(&mut pairs);
            pairs.truncate(cap);
        }
        for (doc, i) in pairs {
            let mut record =
                render_sentence_instruction(&doc.source[i], &doc.target[i], &doc.lang_pair, template)?;
            record.meta = RecordMeta {
                doc_id: doc.doc_id.clone(),
                level: Level::Sentence,
                start: i,
                end: i + 1,
            };
            records.push(record);
        }
    }

    rng.shuffle(&mut records);
    Ok(records)
}

/// `### Instruction:` / `### Input:` / `### Response:` framing of a record,
/// ending with the template's response prefix.
pub fn render_prompt(record: &InstructionRecord, template: &PromptTemplate) -> String {
    format!(
        "### Instruction:\n{}\n\n### Input:\n{}\n\n### Response:\n{}",
        record.instruction, record.input, template.response_prefix
    )
}
